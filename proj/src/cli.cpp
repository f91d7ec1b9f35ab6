#include "asnet/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "asnet/attack.hpp"
#include "asnet/compress.hpp"
#include "asnet/data.hpp"
#include "asnet/error.hpp"
#include "asnet/log.hpp"
#include "asnet/model_io.hpp"
#include "asnet/sketch.hpp"

namespace asnet::cli {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Split {
  nn::Dataset all, train, test;
};

Split load_data(const RunConfig& cfg) {
  Split s;
  if (!cfg.synthetic.empty()) {
    s.all = data::gen_synthetic(data::parse_synthetic(cfg.synthetic), cfg.seed);
  } else if (!cfg.data_images.empty() && !cfg.data_labels.empty()) {
    s.all = data::ingest_idx(cfg.data_images, cfg.data_labels);
  } else {
    throw ShapeError("no dataset: pass --synthetic or both --data-images and --data-labels");
  }
  if (cfg.test_fraction < 0.0 || cfg.test_fraction >= 1.0)
    throw ShapeError("--test-fraction must lie in [0, 1)");
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(s.all.size())));
  std::tie(s.train, s.test) = data::split_dataset(s.all, s.all.size() - n_test, cfg.seed);
  return s;
}

nn::Dataset fit_shape(const nn::Dataset& d, const nn::Shape& shape) {
  if (d.empty() || d.inputs.sample_shape() == shape) return d;
  return data::reshape(d, shape);
}

void fit_shape(Split& s, const nn::Shape& shape) {
  s.all = fit_shape(s.all, shape);
  s.train = fit_shape(s.train, shape);
  s.test = fit_shape(s.test, shape);
}

ojson eval_json(const compress::Evaluation& e) {
  ojson j;
  j["accuracy"] = e.accuracy;
  j["params"] = e.params;
  j["nonzeros"] = e.nonzeros;
  j["flops"] = e.flops;
  return j;
}

template <class Model>
ojson split_eval(const Model& m, const Split& s) {
  ojson j;
  j["train"] = eval_json(compress::evaluate(m, s.train));
  j["test"] = s.test.empty() ? ojson(nullptr) : eval_json(compress::evaluate(m, s.test));
  return j;
}

std::size_t parametric_layers(const nn::Network& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers()) n += nn::has_parameters(layer) ? 1 : 0;
  return n;
}

fs::path prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out + ": " + ec.message());
  return cfg.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_report(const RunConfig& cfg, ojson metrics, ojson timing) {
  const fs::path dir = prepare_out(cfg);
  ojson report;
  report["schema"] = "asnet-report";
  report["schema_version"] = kSchemaVersion;
  report["command"] = cfg.command;
  report["config"] = config_json(cfg);
  report["metrics"] = std::move(metrics);
  write_text(dir / "report.json", report.dump(2) + "\n");

  ojson t;
  t["command"] = cfg.command;
  t["wall_time_seconds"] = std::move(timing);
  write_text(dir / "timing.json", t.dump(2) + "\n");
}

std::string require_model(const RunConfig& cfg) {
  if (cfg.model.empty()) throw ShapeError(cfg.command + " needs --model");
  return cfg.model;
}

ojson subspace_json(const sketch::ActiveSubspace& s) {
  ojson j;
  j["n_active"] = s.estimated;
  j["n_active_eigen"] = s.estimated_eigen;
  j["rank_used"] = s.n_active;
  j["sigma"] = std::vector<double>(s.sigma.data(), s.sigma.data() + s.sigma.size());
  return j;
}

ojson history_json(const compress::TrainHistory& h) {
  ojson j;
  j["initial_loss"] = h.initial_loss;
  j["epoch_loss"] = h.epoch_loss;
  return j;
}

}  // namespace

ojson config_json(const RunConfig& cfg) {
  ojson j;
  j["command"] = cfg.command;
  j["model"] = cfg.model;
  j["data_images"] = cfg.data_images;
  j["data_labels"] = cfg.data_labels;
  j["synthetic"] = cfg.synthetic;
  j["out"] = cfg.out;
  j["seed"] = cfg.seed;
  j["test_fraction"] = cfg.test_fraction;
  j["hidden"] = cfg.hidden;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.command == "train" ? cfg.train_epochs() : cfg.tune_epochs();
  j["cut_layer"] = cfg.cut_layer;
  j["rank"] = cfg.rank;
  j["order"] = cfg.order;
  j["epsilon"] = cfg.epsilon;
  j["sketch_width"] = cfg.sketch_width;
  j["m_as"] = cfg.m_as;
  j["m_pce"] = cfg.m_pce;
  j["beta"] = cfg.beta;
  j["lambda"] = cfg.lambda;
  j["lr_pre"] = cfg.lr_pre;
  j["lr_head"] = cfg.lr_head;
  j["delta"] = cfg.delta;
  j["max_failures"] = cfg.max_failures;
  j["attack_samples"] = cfg.attack_samples;
  j["random_seeds"] = cfg.random_seeds;
  return j;
}

void cmd_train(const RunConfig& cfg) {
  const auto start = Clock::now();
  Split s = load_data(cfg);
  const std::size_t in = s.all.inputs.sample_size();
  fit_shape(s, {in});
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(s.all.num_classes);
  nn::Network net = nn::mlp(widths, cfg.seed);
  const auto losses = nn::fit(net, s.train, {cfg.train_epochs(), cfg.batch_size, cfg.lr, cfg.seed});
  const fs::path dir = prepare_out(cfg);
  io::save_network(net, dir / "model.json");

  ojson m;
  m["widths"] = widths;
  m["epoch_loss"] = losses;
  m["eval"] = split_eval(net, s);
  write_report(cfg, std::move(m), {{"total", seconds_since(start)}});
  log::info("train: saved " + (dir / "model.json").string());
}

void cmd_analyze(const RunConfig& cfg) {
  const auto start = Clock::now();
  const nn::Network net = io::load_network(require_model(cfg));
  Split s = load_data(cfg);
  fit_shape(s, net.input_shape());

  std::vector<std::size_t> blocks;
  if (cfg.cut_layer) {
    blocks.push_back(cfg.cut_layer);
  } else {
    for (std::size_t b = 1; b < parametric_layers(net); ++b) blocks.push_back(b);
  }

  sketch::SubspaceOptions so;
  so.width = static_cast<sketch::Index>(cfg.sketch_width);
  so.samples = cfg.m_as;
  so.epsilon = cfg.epsilon;
  so.seed = cfg.seed;

  std::vector<sketch::ActiveSubspace> spaces;
  ojson layers = ojson::array();
  for (std::size_t b : blocks) {
    const std::size_t pos = compress::block_boundary(net, b);
    const auto [pre, post] = nn::split(net, pos);
    auto space = sketch::compute_active_subspace(pre, post, s.train, so);
    space.layer_index = pos;
    ojson j;
    j["block"] = b;
    j["layer"] = pos;
    j["width"] = nn::shape_size(net.activation_shape(pos));
    const ojson sub = subspace_json(space);
    for (const auto& [k, v] : sub.items()) j[k] = v;
    layers.push_back(std::move(j));
    spaces.push_back(std::move(space));
  }

  const fs::path dir = prepare_out(cfg);
  std::ostringstream csv;
  sketch::write_spectrum_csv(csv, spaces);
  write_text(dir / "spectra.csv", csv.str());

  ojson m;
  m["layers"] = std::move(layers);
  write_report(cfg, std::move(m), {{"total", seconds_since(start)}});
}

void cmd_compress(const RunConfig& cfg) {
  const auto start = Clock::now();
  const nn::Network net = io::load_network(require_model(cfg));
  Split s = load_data(cfg);
  fit_shape(s, net.input_shape());
  if (cfg.cut_layer == 0) throw ShapeError("compress needs --cut-layer >= 1");

  compress::BuildOptions bo;
  bo.cut_layer = compress::block_boundary(net, cfg.cut_layer);
  bo.rank = cfg.rank;
  bo.sketch_width = static_cast<sketch::Index>(cfg.sketch_width);
  bo.m_as = cfg.m_as;
  bo.m_pce = cfg.m_pce;
  bo.order = cfg.order;
  bo.epsilon = cfg.epsilon;
  bo.seed = cfg.seed;
  auto built = compress::build(net, s.train, bo);
  const double t_build = seconds_since(start);

  compress::TrainConfig tc;
  tc.beta = cfg.beta;
  tc.lr_pre = cfg.lr_pre;
  tc.lr_head = cfg.lr_head;
  tc.epochs = cfg.tune_epochs();
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;

  ojson m;
  ojson cut;
  cut["block"] = cfg.cut_layer;
  cut["layer"] = bo.cut_layer;
  m["cut"] = std::move(cut);
  m["subspace"] = subspace_json(built.subspace);
  ojson fit;
  fit["residual"] = built.fit.residual;
  fit["samples"] = built.fit.samples;
  fit["basis"] = built.fit.basis;
  fit["warnings"] = built.fit.warnings;
  m["pce_fit"] = std::move(fit);
  m["teacher"] = split_eval(net, s);
  m["built"] = split_eval(built.model, s);

  const auto t0 = Clock::now();
  compress::TrainHistory tune_hist;
  compress::AsNet model = compress::fine_tune(std::move(built.model), net, s.train, tc, &tune_hist);
  m["fine_tuned"] = split_eval(model, s);
  m["fine_tune_history"] = history_json(tune_hist);
  const double t_tune = seconds_since(t0);

  double t_sparse = 0.0;
  if (cfg.lambda > 0.0) {
    const auto t1 = Clock::now();
    tc.lambda = cfg.lambda;
    compress::TrainHistory sparse_hist;
    model = compress::retrain_sparse(std::move(model), net, s.train, tc, &sparse_hist);
    m["sparse"] = split_eval(model, s);
    m["sparse_history"] = history_json(sparse_hist);
    m["sparsity"] = compress::sparsity(model);
    t_sparse = seconds_since(t1);
  }
  m["tensors"] = ojson(compress::sparsity_report(model));

  const fs::path dir = prepare_out(cfg);
  compress::save_asnet(model, dir / "asnet.json");
  write_report(cfg, std::move(m),
               {{"build", t_build}, {"fine_tune", t_tune}, {"retrain_sparse", t_sparse}, {"total", seconds_since(start)}});
}

void cmd_attack(const RunConfig& cfg) {
  const auto start = Clock::now();
  const nn::Network net = io::load_network(require_model(cfg));
  Split s = load_data(cfg);
  fit_shape(s, net.input_shape());
  const nn::Dataset& eval_set = s.test.empty() ? s.train : s.test;
  const std::size_t dim = s.all.inputs.sample_size();

  std::ostringstream csv;
  csv << "delta,method,seed,train_ratio,test_ratio\n";
  ojson runs = ojson::array();
  ojson timing = ojson::array();
  for (double delta : cfg.delta) {
    if (delta < 0.0) throw ShapeError("--delta must be nonnegative");
    ojson run, time;
    run["delta"] = delta;
    time["delta"] = delta;

    attack::AttackResult res;
    res.v = linalg::Vector::Zero(static_cast<Eigen::Index>(dim));
    attack::AttackConfig ac;
    ac.delta = delta;
    ac.max_failures = cfg.max_failures;
    ac.m_as = cfg.attack_samples;
    ac.seed = cfg.seed;
    if (delta > 0.0) res = attack::universal_attack(net, s.train, ac);
    const double train_ratio = res.train_ratio_history.empty() ? 0.0 : res.train_ratio_history.back();
    const double test_ratio = attack::attack_ratio(net, eval_set, {res.v.data(), dim});
    csv << delta << ",universal," << cfg.seed << ',' << train_ratio << ',' << test_ratio << '\n';
    ojson u;
    u["train_ratio"] = train_ratio;
    u["test_ratio"] = test_ratio;
    u["norm"] = res.v.norm();
    u["updates"] = res.accepted.size();
    u["accepted"] = std::count(res.accepted.begin(), res.accepted.end(), true);
    u["failures"] = res.failures;
    u["train_ratio_history"] = res.train_ratio_history;
    u["v_base64"] = attack::base64_encode_doubles({res.v.data(), dim});
    run["universal"] = std::move(u);
    time["universal"] = res.wall_time;

    const auto t0 = Clock::now();
    ojson random = ojson::array();
    double best = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < cfg.random_seeds; ++k) {
      const std::uint64_t seed = cfg.seed + k;
      const linalg::Vector v = delta > 0.0 ? attack::random_attack(dim, delta, seed)
                                           : linalg::Vector::Zero(static_cast<Eigen::Index>(dim));
      const double tr = attack::attack_ratio(net, s.train, {v.data(), dim});
      const double te = attack::attack_ratio(net, eval_set, {v.data(), dim});
      csv << delta << ",random," << seed << ',' << tr << ',' << te << '\n';
      ojson r;
      r["seed"] = seed;
      r["train_ratio"] = tr;
      r["test_ratio"] = te;
      random.push_back(std::move(r));
      best = std::max(best, te);
      mean += te / static_cast<double>(cfg.random_seeds);
    }
    ojson rj;
    rj["best_test_ratio"] = best;
    rj["mean_test_ratio"] = mean;
    rj["runs"] = std::move(random);
    run["random"] = std::move(rj);
    time["random"] = seconds_since(t0);
    runs.push_back(std::move(run));
    timing.push_back(std::move(time));
  }

  const fs::path dir = prepare_out(cfg);
  write_text(dir / "attack.csv", csv.str());
  ojson m;
  m["eval_split"] = s.test.empty() ? "train" : "test";
  m["runs"] = std::move(runs);
  write_report(cfg, std::move(m), {{"per_delta", std::move(timing)}, {"total", seconds_since(start)}});
}

void cmd_eval(const RunConfig& cfg) {
  const auto start = Clock::now();
  const std::string path = require_model(cfg);
  const std::string kind = io::model_kind(io::read_model(path).manifest);
  Split s = load_data(cfg);
  ojson m;
  m["kind"] = kind;
  if (kind == "asnet") {
    const auto model = compress::load_asnet(path);
    fit_shape(s, model.pre.input_shape());
    m["dataset"] = eval_json(compress::evaluate(model, s.all));
    m["split"] = split_eval(model, s);
  } else {
    const auto net = io::load_network(path);
    fit_shape(s, net.input_shape());
    m["dataset"] = eval_json(compress::evaluate(net, s.all));
    m["split"] = split_eval(net, s);
  }
  write_report(cfg, std::move(m), {{"total", seconds_since(start)}});
}

int run(const std::vector<std::string>& args) {
  RunConfig cfg;
  CLI::App app{"Active-subspace network compression and universal attacks"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "key=value configuration file (keys are flag names)");

  app.add_option("--model", cfg.model, "saved model (.json manifest)");
  app.add_option("--data-images", cfg.data_images, "IDX image file");
  app.add_option("--data-labels", cfg.data_labels, "IDX label file");
  app.add_option("--synthetic", cfg.synthetic, "kind:n_per_class:classes:dim:separation");
  app.add_option("--out", cfg.out, "output directory")->capture_default_str();
  app.add_option("--seed", cfg.seed, "global seed")->capture_default_str();
  app.add_option("--test-fraction", cfg.test_fraction, "held-out fraction")->capture_default_str();
  app.add_option("--hidden", cfg.hidden, "hidden widths for train")->delimiter(',')->capture_default_str();
  app.add_option("--lr", cfg.lr, "train learning rate")->capture_default_str();
  app.add_option("--batch-size", cfg.batch_size, "minibatch size")->capture_default_str();
  app.add_option("--epochs", cfg.epochs, "epochs (0: 10 for train, 50 for compress)")->capture_default_str();
  app.add_option("--cut-layer", cfg.cut_layer, "cut after this many blocks (analyze: 0 sweeps all)")
      ->capture_default_str();
  app.add_option("--rank", cfg.rank, "reduced dimension (0: estimate)")->capture_default_str();
  app.add_option("--order", cfg.order, "PCE total order")->capture_default_str();
  app.add_option("--epsilon", cfg.epsilon, "active-neuron tolerance")->capture_default_str();
  app.add_option("--sketch-width", cfg.sketch_width, "frequent-directions width")->capture_default_str();
  app.add_option("--m-as", cfg.m_as, "gradient samples for the active subspace")->capture_default_str();
  app.add_option("--m-pce", cfg.m_pce, "samples for the PCE fit")->capture_default_str();
  app.add_option("--beta", cfg.beta, "distillation weight")->capture_default_str();
  app.add_option("--lambda", cfg.lambda, "l1 weight for sparse retraining (0: skip)")->capture_default_str();
  app.add_option("--lr-pre", cfg.lr_pre, "fine-tune learning rate, pre-model")->capture_default_str();
  app.add_option("--lr-head", cfg.lr_head, "fine-tune learning rate, projection and PCE")->capture_default_str();
  app.add_option("--delta", cfg.delta, "attack l2 budget (repeatable)")->capture_default_str();
  app.add_option("--max-failures", cfg.max_failures, "attack failure budget")->capture_default_str();
  app.add_option("--attack-samples", cfg.attack_samples, "gradients per attack direction")->capture_default_str();
  app.add_option("--random-seeds", cfg.random_seeds, "random-attack baselines per delta")->capture_default_str();

  app.add_subcommand("train", "fit an MLP and save it");
  app.add_subcommand("analyze", "per-layer gradient spectra and active-neuron counts");
  app.add_subcommand("compress", "build and fine-tune an ASNet");
  app.add_subcommand("attack", "universal and random attacks over a delta list");
  app.add_subcommand("eval", "evaluate a saved model");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }
  cfg.command = app.get_subcommands().front()->get_name();

  try {
    if (cfg.command == "train") cmd_train(cfg);
    else if (cfg.command == "analyze") cmd_analyze(cfg);
    else if (cfg.command == "compress") cmd_compress(cfg);
    else if (cfg.command == "attack") cmd_attack(cfg);
    else cmd_eval(cfg);
  } catch (const ShapeError& e) {
    log::error(e.what());
    return usage;
  } catch (const IoError& e) {
    log::error(e.what());
    return io;
  } catch (const FormatError& e) {
    log::error(e.what());
    return io;
  } catch (const nlohmann::json::exception& e) {
    log::error(std::string("malformed model file: ") + e.what());
    return io;
  } catch (const std::exception& e) {
    log::error(e.what());
    return numeric;
  }
  return ok;
}

}  // namespace asnet::cli
