#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "asnet/cli.hpp"
#include "asnet/model_io.hpp"
#include "asnet/net.hpp"

using namespace asnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("asnet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json report(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "report.json")); }

const std::string kData = "blobs:60:3:6:4";

fs::path trained_model(const fs::path& dir) {
  REQUIRE(cli::run({"train", "--synthetic", kData, "--hidden", "8", "--epochs", "20", "--out", dir.string()}) == 0);
  return dir / "model.json";
}

}  // namespace

TEST_CASE("train is deterministic and echoes its configuration") {
  const auto dir = scratch("train");
  const auto model = trained_model(dir);
  const std::string first = slurp(dir / "report.json");
  const std::string blob = slurp(io::blob_path(model));
  trained_model(dir);
  CHECK(slurp(dir / "report.json") == first);
  CHECK(slurp(io::blob_path(model)) == blob);

  const auto r = report(dir);
  CHECK(r["schema_version"] == cli::kSchemaVersion);
  CHECK(r["config"]["synthetic"] == kData);
  CHECK(r["config"]["epochs"] == 20);
  CHECK(r["metrics"]["widths"] == std::vector<int>{6, 8, 3});
  CHECK(fs::exists(dir / "timing.json"));
}

TEST_CASE("eval twice gives byte-identical reports") {
  const auto dir = scratch("eval");
  const auto model = trained_model(dir);
  const auto out = (dir / "eval").string();
  REQUIRE(cli::run({"eval", "--model", model.string(), "--synthetic", kData, "--out", out}) == 0);
  const std::string first = slurp(fs::path(out) / "report.json");
  REQUIRE(cli::run({"eval", "--model", model.string(), "--synthetic", kData, "--out", out}) == 0);
  CHECK(slurp(fs::path(out) / "report.json") == first);
  CHECK(report(out)["metrics"]["kind"] == "network");
}

TEST_CASE("analyze finds one active neuron before a rank-1 final layer") {
  const auto dir = scratch("analyze");
  nn::Network net = nn::mlp({6, 10, 8, 3}, 5);
  auto& last = std::get<nn::Dense>(net.layer(net.depth() - 1));
  linalg::Vector u(3), v(8);
  u << 1.0, -2.0, 0.5;
  v << 0.3, -0.1, 0.7, 0.2, -0.5, 0.4, 0.1, -0.6;
  last.weight = u * v.transpose();
  io::save_network(net, dir / "rank1.json");

  REQUIRE(cli::run({"analyze", "--model", (dir / "rank1.json").string(), "--synthetic", kData, "--m-as", "100",
                    "--out", dir.string()}) == 0);
  const auto layers = report(dir)["metrics"]["layers"];
  REQUIRE(layers.size() == 2);
  const auto& penultimate = layers[1];
  CHECK(penultimate["block"] == 2);
  CHECK(penultimate["n_active"] == 1);
  CHECK(penultimate["n_active_eigen"] == 1);
  CHECK(slurp(dir / "spectra.csv").rfind("layer_index,rank,sigma\n", 0) == 0);
}

TEST_CASE("attack with zero budget reports zero ratios") {
  const auto dir = scratch("attack");
  const auto model = trained_model(dir);
  REQUIRE(cli::run({"attack", "--model", model.string(), "--synthetic", kData, "--delta", "0", "--random-seeds", "3",
                    "--out", dir.string()}) == 0);
  const auto run = report(dir)["metrics"]["runs"][0];
  CHECK(run["universal"]["train_ratio"] == 0.0);
  CHECK(run["universal"]["test_ratio"] == 0.0);
  for (const auto& r : run["random"]["runs"]) {
    CHECK(r["train_ratio"] == 0.0);
    CHECK(r["test_ratio"] == 0.0);
  }
}

TEST_CASE("attack and compress reports are deterministic") {
  const auto dir = scratch("repeat");
  const auto model = trained_model(dir).string();
  const std::vector<std::vector<std::string>> commands{
      {"attack", "--model", model, "--synthetic", kData, "--delta", "1", "--delta", "3", "--random-seeds", "2",
       "--max-failures", "2"},
      {"compress", "--model", model, "--synthetic", kData, "--cut-layer", "1", "--rank", "3", "--epochs", "2",
       "--lambda", "10", "--m-as", "100", "--m-pce", "100"},
      {"analyze", "--model", model, "--synthetic", kData, "--m-as", "100"},
  };
  for (auto args : commands) {
    CAPTURE(args[0]);
    args.insert(args.end(), {"--out", (dir / args[0]).string()});
    REQUIRE(cli::run(args) == 0);
    const std::string first = slurp(dir / args[0] / "report.json");
    REQUIRE(cli::run(args) == 0);
    CHECK(slurp(dir / args[0] / "report.json") == first);
  }
  CHECK(report(dir / "compress")["metrics"]["cut"]["layer"] == 2);
  REQUIRE(cli::run({"eval", "--model", (dir / "compress" / "asnet.json").string(), "--synthetic", kData, "--out",
                    (dir / "eval").string()}) == 0);
  CHECK(report(dir / "eval")["metrics"]["kind"] == "asnet");
}

TEST_CASE("config file supplies flags and command line overrides it") {
  const auto dir = scratch("config");
  std::ofstream(dir / "run.cfg") << "synthetic=" << kData << "\nhidden=8\nepochs=3\nseed=4\n";
  REQUIRE(cli::run({"train", "--config", (dir / "run.cfg").string(), "--epochs", "2", "--out", dir.string()}) == 0);
  const auto c = report(dir)["config"];
  CHECK(c["synthetic"] == kData);
  CHECK(c["seed"] == 4);
  CHECK(c["epochs"] == 2);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  const auto out = dir.string();
  CHECK(cli::run({}) == cli::usage);
  CHECK(cli::run({"frobnicate"}) == cli::usage);
  CHECK(cli::run({"train", "--epochs", "x"}) == cli::usage);
  CHECK(cli::run({"eval", "--synthetic", kData, "--out", out}) == cli::usage);
  CHECK(cli::run({"train", "--out", out}) == cli::usage);
  CHECK(cli::run({"eval", "--model", (dir / "missing.json").string(), "--synthetic", kData, "--out", out}) ==
        cli::io);
  CHECK(cli::run({"train", "--data-images", "/nonexistent/a", "--data-labels", "/nonexistent/b", "--out", out}) ==
        cli::io);

  const auto model = trained_model(dir);
  CHECK(cli::run({"compress", "--model", model.string(), "--synthetic", kData, "--out", out}) == cli::usage);
  fs::resize_file(io::blob_path(model), 16);
  CHECK(cli::run({"eval", "--model", model.string(), "--synthetic", kData, "--out", out}) == cli::io);

  nn::Network bad = nn::mlp({6, 4, 3}, 1);
  bad.parameters()[0][0] = std::numeric_limits<double>::quiet_NaN();
  io::save_network(bad, dir / "nan.json");
  CHECK(cli::run({"analyze", "--model", (dir / "nan.json").string(), "--synthetic", kData, "--out", out}) ==
        cli::numeric);
}
