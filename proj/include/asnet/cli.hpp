#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

// Command-line workflows: train, analyze, compress, attack, eval.
namespace asnet::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode { ok = 0, usage = 1, io = 2, numeric = 3 };

struct RunConfig {
  std::string command;
  std::string model;
  std::string data_images;
  std::string data_labels;
  std::string synthetic;  // kind:n:classes:dim:sep
  std::string out = ".";
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  // train
  std::vector<std::size_t> hidden{256, 256, 256};
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 0;  // 0: 10 for train, 50 for compress

  // analyze / compress
  std::size_t cut_layer = 0;  // composite block count; 0 sweeps all (analyze)
  std::size_t rank = 50;      // 0: estimated active-neuron count
  std::size_t order = 2;
  double epsilon = 0.05;
  std::size_t sketch_width = 50;
  std::size_t m_as = 1000;
  std::size_t m_pce = 2000;
  double beta = 0.1;
  double lambda = 0.0;
  double lr_pre = 1e-4;
  double lr_head = 1e-5;

  // attack
  std::vector<double> delta{5.0};
  std::size_t max_failures = 10;
  std::size_t attack_samples = 200;
  std::size_t random_seeds = 10;

  std::size_t train_epochs() const { return epochs ? epochs : 10; }
  std::size_t tune_epochs() const { return epochs ? epochs : 50; }
};

/// Effective configuration in a fixed key order.
nlohmann::ordered_json config_json(const RunConfig& cfg);

/// Each command writes report.json (deterministic for a fixed seed and
/// inputs) and timing.json (wall times) under cfg.out.
void cmd_train(const RunConfig& cfg);
void cmd_analyze(const RunConfig& cfg);
void cmd_compress(const RunConfig& cfg);
void cmd_attack(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);

/// Parses arguments (without the program name), runs the command, and maps
/// failures to exit codes with diagnostics on stderr.
int run(const std::vector<std::string>& args);

}  // namespace asnet::cli
