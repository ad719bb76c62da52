#pragma once

#include "jsqr/io.hpp"
#include "jsqr/mcmc.hpp"
#include "jsqr/priors.hpp"
#include "jsqr/simgen.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace jsqr {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitData = 2, kExitAbort = 3 };

struct RunConfig {
  std::string data_path;
  std::string output_dir = "jsqr_out";
  std::string draws_path;  // defaults to <output_dir>/draws.csv
  ModelSpec model;
  PriorSpec prior;
  McmcConfig mcmc;
  std::vector<double> summary_taus;
  std::string predict_request;
  std::vector<double> predict_taus;
  std::uint64_t waic_seed = 1;
  std::vector<std::string> waic_compare;
  std::string evaluate_data;
  std::string evaluate_truth;
  ScenarioSpec simulate;

  /// Unknown keys are rejected so typos do not silently fall back to
  /// defaults. Relative paths resolve against `base_dir`.
  static RunConfig from_map(const ConfigMap& map, const std::string& base_dir = "");
  static RunConfig load(const std::string& path);
  /// Hash of the model and sampler settings that shape the draws. Seed, chain
  /// count and thread count are recorded separately and excluded.
  std::string hash() const;
  std::string resolved_draws_path() const;
};

struct CliOptions {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  bool force = false;
};

int run_command(const CliOptions& options, std::ostream& out, std::ostream& err);

int cmd_fit(const RunConfig& cfg, std::ostream& out);
int cmd_predict(const RunConfig& cfg, bool force, std::ostream& out);
int cmd_waic(const RunConfig& cfg, bool force, std::ostream& out);
int cmd_evaluate(const RunConfig& cfg, bool force, std::ostream& out);
int cmd_simulate(const RunConfig& cfg, std::ostream& out);

/// JSON ground-truth sidecar written next to simulated data.
std::string truth_sidecar_json(const SimulatedData& sim, const std::vector<double>& taus);
struct TruthSidecar {
  ScenarioSpec scenario;
  Eigen::VectorXd u_train;
  Eigen::VectorXd u_test;
};
TruthSidecar read_truth_sidecar(const std::string& path);

}  // namespace jsqr
