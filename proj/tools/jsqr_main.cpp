#include "jsqr/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Bayesian joint spatial quantile regression"};
  jsqr::CliOptions opt;
  app.add_option("command", opt.command, "fit | predict | waic | evaluate | simulate")
      ->required()
      ->check(CLI::IsMember({"fit", "predict", "waic", "evaluate", "simulate"}));
  app.add_option("--config", opt.config_path, "flat key = value configuration file")->required();
  std::uint64_t seed = 0;
  int chains = 0;
  auto* seed_opt = app.add_option("--seed", seed, "override the random seed");
  auto* chains_opt = app.add_option("--chains", chains, "number of chains run concurrently")->check(CLI::PositiveNumber);
  app.add_flag("--force", opt.force, "accept draws whose data or config hash does not match");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : jsqr::kExitData;
  }
  if (*seed_opt) opt.seed = seed;
  if (*chains_opt) opt.chains = chains;
  return jsqr::run_command(opt, std::cout, std::cerr);
}
