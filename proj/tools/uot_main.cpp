#include "uot/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Unbalanced optimal transport alignment toolkit"};
  app.require_subcommand(1);

  std::string acoustic, linguistic, config, out, instance, dataset, plan, truth;
  double threshold = 0.1;
  std::uint64_t seed = 0;
  bool log_domain = true;

  uot::cli::Overrides ov;
  auto bind_overrides = [&](CLI::App* cmd, bool with_seed) {
    auto* ld = cmd->add_flag("--log-domain,!--no-log-domain", log_domain,
                             "override the solver's log-domain mode");
    cmd->callback([&ov, ld, &log_domain] {
      if (ld->count() > 0) ov.log_domain = log_domain;
    });
    if (with_seed) {
      auto* sd = cmd->add_option("--seed", seed, "override the config seed");
      cmd->callback([&ov, sd, &seed] {
        if (sd->count() > 0) ov.seed = seed;
      });
    }
  };

  auto* solve = app.add_subcommand("solve", "solve one alignment instance");
  solve->add_option("--acoustic", acoustic, "acoustic feature CSV")->required();
  solve->add_option("--linguistic", linguistic, "linguistic feature CSV")->required();
  solve->add_option("--config", config, "solver config JSON")->required();
  solve->add_option("--out", out, "output directory")->required();
  bind_overrides(solve, false);

  auto* sweep = app.add_subcommand("sweep", "solve a (lambda1, lambda2) grid");
  sweep->add_option("--instance", instance, "instance directory")->required();
  sweep->add_option("--config", config, "grid config JSON")->required();
  sweep->add_option("--out", out, "output directory")->required();
  bind_overrides(sweep, false);

  auto* synth = app.add_subcommand("synth", "generate a synthetic instance");
  synth->add_option("--config", config, "synth spec JSON")->required();
  synth->add_option("--out", out, "output directory")->required();
  bind_overrides(synth, true);

  auto* train = app.add_subcommand("train", "run the toy transfer trainer");
  train->add_option("--dataset", dataset, "dataset directory")->required();
  train->add_option("--config", config, "train config JSON")->required();
  train->add_option("--out", out, "output directory")->required();
  bind_overrides(train, true);

  auto* eval = app.add_subcommand("eval", "detection metrics for a plan");
  eval->add_option("--plan", plan, "transport plan CSV")->required();
  eval->add_option("--truth", truth, "ground-truth JSON")->required();
  eval->add_option("--threshold", threshold, "mass threshold in (0, 1)");
  eval->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) {
    return uot::cli::run_solve(acoustic, linguistic, config, out, ov);
  }
  if (sweep->parsed()) {
    return uot::cli::run_sweep(instance, config, out, ov);
  }
  if (synth->parsed()) {
    return uot::cli::run_synth(config, out, ov);
  }
  if (train->parsed()) {
    return uot::cli::run_train(dataset, config, out, ov);
  }
  if (eval->parsed()) {
    return uot::cli::run_eval(plan, truth, threshold, out);
  }
  return 1;
}
