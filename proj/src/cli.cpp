#include "uot/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace uot::cli {

namespace {

using io::json;

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError(where + ": config must be a JSON object");
  }
  for (const auto& item : j.items()) {
    if (!allowed.contains(item.key())) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

Metric parse_metric(const json& j) {
  const auto name = j.value("metric", std::string("cosine"));
  if (name == "cosine") return Metric::CosineDistance;
  if (name == "sqeuclidean") return Metric::SquaredEuclidean;
  throw ConfigError("metric must be 'cosine' or 'sqeuclidean', got '" + name + "'");
}

MarginalPreset parse_preset(const std::string& name) {
  if (name == "a2l") return MarginalPreset::A2L;
  if (name == "l2a") return MarginalPreset::L2A;
  if (name == "balanced") return MarginalPreset::Balanced;
  if (name == "free") return MarginalPreset::Free;
  throw ConfigError("preset must be one of a2l, l2a, balanced, free; got '" + name + "'");
}

SolverConfig solver_from_json(const json& j, const Overrides& ov) {
  SolverConfig cfg;
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.tolerance = j.value("tolerance", cfg.tolerance);
  cfg.log_domain = j.value("log_domain", cfg.log_domain);
  if (j.contains("preset")) {
    if (j.contains("lambda1") || j.contains("lambda2")) {
      throw ConfigError("give either preset or explicit lambda1/lambda2, not both");
    }
    std::tie(cfg.lambda1, cfg.lambda2) = preset_marginals(parse_preset(j.at("preset")));
  } else {
    cfg.lambda1 = j.value("lambda1", cfg.lambda1);
    cfg.lambda2 = j.value("lambda2", cfg.lambda2);
  }
  if (ov.log_domain) {
    cfg.log_domain = *ov.log_domain;
  }
  validate(cfg);
  return cfg;
}

std::string fmt_lambda(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_val(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int fail(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << '\n';
  return code;
}

// Input-shaped problems exit 1; solver trouble exits 2.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const SolverError& e) {
    return fail(e, 2);
  } catch (const IoError& e) {
    return fail(e, 1);
  } catch (const ConfigError& e) {
    return fail(e, 1);
  } catch (const ShapeError& e) {
    return fail(e, 1);
  } catch (const DomainError& e) {
    return fail(e, 1);
  } catch (const SizeError& e) {
    return fail(e, 1);
  } catch (const InfeasibilityError& e) {
    return fail(e, 1);
  } catch (const json::exception& e) {
    return fail(e, 1);
  }
}

SynthSpec spec_from_json(const json& j, const Overrides& ov) {
  require_keys(j,
               {"vocab_size", "num_tokens", "frames_per_token", "transition_width",
                "noise_frame_rate", "embed_dim", "noise_scale", "seed", "count"},
               "synth spec");
  SynthSpec spec;
  spec.vocab_size = j.value("vocab_size", spec.vocab_size);
  spec.num_tokens = j.value("num_tokens", spec.num_tokens);
  if (j.contains("frames_per_token")) {
    const auto range = j.at("frames_per_token").get<std::vector<int>>();
    if (range.size() != 2) {
      throw ConfigError("frames_per_token must be [min, max]");
    }
    spec.frames_per_token = {range[0], range[1]};
  }
  spec.transition_width = j.value("transition_width", spec.transition_width);
  spec.noise_frame_rate = j.value("noise_frame_rate", spec.noise_frame_rate);
  spec.embed_dim = j.value("embed_dim", spec.embed_dim);
  spec.noise_scale = j.value("noise_scale", spec.noise_scale);
  spec.seed = j.value("seed", spec.seed);
  if (ov.seed) {
    spec.seed = *ov.seed;
  }
  validate(spec);
  return spec;
}

}  // namespace

int run_solve(const fs::path& acoustic_csv, const fs::path& linguistic_csv,
              const fs::path& config_json, const fs::path& out_dir, const Overrides& ov) {
  return guarded([&] {
    const json cfg_json = io::read_json_file(config_json);
    require_keys(cfg_json,
                 {"epsilon", "lambda1", "lambda2", "preset", "max_iters", "tolerance",
                  "log_domain", "metric", "normalize", "projection"},
                 "solve config");
    const SolverConfig cfg = solver_from_json(cfg_json, ov);
    const Metric metric = parse_metric(cfg_json);
    const bool normalize = cfg_json.value("normalize", true);

    FeatureSequence acoustic = io::read_features(acoustic_csv, Side::Acoustic);
    const FeatureSequence linguistic = io::read_features(linguistic_csv, Side::Linguistic);
    if (cfg_json.contains("projection")) {
      const fs::path params_path = cfg_json.at("projection").get<std::string>();
      acoustic = project_features(acoustic,
                                  io::projection_from_json(io::read_json_file(params_path)));
    }
    if (normalize) {
      acoustic = normalize_rows(acoustic).features;
    }
    const FeatureSequence side_b = normalize ? normalize_rows(linguistic).features : linguistic;

    const CostMatrix cost = cost_matrix(acoustic, side_b, metric);
    const TransportPlan plan = solve_uot(cost, Measure::uniform(cost.rows()),
                                         Measure::uniform(cost.cols()), cfg);

    fs::create_directories(out_dir);
    io::write_csv_matrix(out_dir / "plan.csv", plan.gamma);
    io::write_pgm(out_dir / "plan.pgm", plan.gamma);
    io::write_json_file(out_dir / "diagnostics.json", io::diagnostics_json(plan));
    return plan.converged ? 0 : 2;
  });
}

int run_sweep(const fs::path& instance_dir, const fs::path& grid_json,
              const fs::path& out_dir, const Overrides& ov) {
  return guarded([&] {
    const json grid = io::read_json_file(grid_json);
    require_keys(grid,
                 {"pairs", "epsilon", "max_iters", "tolerance", "log_domain", "metric",
                  "normalize", "threshold"},
                 "sweep grid");
    // Default grid: the six coupling panels from the sweep figure.
    std::vector<std::pair<double, double>> pairs = {{10.0, 10.0}, {0.1, 1.0},  {1.0, 1.0},
                                                    {0.01, 1.0},  {1.0, 0.01}, {0.05, 0.05}};
    if (grid.contains("pairs")) {
      pairs.clear();
      for (const auto& p : grid.at("pairs")) {
        const auto pair = p.get<std::vector<double>>();
        if (pair.size() != 2) {
          throw ConfigError("sweep grid: each pair must be [lambda1, lambda2]");
        }
        pairs.emplace_back(pair[0], pair[1]);
      }
      if (pairs.empty()) {
        throw ConfigError("sweep grid: pairs must be nonempty");
      }
    }
    const double threshold = grid.value("threshold", 0.1);
    const Metric metric = parse_metric(grid);
    const bool normalize = grid.value("normalize", true);

    const SyntheticInstance inst = io::read_instance(instance_dir);
    const FeatureSequence acoustic =
        normalize ? normalize_rows(inst.acoustic).features : inst.acoustic;
    const FeatureSequence linguistic =
        normalize ? normalize_rows(inst.linguistic).features : inst.linguistic;
    const CostMatrix cost = cost_matrix(acoustic, linguistic, metric);
    const Measure w = Measure::uniform(cost.rows());
    const Measure v = Measure::uniform(cost.cols());

    fs::create_directories(out_dir);
    std::ofstream summary(out_dir / "summary.csv");
    if (!summary) {
      throw IoError("cannot write " + (out_dir / "summary.csv").string());
    }
    summary << "lambda1,lambda2,total_mass,kl_row,kl_col,entropy,precision,recall,"
               "coverage,status\n";

    bool all_ok = true;
    for (const auto& [l1, l2] : pairs) {
      SolverConfig cfg;
      cfg.epsilon = grid.value("epsilon", cfg.epsilon);
      cfg.max_iters = grid.value("max_iters", cfg.max_iters);
      cfg.tolerance = grid.value("tolerance", cfg.tolerance);
      cfg.log_domain = grid.value("log_domain", cfg.log_domain);
      if (ov.log_domain) {
        cfg.log_domain = *ov.log_domain;
      }
      cfg.lambda1 = l1;
      cfg.lambda2 = l2;

      summary << fmt_lambda(l1) << ',' << fmt_lambda(l2) << ',';
      try {
        validate(cfg);
        const TransportPlan plan = solve_uot(cost, w, v, cfg);
        const DetectionResult det = detection_metrics(plan.gamma, inst.truth, threshold);
        io::write_pgm(out_dir /
                          ("plan_" + fmt_lambda(l1) + "_" + fmt_lambda(l2) + ".pgm"),
                      plan.gamma);
        summary << fmt_val(plan.gamma.sum()) << ',' << fmt_val(plan.objective.kl_row)
                << ',' << fmt_val(plan.objective.kl_col) << ','
                << fmt_val(plan.objective.entropy_plain) << ',' << fmt_val(det.precision)
                << ',' << fmt_val(det.recall) << ',' << fmt_val(det.token_coverage) << ','
                << (plan.converged ? "ok" : "non-converged") << '\n';
        all_ok = all_ok && plan.converged;
      } catch (const std::exception& e) {
        summary << "0,0,0,0,0,0,0,error\n";
        std::cerr << "sweep cell (" << l1 << ", " << l2 << "): " << e.what() << '\n';
        all_ok = false;
      }
    }
    return all_ok ? 0 : 2;
  });
}

int run_synth(const fs::path& spec_json, const fs::path& out_dir, const Overrides& ov) {
  return guarded([&] {
    const json j = io::read_json_file(spec_json);
    const SynthSpec spec = spec_from_json(j, ov);
    const int count = j.value("count", 1);
    if (count < 1) {
      throw ConfigError("synth spec: count must be >= 1");
    }
    if (count == 1) {
      io::write_instance(out_dir, generate_instance(spec));
    } else {
      const auto dataset = generate_dataset(spec, count);
      for (int k = 0; k < count; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "instance_%03d", k);
        io::write_instance(out_dir / name, dataset[static_cast<std::size_t>(k)]);
      }
    }
    return 0;
  });
}

int run_train(const fs::path& dataset_dir, const fs::path& config_json,
              const fs::path& out_dir, const Overrides& ov) {
  return guarded([&] {
    const json j = io::read_json_file(config_json);
    require_keys(j,
                 {"eta", "solver", "epochs", "learning_rate", "batch_size", "seed",
                  "raw_dim", "d_a"},
                 "train config");
    TrainConfig cfg;
    cfg.eta = j.value("eta", cfg.eta);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.raw_dim = j.value("raw_dim", cfg.raw_dim);
    cfg.d_a = j.value("d_a", cfg.d_a);
    if (j.contains("solver")) {
      require_keys(j.at("solver"),
                   {"epsilon", "lambda1", "lambda2", "preset", "max_iters", "tolerance",
                    "log_domain"},
                   "train solver config");
      cfg.solver = solver_from_json(j.at("solver"), ov);
    } else if (ov.log_domain) {
      cfg.solver.log_domain = *ov.log_domain;
    }
    if (ov.seed) {
      cfg.seed = *ov.seed;
    }
    validate(cfg);

    std::vector<SyntheticInstance> dataset;
    if (fs::exists(dataset_dir / "acoustic.csv")) {
      dataset.push_back(io::read_instance(dataset_dir));
    } else {
      std::vector<fs::path> dirs;
      for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "acoustic.csv")) {
          dirs.push_back(entry.path());
        }
      }
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) {
        dataset.push_back(io::read_instance(d));
      }
    }
    if (dataset.empty()) {
      throw IoError("no instances found under " + dataset_dir.string());
    }

    const TrainResult result = train(dataset, cfg);

    fs::create_directories(out_dir);
    std::ofstream history(out_dir / "history.csv");
    if (!history) {
      throw IoError("cannot write " + (out_dir / "history.csv").string());
    }
    history << "epoch,total,ctc,align,uot,dev_token_error\n";
    for (std::size_t e = 0; e < result.history.size(); ++e) {
      const EpochStats& s = result.history[e];
      history << e << ',' << fmt_val(s.total) << ',' << fmt_val(s.ctc) << ','
              << fmt_val(s.align) << ',' << fmt_val(s.uot) << ','
              << fmt_val(s.dev_token_error) << '\n';
    }
    io::write_json_file(out_dir / "params.json", io::params_to_json(result.params));
    return 0;
  });
}

int run_eval(const fs::path& plan_csv, const fs::path& truth_json, double threshold,
             const fs::path& out_dir) {
  return guarded([&] {
    const Matrix plan = io::read_csv_matrix(plan_csv);
    const auto truth = io::truth_from_json(io::read_json_file(truth_json));
    const DetectionResult det = detection_metrics(plan, truth, threshold);
    fs::create_directories(out_dir);
    json j;
    j["precision"] = det.precision;
    j["recall"] = det.recall;
    j["token_coverage"] = det.token_coverage;
    j["empty_prediction"] = det.empty_prediction;
    j["threshold"] = threshold;
    io::write_json_file(out_dir / "metrics.json", j);
    return 0;
  });
}

}  // namespace uot::cli
