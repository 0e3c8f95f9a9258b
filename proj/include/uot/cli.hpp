#pragma once

#include "uot/io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace uot::cli {

namespace fs = std::filesystem;

// Overrides coming from command-line flags; they beat config-file values.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<bool> log_domain;
};

// Exit-code contract shared by all commands:
//   0 ok, 1 input/config error, 2 solver non-convergence or divergence.
int run_solve(const fs::path& acoustic_csv, const fs::path& linguistic_csv,
              const fs::path& config_json, const fs::path& out_dir,
              const Overrides& ov = {});

int run_sweep(const fs::path& instance_dir, const fs::path& grid_json,
              const fs::path& out_dir, const Overrides& ov = {});

int run_synth(const fs::path& spec_json, const fs::path& out_dir, const Overrides& ov = {});

int run_train(const fs::path& dataset_dir, const fs::path& config_json,
              const fs::path& out_dir, const Overrides& ov = {});

int run_eval(const fs::path& plan_csv, const fs::path& truth_json, double threshold,
             const fs::path& out_dir);

}  // namespace uot::cli
