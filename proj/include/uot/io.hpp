#pragma once

#include "uot/common.hpp"
#include "uot/geometry.hpp"
#include "uot/solver.hpp"
#include "uot/synth.hpp"
#include "uot/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace uot::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Plain decimal CSV, no header, row-major; values round-trip exactly.
Matrix read_csv_matrix(const fs::path& path);
void write_csv_matrix(const fs::path& path, const Matrix& m);

FeatureSequence read_features(const fs::path& path, Side side);

// ASCII PGM (P2) heatmap; plan maximum maps to 255, zero to 0.
void write_pgm(const fs::path& path, const Matrix& plan);

json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const json& j);

json diagnostics_json(const TransportPlan& plan);

// Parameter files hold named, shaped arrays: name -> {shape, data}.
json params_to_json(const AdapterParams& adapter, const PredictionHead& head);
json params_to_json(const ToyModelParams& params);
void params_from_json(const json& j, AdapterParams& adapter, PredictionHead& head);
ToyModelParams toy_params_from_json(const json& j);
ProjectionParams projection_from_json(const json& j);

json truth_to_json(const std::vector<FrameTruth>& truth);
std::vector<FrameTruth> truth_from_json(const json& j);

// Instance directory: acoustic.csv, linguistic.csv, labels.json, truth.json.
void write_instance(const fs::path& dir, const SyntheticInstance& inst);
SyntheticInstance read_instance(const fs::path& dir);

}  // namespace uot::io
