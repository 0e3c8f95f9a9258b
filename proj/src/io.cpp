#include "uot/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace uot::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, const fs::path& path, std::size_t row) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0')) {
    throw IoError(path.string() + ":" + std::to_string(row) + ": not a number: '" + tok +
                  "'");
  }
  return v;
}

Matrix named_matrix(const json& j, const std::string& name, Index rows_hint = -1) {
  if (!j.contains(name)) {
    throw IoError("params file: missing array '" + name + "'");
  }
  const json& entry = j.at(name);
  if (!entry.contains("shape") || !entry.contains("data")) {
    throw IoError("params file: array '" + name + "' needs shape and data");
  }
  const auto shape = entry.at("shape").get<std::vector<Index>>();
  Index rows = 1, cols = 1;
  if (shape.size() == 1) {
    rows = shape[0];
  } else if (shape.size() == 2) {
    rows = shape[0];
    cols = shape[1];
  } else {
    throw IoError("params file: array '" + name + "' must be rank 1 or 2");
  }
  const auto data = entry.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw IoError("params file: array '" + name + "' data does not match shape");
  }
  if (rows_hint >= 0 && rows != rows_hint) {
    throw IoError("params file: array '" + name + "' has unexpected shape");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) {
      m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
    }
  }
  return m;
}

json array_entry(const Matrix& m) {
  json entry;
  entry["shape"] = {m.rows(), m.cols()};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      data.push_back(m(i, j));
    }
  }
  entry["data"] = data;
  return entry;
}

json array_entry(const Vector& v) {
  json entry;
  entry["shape"] = {v.size()};
  entry["data"] = std::vector<double>(v.data(), v.data() + v.size());
  return entry;
}

Vector named_vector(const json& j, const std::string& name) {
  const Matrix m = named_matrix(j, name);
  if (m.cols() != 1) {
    throw IoError("params file: array '" + name + "' must be rank 1");
  }
  return m.col(0);
}

}  // namespace

Matrix read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto first = tok.find_first_not_of(' ');
      const auto last = tok.find_last_not_of(' ');
      if (first == std::string::npos) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": empty field");
      }
      row.push_back(parse_double(tok.substr(first, last - first + 1), path, lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(rows.front().size()) + " columns, got " +
                    std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw IoError(path.string() + ": no rows");
  }
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

void write_csv_matrix(const fs::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << fmt(m(i, j));
    }
    out << '\n';
  }
}

FeatureSequence read_features(const fs::path& path, Side side) {
  FeatureSequence f;
  f.data = read_csv_matrix(path);
  f.side = side;
  validate(f);
  return f;
}

void write_pgm(const fs::path& path, const Matrix& plan) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  const double mx = plan.size() > 0 ? plan.maxCoeff() : 0.0;
  out << "P2\n" << plan.cols() << ' ' << plan.rows() << "\n255\n";
  for (Index i = 0; i < plan.rows(); ++i) {
    for (Index j = 0; j < plan.cols(); ++j) {
      const int v = mx > 0.0 ? static_cast<int>(std::lround(255.0 * plan(i, j) / mx)) : 0;
      if (j) out << ' ';
      out << v;
    }
    out << '\n';
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

json diagnostics_json(const TransportPlan& plan) {
  json j;
  j["iterations"] = plan.iterations;
  j["residual"] = plan.residual;
  j["converged"] = plan.converged;
  j["transport_cost"] = plan.objective.transport_cost;
  j["kl_row"] = plan.objective.kl_row;
  j["kl_col"] = plan.objective.kl_col;
  j["neg_entropy"] = plan.objective.neg_entropy;
  j["entropy_plain"] = plan.objective.entropy_plain;
  j["total"] = plan.objective.total;
  return j;
}

json params_to_json(const AdapterParams& adapter, const PredictionHead& head) {
  json j;
  j["adapter.fc_l2a_weight"] = array_entry(adapter.fc_l2a_weight);
  j["adapter.fc_l2a_bias"] = array_entry(adapter.fc_l2a_bias);
  j["adapter.ln_in_gain"] = array_entry(adapter.ln_in_gain);
  j["adapter.ln_in_bias"] = array_entry(adapter.ln_in_bias);
  j["adapter.ln_out_gain"] = array_entry(adapter.ln_out_gain);
  j["adapter.ln_out_bias"] = array_entry(adapter.ln_out_bias);
  j["head.weight"] = array_entry(head.weight);
  j["head.bias"] = array_entry(head.bias);
  return j;
}

json params_to_json(const ToyModelParams& params) {
  json j = params_to_json(params.adapter, params.head);
  j["encoder.weight"] = array_entry(params.encoder_weight);
  j["encoder.bias"] = array_entry(params.encoder_bias);
  j["projection.weight"] = array_entry(params.projection.weight);
  j["projection.bias"] = array_entry(params.projection.bias);
  return j;
}

void params_from_json(const json& j, AdapterParams& adapter, PredictionHead& head) {
  adapter.fc_l2a_weight = named_matrix(j, "adapter.fc_l2a_weight");
  adapter.fc_l2a_bias = named_vector(j, "adapter.fc_l2a_bias");
  adapter.ln_in_gain = named_vector(j, "adapter.ln_in_gain");
  adapter.ln_in_bias = named_vector(j, "adapter.ln_in_bias");
  adapter.ln_out_gain = named_vector(j, "adapter.ln_out_gain");
  adapter.ln_out_bias = named_vector(j, "adapter.ln_out_bias");
  head.weight = named_matrix(j, "head.weight");
  head.bias = named_vector(j, "head.bias");
}

ToyModelParams toy_params_from_json(const json& j) {
  ToyModelParams p;
  params_from_json(j, p.adapter, p.head);
  p.encoder_weight = named_matrix(j, "encoder.weight");
  p.encoder_bias = named_vector(j, "encoder.bias");
  p.projection.weight = named_matrix(j, "projection.weight");
  p.projection.bias = named_vector(j, "projection.bias");
  return p;
}

ProjectionParams projection_from_json(const json& j) {
  ProjectionParams p;
  p.weight = named_matrix(j, "projection.weight");
  p.bias = named_vector(j, "projection.bias");
  return p;
}

json truth_to_json(const std::vector<FrameTruth>& truth) {
  json arr = json::array();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const FrameTruth& ft = truth[i];
    json entry;
    entry["frame"] = i;
    switch (ft.kind) {
      case MatchKind::Token:
        entry["kind"] = "token";
        entry["tokens"] = {ft.token};
        entry["weight"] = 1.0;
        break;
      case MatchKind::Pair:
        entry["kind"] = "pair";
        entry["tokens"] = {ft.token, ft.token2};
        entry["weight"] = ft.weight;
        break;
      case MatchKind::Null:
        entry["kind"] = "null";
        entry["tokens"] = json::array();
        entry["weight"] = 0.0;
        break;
    }
    arr.push_back(entry);
  }
  return arr;
}

std::vector<FrameTruth> truth_from_json(const json& j) {
  if (!j.is_array()) {
    throw IoError("truth file: expected a JSON array");
  }
  std::vector<FrameTruth> truth(j.size());
  for (const auto& entry : j) {
    const auto frame = entry.at("frame").get<std::size_t>();
    if (frame >= truth.size()) {
      throw IoError("truth file: frame index " + std::to_string(frame) + " out of range");
    }
    const auto kind = entry.at("kind").get<std::string>();
    FrameTruth ft;
    const auto toks = entry.at("tokens").get<std::vector<int>>();
    if (kind == "token") {
      if (toks.size() != 1) throw IoError("truth file: token entry needs one token");
      ft = {MatchKind::Token, toks[0], -1, 0.0};
    } else if (kind == "pair") {
      if (toks.size() != 2) throw IoError("truth file: pair entry needs two tokens");
      ft = {MatchKind::Pair, toks[0], toks[1], entry.value("weight", 0.5)};
    } else if (kind == "null") {
      ft = {MatchKind::Null, -1, -1, 0.0};
    } else {
      throw IoError("truth file: unknown kind '" + kind + "'");
    }
    truth[frame] = ft;
  }
  return truth;
}

void write_instance(const fs::path& dir, const SyntheticInstance& inst) {
  fs::create_directories(dir);
  write_csv_matrix(dir / "acoustic.csv", inst.acoustic.data);
  write_csv_matrix(dir / "linguistic.csv", inst.linguistic.data);
  write_json_file(dir / "labels.json", json(inst.labels.tokens));
  write_json_file(dir / "truth.json", truth_to_json(inst.truth));
}

SyntheticInstance read_instance(const fs::path& dir) {
  SyntheticInstance inst;
  inst.acoustic = read_features(dir / "acoustic.csv", Side::Acoustic);
  inst.linguistic = read_features(dir / "linguistic.csv", Side::Linguistic);
  const json labels = read_json_file(dir / "labels.json");
  inst.labels.tokens = labels.get<std::vector<int>>();
  inst.truth = truth_from_json(read_json_file(dir / "truth.json"));
  if (static_cast<Index>(inst.truth.size()) != inst.acoustic.length()) {
    throw IoError(dir.string() + ": truth length does not match acoustic frames");
  }
  return inst;
}

}  // namespace uot::io
