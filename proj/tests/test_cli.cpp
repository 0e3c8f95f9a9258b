#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "test_util.hpp"
#include "uot/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace uot;
using namespace uot::testutil;
namespace fs = std::filesystem;

namespace {

std::string g_binary;  // path to the uot executable, from argv[1]

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "uot_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_binary(const std::string& args) {
  const std::string cmd = g_binary + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

SynthSpec demo_spec(std::uint64_t seed = 7) {
  SynthSpec spec;
  spec.vocab_size = 10;
  spec.num_tokens = 5;
  spec.frames_per_token = {3, 5};
  spec.noise_frame_rate = 0.15;
  spec.embed_dim = 8;
  spec.noise_scale = 0.05;
  spec.seed = seed;
  return spec;
}

io::json vector_entry(const Vector& v) {
  return io::json{{"shape", {v.size()}},
                  {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

io::json matrix_entry(const Matrix& m) {
  std::vector<double> rm;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      rm.push_back(m(i, j));
    }
  }
  return io::json{{"shape", {m.rows(), m.cols()}}, {"data", rm}};
}

}  // namespace

TEST_CASE("solve: free-matching plan equals the Gibbs kernel CSV byte-for-byte") {
  const fs::path dir = fresh_dir("solve_free");
  const SyntheticInstance inst = generate_instance(demo_spec());
  io::write_csv_matrix(dir / "acoustic.csv", inst.acoustic.data);
  io::write_csv_matrix(dir / "linguistic.csv", inst.linguistic.data);
  io::write_json_file(dir / "config.json",
                      io::json{{"epsilon", 0.05}, {"preset", "free"}, {"log_domain", false}});

  const int code = cli::run_solve(dir / "acoustic.csv", dir / "linguistic.csv",
                                  dir / "config.json", dir / "out");
  CHECK(code == 0);

  // reference kernel through the same preprocessing (normalize + cosine)
  const FeatureSequence h = normalize_rows(inst.acoustic).features;
  const FeatureSequence l = normalize_rows(inst.linguistic).features;
  const Matrix k = gibbs_kernel(cost_matrix(h, l, Metric::CosineDistance), 0.05);
  io::write_csv_matrix(dir / "kernel.csv", k);
  CHECK(slurp(dir / "out" / "plan.csv") == slurp(dir / "kernel.csv"));

  const io::json diag = io::read_json_file(dir / "out" / "diagnostics.json");
  CHECK(diag.at("converged").get<bool>());
  CHECK(diag.at("iterations").get<int>() == 1);
}

TEST_CASE("solve: 1x1 inputs produce a single-value plan") {
  const fs::path dir = fresh_dir("solve_1x1");
  Matrix one(1, 1);
  one << 0.5;
  io::write_csv_matrix(dir / "a.csv", one);
  io::write_csv_matrix(dir / "l.csv", one);
  io::write_json_file(dir / "config.json", io::json{{"epsilon", 0.05}, {"preset", "a2l"}});
  CHECK(cli::run_solve(dir / "a.csv", dir / "l.csv", dir / "config.json", dir / "out") == 0);
  const Matrix plan = io::read_csv_matrix(dir / "out" / "plan.csv");
  CHECK(plan.rows() == 1);
  CHECK(plan.cols() == 1);
}

TEST_CASE("solve: unknown config key is rejected") {
  const fs::path dir = fresh_dir("solve_badkey");
  Matrix one = Matrix::Constant(2, 2, 0.3);
  io::write_csv_matrix(dir / "a.csv", one);
  io::write_csv_matrix(dir / "l.csv", one);
  io::write_json_file(dir / "config.json", io::json{{"epsilon", 0.05}, {"bogus", 1}});
  CHECK(cli::run_solve(dir / "a.csv", dir / "l.csv", dir / "config.json", dir / "out") == 1);
  // preset and explicit lambdas are mutually exclusive
  io::write_json_file(dir / "config.json", io::json{{"preset", "a2l"}, {"lambda1", 0.5}});
  CHECK(cli::run_solve(dir / "a.csv", dir / "l.csv", dir / "config.json", dir / "out") == 1);
}

TEST_CASE("solve: applies an optional projection before the cost") {
  const fs::path dir = fresh_dir("solve_proj");
  const SyntheticInstance inst = generate_instance(demo_spec(11));
  const DistortResult distorted = distort_features(inst.acoustic, 12, 5);
  io::write_csv_matrix(dir / "a.csv", distorted.raw.data);
  io::write_csv_matrix(dir / "l.csv", inst.linguistic.data);
  io::json params;
  params["projection.weight"] = matrix_entry(distorted.undo.weight);
  params["projection.bias"] = vector_entry(distorted.undo.bias);
  io::write_json_file(dir / "proj.json", params);
  io::write_json_file(dir / "config.json",
                      io::json{{"epsilon", 0.05},
                               {"preset", "a2l"},
                               {"projection", (dir / "proj.json").string()}});
  CHECK(cli::run_solve(dir / "a.csv", dir / "l.csv", dir / "config.json", dir / "out") == 0);
  // without the projection the dims mismatch
  io::write_json_file(dir / "config.json", io::json{{"epsilon", 0.05}});
  CHECK(cli::run_solve(dir / "a.csv", dir / "l.csv", dir / "config.json", dir / "out2") == 1);
}

TEST_CASE("synth is deterministic: same seed, identical directories") {
  const fs::path dir = fresh_dir("synth_det");
  io::json spec{{"vocab_size", 10}, {"num_tokens", 5},          {"frames_per_token", {3, 5}},
                {"embed_dim", 8},   {"noise_frame_rate", 0.15}, {"noise_scale", 0.05},
                {"seed", 7}};
  io::write_json_file(dir / "spec.json", spec);
  CHECK(cli::run_synth(dir / "spec.json", dir / "one") == 0);
  CHECK(cli::run_synth(dir / "spec.json", dir / "two") == 0);
  for (const char* name : {"acoustic.csv", "linguistic.csv", "labels.json", "truth.json"}) {
    CHECK(slurp(dir / "one" / name) == slurp(dir / "two" / name));
  }
  // seed override changes the output
  cli::Overrides ov;
  ov.seed = 8;
  CHECK(cli::run_synth(dir / "spec.json", dir / "three", ov) == 0);
  CHECK(slurp(dir / "one" / "acoustic.csv") != slurp(dir / "three" / "acoustic.csv"));
}

TEST_CASE("sweep: default grid writes six heatmaps and six summary rows") {
  const fs::path dir = fresh_dir("sweep");
  io::write_instance(dir / "instance", generate_instance(demo_spec(13)));
  io::write_json_file(dir / "grid.json", io::json::object());
  CHECK(cli::run_sweep(dir / "instance", dir / "grid.json", dir / "out") == 0);

  const std::string summary = slurp(dir / "out" / "summary.csv");
  std::stringstream ss(summary);
  std::string line;
  std::getline(ss, line);
  CHECK(line ==
        "lambda1,lambda2,total_mass,kl_row,kl_col,entropy,precision,recall,coverage,status");
  int rows = 0;
  while (std::getline(ss, line)) {
    if (!line.empty()) {
      ++rows;
      CHECK(line.find("ok") != std::string::npos);
    }
  }
  CHECK(rows == 6);
  for (const char* name : {"plan_10_10.pgm", "plan_0.1_1.pgm", "plan_1_1.pgm",
                           "plan_0.01_1.pgm", "plan_1_0.01.pgm", "plan_0.05_0.05.pgm"}) {
    CHECK(fs::exists(dir / "out" / name));
  }
}

TEST_CASE("PGM files are valid P2 with a 255 ceiling") {
  const fs::path dir = fresh_dir("pgm");
  Matrix plan(2, 3);
  plan << 0.0, 0.5, 1.0, 0.25, 0.75, 0.125;
  io::write_pgm(dir / "plan.pgm", plan);
  std::ifstream in(dir / "plan.pgm");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  std::vector<int> vals;
  int v;
  while (in >> v) vals.push_back(v);
  REQUIRE(vals.size() == 6);
  CHECK(vals[0] == 0);    // zero maps to 0
  CHECK(vals[2] == 255);  // plan max maps to 255
  CHECK(vals[1] == 128);  // 0.5 -> round(127.5)
}

TEST_CASE("eval: perfect plan scores ones") {
  const fs::path dir = fresh_dir("eval");
  const SyntheticInstance inst = generate_instance(demo_spec(17));
  io::write_instance(dir / "instance", inst);
  Matrix perfect = Matrix::Zero(inst.frames(), inst.tokens());
  for (Index i = 0; i < inst.frames(); ++i) {
    const FrameTruth& ft = inst.truth[static_cast<std::size_t>(i)];
    if (ft.kind == MatchKind::Token) perfect(i, ft.token) = 1.0;
  }
  io::write_csv_matrix(dir / "plan.csv", perfect);
  CHECK(cli::run_eval(dir / "plan.csv", dir / "instance" / "truth.json", 0.1, dir / "out") ==
        0);
  const io::json metrics = io::read_json_file(dir / "out" / "metrics.json");
  CHECK(metrics.at("precision").get<double>() == 1.0);
  CHECK(metrics.at("recall").get<double>() == 1.0);
  CHECK(metrics.at("token_coverage").get<double>() == 1.0);
  CHECK_FALSE(metrics.at("empty_prediction").get<bool>());
  CHECK(cli::run_eval(dir / "plan.csv", dir / "instance" / "truth.json", 2.0, dir / "out") ==
        1);
}

TEST_CASE("train: history rows satisfy the loss decomposition") {
  const fs::path dir = fresh_dir("train");
  SynthSpec spec = demo_spec(19);
  spec.num_tokens = 3;
  spec.frames_per_token = {2, 3};
  spec.embed_dim = 4;
  const auto dataset = generate_dataset(spec, 3);
  for (int k = 0; k < 3; ++k) {
    io::write_instance(dir / "data" / ("instance_" + std::to_string(k)),
                       dataset[static_cast<std::size_t>(k)]);
  }
  io::write_json_file(
      dir / "train.json",
      io::json{{"eta", 0.3},
               {"epochs", 4},
               {"learning_rate", 0.05},
               {"seed", 3},
               {"raw_dim", 5},
               {"d_a", 3},
               {"solver",
                io::json{{"epsilon", 0.05}, {"preset", "a2l"}, {"max_iters", 3000}}}});
  CHECK(cli::run_train(dir / "data", dir / "train.json", dir / "out") == 0);

  std::ifstream history(dir / "out" / "history.csv");
  std::string line;
  std::getline(history, line);
  CHECK(line == "epoch,total,ctc,align,uot,dev_token_error");
  int rows = 0;
  while (std::getline(history, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(std::stod(tok));
    REQUIRE(cols.size() == 6);
    CHECK(std::abs(cols[1] - (0.3 * cols[2] + 0.7 * (cols[3] + cols[4]))) < 1e-12);
  }
  CHECK(rows == 4);

  // params round-trip through the named-array file
  const ToyModelParams params =
      io::toy_params_from_json(io::read_json_file(dir / "out" / "params.json"));
  CHECK(params.encoder_weight.rows() == 5);
  CHECK(params.head.vocab_size() >= 2);
}

TEST_CASE("CSV matrices round-trip exactly") {
  const fs::path dir = fresh_dir("csv");
  std::mt19937_64 rng(23);
  const Matrix m = random_matrix(rng, 7, 3, 100.0);
  io::write_csv_matrix(dir / "m.csv", m);
  CHECK(bits_equal(io::read_csv_matrix(dir / "m.csv"), m));
}

TEST_CASE("CSV errors name the file and row") {
  const fs::path dir = fresh_dir("csv_err");
  std::ofstream(dir / "bad.csv") << "1,2\n3,nope\n";
  try {
    io::read_csv_matrix(dir / "bad.csv");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.csv:2") != std::string::npos);
    CHECK(msg.find("nope") != std::string::npos);
  }
  std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
  CHECK_THROWS_AS(io::read_csv_matrix(dir / "ragged.csv"), IoError);
}

TEST_CASE("adapter/head parameter file round-trips") {
  std::mt19937_64 rng(29);
  AdapterParams adapter;
  adapter.fc_l2a_weight = random_matrix(rng, 4, 3);
  adapter.fc_l2a_bias = random_matrix(rng, 3, 1).col(0);
  adapter.ln_in_gain = random_matrix(rng, 4, 1).col(0);
  adapter.ln_in_bias = random_matrix(rng, 4, 1).col(0);
  adapter.ln_out_gain = random_matrix(rng, 3, 1).col(0);
  adapter.ln_out_bias = random_matrix(rng, 3, 1).col(0);
  PredictionHead head{random_matrix(rng, 3, 6), random_matrix(rng, 6, 1).col(0)};

  const io::json j = io::params_to_json(adapter, head);
  AdapterParams adapter2;
  PredictionHead head2;
  io::params_from_json(j, adapter2, head2);
  CHECK(bits_equal(adapter2.fc_l2a_weight, adapter.fc_l2a_weight));
  CHECK(bits_equal(head2.weight, head.weight));
  CHECK((head2.bias - head.bias).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("binary exit codes: 0 ok, 1 input error, 2 non-convergence") {
  if (g_binary.empty()) {
    return;  // library-only run
  }
  const fs::path dir = fresh_dir("binary");
  const SyntheticInstance inst = generate_instance(demo_spec(31));
  io::write_csv_matrix(dir / "a.csv", inst.acoustic.data);
  io::write_csv_matrix(dir / "l.csv", inst.linguistic.data);

  io::write_json_file(dir / "ok.json", io::json{{"epsilon", 0.05}, {"preset", "a2l"}});
  CHECK(run_binary("solve --acoustic " + (dir / "a.csv").string() + " --linguistic " +
                   (dir / "l.csv").string() + " --config " + (dir / "ok.json").string() +
                   " --out " + (dir / "out_ok").string()) == 0);

  std::ofstream(dir / "bad.csv") << "1,2\nx,4\n";
  CHECK(run_binary("solve --acoustic " + (dir / "bad.csv").string() + " --linguistic " +
                   (dir / "l.csv").string() + " --config " + (dir / "ok.json").string() +
                   " --out " + (dir / "out_bad").string()) == 1);

  io::write_json_file(dir / "slow.json", io::json{{"epsilon", 0.05},
                                                  {"preset", "balanced"},
                                                  {"max_iters", 2},
                                                  {"tolerance", 1e-14}});
  CHECK(run_binary("solve --acoustic " + (dir / "a.csv").string() + " --linguistic " +
                   (dir / "l.csv").string() + " --config " + (dir / "slow.json").string() +
                   " --out " + (dir / "out_slow").string()) == 2);
  CHECK(fs::exists(dir / "out_slow" / "plan.csv"));  // outputs written anyway

  // synth through the binary, twice, identical bytes
  io::write_json_file(dir / "spec.json", io::json{{"vocab_size", 8},
                                                  {"num_tokens", 4},
                                                  {"embed_dim", 6},
                                                  {"seed", 3}});
  CHECK(run_binary("synth --config " + (dir / "spec.json").string() + " --out " +
                   (dir / "s1").string()) == 0);
  CHECK(run_binary("synth --config " + (dir / "spec.json").string() + " --out " +
                   (dir / "s2").string()) == 0);
  CHECK(slurp(dir / "s1" / "acoustic.csv") == slurp(dir / "s2" / "acoustic.csv"));

  CHECK(run_binary("eval --plan " + (dir / "out_ok" / "plan.csv").string() + " --truth " +
                   (dir / "missing.json").string() + " --out " + (dir / "e").string()) == 1);
}

int main(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-') {
    g_binary = argv[1];
  }
  doctest::Context context;
  context.applyCommandLine(1, argv);
  return context.run();
}
