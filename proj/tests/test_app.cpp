#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddc/ddc.hpp"

using namespace ddc;
namespace fs = std::filesystem;

namespace {

class AppTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ddc_app_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Two-state LTI used as both plant and surrogate, so app-level flows run
  // in milliseconds.
  Json lti_config() const {
    Json lti;
    lti["a"] = {{0.8, 0.1}, {0.0, 0.7}};
    lti["b"] = {{0.0}, {1.0}};
    lti["c"] = {{1.0, 0.0}, {0.0, 1.0}};
    lti["d"] = {{0.0}, {0.0}};
    Json j;
    j["schema_version"] = 1;
    j["seed"] = 5;
    j["out_dir"] = dir_.string();
    j["horizon"] = {{"t_ini", 2}, {"t_f", 6}};
    j["cost"] = {{"q_diag", {1.0, 1.0}}, {"r_diag", {0.1}}};
    j["constraints"] = {{"u_lower", {-2.0}},
                        {"u_upper", {2.0}},
                        {"y_lower", {nullptr, nullptr}},
                        {"y_upper", {nullptr, nullptr}}};
    j["lambda"] = {{"init", {10.0, 1.0, 50.0}}};
    j["hunt"] = {{"iterations", 2}, {"rollout_steps", 3}, {"batch", 1},
                 {"heldout_fraction", 0.1}, {"parallel", false}};
    j["data"] = {{"path", "probe.csv"}, {"length", 40}, {"hold_steps", 2}};
    j["surrogate"] = {{"kind", "lti"}, {"lti", lti}};
    j["plant"] = {{"kind", "lti"}, {"lti", lti}};
    return j;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_F(AppTest, DefaultsMatchTheLandingBenchmark) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.horizon.t_ini, 1);
  EXPECT_EQ(cfg.horizon.t_f, 10);
  EXPECT_EQ(cfg.q_diag, (Vec(6) << 100.0, 10.0, 5.0, 1.0, 3000.0, 30.0).finished());
  EXPECT_EQ(cfg.r_diag, Vec::Constant(3, 0.01));
  EXPECT_EQ(cfg.hunt.lambda_init, (Vec(3) << 50.0, 50.0, 1000.0).finished());
  EXPECT_DOUBLE_EQ(cfg.u_box.upper(0), 16118.5);
  EXPECT_DOUBLE_EQ(cfg.u_box.upper(1), 322.37);
  EXPECT_DOUBLE_EQ(cfg.u_box.lower(2), -0.26);
  EXPECT_DOUBLE_EQ(cfg.y_box.upper(0), 33.33);
  EXPECT_DOUBLE_EQ(cfg.y_box.upper(2), 26.66);
  EXPECT_DOUBLE_EQ(cfg.y_box.lower(4), -0.61);
  EXPECT_DOUBLE_EQ(cfg.eval.spawn_x_lo, 6.67);
  EXPECT_DOUBLE_EQ(cfg.eval.spawn_x_hi, 26.66);
  EXPECT_DOUBLE_EQ(cfg.eval.spawn_y_lo, 18.66);
  EXPECT_DOUBLE_EQ(cfg.eval.spawn_y_hi, 24.0);
  EXPECT_EQ(cfg.eval.runs, 50);
  EXPECT_DOUBLE_EQ(cfg.eval.landing.pad_x, 16.665);
}

TEST_F(AppTest, UnknownKeysAreRejectedAtEveryLevel) {
  Json j = lti_config();
  j["bogus"] = 1;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = lti_config();
  j["hunt"]["iterationz"] = 3;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = lti_config();
  j["data"]["lenght"] = 10;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = lti_config();
  j["surrogate"]["lti"]["e"] = Json::array();
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = lti_config();
  j["evaluation"] = {{"landing", {{"pad_z", 1.0}}}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST_F(AppTest, SchemaVersionIsEnforced) {
  Json j = lti_config();
  j["schema_version"] = 2;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j.erase("schema_version");  // absent is accepted (current version assumed)
  EXPECT_NO_THROW(parse_run_config(j));
}

TEST_F(AppTest, NullBoundsBecomeInfinities) {
  const RunConfig cfg = parse_run_config(lti_config());
  EXPECT_TRUE(std::isinf(cfg.y_box.lower(0)));
  EXPECT_LT(cfg.y_box.lower(0), 0.0);
  EXPECT_TRUE(std::isinf(cfg.y_box.upper(1)));
  EXPECT_GT(cfg.y_box.upper(1), 0.0);
  EXPECT_DOUBLE_EQ(cfg.u_box.lower(0), -2.0);
}

TEST_F(AppTest, EffectiveConfigIsAFixedPointOfParsing) {
  const RunConfig defaults;
  const Json j1 = run_config_to_json(defaults);
  const Json j2 = run_config_to_json(parse_run_config(j1));
  EXPECT_EQ(j1, j2);

  const RunConfig custom = parse_run_config(lti_config());
  const Json c1 = run_config_to_json(custom);
  const Json c2 = run_config_to_json(parse_run_config(c1));
  EXPECT_EQ(c1, c2);
}

TEST_F(AppTest, GenerateDataWritesAPersistentlyExcitingDataset) {
  const RunConfig cfg = parse_run_config(lti_config());
  std::ostringstream log;
  ASSERT_EQ(cmd_generate_data(cfg, log), kExitOk) << log.str();
  const fs::path csv = dir_ / "probe.csv";
  ASSERT_TRUE(fs::exists(csv));
  ASSERT_TRUE(fs::exists(dir_ / "probe.csv.meta.json"));
  const Json meta = Json::parse(slurp(dir_ / "probe.csv.meta.json"));
  EXPECT_TRUE(meta["result"]["persistently_exciting"].get<bool>());
  EXPECT_EQ(meta["result"]["pe_order"].get<Index>(), cfg.horizon.depth());

  const HankelPartition part = detail::load_partition(cfg);
  EXPECT_EQ(part.cols(), cfg.data.length - cfg.horizon.depth() + 1);
  EXPECT_EQ(part.input_dim, 1);
  EXPECT_EQ(part.output_dim, 2);
}

TEST_F(AppTest, ConstantInputFailsTheExcitationGate) {
  Json j = lti_config();
  j["data"]["hold_steps"] = j["data"]["length"];  // one level for the whole record
  const RunConfig cfg = parse_run_config(j);
  std::ostringstream log;
  EXPECT_EQ(cmd_generate_data(cfg, log), kExitPeFailure);
  EXPECT_NE(log.str().find("persistency of excitation failed"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "probe.csv"));
}

TEST_F(AppTest, GenerateDataIsSeedDeterministic) {
  Json j = lti_config();
  j["out_dir"] = (dir_ / "a").string();
  ASSERT_EQ(cmd_generate_data(parse_run_config(j), std::cerr), kExitOk);
  j["out_dir"] = (dir_ / "b").string();
  ASSERT_EQ(cmd_generate_data(parse_run_config(j), std::cerr), kExitOk);
  j["out_dir"] = (dir_ / "c").string();
  j["seed"] = 6;
  ASSERT_EQ(cmd_generate_data(parse_run_config(j), std::cerr), kExitOk);
  EXPECT_EQ(slurp(dir_ / "a" / "probe.csv"), slurp(dir_ / "b" / "probe.csv"));
  EXPECT_NE(slurp(dir_ / "a" / "probe.csv"), slurp(dir_ / "c" / "probe.csv"));
}

TEST_F(AppTest, LoadPartitionRejectsNonExcitingData) {
  const RunConfig cfg = parse_run_config(lti_config());
  // A constant-input record that never went through the generation gate.
  Mat u = Mat::Ones(1, 40), y = Mat::Zero(2, 40);
  write_trajectory_csv(dir_ / "probe.csv", RawTrajectory(u, y));
  EXPECT_THROW(detail::load_partition(cfg), PersistencyError);
}

TEST_F(AppTest, LambdaFromReportReadsTheTunedValue) {
  Json rep;
  rep["schema_version"] = 1;
  rep["result"] = {{"lambda_final", {1.5, 2.5, 3.5}}};
  write_text_atomic(dir_ / "rep.json", rep.dump());
  EXPECT_EQ(detail::lambda_from_report(dir_ / "rep.json"),
            (Vec(3) << 1.5, 2.5, 3.5).finished());
  write_text_atomic(dir_ / "broken.json", "{\"result\": {}}");
  EXPECT_THROW(detail::lambda_from_report(dir_ / "broken.json"), ConfigError);
  write_text_atomic(dir_ / "garbage.json", "not json");
  EXPECT_THROW(detail::lambda_from_report(dir_ / "garbage.json"), IoError);
  EXPECT_THROW(detail::lambda_from_report(dir_ / "missing.json"), IoError);
}

TEST_F(AppTest, TuneWritesReportAndTrajectory) {
  const RunConfig cfg = parse_run_config(lti_config());
  std::ostringstream log;
  ASSERT_EQ(cmd_generate_data(cfg, log), kExitOk) << log.str();
  ASSERT_EQ(cmd_tune(cfg, log), kExitOk) << log.str();

  const Json rep = Json::parse(slurp(dir_ / "hunt_report.json"));
  ASSERT_TRUE(rep.contains("result"));
  const Vec lf = vec_from_json(rep["result"]["lambda_final"]);
  EXPECT_EQ(lf.size(), 3);
  EXPECT_TRUE((lf.array() > 0).all());
  EXPECT_EQ(rep["result"]["iterations"].size(), 2u);
  EXPECT_EQ(rep["schema_version"].get<int>(), kSchemaVersion);
  EXPECT_TRUE(rep["meta"].contains("wall_ms"));

  const std::string csv = slurp(dir_ / "hunt_trajectory.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);  // header + 2 iterations
}

TEST_F(AppTest, EvalRunsTheLinearizedBaselineOnTheRocket) {
  RunConfig cfg;  // rocket defaults
  cfg.seed = 11;
  cfg.out_dir = dir_.string();
  cfg.eval.runs = 2;
  cfg.eval.max_steps = 15;
  std::ostringstream log;
  ASSERT_EQ(cmd_eval(cfg, "A", log), kExitOk) << log.str();

  const Json rep = Json::parse(slurp(dir_ / "eval_mpc_A.json"));
  EXPECT_EQ(rep["result"]["label"].get<std::string>(), "mpc_A");
  ASSERT_EQ(rep["result"]["runs"].size(), 2u);
  for (const auto& run : rep["result"]["runs"]) {
    const Vec spawn = vec_from_json(run["spawn"]);
    EXPECT_GE(spawn(0), cfg.eval.spawn_x_lo);
    EXPECT_LE(spawn(0), cfg.eval.spawn_x_hi);
    EXPECT_GE(spawn(2), cfg.eval.spawn_y_lo);
    EXPECT_LE(spawn(2), cfg.eval.spawn_y_hi);
  }
  EXPECT_TRUE(fs::exists(dir_ / "traces_mpc_A" / "run_000.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "traces_mpc_A" / "run_001.csv"));
}

TEST_F(AppTest, MpcBaselineBelievesItsOwnPreset) {
  const RunConfig cfg;
  const MpcConfig a = detail::build_mpc_config(cfg, "A");
  const MpcConfig b = detail::build_mpc_config(cfg, "B");
  // Model B carries half the mass, so its hover thrust is half as large;
  // flying the true (heavier) plant with it is exactly the mismatch studied.
  EXPECT_DOUBLE_EQ(a.u_eq(0), 1000.0 * 9.81);
  EXPECT_DOUBLE_EQ(b.u_eq(0), 500.0 * 9.81);
  // At hover the thrust-to-mass ratio is g for either preset, so the state
  // matrices coincide; the mismatch lives in the input matrix (1/m, l/J).
  EXPECT_TRUE(a.model.A.isApprox(b.model.A, 1e-9));
  EXPECT_FALSE(a.model.B.isApprox(b.model.B, 1e-12));
  EXPECT_EQ(a.reference, b.reference);
}
