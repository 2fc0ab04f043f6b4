#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "ddc/ddc.hpp"
#include "test_util.hpp"

using namespace ddc;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ddc_io_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace

using Io = TempDir;

TEST_F(Io, TrajectoryRoundTripIsBitExact) {
  SplitMix64 rng(111);
  Mat u(2, 7), y(3, 7);
  for (Index t = 0; t < 7; ++t) {
    u.col(t) = testutil::random_vec(rng, 2) * 1e3;
    y.col(t) = testutil::random_vec(rng, 3) / 7.0;
  }
  u(0, 0) = 1.0 / 3.0;  // needs all 17 significant digits
  const RawTrajectory traj(u, y);
  const fs::path p = dir_ / "traj.csv";
  write_trajectory_csv(p, traj);
  const RawTrajectory back = read_trajectory_csv(p);
  EXPECT_EQ(back.u, traj.u);
  EXPECT_EQ(back.y, traj.y);
}

TEST_F(Io, HeaderIsValidated) {
  const fs::path p = dir_ / "bad_header.csv";
  write_file(p, "u0,z1\n1,2\n");
  EXPECT_THROW(read_trajectory_csv(p), IoError);
  write_file(p, "y0,u0\n1,2\n");  // outputs before inputs
  EXPECT_THROW(read_trajectory_csv(p), IoError);
  write_file(p, "u0,u1\n1,2\n");  // no outputs at all
  EXPECT_THROW(read_trajectory_csv(p), IoError);
}

TEST_F(Io, BadCellsReportTheLineNumber) {
  const fs::path p = dir_ / "bad_cell.csv";
  write_file(p, "u0,y0\n1,2\n3,abc\n");
  try {
    read_trajectory_csv(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos) << e.what();
  }
  write_file(p, "u0,y0\n1,2\n3\n");
  try {
    read_trajectory_csv(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  // Trailing garbage glued to a number is rejected too.
  write_file(p, "u0,y0\n1,2.5x\n");
  EXPECT_THROW(read_trajectory_csv(p), IoError);
}

TEST_F(Io, EmptyAndMissingFilesAreErrors) {
  EXPECT_THROW(read_trajectory_csv(dir_ / "missing.csv"), IoError);
  const fs::path p = dir_ / "empty.csv";
  write_file(p, "");
  EXPECT_THROW(read_trajectory_csv(p), IoError);
  write_file(p, "u0,y0\n");
  EXPECT_THROW(read_trajectory_csv(p), IoError);  // header but no rows
}

TEST_F(Io, CrlfAndBlankLinesAreTolerated) {
  const fs::path p = dir_ / "crlf.csv";
  write_file(p, "u0,y0\r\n1,2\r\n\r\n3,4\r\n");
  const RawTrajectory traj = read_trajectory_csv(p);
  EXPECT_EQ(traj.length(), 2);
  EXPECT_DOUBLE_EQ(traj.u(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(traj.y(0, 1), 4.0);
}

TEST_F(Io, AtomicWriteLeavesNoTemporary) {
  const fs::path p = dir_ / "out.txt";
  write_text_atomic(p, "payload");
  EXPECT_TRUE(fs::exists(p));
  EXPECT_FALSE(fs::exists(dir_ / "out.txt.tmp"));
  std::ifstream in(p);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(content, "payload");
  // Overwrite keeps the newest content.
  write_text_atomic(p, "fresh");
  std::ifstream in2(p);
  std::string content2((std::istreambuf_iterator<char>(in2)),
                       std::istreambuf_iterator<char>());
  EXPECT_EQ(content2, "fresh");
}

TEST_F(Io, VectorJsonRoundTrip) {
  const Vec v = (Vec(4) << 1.0 / 3.0, -2.5e-17, 1e300, 0.0).finished();
  const Vec back = vec_from_json(vec_to_json(v));
  EXPECT_EQ(back, v);
}

TEST_F(Io, HuntReportSerializesEveryIteration) {
  HuntReport rep;
  rep.lambda_final = (Vec(3) << 1.0, 2.0, 3.0).finished();
  rep.heldout_cost_initial = 10.0;
  rep.heldout_cost_final = 4.0;
  rep.train_indices = {0, 2};
  rep.heldout_indices = {1};
  for (int k = 0; k < 3; ++k) {
    HuntIteration it;
    it.lambda = Vec::Constant(3, static_cast<double>(k));
    it.window_indices = {static_cast<Index>(k)};
    it.cost = 5.0 - k;
    it.grad = Vec::Constant(3, 0.5);
    it.eta = Vec::Constant(3, 1.0);
    it.wall_ms = 12.5;
    rep.iterations.push_back(it);
  }
  const Json j = hunt_report_to_json(rep);
  EXPECT_EQ(j["iterations"].size(), 3u);
  EXPECT_EQ(vec_from_json(j["lambda_final"]), rep.lambda_final);
  EXPECT_DOUBLE_EQ(j["heldout_cost_final"].get<double>(), 4.0);
  EXPECT_EQ(j["iterations"][2]["cost"].get<double>(), 3.0);

  const std::string csv = hunt_trajectory_csv(rep);
  // Header plus one line per iteration.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("iter,lambda0"), std::string::npos);
}

TEST_F(Io, TraceCsvHasOneRowPerStep) {
  ClosedLoopTrace trace;
  for (int t = 0; t < 2; ++t) {
    TraceStep st;
    st.x = Vec::Constant(3, 1.0 + t);
    st.u = Vec::Constant(1, -1.0);
    st.y = Vec::Constant(2, 0.5);
    st.stage_cost = 2.0 * t;
    trace.steps.push_back(st);
  }
  const std::string csv = trace_to_csv(trace);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("t,x0,x1,x2,u0,y0,y1,stage_cost"), std::string::npos);
  EXPECT_EQ(trace_to_csv(ClosedLoopTrace{}), "t,stage_cost\n");
}

TEST_F(Io, FullPrecisionSurvivesAwkwardValues) {
  Mat u(1, 3), y(1, 3);
  u << 0.1, 1e-308, -700.1234567890123;
  y << 9007199254740993.0, -0.0, 2.2250738585072014e-308;
  const fs::path p = dir_ / "awkward.csv";
  write_trajectory_csv(p, RawTrajectory(u, y));
  const RawTrajectory back = read_trajectory_csv(p);
  EXPECT_EQ(back.u, u);
  EXPECT_EQ(back.y, y);
}
