#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advface/cli.hpp"
#include "advface/config.hpp"
#include "advface/faces.hpp"
#include "advface/image_io.hpp"

using namespace advface;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::path(::testing::TempDir()) /
            ("advface_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = root_ / "config.json";
    put(config_, R"({
  "stack": {"size": 24, "calibration_identities": 6},
  "pairs": {"count": 2, "seed": 3},
  "grid": {"iterations": 3, "cw_iterations": 3, "master_seed": 11},
  "capture": {"n_angles": 2},
  "evaluation": {"physical_pairs": 1},
  "sweep": {"successes_per_epsilon": 1}
})");
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& rel) const { return (root_ / rel).string(); }

  fs::path root_;
  fs::path config_;
};

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  const Result missing = cli({"grid", "-c", path("nope.json"), "-o", path("g")});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("nope.json"), std::string::npos);
  put(root_ / "bad.json", R"({"attack": {"itterations": 5}})");
  const Result bad = cli({"grid", "-c", path("bad.json"), "-o", path("g")});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("itterations"), std::string::npos);
  put(root_ / "syntax.json", "{");
  EXPECT_EQ(cli({"grid", "-c", path("syntax.json")}).code, kExitUsage);
  EXPECT_EQ(cli({"grid", "-c", config_.string(), "--algorithms", "SGD"}).code, kExitUsage);
}

TEST_F(Cli, ValidationErrorsAreContractErrors) {
  put(root_ / "zero.json", R"({"grid": {"iterations": 0}})");
  EXPECT_EQ(cli({"grid", "-c", path("zero.json"), "-o", path("g")}).code, kExitContract);
  put(root_ / "eps.json", R"({"attack": {"epsilon_small": 2.0}})");
  EXPECT_EQ(cli({"grid", "-c", path("eps.json"), "-o", path("g")}).code, kExitContract);
}

TEST_F(Cli, AttackWritesArtifactsDeterministically) {
  save_image(render_face(make_identity(1), 1, 24), root_ / "s.png");
  save_image(render_face(make_identity(2), 2, 24), root_ / "t.png");
  put(root_ / "attack.json", R"({"stack": {"size": 24, "calibration_identities": 6},
    "attack": {"iterations": 5, "layout": "combo", "smoothness": "masked", "seed": 4}})");
  for (const char* dir : {"a1", "a2"}) {
    const Result r = cli({"attack", "-c", path("attack.json"), "--source", path("s.png"),
                          "--target", path("t.png"), "-o", path(dir)});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  for (const char* f : {"adversarial.png", "loss_trace.csv", "metadata.json"}) {
    ASSERT_TRUE(fs::exists(root_ / "a1" / f)) << f;
    EXPECT_EQ(slurp(root_ / "a1" / f), slurp(root_ / "a2" / f)) << f;
  }
  EXPECT_NE(slurp(root_ / "a1" / "metadata.json").find("\"status\": \"ok\""), std::string::npos);
  const Result missing = cli({"attack", "-c", path("attack.json"), "--source", path("x.png"),
                              "--target", path("t.png"), "-o", path("a3")});
  EXPECT_NE(missing.code, kExitOk);
  EXPECT_NE(missing.err.find("x.png"), std::string::npos);
}

TEST_F(Cli, GridSubsetResumeAndReport) {
  const Result r = cli({"grid", "-c", config_.string(), "-o", path("g"), "--algorithms", "PGD",
                        "-j", "2", "--no-images"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = slurp(root_ / "g/report/report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  const std::string json = slurp(root_ / "g/report/report.json");

  // Simulated interruption: one cell never finished.
  const fs::path cell = root_ / "g/cells/PGD_DI_Combo-Ours";
  ASSERT_TRUE(fs::exists(cell / "DONE"));
  fs::remove(cell / "DONE");
  fs::remove(cell / "records.jsonl");
  const Result partial = cli({"report", path("g"), "-o", path("partial")});
  EXPECT_EQ(partial.code, kExitOk);
  EXPECT_NE(slurp(root_ / "partial/report.csv").find("PGD/DI/Combo+Ours,PGD,DI,Combo+Ours,0,0,NA"),
            std::string::npos);

  const Result resumed = cli({"grid", "-c", config_.string(), "-o", path("g"), "--algorithms",
                              "PGD", "-j", "1", "--no-images"});
  ASSERT_EQ(resumed.code, kExitOk) << resumed.err;
  EXPECT_NE(resumed.out.find("19 resumed"), std::string::npos) << resumed.out;
  EXPECT_EQ(slurp(root_ / "g/report/report.csv"), csv);
  EXPECT_EQ(slurp(root_ / "g/report/report.json"), json);

  const Result regen = cli({"report", path("g"), "-o", path("regen")});
  EXPECT_EQ(regen.code, kExitOk);
  for (const auto& e : fs::directory_iterator(root_ / "g/report"))
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "regen" / e.path().filename())) << e.path();

  const Result other = cli({"grid", "-c", config_.string(), "-o", path("g"), "--algorithms", "CW"});
  EXPECT_EQ(other.code, kExitContract);
}

TEST_F(Cli, GridIsScheduleInvariant) {
  const std::vector<std::string> base{"grid", "-c", config_.string(), "--techniques",
                                      "Combo+Ours", "--blackbox", "DI+Ensemble"};
  auto serial = base;
  serial.insert(serial.end(), {"-o", path("s"), "-j", "1"});
  auto parallel = base;
  parallel.insert(parallel.end(), {"-o", path("p"), "-j", "4"});
  ASSERT_EQ(cli(serial).code, kExitOk);
  ASSERT_EQ(cli(parallel).code, kExitOk);
  EXPECT_EQ(slurp(root_ / "s/report/report.json"), slurp(root_ / "p/report/report.json"));
  for (const auto& e : fs::recursive_directory_iterator(root_ / "s/cells")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root_ / "s");
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "p" / rel)) << rel;
  }
}

TEST_F(Cli, ReportErrors) {
  fs::create_directories(root_ / "empty");
  const Result empty = cli({"report", path("empty")});
  EXPECT_NE(empty.code, kExitOk);
  EXPECT_NE(empty.err.find("no records"), std::string::npos);
  EXPECT_EQ(cli({"report", path("absent")}).code, kExitUsage);

  ASSERT_EQ(cli({"grid", "-c", config_.string(), "-o", path("g"), "--algorithms", "LOTS",
                 "--blackbox", "None", "--techniques", "TV,Ours"})
                .code,
            kExitOk);
  const fs::path records = root_ / "g/cells/LOTS_None_TV/records.jsonl";
  put(records, slurp(records) + "{broken\n");
  const Result corrupt = cli({"report", path("g"), "-o", path("r")});
  EXPECT_EQ(corrupt.code, kExitContract);
  EXPECT_NE(corrupt.err.find("records.jsonl:3"), std::string::npos) << corrupt.err;
  EXPECT_NE(corrupt.out.find("4 records"), std::string::npos) << corrupt.out;
}

TEST_F(Cli, SweepOneRowPerEpsilon) {
  for (const char* dir : {"s1", "s2"}) {
    const Result r = cli({"sweep", "-c", config_.string(), "-o", path(dir)});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  const std::string csv = slurp(root_ / "s1/sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
  EXPECT_EQ(csv, slurp(root_ / "s2/sweep.csv"));
}

TEST_F(Cli, SimulateAndOutputRootEnv) {
  save_image(render_face(make_identity(1), 1, 24), root_ / "x.png");
  ::setenv(kOutputRootEnv, path("env").c_str(), 1);
  const Result r = cli({"simulate", "--image", path("x.png"), "-c", config_.string(), "--target",
                        path("x.png")});
  ::unsetenv(kOutputRootEnv);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "env/simulate/captures.csv"));
  EXPECT_TRUE(fs::exists(root_ / "env/simulate/aligned_03.png"));
  EXPECT_NE(r.out.find("physical ASR"), std::string::npos);
}

TEST(Configs, ShippedConfigsValidate) {
  for (const char* name : {"desk64.json", "smoke.json"}) {
    const RunConfig cfg = load_run_config(fs::path(ADVFACE_SOURCE_DIR) / "configs" / name);
    EXPECT_NO_THROW(validate(cfg)) << name;
  }
  const RunConfig desk = load_run_config(fs::path(ADVFACE_SOURCE_DIR) / "configs/desk64.json");
  EXPECT_EQ(desk.stack.size, 64);
  EXPECT_EQ(desk.capture.base.blur_sigma, 0.5);
  EXPECT_EQ(run_config_from_json(to_json(desk)).capture.base.print_blur_sigma, 0.3);
}
