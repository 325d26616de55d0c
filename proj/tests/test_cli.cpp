#include <gtest/gtest.h>

#include <filesystem>

#include "multical/cli.hpp"
#include "multical/csv.hpp"
#include "multical/serialization.hpp"

using namespace multical;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("multical_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "multical");
    return run_cli(args);
  }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, PipelineImprovesTestDeviance) {
  ASSERT_EQ(run({"simulate", "--n", "20000", "--seed", "3", "--beta-s", "0.6", "--distort", "1,1,dropS",
                 "--output", path("p.csv")}),
            0);
  EXPECT_TRUE(fs::exists(path("p.csv.manifest.json")));
  ASSERT_EQ(run({"fit-baseline", "--input", path("p.csv"), "--sensitive", "S", "--model-out",
                 path("glm.json"), "--output", path("b.csv")}),
            0);
  ASSERT_EQ(run({"calibrate", "--input", path("b.csv"), "--premium", "premium", "--sensitive", "S",
                 "--mode", "multi-iter", "--credibility", "1000", "--model-out", path("m.json"),
                 "--output", path("out.csv")}),
            0);
  ASSERT_EQ(run({"evaluate", "--input", path("b.csv"), "--sensitive", "S", "--premiums",
                 path("out.csv"), "--output", path("metrics.json")}),
            0);
  const auto j = Json::parse(read_file(path("metrics.json")));
  const double base = j["premiums"][0]["deviance"].get<double>();
  const double multi = j["premiums"][1]["deviance"].get<double>();
  EXPECT_LT(multi, base);

  // apply reproduces calibrate on the same input.
  ASSERT_EQ(run({"apply", "--input", path("b.csv"), "--premium", "premium", "--model", path("m.json"),
                 "--output", path("applied.csv")}),
            0);
  EXPECT_EQ(read_file(path("applied.csv")), read_file(path("out.csv")));

  ASSERT_EQ(run({"diagnose", "--input", path("b.csv"), "--sensitive", "S", "--premiums",
                 path("out.csv"), "--output", path("bias.csv"), "--report", path("report.json")}),
            0);
  EXPECT_NE(read_file(path("bias.csv")).find("pooled"), std::string::npos);
}

TEST_F(Cli, BcEqualsMbcForSingleLevel) {
  ASSERT_EQ(run({"simulate", "--n", "3000", "--group-kind", "categorical", "--levels", "1", "--output",
                 path("p.csv")}),
            0);
  for (const std::string mode : {"bc", "mbc"}) {
    ASSERT_EQ(run({"calibrate", "--input", path("p.csv"), "--premium", "baseline", "--sensitive", "S",
                   "--mode", mode, "--output", path(mode + ".csv")}),
              0);
  }
  EXPECT_EQ(read_file(path("bc.csv")), read_file(path("mbc.csv")));
}

TEST_F(Cli, DeterministicOutputs) {
  auto pipeline = [&](const std::string& tag) {
    const auto sub = dir / tag;
    fs::create_directories(sub);
    const auto p = (dir / "p.csv").string();
    EXPECT_EQ(run({"calibrate", "--input", p, "--premium", "baseline", "--sensitive", "S", "--mode",
                   "multi-iter", "--model-out", (sub / "m.json").string(), "--output",
                   (sub / "o.csv").string()}),
              0);
  };
  ASSERT_EQ(run({"simulate", "--n", "5000", "--seed", "9", "--beta-s", "0.5", "--distort", "1,1,1",
                 "--output", path("p.csv")}),
            0);
  pipeline("a");
  pipeline("b");
  EXPECT_EQ(read_file(dir / "a" / "o.csv"), read_file(dir / "b" / "o.csv"));
  EXPECT_EQ(read_file(dir / "a" / "m.json"), read_file(dir / "b" / "m.json"));
  const auto first = read_file(path("p.csv"));
  ASSERT_EQ(run({"simulate", "--n", "5000", "--seed", "9", "--beta-s", "0.5", "--distort", "1,1,1",
                 "--output", path("p.csv")}),
            0);
  EXPECT_EQ(read_file(path("p.csv")), first);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({"calibrate", "--bogus"}), 1);
  EXPECT_EQ(run({}), 1);
  write_file_atomic(path("bad.csv"), "IDpol,ClaimNb,Exposure\n1,0,0\n");
  EXPECT_EQ(run({"fit-baseline", "--input", path("bad.csv"), "--model-out", path("g.json")}), 1);
  EXPECT_FALSE(fs::exists(path("g.json")));
  ASSERT_EQ(run({"simulate", "--n", "3000", "--beta-s", "0.8", "--distort", "1,1,1", "--output",
                 path("p.csv")}),
            0);
  EXPECT_EQ(run({"calibrate", "--input", path("p.csv"), "--premium", "baseline", "--sensitive", "S",
                 "--mode", "multi-iter", "--credibility", "100", "--max-iter", "1", "--tol", "1e-9",
                 "--output", path("o.csv")}),
            2);
  EXPECT_FALSE(fs::exists(path("o.csv")));
  EXPECT_EQ(run({"calibrate", "--input", path("p.csv"), "--premium", "baseline", "--sensitive", "S",
                 "--mode", "multi-iter", "--credibility", "100", "--max-iter", "1", "--tol", "1e-9",
                 "--allow-unconverged", "--output", path("o.csv")}),
            0);
  EXPECT_EQ(run({"calibrate", "--input", path("p.csv"), "--premium", "baseline", "--credibility", "-3",
                 "--output", path("x.csv")}),
            1);
  EXPECT_EQ(run({"calibrate", "--input", path("p.csv"), "--mode", "bc", "--output", path("x.csv")}), 1);
}

TEST_F(Cli, ContinuousModes) {
  ASSERT_EQ(run({"simulate", "--n", "3000", "--group-kind", "continuous", "--beta-s", "0.4",
                 "--intercept", "-0.7", "--distort", "1,1,1", "--output", path("p.csv")}),
            0);
  for (const std::string mode : {"local-bc", "local-mbc", "multi-iter-cont"}) {
    ASSERT_EQ(run({"calibrate", "--input", path("p.csv"), "--premium", "baseline", "--sensitive", "S",
                   "--mode", mode, "--credibility", "100", "--grid-p", "16", "--grid-s", "16",
                   "--grid-1d", "32", "--model-out", path(mode + ".json"), "--output",
                   path(mode + ".csv")}),
              0)
        << mode;
    ASSERT_EQ(run({"apply", "--input", path("p.csv"), "--premium", "baseline", "--model",
                   path(mode + ".json"), "--output", path(mode + "-applied.csv")}),
              0);
    EXPECT_EQ(read_file(path(mode + "-applied.csv")), read_file(path(mode + ".csv")));
  }
  // Continuous modes need a continuous S.
  ASSERT_EQ(run({"simulate", "--n", "500", "--output", path("cat.csv")}), 0);
  EXPECT_EQ(run({"calibrate", "--input", path("cat.csv"), "--premium", "baseline", "--sensitive", "S",
                 "--sensitive-kind", "categorical", "--mode", "local-mbc", "--output", path("y.csv")}),
            1);
}

TEST_F(Cli, Manifest) {
  ASSERT_EQ(run({"simulate", "--n", "200", "--output", path("p.csv")}), 0);
  const auto m = Json::parse(read_file(path("p.csv.manifest.json")));
  EXPECT_EQ(m["output"]["sha256"].get<std::string>(), sha256_file(path("p.csv")));
  EXPECT_EQ(m["format_version"].get<int>(), kFormatVersion);
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
