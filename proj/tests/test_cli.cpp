#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "smalldet/cli.hpp"

namespace smalldet {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() / ("smalldet_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  ~TempDir() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

 private:
  fs::path dir_;
};

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, cli::kSuccess);
  EXPECT_EQ(run({}).code, cli::kUsageError);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run({"d-values", "--bogus"}).code, cli::kUsageError);
  EXPECT_EQ(run({"d-values", "--spec", "kind=iid colour=red"}).code, cli::kUsageError);
  EXPECT_EQ(run({"bound-check", "--n", "2"}).code, cli::kUsageError);  // --eps required
  EXPECT_EQ(run({"bound-check", "--n", "2", "--eps", "0.1", "--variant", "wide"}).code, cli::kUsageError);
  EXPECT_EQ(run({"complex-law", "--trials", "5000"}).code, cli::kUsageError);
  EXPECT_EQ(run({"d-values", "--spec", "/nonexistent/cov.txt"}).code, cli::kUsageError);
}

TEST(Cli, DValuesCsv) {
  const auto r = run({"d-values", "--n", "2", "--spec", "kind=equicorrelated rho=0.3"});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  EXPECT_EQ(r.out, "k,d_k,sqrt_d_product\n1,1,1\n2,0.83125000000000004,0.91172912644052351\n");
}

TEST(Cli, DValuesRequirePositive) {
  const auto r = run({"d-values", "--n", "2", "--spec", "kind=equicorrelated rho=1", "--require-positive"});
  EXPECT_EQ(r.code, cli::kPreconditionViolated);
  EXPECT_NE(r.err.find("d_2"), std::string::npos);
  EXPECT_EQ(run({"d-values", "--n", "2", "--spec", "kind=equicorrelated rho=1"}).code, cli::kSuccess);
}

TEST(Cli, DValuesJson) {
  const auto r = run({"d-values", "--n", "3", "--format", "json"});
  ASSERT_EQ(r.code, cli::kSuccess);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["d"].size(), 3u);
  EXPECT_EQ(j["epsilon0_scale"].get<double>(), 1.0);
}

TEST(Cli, ProductLawWritesSidecar) {
  TempDir tmp;
  const auto csv = tmp / "law.csv";
  const auto r = run({"product-law", "--n", "2", "--asymptotic", "--out", csv.string()});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  const auto text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,cdf,asymptotic,ratio");
  const auto meta = nlohmann::json::parse(slurp(tmp / "law.json"));
  EXPECT_EQ(meta["n"], 2);
  EXPECT_GT(meta["error_estimate"].get<double>(), 0.0);
  EXPECT_EQ(meta["points"].get<std::size_t>() + 1, static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST(Cli, ProductLawRejectsTinyGrid) {
  EXPECT_EQ(run({"product-law", "--n", "1", "--t-min", "-0.1", "--t-max", "0"}).code, cli::kUsageError);
}

TEST(Cli, BoundCheckDeterministicAcrossWorkers) {
  std::vector<std::string> base{"bound-check", "--n", "3", "--eps", "0.1", "--eps", "0.2", "--trials", "30000",
                                "--seed", "11"};
  auto with = [&](const char* w) {
    auto args = base;
    args.insert(args.end(), {"--workers", w});
    return run(args);
  };
  const auto a = with("1");
  const auto b = with("2");
  const auto c = with("8");
  ASSERT_EQ(a.code, cli::kSuccess) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
}

TEST(Cli, BoundCheckPreconditionExit) {
  const auto r = run({"bound-check", "--n", "2", "--eps", "0.1", "--spec", "kind=equicorrelated rho=1"});
  EXPECT_EQ(r.code, cli::kPreconditionViolated);
  const auto g = run({"bound-check", "--n", "2", "--m", "3", "--eps", "0.1", "--spec", "kind=equicorrelated rho=1"});
  EXPECT_EQ(g.code, cli::kPreconditionViolated);
  EXPECT_EQ(run({"bound-check", "--n", "2", "--eps", "1e-40", "--trials", "10"}).code, cli::kUsageError);
}

TEST(Cli, BoundCheckJson) {
  const auto r = run({"bound-check", "--n", "2", "--m", "3", "--eps", "0.3", "--trials", "2000", "--format", "json"});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0]["m"], 3);
}

TEST(Cli, ConfigFileAndOverride) {
  TempDir tmp;
  const auto cfg = tmp / "run.toml";
  std::ofstream(cfg) << "[bound-check]\nn = 3\neps = [0.1]\ntrials = 1000\nseed = 5\n";
  const auto from_file = run({"--config", cfg.string(), "bound-check"});
  ASSERT_EQ(from_file.code, cli::kSuccess) << from_file.err;
  EXPECT_NE(from_file.out.find(",3,3,"), std::string::npos);
  EXPECT_NE(from_file.out.find(",1000,"), std::string::npos);
  const auto overridden = run({"--config", cfg.string(), "bound-check", "--trials", "2000"});
  EXPECT_NE(overridden.out.find(",2000,"), std::string::npos);

  const auto bad = tmp / "bad.toml";
  std::ofstream(bad) << "[bound-check]\nunknown_key = 1\n";
  EXPECT_EQ(run({"--config", bad.string(), "bound-check", "--eps", "0.1"}).code, cli::kUsageError);
}

TEST(Cli, LemmaCheckPasses) {
  const auto r = run({"lemma-check", "--cases", "50", "--detail"});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  EXPECT_NE(r.out.find("zero-column"), std::string::npos);
  EXPECT_NE(r.out.find("dependent-rows"), std::string::npos);
}

TEST(Cli, ComplexLawSingleFactor) {
  // n = 1: det MM* = |z|^2 ~ Gamma(1, 1) under unit complex variance
  const auto r = run({"complex-law", "--n", "1", "--trials", "20000", "--shapes", "1", "--format", "json"});
  ASSERT_EQ(r.code, cli::kSuccess) << r.err;
  EXPECT_GT(nlohmann::json::parse(r.out)["p_value_bound"].get<double>(), 0.01);
}

TEST(Cli, DenseFileErrorsNameTheLine) {
  TempDir tmp;
  const auto cov = tmp / "bad.cov";
  std::ofstream(cov) << "2 2 4\n1 1\n1 2\n2 1\n2 2\n1 0 0 1\n0 1 0 0\n0 0 x 0\n1 0 0 1\n";
  const auto r = run({"d-values", "--n", "2", "--spec", cov.string()});
  EXPECT_EQ(r.code, cli::kUsageError);
  EXPECT_NE(r.err.find("line 8"), std::string::npos) << r.err;
}

TEST(Cli, ComplexLawPerturbedFails) {
  const auto r = run({"complex-law", "--n", "2", "--trials", "20000", "--shapes", "1.5,2.5"});
  EXPECT_EQ(r.code, cli::kVerdictFailed);
}

TEST(Cli, UnwritableOutputIsRuntimeError) {
  EXPECT_EQ(run({"d-values", "--out", "/nonexistent/dir/x.csv"}).code, cli::kRuntimeError);
}

}  // namespace
}  // namespace smalldet
