#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(CLI_BINARY) + " " + args + " > cli_stdout.txt 2>&1";
  int status = std::system(cmd.c_str());
#ifdef _WIN32
  return status;
#else
  return WEXITSTATUS(status);
#endif
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("simulate writes a deterministic dataset") {
  TmpDir tmp("cli_sim");
  write_file(tmp.path / "cfg.json", R"({"dgp": {"T": 120}})");
  std::string cfg = (tmp.path / "cfg.json").string();

  CHECK(run_cli("simulate --config " + cfg + " --out " + (tmp.path / "a").string() +
                " --seed 7") == 0);
  CHECK(run_cli("simulate --config " + cfg + " --out " + (tmp.path / "b").string() +
                " --seed 7") == 0);
  CHECK(run_cli("simulate --config " + cfg + " --out " + (tmp.path / "c").string() +
                " --seed 8") == 0);

  std::string a = slurp(tmp.path / "a" / "dataset.csv");
  CHECK(a == slurp(tmp.path / "b" / "dataset.csv"));
  CHECK(a != slurp(tmp.path / "c" / "dataset.csv"));
  CHECK(fs::exists(tmp.path / "a" / "truth.csv"));
  CHECK(fs::exists(tmp.path / "a" / "config_resolved.json"));
  // Header and row count.
  CHECK(a.rfind("t,y,y_observed,a0,c0\n", 0) == 0);
}

TEST_CASE("simulate then fit recovers the generating coefficients") {
  TmpDir tmp("cli_fit");
  write_file(tmp.path / "sim.json", R"({"dgp": {"T": 600}})");
  REQUIRE(run_cli("simulate --config " + (tmp.path / "sim.json").string() + " --out " +
                  (tmp.path / "data").string() + " --seed 11") == 0);

  std::ostringstream cfg;
  cfg << R"({"data": ")" << (tmp.path / "data" / "dataset.csv").string() << R"(",)"
      << R"("spec": {"p": 1, "n_exposures": 1, "n_covariates": 1},)"
      << R"("mcem": {"ci_chain_draws": 50}})";
  write_file(tmp.path / "fit.json", cfg.str());
  REQUIRE(run_cli("fit --config " + (tmp.path / "fit.json").string() + " --out " +
                  (tmp.path / "fit").string() + " --seed 2") == 0);

  for (const char* f : {"estimates.csv", "trajectories.csv", "change_points.csv",
                        "trace.csv", "imputations.csv", "theta.json"})
    CHECK(fs::exists(tmp.path / "fit" / f));

  // estimates.csv: name -> estimate.
  std::istringstream est(slurp(tmp.path / "fit" / "estimates.csv"));
  std::string line;
  std::getline(est, line);
  CHECK(line == "column,base,name,segment_begin,segment_end,estimate,lower,upper");
  std::map<std::string, double> got;
  while (std::getline(est, line)) {
    std::istringstream cells(line);
    std::string cell, name;
    double value = 0.0;
    for (int j = 0; std::getline(cells, cell, ','); ++j) {
      if (j == 2) name = cell;
      if (j == 5) value = std::stod(cell);
    }
    got[name] = value;
  }
  REQUIRE(got.size() == 5);
  CHECK(std::abs(got.at("intercept") - 40.0) < 2.0);
  CHECK(std::abs(got.at("y_lag1") - 0.5) < 0.05);
  CHECK(std::abs(got.at("a0_lag0") + 1.5) < 0.1);
  CHECK(std::abs(got.at("a0_lag1") + 0.5) < 0.1);
  CHECK(std::abs(got.at("c0_lag0") + 1.0) < 0.1);
}

TEST_CASE("impute fills the missing cells and keeps observed ones") {
  TmpDir tmp("cli_imp");
  write_file(tmp.path / "data.csv",
             "t,y,a0\n1,5.0,0.1\n2,6.0,0.2\n3,,0.3\n4,8.0,0.4\n5,,0.5\n6,10.0,0.6\n");
  write_file(tmp.path / "cfg.json", std::string(R"({"data": ")") +
                                        (tmp.path / "data.csv").string() +
                                        R"(", "strategy": "linear"})");
  REQUIRE(run_cli("impute --config " + (tmp.path / "cfg.json").string() + " --out " +
                  (tmp.path / "out").string()) == 0);
  std::string imputed = slurp(tmp.path / "out" / "imputed.csv");
  std::istringstream is(imputed);
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,y,y_observed,a0");
  std::vector<std::string> rows;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == "1,5,1,0.10000000000000001");
  CHECK(rows[2].rfind("3,7,1,", 0) == 0);  // linear interpolation between 6 and 8
  CHECK(rows[4].rfind("5,9,1,", 0) == 0);
}

TEST_CASE("configuration errors exit with code 2") {
  TmpDir tmp("cli_cfg");
  // Unknown key.
  write_file(tmp.path / "bad1.json", R"({"dgp": {"T": 50}, "bogus": 1})");
  CHECK(run_cli("simulate --config " + (tmp.path / "bad1.json").string() + " --out " +
                (tmp.path / "o1").string()) == 2);
  // Invalid DGP.
  write_file(tmp.path / "bad2.json", R"({"dgp": {"T": 0}})");
  CHECK(run_cli("simulate --config " + (tmp.path / "bad2.json").string() + " --out " +
                (tmp.path / "o2").string()) == 2);
  // Benchmark with empty strategy list.
  write_file(tmp.path / "bad3.json",
             R"({"mechanisms": ["MCAR"], "rates": [0.5], "strategies": [], "n_reps": 2})");
  CHECK(run_cli("benchmark --config " + (tmp.path / "bad3.json").string() + " --out " +
                (tmp.path / "o3").string()) == 2);
  // Unparsable JSON.
  write_file(tmp.path / "bad4.json", "{");
  CHECK(run_cli("simulate --config " + (tmp.path / "bad4.json").string() + " --out " +
                (tmp.path / "o4").string()) == 2);
  // Unknown CLI flag.
  CHECK(run_cli("simulate --bogus 1") == 2);
}

TEST_CASE("data errors exit with code 3") {
  TmpDir tmp("cli_data");
  write_file(tmp.path / "cfg.json",
             std::string(R"({"data": ")") + (tmp.path / "absent.csv").string() + R"("})");
  CHECK(run_cli("fit --config " + (tmp.path / "cfg.json").string() + " --out " +
                (tmp.path / "out").string()) == 3);
}

TEST_CASE("small benchmark produces the scenario CSVs") {
  TmpDir tmp("cli_bench");
  write_file(tmp.path / "cfg.json",
             R"({"dgp": {"T": 200}, "mechanisms": ["MCAR"], "rates": [0.3],
                 "strategies": ["cc", "mean"], "n_reps": 3})");
  REQUIRE(run_cli("benchmark --config " + (tmp.path / "cfg.json").string() + " --out " +
                  (tmp.path / "out").string() + " --seed 3") == 0);
  CHECK(fs::exists(tmp.path / "out" / "scenario_MCAR_30.csv"));
  std::string all = slurp(tmp.path / "out" / "scenario_all.csv");
  CHECK(all.rfind("mechanism,rate,strategy,coefficient,n_reps,n_failures,metric,value\n",
                  0) == 0);
  CHECK(all.find("MCAR,0.3,cc,y_lag1") != std::string::npos);
  CHECK(all.find("MCAR,0.3,mean,a0_lag1") != std::string::npos);
}
