#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "coap/io.hpp"
#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(COAP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("coap_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

json load(const fs::path& p) { return json::parse(coap::io::read_text(p)); }

const std::string kSim = "--n 60 --p 30 --d 3 --q0 2 --r0 2 --rho-z 2 --rho-b 1 --seed 4";

}  // namespace

TEST(Cli, SimulateWritesFilesAndManifest) {
  const fs::path out = fresh("sim");
  ASSERT_EQ(run("simulate " + kSim + " --out " + out.string()), 0);
  for (const char* f : {"X.csv", "Z.csv", "a.csv", "beta0.csv", "H0.csv", "B0.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const json m = load(out / "manifest.json");
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["config"]["n"], 60);
  EXPECT_TRUE(m.contains("software_version"));
  EXPECT_TRUE(m.contains("wall_time_seconds"));
}

TEST(Cli, SimulateIsByteIdentical) {
  const fs::path a = fresh("sim_a"), b = fresh("sim_b");
  ASSERT_EQ(run("simulate " + kSim + " --out " + a.string()), 0);
  ASSERT_EQ(run("simulate " + kSim + " --out " + b.string()), 0);
  EXPECT_EQ(coap::io::sha256_file(a / "X.csv"), coap::io::sha256_file(b / "X.csv"));
}

TEST(Cli, InvalidSpecExitsTwoWithoutFiles) {
  const fs::path out = fresh("bad");
  EXPECT_EQ(run("simulate --n 0 --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out / "X.csv"));
}

TEST(Cli, FitSelectEvalReplay) {
  const fs::path sim = fresh("pipe_sim"), fit = fresh("pipe_fit"), sel = fresh("pipe_sel"), ev = fresh("pipe_eval");
  ASSERT_EQ(run("simulate " + kSim + " --out " + sim.string()), 0);
  const std::string data = " --x " + (sim / "X.csv").string() + " --z " + (sim / "Z.csv").string();

  ASSERT_EQ(run("fit" + data + " --q 2 --r 2 --joint-beta --out " + fit.string()), 0);
  for (const char* f : {"beta_hat.csv", "B_hat.csv", "H_hat.csv", "varsigma_hat.csv", "elbo_trace.csv"})
    EXPECT_TRUE(fs::exists(fit / f)) << f;
  const json fm = load(fit / "manifest.json");
  EXPECT_EQ(fm["config"]["joint-beta"], true);
  EXPECT_TRUE(fm["input_hashes"].contains((sim / "X.csv").string()));
  EXPECT_GT(fm["diagnostics"]["iterations"].get<int>(), 0);

  ASSERT_EQ(run("select" + data + " --q-max 2 --r-max 2 --out " + sel.string()), 0);
  const json report = load(sel / "svr_report.json");
  EXPECT_EQ(report["q_hat"], 1);
  EXPECT_EQ(report["r_hat"], 1);

  ASSERT_EQ(run("eval --fit " + fit.string() + " --truth " + sim.string() + " --out " + ev.string()), 0);
  EXPECT_TRUE(fs::exists(ev / "eval.csv"));
  const json summary = load(ev / "eval_summary.json");
  EXPECT_TRUE(summary.is_object());

  const fs::path again = fresh("pipe_replay");
  ASSERT_EQ(run("replay " + (fit / "manifest.json").string() + " --out " + again.string()), 0);
  EXPECT_EQ(coap::io::sha256_file(fit / "beta_hat.csv"), coap::io::sha256_file(again / "beta_hat.csv"));
}

TEST(Cli, EvalAgainstTruthItselfIsPerfect) {
  const fs::path sim = fresh("self_sim"), fake = fresh("self_fit"), ev = fresh("self_eval");
  ASSERT_EQ(run("simulate " + kSim + " --out " + sim.string()), 0);
  fs::create_directories(fake);
  fs::copy_file(sim / "beta0.csv", fake / "beta_hat.csv");
  fs::copy_file(sim / "B0.csv", fake / "B_hat.csv");
  fs::copy_file(sim / "H0.csv", fake / "H_hat.csv");
  ASSERT_EQ(run("eval --fit " + fake.string() + " --truth " + sim.string() + " --out " + ev.string()), 0);
  std::ifstream in(ev / "eval.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::stringstream ss(row);
  std::string cell;
  std::vector<std::string> cells;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  std::stringstream hs(header);
  std::vector<std::string> names;
  while (std::getline(hs, cell, ',')) names.push_back(cell);
  ASSERT_EQ(names.size(), cells.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == "tr_H" || names[k] == "tr_B") {
      EXPECT_NEAR(std::stod(cells[k]), 1.0, 1e-12);
    }
    if (names[k] == "ea_beta") {
      EXPECT_EQ(std::stod(cells[k]), 0.0);
    }
  }
}

TEST(Cli, MissingCovariatesExitTwo) {
  const fs::path sim = fresh("miss_sim"), out = fresh("miss_fit");
  ASSERT_EQ(run("simulate " + kSim + " --out " + sim.string()), 0);
  EXPECT_EQ(run("fit --x " + (sim / "X.csv").string() + " --z " + (sim / "nope.csv").string() + " --q 2 --r 2 --out " +
                out.string()),
            2);
  EXPECT_EQ(run("fit --x " + (sim / "X.csv").string() + " --q 2 --r 2 --out " + out.string()), 2);
}
