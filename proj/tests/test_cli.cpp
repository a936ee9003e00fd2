#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

// ODEFIT_CLI_PATH and ODEFIT_SOURCE_DIR come from the build system.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("odefit_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const std::string& tag) {
  const fs::path so = scratch_dir() / (tag + ".stdout");
  const fs::path se = scratch_dir() / (tag + ".stderr");
  const std::string cmd = std::string("\"") + ODEFIT_CLI_PATH + "\" " + args +
                          " > " + so.string() + " 2> " + se.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

// Recursive numeric comparison; `rel` keys fall back to the default.
void check_close(const json& got, const json& want, double rel,
                 const std::string& where) {
  INFO("at ", where);
  if (want.is_number()) {
    REQUIRE(got.is_number());
    const double a = got.get<double>();
    const double b = want.get<double>();
    const double tol = rel * std::max(1.0, std::abs(b));
    CHECK(std::abs(a - b) <= tol);
    return;
  }
  if (want.is_array()) {
    REQUIRE(got.is_array());
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      check_close(got[i], want[i], rel, where + "[" + std::to_string(i) + "]");
    }
    return;
  }
  CHECK(got == want);
}

const std::string kLvStepConfig =
    "[model]\n"
    "name = lv\n"
    "[truth]\n"
    "nu = 0.5, 0.5, 0.5, 0.5\n"
    "xi = 1.0, 0.5\n"
    "[design]\n"
    "kind = repeated\n"
    "T = 14.9\n"
    "I = 149\n"
    "J = 1\n"
    "[noise]\n"
    "dist = gaussian\n"
    "sigma = 1e-12\n"
    "[pipeline]\n"
    "kind = step\n"
    "[run]\n"
    "seed = 5\n";

}  // namespace

TEST_CASE("simulate writes one row per grid point") {
  const fs::path cfg = scratch_dir() / "fhn_grid.ini";
  spit(cfg,
       "[model]\n"
       "name = fhn\n"
       "[truth]\n"
       "nu = 0.34, 0.2, 3.0\n"
       "xi = 0.0, 0.1\n"
       "[design]\n"
       "kind = grid\n"
       "T = 20\n"
       "n = 201\n"
       "[noise]\n"
       "dist = gaussian\n"
       "sigma = 0.05\n"
       "[run]\n"
       "seed = 1\n");
  const fs::path out = scratch_dir() / "fhn_grid.csv";
  RunResult r = run_cli("simulate --config " + cfg.string() + " --out " +
                            out.string(),
                        "sim_grid");
  REQUIRE(r.exit_code == 0);
  const std::string data = slurp(out);
  CHECK(count_lines(data) == 202);
  CHECK(data.rfind("t,replicate,y1,y2,seed\n", 0) == 0);

  // Reruns are byte identical for a fixed seed.
  const fs::path out2 = scratch_dir() / "fhn_grid_again.csv";
  run_cli("simulate --config " + cfg.string() + " --out " + out2.string(),
          "sim_grid2");
  CHECK(slurp(out2) == data);

  // The --seed flag overrides the [run] seed.
  const fs::path cfg7 = scratch_dir() / "fhn_grid7.ini";
  std::string text = slurp(cfg);
  text.replace(text.find("seed = 1"), 8, "seed = 7");
  spit(cfg7, text);
  const fs::path outc = scratch_dir() / "fhn_grid_c.csv";
  const fs::path outf = scratch_dir() / "fhn_grid_f.csv";
  run_cli("simulate --config " + cfg7.string() + " --out " + outc.string(),
          "sim_grid3");
  run_cli("simulate --config " + cfg.string() + " --seed 7 --out " +
              outf.string(),
          "sim_grid4");
  const std::string flagged = slurp(outf);
  CHECK(flagged == slurp(outc));
  CHECK(flagged != data);
}

TEST_CASE("simulate writes replicate blocks for repeated designs") {
  const fs::path cfg = scratch_dir() / "lv_rep.ini";
  spit(cfg,
       "[model]\n"
       "name = lv\n"
       "[truth]\n"
       "nu = 0.5, 0.5, 0.5, 0.5\n"
       "xi = 1.0, 0.5\n"
       "[design]\n"
       "kind = repeated\n"
       "T = 14.9\n"
       "I = 30\n"
       "J = 6\n"
       "[noise]\n"
       "dist = gaussian\n"
       "sigma = 0.5\n"
       "[run]\n"
       "seed = 2\n");
  const fs::path out = scratch_dir() / "lv_rep.csv";
  RunResult r = run_cli("simulate --config " + cfg.string() + " --out " +
                            out.string(),
                        "sim_rep");
  REQUIRE(r.exit_code == 0);
  const std::string data = slurp(out);
  CHECK(count_lines(data) == 181);  // header + 30 * 6
  // First data row sits at t = T/I with replicate 1.
  CHECK(data.find("\n0.496666666667,1,") != std::string::npos);
}

TEST_CASE("a noiseless roundtrip recovers the generating parameters") {
  const fs::path cfg = scratch_dir() / "lv_round.ini";
  spit(cfg, kLvStepConfig);
  const fs::path data = scratch_dir() / "lv_round.csv";
  RunResult sim = run_cli("simulate --config " + cfg.string() + " --out " +
                              data.string(),
                          "round_sim");
  REQUIRE(sim.exit_code == 0);
  RunResult fitr = run_cli("fit --config " + cfg.string() + " --data " +
                               data.string(),
                           "round_fit");
  REQUIRE(fitr.exit_code == 0);
  json j = json::parse(fitr.out);
  REQUIRE(j["theta_hat"].size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(j["theta_hat"][k].get<double>() - 0.5) <= 0.02 * 0.5);
  }
  REQUIRE(j["xi_hat"].size() == 2);
  // The step path carries O(T/I) discretization bias even without noise.
  CHECK(std::abs(j["xi_hat"][0].get<double>() - 1.0) <= 0.02);
  CHECK(std::abs(j["xi_hat"][1].get<double>() - 0.5) <= 0.02);
  CHECK(j["cond_c"].get<double>() > 0.0);
  // Identity link: nu mirrors theta.
  REQUIRE(j.contains("nu_hat"));
  CHECK(j["nu_hat"] == j["theta_hat"]);
}

TEST_CASE("saved node times survive the csv roundtrip at coarse spacing") {
  // T/I = 0.4966..: a node grid whose times are not short decimals. The
  // fit must still accept its own simulate output as equispaced.
  const fs::path cfg = scratch_dir() / "lv_coarse.ini";
  spit(cfg,
       "[model]\n"
       "name = lv\n"
       "[truth]\n"
       "nu = 0.5, 0.5, 0.5, 0.5\n"
       "xi = 1.0, 0.5\n"
       "[design]\n"
       "kind = repeated\n"
       "T = 14.9\n"
       "I = 30\n"
       "J = 3\n"
       "[noise]\n"
       "dist = gaussian\n"
       "sigma = 1e-10\n"
       "[pipeline]\n"
       "kind = step\n"
       "[run]\n"
       "seed = 3\n");
  const fs::path data = scratch_dir() / "lv_coarse.csv";
  RunResult sim = run_cli("simulate --config " + cfg.string() + " --out " +
                              data.string(),
                          "coarse_sim");
  REQUIRE(sim.exit_code == 0);
  RunResult fitr = run_cli("fit --config " + cfg.string() + " --data " +
                               data.string(),
                           "coarse_fit");
  REQUIRE(fitr.exit_code == 0);
  json j = json::parse(fitr.out);
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(j["theta_hat"][k].get<double>() - 0.5) <= 0.06);
  }
}

TEST_CASE("an unidentifiable fit exits with the dedicated code") {
  const fs::path cfg = scratch_dir() / "dup.ini";
  spit(cfg,
       "[model]\n"
       "name = dup\n"
       "[truth]\n"
       "nu = 0.25, 0.25\n"
       "xi = 1.0\n"
       "[design]\n"
       "kind = grid\n"
       "T = 1\n"
       "n = 101\n"
       "[noise]\n"
       "dist = gaussian\n"
       "sigma = 1e-6\n"
       "[pipeline]\n"
       "kind = smooth\n"
       "[run]\n"
       "seed = 3\n");
  const fs::path data = scratch_dir() / "dup.csv";
  RunResult sim = run_cli("simulate --config " + cfg.string() + " --out " +
                              data.string(),
                          "dup_sim");
  REQUIRE(sim.exit_code == 0);
  RunResult fitr = run_cli("fit --config " + cfg.string() + " --data " +
                               data.string(),
                           "dup_fit");
  CHECK(fitr.exit_code == 4);
  CHECK(fitr.err.find("rank 1 of 2") != std::string::npos);
  CHECK(fitr.err.find("null vector:") != std::string::npos);
  CHECK(fitr.err.find("0.707") != std::string::npos);
}

TEST_CASE("a pinned seed reproduces the stored dataset and fit") {
  const std::string golden_dir = std::string(ODEFIT_SOURCE_DIR) +
                                 "/tests/golden";
  const fs::path data = scratch_dir() / "golden_data.csv";
  RunResult sim = run_cli("simulate --config " + golden_dir +
                              "/fhn_sim.ini --out " + data.string(),
                          "golden_sim");
  REQUIRE(sim.exit_code == 0);
  const std::string golden_csv = slurp(golden_dir + "/fhn_data.csv");
  REQUIRE(!golden_csv.empty());
  CHECK(slurp(data) == golden_csv);

  RunResult fitr = run_cli("fit --config " + golden_dir +
                               "/fhn_fit.ini --data " + data.string(),
                           "golden_fit");
  REQUIRE(fitr.exit_code == 0);
  const std::string golden_text = slurp(golden_dir + "/fhn_fit.json");
  REQUIRE(!golden_text.empty());
  json want = json::parse(golden_text);
  json got = json::parse(fitr.out);
  for (const char* key : {"theta_hat", "xi_hat", "cond_c", "criterion_value"}) {
    REQUIRE(got.contains(key));
    check_close(got[key], want[key], 1e-9, key);
  }
  for (const char* key : {"nu_hat", "nu_distance", "sigma_hat"}) {
    REQUIRE(got.contains(key));
    check_close(got[key], want[key], 1e-6, key);
  }
  CHECK(got["nu_converged"] == want["nu_converged"]);
}

TEST_CASE("help text enumerates the config surface") {
  RunResult top = run_cli("--help", "help_top");
  CHECK(top.exit_code == 0);
  for (const char* sub : {"simulate", "fit", "mc", "rate", "identify"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  RunResult sim = run_cli("simulate --help", "help_sim");
  CHECK(sim.exit_code == 0);
  for (const char* key :
       {"name", "nu", "xi", "kind", "T", "n", "I", "J", "dist", "sigma",
        "order", "bandwidth", "refine", "seed", "replicates", "bootstrap",
        "threads", "ladder", "rung_replicates"}) {
    CHECK(sim.out.find(key) != std::string::npos);
  }
}

TEST_CASE("config and flag misuse exit with the validation code") {
  const fs::path cfg = scratch_dir() / "bad_key.ini";
  spit(cfg,
       "[model]\n"
       "name = fhn\n"
       "[design]\n"
       "kind = grid\n"
       "T = 20\n"
       "n = 201\n"
       "m = 5\n");
  const fs::path out = scratch_dir() / "bad.csv";
  RunResult r = run_cli("simulate --config " + cfg.string() + " --out " +
                            out.string(),
                        "bad_key");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("unknown key") != std::string::npos);
  CHECK(r.err.find("bad_key.ini:7") != std::string::npos);

  RunResult flag = run_cli("simulate --nope", "bad_flag");
  CHECK(flag.exit_code == 1);

  RunResult missing = run_cli("fit --config " + cfg.string() +
                                  " --data /nonexistent.csv",
                              "bad_data");
  CHECK(missing.exit_code != 0);
}

TEST_CASE("mc writes the summary and replicate tables deterministically") {
  const fs::path cfg = scratch_dir() / "mc.ini";
  spit(cfg,
       "[model]\n"
       "name = fhn\n"
       "[truth]\n"
       "nu = 0.34, 0.2, 3.0\n"
       "xi = 0.0, 0.1\n"
       "[design]\n"
       "kind = grid\n"
       "T = 20\n"
       "n = 201\n"
       "[noise]\n"
       "dist = gaussian\n"
       "sigma = 0.05\n"
       "[pipeline]\n"
       "kind = smooth\n"
       "[run]\n"
       "seed = 11\n"
       "replicates = 3\n");
  const fs::path out1 = scratch_dir() / "mc1.csv";
  RunResult r1 = run_cli("mc --config " + cfg.string() + " --out " +
                             out1.string(),
                         "mc1");
  REQUIRE(r1.exit_code == 0);
  const std::string summary = slurp(out1);
  CHECK(summary.rfind("param,true,mean,sd,are_pct\n", 0) == 0);
  for (const char* row :
       {"\nxi1,", "\nxi2,", "\nalpha,", "\nbeta,", "\ngamma,", "\ntraj_l2,",
        "\ntraj_sup,", "\nfailures,"}) {
    CHECK(summary.find(row) != std::string::npos);
  }
  const fs::path reps1 = scratch_dir() / "mc1_replicates.csv";
  const std::string reptext = slurp(reps1);
  CHECK(count_lines(reptext) == 4);
  CHECK(reptext.rfind("replicate,ok,", 0) == 0);

  // A different thread count must not change a single byte.
  const fs::path out2 = scratch_dir() / "mc2.csv";
  RunResult r2 = run_cli("mc --config " + cfg.string() + " --threads 8 --out " +
                             out2.string(),
                         "mc2");
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(out2) == summary);
  CHECK(slurp(scratch_dir() / "mc2_replicates.csv") == reptext);
}

TEST_CASE("rate writes rung rows and slope lines") {
  const fs::path cfg = scratch_dir() / "rate.ini";
  spit(cfg,
       "[model]\n"
       "name = lv\n"
       "[truth]\n"
       "nu = 0.5, 0.5, 0.5, 0.5\n"
       "xi = 1.0, 0.5\n"
       "[design]\n"
       "kind = repeated\n"
       "T = 14.9\n"
       "I = 10\n"
       "J = 10\n"
       "[noise]\n"
       "dist = gaussian\n"
       "sigma = 0.5\n"
       "[pipeline]\n"
       "kind = step\n"
       "[run]\n"
       "seed = 21\n"
       "ladder = 100, 400, 1600\n"
       "rung_replicates = 3\n");
  const fs::path out = scratch_dir() / "rate.csv";
  RunResult r = run_cli("rate --config " + cfg.string() + " --out " +
                            out.string(),
                        "rate");
  REQUIRE(r.exit_code == 0);
  const std::string text = slurp(out);
  CHECK(text.rfind("n,rmse_theta,rmse_xi\n", 0) == 0);
  CHECK(text.find("\n100,") != std::string::npos);
  CHECK(text.find("\n400,") != std::string::npos);
  CHECK(text.find("\n1600,") != std::string::npos);
  CHECK(text.find("\nslope,") != std::string::npos);
  CHECK(text.find("\nslope_se,") != std::string::npos);
  CHECK(text.find("\nfloor_dominated,") != std::string::npos);
}

TEST_CASE("identify reports rank and null directions") {
  const fs::path cfg = scratch_dir() / "ident_fhn.ini";
  spit(cfg,
       "[model]\n"
       "name = fhn\n"
       "[truth]\n"
       "nu = 0.34, 0.2, 3.0\n"
       "xi = 0.0, 0.1\n"
       "[design]\n"
       "kind = grid\n"
       "T = 20\n"
       "n = 201\n");
  RunResult r = run_cli("identify --config " + cfg.string(), "ident_fhn");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["rank"] == 4);
  CHECK(j["null_basis"].size() == 0);
  const double cond = j["cond_c"].get<double>();
  CHECK(cond >= 2e-4);
  CHECK(cond <= 1e-3);
  REQUIRE(j["spectrum"].size() == 4);

  const fs::path cfg2 = scratch_dir() / "ident_dup.ini";
  spit(cfg2,
       "[model]\n"
       "name = dup\n"
       "[truth]\n"
       "nu = 0.25, 0.25\n"
       "xi = 1.0\n"
       "[design]\n"
       "kind = grid\n"
       "T = 1\n"
       "n = 101\n");
  RunResult r2 = run_cli("identify --config " + cfg2.string(), "ident_dup");
  REQUIRE(r2.exit_code == 0);
  json j2 = json::parse(r2.out);
  CHECK(j2["rank"] == 1);
  REQUIRE(j2["null_basis"].size() == 1);
  const double v0 = j2["null_basis"][0][0].get<double>();
  const double v1 = j2["null_basis"][0][1].get<double>();
  CHECK(std::abs(std::abs(v0) - 1.0 / std::sqrt(2.0)) <= 1e-9);
  CHECK(std::abs(v0 + v1) <= 1e-9);
}
