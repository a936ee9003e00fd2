#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odefit/estimator.hpp"
#include "odefit/experiments.hpp"
#include "odefit/ode.hpp"
#include "odefit/runconfig.hpp"
#include "odefit/smoothing.hpp"

namespace {

using nlohmann::json;
using namespace odefit;

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// Observation times are design coordinates, not estimates; they must
// round-trip precisely enough that equispacedness survives a save/load.
std::string fmt_time(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::io, "cannot open output file '" + path + "'");
  }
  out << content;
  if (!out) {
    throw Error(ErrorKind::io, "write to '" + path + "' failed");
  }
}

// Sibling path for the per-replicate table: mc.csv -> mc_replicates.csv.
std::string replicates_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return out + "_replicates";
  }
  return out.substr(0, dot) + "_replicates" + out.substr(dot);
}

struct CommonOpts {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> threads;
};

// A deliberately rank-deficient demo model: both columns of g are equal,
// so no data can separate theta1 from theta2.
OdeModel make_cli_model(const std::string& name) {
  if (name == "dup") {
    OdeModel m;
    m.d = 1;
    m.p = 2;
    m.q = 2;
    m.name = "dup";
    m.g_eval = [](const double* x, double* g) {
      g[0] = x[0];
      g[1] = x[0];
    };
    return m;
  }
  return make_model(name);
}

OdeModel require_cli_model(const RunConfig& rc) {
  if (!rc.model_name) {
    throw Error(ErrorKind::validation, "config needs [model] name");
  }
  return make_cli_model(*rc.model_name);
}

std::uint64_t effective_seed(const RunConfig& rc, const CommonOpts& opts) {
  if (opts.seed) return *opts.seed;
  return rc.seed.value_or(0);
}

// ---------------------------------------------------------------- datasets

struct DataRow {
  double t = 0.0;
  int replicate = 1;
  Eigen::VectorXd y;
};

std::string dataset_csv(const std::vector<DataRow>& rows, int d,
                        std::uint64_t seed) {
  std::ostringstream out;
  out << "t,replicate";
  for (int h = 1; h <= d; ++h) out << ",y" << h;
  out << ",seed\n";
  for (const auto& row : rows) {
    out << fmt_time(row.t) << ',' << row.replicate;
    for (int h = 0; h < d; ++h) out << ',' << fmt6(row.y[h]);
    out << ',' << seed << '\n';
  }
  return out.str();
}

std::vector<DataRow> read_dataset(const std::string& path, int d) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open data file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::validation, "data file '" + path + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::string> want = {"t", "replicate"};
  for (int h = 1; h <= d; ++h) want.push_back("y" + std::to_string(h));
  want.push_back("seed");
  if (header != want) {
    throw Error(ErrorKind::validation,
                "data header does not match the expected schema "
                "t,replicate,y1..y" +
                    std::to_string(d) + ",seed");
  }

  std::vector<DataRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != want.size()) {
      throw Error(ErrorKind::validation,
                  path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(want.size()) + " columns");
    }
    DataRow row;
    try {
      row.t = std::stod(cells[0]);
      row.replicate = std::stoi(cells[1]);
      row.y.resize(d);
      for (int h = 0; h < d; ++h) row.y[h] = std::stod(cells[2 + h]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation,
                  path + ":" + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw Error(ErrorKind::validation, "data file has no rows");
  }
  return rows;
}

// ------------------------------------------------------------- subcommands

int cmd_simulate(const CommonOpts& opts) {
  RunConfig rc = load_run_config(opts.config);
  OdeModel model = require_cli_model(rc);
  Eigen::VectorXd nu, theta, xi;
  require_truth(rc, model, &nu, &theta, &xi);
  auto design = require_design(rc);
  NoiseSpec noise = require_noise(rc, model.d);
  noise.seed = effective_seed(rc, opts);

  std::vector<DataRow> rows;
  if (std::holds_alternative<GridDesign>(design)) {
    Observations obs =
        simulate(model, theta, xi, std::get<GridDesign>(design), noise);
    for (std::size_t i = 0; i < obs.times.size(); ++i) {
      rows.push_back({obs.times[i], 1,
                      obs.values.row(static_cast<Eigen::Index>(i)).transpose()});
    }
  } else {
    RepeatedObservations obs =
        simulate(model, theta, xi, std::get<RepeatedDesign>(design), noise);
    for (std::size_t i = 0; i < obs.times.size(); ++i) {
      const auto& block = obs.replicates[i];
      for (Eigen::Index j = 0; j < block.rows(); ++j) {
        rows.push_back({obs.times[i], static_cast<int>(j) + 1,
                        block.row(j).transpose()});
      }
    }
  }
  write_file(opts.out, dataset_csv(rows, model.d, noise.seed));
  return 0;
}

json fit_to_json(const FitResult& fr) {
  json j;
  j["theta_hat"] = std::vector<double>(
      fr.theta_hat.data(), fr.theta_hat.data() + fr.theta_hat.size());
  j["xi_hat"] = std::vector<double>(fr.xi_hat.data(),
                                    fr.xi_hat.data() + fr.xi_hat.size());
  if (fr.nu_hat) {
    j["nu_hat"] = std::vector<double>(fr.nu_hat->data(),
                                      fr.nu_hat->data() + fr.nu_hat->size());
    j["nu_converged"] = fr.nu_converged;
    j["nu_distance"] = fr.nu_distance;
  }
  if (fr.sigma_hat) {
    std::vector<std::vector<double>> sig;
    for (Eigen::Index i = 0; i < fr.sigma_hat->rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(fr.sigma_hat->cols()));
      for (Eigen::Index k = 0; k < fr.sigma_hat->cols(); ++k) {
        row[static_cast<std::size_t>(k)] = (*fr.sigma_hat)(i, k);
      }
      sig.push_back(std::move(row));
    }
    j["sigma_hat"] = sig;
  }
  j["cond_c"] = fr.cond_c;
  j["criterion_value"] = fr.criterion_value;
  return j;
}

int cmd_fit(const CommonOpts& opts) {
  RunConfig rc = load_run_config(opts.config);
  OdeModel model = require_cli_model(rc);
  PipelineKind pk = require_pipeline_kind(rc);
  const int B = rc.bootstrap.value_or(0);
  const std::uint64_t seed = effective_seed(rc, opts);

  std::vector<DataRow> rows = read_dataset(opts.data, model.d);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const DataRow& a, const DataRow& b) { return a.t < b.t; });

  FitResult fr;
  if (pk == PipelineKind::smooth) {
    Observations obs;
    obs.values.resize(static_cast<Eigen::Index>(rows.size()), model.d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      obs.times.push_back(rows[i].t);
      obs.values.row(static_cast<Eigen::Index>(i)) = rows[i].y.transpose();
    }
    obs.horizon = obs.times.back();
    SmootherConfig sc = smoother_from(rc);
    if (sc.bandwidth <= 0.0) {
      sc.bandwidth = default_bandwidth(static_cast<int>(obs.times.size()));
    }
    SmoothPipeline pipe;
    pipe.smoother = sc;
    pipe.refine_factor = rc.refine.value_or(4);
    Trajectory xhat = local_poly_fit(
        obs, sc, refine_grid(obs.times, pipe.refine_factor));
    fr = fit(model, xhat, pipe.weights, {});
    if (!model.h_is_identity() || B >= 2) {
      Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(model.p, model.p);
      if (B >= 2) {
        sigma = bootstrap_covariance(model, obs, pipe, B, seed);
        fr.sigma_hat = sigma;
      }
      if (!model.h_is_identity()) {
        NuResult nr = invert_to_nu(model, fr.theta_hat, sigma);
        fr.nu_hat = nr.nu;
        fr.nu_converged = nr.converged;
        fr.nu_distance = nr.distance;
      }
    }
    if (model.h_is_identity()) {
      fr.nu_hat = fr.theta_hat;
    }
  } else {
    std::map<double, std::vector<Eigen::VectorXd>> groups;
    for (const auto& row : rows) groups[row.t].push_back(row.y);
    RepeatedObservations obs;
    for (const auto& [t, ys] : groups) {
      obs.times.push_back(t);
      Eigen::MatrixXd block(static_cast<Eigen::Index>(ys.size()), model.d);
      for (std::size_t j = 0; j < ys.size(); ++j) {
        block.row(static_cast<Eigen::Index>(j)) = ys[j].transpose();
      }
      obs.replicates.push_back(std::move(block));
    }
    obs.horizon = obs.times.back();
    const auto I = static_cast<int>(obs.times.size());
    if (I < 2) {
      throw Error(ErrorKind::validation,
                  "step pipeline needs at least 2 design nodes");
    }
    const double delta = obs.horizon / I;
    for (int i = 0; i < I; ++i) {
      if (std::abs(obs.times[static_cast<std::size_t>(i)] - (i + 1) * delta) >
          1e-6 * delta) {
        throw Error(ErrorKind::validation,
                    "step pipeline needs equispaced nodes t_i = i T / I");
      }
    }
    Eigen::VectorXd w = Eigen::VectorXd::Constant(I, delta);
    w[I - 1] = 0.5 * delta;
    Trajectory xhat;
    xhat.times = obs.times;
    xhat.values = replicate_means(obs);
    xhat.horizon = obs.horizon;
    FitOptions fopts;
    fopts.rule = CumulativeRule::step_right;
    fr = fit(model, xhat, WeightScheme::discrete(w), fopts);
    if (model.h_is_identity()) fr.nu_hat = fr.theta_hat;
  }

  const std::string text = fit_to_json(fr).dump(2) + "\n";
  if (opts.out.empty()) {
    std::cout << text;
  } else {
    write_file(opts.out, text);
  }
  return 0;
}

int cmd_mc(const CommonOpts& opts) {
  RunConfig rc = load_run_config(opts.config);
  McConfig cfg = mc_config_from(rc);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.replicates) cfg.replicates = *opts.replicates;
  if (opts.threads) cfg.threads = *opts.threads;

  McResult res = run_monte_carlo(cfg);
  const McSummary& s = res.summary;

  std::ostringstream sum;
  sum << "param,true,mean,sd,are_pct\n";
  for (std::size_t j = 0; j < s.param_names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    sum << s.param_names[j] << ',' << fmt6(s.true_values[jj]) << ','
        << fmt6(s.mean[jj]) << ',' << fmt6(s.sd[jj]) << ','
        << fmt6(s.are[jj]) << '\n';
  }
  sum << "traj_l2,," << fmt6(s.traj_l2_mean) << ',' << fmt6(s.traj_l2_sd)
      << ",\n";
  sum << "traj_sup,," << fmt6(s.traj_sup_mean) << ',' << fmt6(s.traj_sup_sd)
      << ",\n";
  sum << "failures,," << s.failures << ",,\n";
  write_file(opts.out, sum.str());
  if (s.unreliable) {
    std::cerr << "warning: " << s.failures << " of " << cfg.replicates
              << " replicates failed; summary is unreliable\n";
  }

  std::ostringstream rep;
  rep << "replicate,ok";
  for (const auto& name : s.param_names) rep << ',' << name;
  rep << ",traj_l2,traj_sup,cond_c,criterion,nu_converged,error\n";
  for (const auto& r : res.records) {
    rep << r.replicate << ',' << (r.ok ? 1 : 0);
    if (r.ok) {
      for (Eigen::Index h = 0; h < r.xi_hat.size(); ++h) {
        rep << ',' << fmt6(r.xi_hat[h]);
      }
      for (Eigen::Index h = 0; h < r.nu_hat.size(); ++h) {
        rep << ',' << fmt6(r.nu_hat[h]);
      }
      rep << ',' << fmt6(r.traj_l2) << ',' << fmt6(r.traj_sup) << ','
          << fmt6(r.cond_c) << ',' << fmt6(r.criterion) << ','
          << (r.nu_converged ? 1 : 0) << ',';
    } else {
      for (std::size_t h = 0; h < s.param_names.size(); ++h) rep << ',';
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ';');
      rep << ",,,,," << msg;
    }
    rep << '\n';
  }
  write_file(replicates_path(opts.out), rep.str());
  return 0;
}

int cmd_rate(const CommonOpts& opts) {
  RunConfig rc = load_run_config(opts.config);
  McConfig cfg = mc_config_from(rc);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.threads) cfg.threads = *opts.threads;
  if (!rc.ladder) {
    throw Error(ErrorKind::validation, "rate needs [run] ladder");
  }
  if (!rc.rung_replicates) {
    throw Error(ErrorKind::validation, "rate needs [run] rung_replicates");
  }
  RateResult rr = rate_check(cfg, *rc.ladder, *rc.rung_replicates);

  std::ostringstream out;
  out << "n,rmse_theta,rmse_xi\n";
  for (const auto& pt : rr.points) {
    out << pt.n << ',' << fmt6(pt.rmse_theta) << ',' << fmt6(pt.rmse_xi)
        << '\n';
  }
  out << "slope," << fmt6(rr.slope_theta) << ',' << fmt6(rr.slope_xi) << '\n';
  out << "slope_se," << fmt6(rr.slope_theta_se) << ','
      << fmt6(rr.slope_xi_se) << '\n';
  out << "floor_dominated," << (rr.floor_dominated ? 1 : 0) << ",\n";
  write_file(opts.out, out.str());
  return 0;
}

int cmd_identify(const CommonOpts& opts) {
  RunConfig rc = load_run_config(opts.config);
  OdeModel model = require_cli_model(rc);
  Eigen::VectorXd nu, theta, xi;
  require_truth(rc, model, &nu, &theta, &xi);
  auto design = require_design(rc);
  const double T = std::holds_alternative<GridDesign>(design)
                       ? std::get<GridDesign>(design).T
                       : std::get<RepeatedDesign>(design).T;

  Trajectory x = solve_ode(model, theta, xi, uniform_grid(T, 2001));
  IdentifiabilityReport rep =
      identifiability_report(model, x, WeightScheme::uniform_lebesgue());

  json j;
  j["cond_c"] = rep.cond_c;
  j["rank"] = rep.rank;
  j["spectrum"] = std::vector<double>(
      rep.spectrum.data(), rep.spectrum.data() + rep.spectrum.size());
  std::vector<std::vector<double>> basis;
  for (Eigen::Index c = 0; c < rep.null_basis.cols(); ++c) {
    basis.emplace_back(rep.null_basis.col(c).data(),
                       rep.null_basis.col(c).data() + rep.null_basis.rows());
  }
  j["null_basis"] = basis;
  const std::string text = j.dump(2) + "\n";
  if (opts.out.empty()) {
    std::cout << text;
  } else {
    write_file(opts.out, text);
  }
  return 0;
}

const char* kConfigKeysAll =
    "Config keys: [model] name (fhn, fhn_ramsay, lv, dup); "
    "[truth] nu, xi; [design] kind (grid|repeated), T, n, I, J; "
    "[noise] dist (gaussian|laplace), sigma; "
    "[pipeline] kind (smooth|step), order, bandwidth, refine; "
    "[run] seed, replicates, bootstrap, threads, ladder, rung_replicates.";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      std::string("Direct integral estimation for ODE systems x' = g(x) h(nu).\n") +
      kConfigKeysAll};
  app.require_subcommand(1);

  CommonOpts opts;

  auto add_common = [&](CLI::App* sub, bool needs_data, bool needs_out) {
    sub->add_option("--config", opts.config, "Run configuration file")
        ->required();
    if (needs_data) {
      sub->add_option("--data", opts.data, "Input dataset CSV")->required();
    }
    auto* out = sub->add_option("--out", opts.out, "Output file path");
    if (needs_out) out->required();
    sub->add_option_function<std::uint64_t>(
        "--seed", [&opts](const std::uint64_t& v) { opts.seed = v; },
        "Override [run] seed");
    sub->add_option_function<int>(
        "--replicates", [&opts](const int& v) { opts.replicates = v; },
        "Override [run] replicates");
    sub->add_option_function<int>(
        "--threads", [&opts](const int& v) { opts.threads = v; },
        "Override [run] threads");
  };

  auto* sim = app.add_subcommand(
      "simulate",
      std::string("Generate a synthetic dataset CSV (t,replicate,y1..yd,seed).\n"
                  "Uses sections [model], [truth], [design], [noise], [run]. ") +
          kConfigKeysAll);
  add_common(sim, false, true);

  auto* fitcmd = app.add_subcommand(
      "fit",
      std::string("Fit one dataset; writes a JSON result.\n"
                  "Uses sections [model], [pipeline], [run]. ") +
          kConfigKeysAll);
  add_common(fitcmd, true, false);

  auto* mc = app.add_subcommand(
      "mc",
      std::string("Monte Carlo study; writes a summary CSV "
                  "(param,true,mean,sd,are_pct) and a per-replicate CSV.\n"
                  "Uses sections [model], [truth], [design], [noise], "
                  "[pipeline], [run]. ") +
          kConfigKeysAll);
  add_common(mc, false, true);

  auto* rate = app.add_subcommand(
      "rate",
      std::string("Convergence-rate sweep; writes a CSV (n,rmse_theta,rmse_xi) "
                  "with slope lines.\nUses the mc sections plus [run] ladder "
                  "and rung_replicates. ") +
          kConfigKeysAll);
  add_common(rate, false, true);

  auto* ident = app.add_subcommand(
      "identify",
      std::string("Identifiability report (JSON) for the configured model "
                  "at its true parameters.\nUses sections [model], [truth], "
                  "[design]. ") +
          kConfigKeysAll);
  add_common(ident, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(opts);
    if (fitcmd->parsed()) return cmd_fit(opts);
    if (mc->parsed()) return cmd_mc(opts);
    if (rate->parsed()) return cmd_rate(opts);
    if (ident->parsed()) return cmd_identify(opts);
  } catch (const NonIdentifiableError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& vec : e.null_basis()) {
      std::cerr << "null vector:";
      for (double v : vec) std::cerr << ' ' << fmt6(v);
      std::cerr << '\n';
    }
    return e.exit_code();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
