#include "odefit/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "odefit/parallel.hpp"
#include "odefit/rng.hpp"

namespace odefit {

namespace {

void validate_noise(const NoiseSpec& noise, int d) {
  if (noise.sigma.size() != d) {
    throw Error(ErrorKind::validation,
                "noise needs one sigma per state component");
  }
  for (Eigen::Index h = 0; h < noise.sigma.size(); ++h) {
    if (!(noise.sigma[h] > 0.0)) {
      throw Error(ErrorKind::validation, "noise sigma must be positive");
    }
  }
}

double draw_noise(const NoiseSpec& noise, Eigen::Index h, rng::Stream& st) {
  const double s = noise.sigma[h];
  if (noise.dist == NoiseSpec::Dist::gaussian) return s * st.gaussian();
  return st.laplace(s / std::sqrt(2.0));
}

// Grid data: one draw per (time, component), times outer.
void add_noise_rows(Eigen::MatrixXd& y, const NoiseSpec& noise,
                    rng::Stream& st) {
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index h = 0; h < y.cols(); ++h) {
      y(i, h) += draw_noise(noise, h, st);
    }
  }
}

// Repeated data: J noisy copies of one truth row, replicates outer,
// components inner.
Eigen::MatrixXd noisy_block(const Eigen::RowVectorXd& truth_row, int J,
                            const NoiseSpec& noise, rng::Stream& st) {
  Eigen::MatrixXd block(J, truth_row.size());
  for (int j = 0; j < J; ++j) {
    for (Eigen::Index h = 0; h < truth_row.size(); ++h) {
      block(j, h) = truth_row[h] + draw_noise(noise, h, st);
    }
  }
  return block;
}

std::vector<double> repeated_times(const RepeatedDesign& d) {
  if (d.I < 1 || d.J < 1 || !(d.T > 0)) {
    throw Error(ErrorKind::validation,
                "repeated design needs I >= 1, J >= 1, T > 0");
  }
  std::vector<double> times(static_cast<std::size_t>(d.I));
  for (int i = 1; i <= d.I; ++i) {
    times[static_cast<std::size_t>(i) - 1] =
        d.T * static_cast<double>(i) / d.I;
  }
  return times;
}

void check_shared_grid(const Trajectory& a, const Trajectory& b) {
  if (a.times.size() != b.times.size() || a.times != b.times ||
      a.values.cols() != b.values.cols()) {
    throw Error(ErrorKind::validation,
                "trajectory distance needs a shared grid and dimension");
  }
  if (a.times.size() < 2) {
    throw Error(ErrorKind::validation,
                "trajectory distance needs at least 2 grid points");
  }
}

}  // namespace

Observations simulate(const OdeModel& model, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& xi, const GridDesign& design,
                      const NoiseSpec& noise) {
  validate_noise(noise, model.d);
  std::vector<double> grid = uniform_grid(design.T, design.n);
  Trajectory truth = solve_ode(model, theta, xi, grid);
  Observations obs;
  obs.times = grid;
  obs.horizon = design.T;
  obs.values = truth.values;
  rng::Stream st(noise.seed);
  add_noise_rows(obs.values, noise, st);
  return obs;
}

RepeatedObservations simulate(const OdeModel& model,
                              const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& xi,
                              const RepeatedDesign& design,
                              const NoiseSpec& noise) {
  validate_noise(noise, model.d);
  std::vector<double> times = repeated_times(design);
  std::vector<double> solve_grid;
  solve_grid.reserve(times.size() + 1);
  solve_grid.push_back(0.0);
  solve_grid.insert(solve_grid.end(), times.begin(), times.end());
  Trajectory truth = solve_ode(model, theta, xi, solve_grid);

  RepeatedObservations obs;
  obs.times = times;
  obs.horizon = design.T;
  obs.replicates.reserve(times.size());
  rng::Stream st(noise.seed);
  for (std::size_t i = 0; i < times.size(); ++i) {
    obs.replicates.push_back(noisy_block(
        truth.values.row(static_cast<Eigen::Index>(i) + 1), design.J, noise,
        st));
  }
  return obs;
}

double trajectory_l2_distance(const Trajectory& a, const Trajectory& b) {
  check_shared_grid(a, b);
  const double span = a.times.back() - a.times.front();
  if (!(span > 0.0)) {
    throw Error(ErrorKind::validation, "trajectory grid has zero span");
  }
  double integral = 0.0;
  double prev_sq = (a.values.row(0) - b.values.row(0)).squaredNorm();
  for (std::size_t i = 1; i < a.times.size(); ++i) {
    const double sq =
        (a.values.row(static_cast<Eigen::Index>(i)) -
         b.values.row(static_cast<Eigen::Index>(i)))
            .squaredNorm();
    integral += 0.5 * (a.times[i] - a.times[i - 1]) * (prev_sq + sq);
    prev_sq = sq;
  }
  return std::sqrt(integral / span);
}

double trajectory_sup_distance(const Trajectory& a, const Trajectory& b) {
  check_shared_grid(a, b);
  return (a.values - b.values).cwiseAbs().maxCoeff();
}

double are_pct(const std::vector<double>& estimates, double true_value) {
  if (estimates.empty()) {
    throw Error(ErrorKind::validation, "relative error of an empty sample");
  }
  if (std::abs(true_value) < 1e-300) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double acc = 0.0;
  for (double e : estimates) acc += std::abs(e - true_value);
  return 100.0 * acc / (std::abs(true_value) * estimates.size());
}

std::vector<std::string> parameter_names(const OdeModel& model) {
  std::vector<std::string> names;
  for (int h = 1; h <= model.d; ++h) names.push_back("xi" + std::to_string(h));
  if (model.name == "fhn" || model.name == "fhn_ramsay") {
    names.insert(names.end(), {"alpha", "beta", "gamma"});
  } else if (model.h_is_identity()) {
    for (int j = 1; j <= model.p; ++j) {
      names.push_back("theta" + std::to_string(j));
    }
  } else {
    for (int j = 1; j <= model.q; ++j) {
      names.push_back("nu" + std::to_string(j));
    }
  }
  return names;
}

namespace {

struct SharedDesign {
  double T = 0.0;
  std::vector<double> obs_times;
  Eigen::MatrixXd truth_obs;  // truth at the observation times
  std::optional<LocalPolyPlan> plan;
  SmootherConfig smoother;  // resolved bandwidth
  WeightScheme weights = WeightScheme::uniform_lebesgue();
  CumulativeRule rule = CumulativeRule::trapezoid;
  int J = 0;
};

SharedDesign prepare_design(const McConfig& cfg,
                            const Eigen::VectorXd& theta_true) {
  SharedDesign sh;
  if (cfg.pipeline == PipelineKind::smooth) {
    if (!std::holds_alternative<GridDesign>(cfg.design)) {
      throw Error(ErrorKind::validation,
                  "the smooth pipeline needs a grid design");
    }
    const auto& gd = std::get<GridDesign>(cfg.design);
    sh.T = gd.T;
    sh.obs_times = uniform_grid(gd.T, gd.n);
    sh.truth_obs =
        solve_ode(cfg.model, theta_true, cfg.xi_true, sh.obs_times).values;
    sh.smoother = cfg.smoother;
    if (sh.smoother.bandwidth <= 0.0) {
      sh.smoother.bandwidth = default_bandwidth(gd.n);
    }
    sh.plan.emplace(sh.obs_times, sh.smoother,
                    refine_grid(sh.obs_times, cfg.refine_factor));
    sh.weights = WeightScheme::uniform_lebesgue();
    sh.rule = CumulativeRule::trapezoid;
  } else {
    if (!std::holds_alternative<RepeatedDesign>(cfg.design)) {
      throw Error(ErrorKind::validation,
                  "the step pipeline needs a repeated design");
    }
    const auto& rd = std::get<RepeatedDesign>(cfg.design);
    sh.T = rd.T;
    sh.J = rd.J;
    sh.obs_times = repeated_times(rd);
    std::vector<double> solve_grid;
    solve_grid.reserve(sh.obs_times.size() + 1);
    solve_grid.push_back(0.0);
    solve_grid.insert(solve_grid.end(), sh.obs_times.begin(),
                      sh.obs_times.end());
    sh.truth_obs = solve_ode(cfg.model, theta_true, cfg.xi_true, solve_grid)
                       .values.bottomRows(static_cast<Eigen::Index>(rd.I));
    // Node masses: trapezoid over {0, t_1, ..., t_I} with the mass of the
    // 0 node dropped (the step bins carry no mass at 0).
    const double delta = rd.T / rd.I;
    Eigen::VectorXd w = Eigen::VectorXd::Constant(rd.I, delta);
    w[rd.I - 1] = 0.5 * delta;
    sh.weights = WeightScheme::discrete(w);
    sh.rule = CumulativeRule::step_right;
  }
  return sh;
}

}  // namespace

McResult run_monte_carlo(const McConfig& cfg) {
  const OdeModel& model = cfg.model;
  if (cfg.replicates < 1) {
    throw Error(ErrorKind::validation, "need at least one replicate");
  }
  validate_noise(cfg.noise, model.d);
  if (cfg.xi_true.size() != model.d) {
    throw Error(ErrorKind::validation,
                "xi dimension does not match the model");
  }
  if (model.h_is_identity() && cfg.nu_true.size() != model.p) {
    throw Error(ErrorKind::validation,
                "parameter dimension does not match the model");
  }
  const Eigen::VectorXd theta_true = model.h(cfg.nu_true);

  SharedDesign sh = prepare_design(cfg, theta_true);
  const std::vector<double> metric_grid = uniform_grid(sh.T, 2001);
  const Trajectory truth_metric =
      solve_ode(model, theta_true, cfg.xi_true, metric_grid);

  const int M = cfg.replicates;
  const int p = model.p;
  McResult result;
  result.records.resize(static_cast<std::size_t>(M));

  parallel_for(M, cfg.threads, [&](int m) {
    ReplicateRecord rec;
    rec.replicate = m;
    try {
      rng::Stream st(cfg.seed, {0ull, static_cast<std::uint64_t>(m)});
      FitResult fr;
      if (cfg.pipeline == PipelineKind::smooth) {
        Eigen::MatrixXd y = sh.truth_obs;
        add_noise_rows(y, cfg.noise, st);
        Trajectory xhat = sh.plan->apply(y, sh.T);
        FitOptions fopts;
        fopts.rule = sh.rule;
        fr = fit(model, xhat, sh.weights, fopts);
        if (cfg.bootstrap > 0) {
          Observations obs{sh.obs_times, y, sh.T};
          SmoothPipeline pipe;
          pipe.smoother = sh.smoother;
          pipe.refine_factor = cfg.refine_factor;
          pipe.weights = sh.weights;
          fr.sigma_hat = bootstrap_covariance(
              model, obs, pipe, cfg.bootstrap,
              rng::derive(cfg.seed, {1ull, static_cast<std::uint64_t>(m)}),
              1);
        }
      } else {
        RepeatedObservations robs;
        robs.times = sh.obs_times;
        robs.horizon = sh.T;
        robs.replicates.reserve(sh.obs_times.size());
        for (std::size_t i = 0; i < sh.obs_times.size(); ++i) {
          robs.replicates.push_back(
              noisy_block(sh.truth_obs.row(static_cast<Eigen::Index>(i)),
                          sh.J, cfg.noise, st));
        }
        Trajectory xhat;
        xhat.times = sh.obs_times;
        xhat.values = replicate_means(robs);
        xhat.horizon = sh.T;
        FitOptions fopts;
        fopts.rule = sh.rule;
        fr = fit(model, xhat, sh.weights, fopts);
      }

      rec.theta_hat = fr.theta_hat;
      rec.xi_hat = fr.xi_hat;
      rec.cond_c = fr.cond_c;
      rec.criterion = fr.criterion_value;
      if (cfg.estimate_nu) {
        if (model.h_is_identity()) {
          rec.nu_hat = fr.theta_hat;
        } else {
          Eigen::MatrixXd sigma = fr.sigma_hat
                                      ? *fr.sigma_hat
                                      : Eigen::MatrixXd::Identity(p, p);
          NuResult nr = invert_to_nu(model, fr.theta_hat, sigma);
          rec.nu_hat = nr.nu;
          rec.nu_converged = nr.converged;
        }
      }
      Trajectory refit = solve_ode(model, fr.theta_hat, fr.xi_hat, metric_grid);
      rec.traj_l2 = trajectory_l2_distance(refit, truth_metric);
      rec.traj_sup = trajectory_sup_distance(refit, truth_metric);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    result.records[static_cast<std::size_t>(m)] = std::move(rec);
  });

  // Aggregate over completed replicates.
  McSummary& s = result.summary;
  const bool nu_level = cfg.estimate_nu;
  if (nu_level) {
    s.param_names = parameter_names(model);
  } else {
    for (int h = 1; h <= model.d; ++h) {
      s.param_names.push_back("xi" + std::to_string(h));
    }
    for (int j = 1; j <= model.p; ++j) {
      s.param_names.push_back("theta" + std::to_string(j));
    }
  }
  const Eigen::VectorXd interest_true = nu_level ? cfg.nu_true : theta_true;
  const auto k = static_cast<Eigen::Index>(s.param_names.size());
  s.true_values.resize(k);
  s.true_values << cfg.xi_true, interest_true;

  std::vector<const ReplicateRecord*> ok;
  for (const auto& r : result.records) {
    if (r.ok) ok.push_back(&r);
  }
  s.completed = static_cast<int>(ok.size());
  s.failures = M - s.completed;
  s.unreliable = s.failures * 10 > M;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.mean = Eigen::VectorXd::Constant(k, nan);
  s.sd = Eigen::VectorXd::Constant(k, nan);
  s.are = Eigen::VectorXd::Constant(k, nan);
  if (s.completed == 0) {
    s.traj_l2_mean = s.traj_l2_sd = nan;
    s.traj_sup_mean = s.traj_sup_sd = nan;
    return result;
  }

  Eigen::MatrixXd est(s.completed, k);
  Eigen::VectorXd l2(s.completed), sup(s.completed);
  for (int i = 0; i < s.completed; ++i) {
    const ReplicateRecord& r = *ok[static_cast<std::size_t>(i)];
    est.row(i).head(model.d) = r.xi_hat.transpose();
    est.row(i).tail(k - model.d) =
        (nu_level ? r.nu_hat : r.theta_hat).transpose();
    l2[i] = r.traj_l2;
    sup[i] = r.traj_sup;
  }

  auto sample_sd = [&](const Eigen::VectorXd& col) {
    if (s.completed < 2) return 0.0;
    const double mu = col.mean();
    return std::sqrt((col.array() - mu).square().sum() / (s.completed - 1));
  };
  for (Eigen::Index j = 0; j < k; ++j) {
    s.mean[j] = est.col(j).mean();
    s.sd[j] = sample_sd(est.col(j));
    std::vector<double> vals(est.col(j).data(), est.col(j).data() + s.completed);
    s.are[j] = are_pct(vals, s.true_values[j]);
  }
  s.traj_l2_mean = l2.mean();
  s.traj_l2_sd = sample_sd(l2);
  s.traj_sup_mean = sup.mean();
  s.traj_sup_sd = sample_sd(sup);
  return result;
}

namespace {

void ols_loglog(const std::vector<double>& xs, const std::vector<double>& ys,
                double* slope, double* se) {
  const auto k = xs.size();
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    xbar += xs[i];
    ybar += ys[i];
  }
  xbar /= static_cast<double>(k);
  ybar /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
  }
  *slope = sxy / sxx;
  const double intercept = ybar - *slope * xbar;
  double rss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = ys[i] - intercept - *slope * xs[i];
    rss += r * r;
  }
  *se = k > 2 ? std::sqrt(rss / (static_cast<double>(k) - 2.0) / sxx) : 0.0;
}

}  // namespace

RateResult rate_check(const McConfig& base, const std::vector<int>& ladder,
                      int per_rung_replicates) {
  if (ladder.size() < 3) {
    throw Error(ErrorKind::validation, "rate ladder needs at least 3 rungs");
  }
  if (per_rung_replicates < 1) {
    throw Error(ErrorKind::validation, "need at least one replicate per rung");
  }
  const Eigen::VectorXd theta_true = base.model.h(base.nu_true);
  const Eigen::VectorXd& xi_true = base.xi_true;

  RateResult rr;
  for (int n : ladder) {
    if (n < 2) {
      throw Error(ErrorKind::validation, "ladder sizes must be >= 2");
    }
    McConfig cfg = base;
    cfg.replicates = per_rung_replicates;
    cfg.bootstrap = 0;
    cfg.estimate_nu = false;
    cfg.seed = rng::derive(base.seed, {static_cast<std::uint64_t>(n)});
    if (std::holds_alternative<GridDesign>(base.design)) {
      cfg.design = GridDesign{std::get<GridDesign>(base.design).T, n};
    } else {
      const int I =
          static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
      cfg.design = RepeatedDesign{std::get<RepeatedDesign>(base.design).T, I, I};
    }
    McResult res = run_monte_carlo(cfg);

    // Pooled relative errors; absolute for near-zero true entries.
    auto pooled = [](const Eigen::VectorXd& truth, auto get,
                     const std::vector<ReplicateRecord>& recs) {
      double acc = 0.0;
      long cnt = 0;
      for (const auto& r : recs) {
        if (!r.ok) continue;
        const Eigen::VectorXd& v = get(r);
        for (Eigen::Index j = 0; j < truth.size(); ++j) {
          double e = v[j] - truth[j];
          if (std::abs(truth[j]) > 1e-8) e /= truth[j];
          acc += e * e;
          ++cnt;
        }
      }
      if (cnt == 0) {
        throw Error(ErrorKind::numeric, "every replicate failed on a rung");
      }
      return std::sqrt(acc / static_cast<double>(cnt));
    };
    RatePoint pt;
    pt.n = n;
    pt.rmse_theta = pooled(
        theta_true, [](const ReplicateRecord& r) { return r.theta_hat; },
        res.records);
    pt.rmse_xi = pooled(
        xi_true, [](const ReplicateRecord& r) { return r.xi_hat; },
        res.records);
    rr.points.push_back(pt);
  }

  std::vector<double> xs, yt, yx;
  for (const auto& pt : rr.points) {
    xs.push_back(std::log(static_cast<double>(pt.n)));
    yt.push_back(std::log(std::max(pt.rmse_theta, 1e-300)));
    yx.push_back(std::log(std::max(pt.rmse_xi, 1e-300)));
  }
  ols_loglog(xs, yt, &rr.slope_theta, &rr.slope_theta_se);
  ols_loglog(xs, yx, &rr.slope_xi, &rr.slope_xi_se);
  rr.floor_dominated = std::abs(rr.slope_theta) < 0.1;
  return rr;
}

}  // namespace odefit
