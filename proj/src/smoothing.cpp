#include "odefit/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "odefit/kernels.hpp"

namespace odefit {

namespace {

void validate_observations(const Observations& obs) {
  const auto n = static_cast<Eigen::Index>(obs.times.size());
  if (n == 0) {
    throw Error(ErrorKind::validation, "observations are empty");
  }
  if (obs.values.rows() != n) {
    throw Error(ErrorKind::validation,
                "observation value rows do not match the time grid");
  }
  for (std::size_t i = 1; i < obs.times.size(); ++i) {
    if (obs.times[i] < obs.times[i - 1]) {
      throw Error(ErrorKind::validation,
                  "observation times must be nondecreasing");
    }
  }
  if (!obs.values.allFinite()) {
    throw Error(ErrorKind::validation,
                "observation values must be finite");
  }
}

}  // namespace

KernelSpec epanechnikov() {
  KernelSpec k;
  k.name = "epanechnikov";
  k.evaluate = [](double u) {
    return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  };
  return k;
}

double default_bandwidth(int n, std::optional<double> alpha) {
  if (n < 2) {
    throw Error(ErrorKind::validation,
                "default bandwidth needs at least 2 samples");
  }
  if (alpha && *alpha < 1.0) {
    throw Error(ErrorKind::validation, "smoothness level must be >= 1");
  }
  double expo = alpha ? 1.0 / (2.0 * *alpha) : 1.0 / 3.0;
  return std::pow(static_cast<double>(n), -expo);
}

LocalPolyPlan::LocalPolyPlan(const std::vector<double>& obs_times,
                             const SmootherConfig& cfg,
                             std::vector<double> eval_times)
    : eval_times_(std::move(eval_times)), n_obs_(obs_times.size()) {
  if (cfg.order < 0 || cfg.order > 5) {
    throw Error(ErrorKind::validation,
                "local polynomial order must lie in [0, 5]");
  }
  if (!(cfg.bandwidth > 0.0)) {
    throw Error(ErrorKind::validation, "bandwidth must be positive");
  }
  if (!cfg.kernel.evaluate) {
    throw Error(ErrorKind::validation, "kernel is not set");
  }
  if (n_obs_ == 0) {
    throw Error(ErrorKind::validation, "observation grid is empty");
  }

  const double b = cfg.bandwidth;
  const int m = cfg.order + 1;
  const double nb = static_cast<double>(n_obs_) * b;

  offsets_.resize(eval_times_.size());
  weights_.resize(eval_times_.size());

  Eigen::MatrixXd B(m, m);
  Eigen::VectorXd u_pow(m);

  for (std::size_t e = 0; e < eval_times_.size(); ++e) {
    const double t = eval_times_[e];
    auto lo_it = std::lower_bound(obs_times.begin(), obs_times.end(), t - b);
    auto hi_it = std::upper_bound(obs_times.begin(), obs_times.end(), t + b);
    const int lo = static_cast<int>(lo_it - obs_times.begin());
    const int count = static_cast<int>(hi_it - lo_it);

    B.setZero();
    for (int i = 0; i < count; ++i) {
      const double u = (obs_times[lo + i] - t) / b;
      const double k = cfg.kernel.evaluate(u);
      if (k == 0.0) continue;
      u_pow[0] = 1.0;
      for (int r = 1; r < m; ++r) u_pow[r] = u_pow[r - 1] * u;
      B.noalias() += (k / nb) * (u_pow * u_pow.transpose());
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(B);
    const auto& lambda = eig.eigenvalues();
    const double lmax = lambda[m - 1];
    const double lmin = lambda[0];
    const double rcond = lmax > 0.0 ? lmin / lmax : 0.0;
    if (!(rcond >= 1e-12)) {
      std::ostringstream msg;
      msg << "singular smoothing design at t=" << t << " (" << count
          << " points in window)";
      throw Error(ErrorKind::numeric, msg.str());
    }

    // c = B^{-1} e1; the weight of point i is K(u_i) U(u_i).c / (n b).
    Eigen::VectorXd c =
        eig.eigenvectors() *
        (eig.eigenvectors().row(0).transpose().array() / lambda.array())
            .matrix();

    offsets_[e] = lo;
    auto& w = weights_[e];
    w.assign(static_cast<std::size_t>(count), 0.0);
    for (int i = 0; i < count; ++i) {
      const double u = (obs_times[lo + i] - t) / b;
      const double k = cfg.kernel.evaluate(u);
      if (k == 0.0) continue;
      double acc = 0.0;
      double up = 1.0;
      for (int r = 0; r < m; ++r) {
        acc += c[r] * up;
        up *= u;
      }
      w[static_cast<std::size_t>(i)] = k * acc / nb;
    }
  }
}

Trajectory LocalPolyPlan::apply(const Eigen::MatrixXd& values,
                                double horizon) const {
  if (values.rows() != static_cast<Eigen::Index>(n_obs_)) {
    throw Error(ErrorKind::validation,
                "value rows do not match the plan's observation grid");
  }
  const Eigen::Index d = values.cols();
  Trajectory out;
  out.times = eval_times_;
  out.horizon = horizon;
  out.values.resize(static_cast<Eigen::Index>(eval_times_.size()), d);
  for (std::size_t e = 0; e < eval_times_.size(); ++e) {
    const auto& w = weights_[e];
    const int lo = offsets_[e];
    for (Eigen::Index h = 0; h < d; ++h) {
      const double* col = values.col(h).data() + lo;
      out.values(static_cast<Eigen::Index>(e), h) =
          kern::dot(w.data(), col, w.size());
    }
  }
  return out;
}

Trajectory local_poly_fit(const Observations& obs, const SmootherConfig& cfg,
                          const std::vector<double>& eval_times) {
  validate_observations(obs);
  const double T = obs.horizon > 0.0 ? obs.horizon : obs.times.back();
  if (cfg.bandwidth > T) {
    throw Error(ErrorKind::validation,
                "bandwidth exceeds the observation horizon");
  }
  const double tol = 1e-9 * std::max(1.0, T);
  for (double t : eval_times) {
    if (!(t >= -tol && t <= T + tol)) {
      throw Error(ErrorKind::validation,
                  "evaluation times must lie within the horizon");
    }
  }
  LocalPolyPlan plan(obs.times, cfg, eval_times);
  return plan.apply(obs.values, T);
}

namespace {

void validate_repeated(const RepeatedObservations& obs) {
  if (obs.times.empty() || obs.replicates.size() != obs.times.size()) {
    throw Error(ErrorKind::validation,
                "repeated design needs one replicate block per time");
  }
  if (!(obs.times.front() > 0.0)) {
    throw Error(ErrorKind::validation,
                "repeated design nodes must be positive");
  }
  for (std::size_t i = 1; i < obs.times.size(); ++i) {
    if (!(obs.times[i] > obs.times[i - 1])) {
      throw Error(ErrorKind::validation,
                  "repeated design nodes must be strictly increasing");
    }
  }
  const Eigen::Index d = obs.replicates.front().cols();
  for (const auto& block : obs.replicates) {
    if (block.rows() < 1 || block.cols() != d) {
      throw Error(ErrorKind::validation,
                  "every design node needs at least one replicate row");
    }
    if (!block.allFinite()) {
      throw Error(ErrorKind::validation, "replicate values must be finite");
    }
  }
}

}  // namespace

Eigen::MatrixXd replicate_means(const RepeatedObservations& obs) {
  validate_repeated(obs);
  const auto I = static_cast<Eigen::Index>(obs.times.size());
  const Eigen::Index d = obs.replicates.front().cols();
  Eigen::MatrixXd means(I, d);
  for (Eigen::Index i = 0; i < I; ++i) {
    means.row(i) = obs.replicates[static_cast<std::size_t>(i)].colwise().mean();
  }
  return means;
}

Trajectory step_estimator(const RepeatedObservations& obs,
                          const std::vector<double>& eval_times) {
  Eigen::MatrixXd means = replicate_means(obs);
  const double T = obs.horizon > 0.0 ? obs.horizon : obs.times.back();
  const double tol = 1e-9 * std::max(1.0, T);
  const auto I = static_cast<int>(obs.times.size());

  Trajectory out;
  out.times = eval_times;
  out.horizon = T;
  out.values.resize(static_cast<Eigen::Index>(eval_times.size()),
                    means.cols());
  for (std::size_t e = 0; e < eval_times.size(); ++e) {
    const double t = eval_times[e];
    if (!(t >= -tol && t <= obs.times.back() + tol)) {
      throw Error(ErrorKind::validation,
                  "evaluation times must lie within the design range");
    }
    auto it =
        std::lower_bound(obs.times.begin(), obs.times.end(), t - tol);
    int idx = static_cast<int>(it - obs.times.begin());
    if (idx >= I) idx = I - 1;
    out.values.row(static_cast<Eigen::Index>(e)) = means.row(idx);
  }
  return out;
}

}  // namespace odefit
