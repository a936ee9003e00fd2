#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "odefit/error.hpp"
#include "odefit/ode.hpp"

namespace odefit {

// Noisy samples of one trajectory: values(i, h) observes component h at
// times[i]. Times are nondecreasing (duplicates allowed) within [0, horizon].
struct Observations {
  std::vector<double> times;
  Eigen::MatrixXd values;  // times.size() x d
  double horizon = 0.0;
};

// Repeated-measures design: replicates[i] is a J_i x d matrix of independent
// observations at times[i]. Times are strictly increasing and positive
// (the design has no node at t = 0).
struct RepeatedObservations {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> replicates;
  double horizon = 0.0;
};

// Symmetric kernel supported on [-1, 1].
struct KernelSpec {
  std::function<double(double)> evaluate;
  std::string name;
};

KernelSpec epanechnikov();

// bandwidth is in raw time units; valid range is (0, horizon].
struct SmootherConfig {
  int order = 1;
  double bandwidth = 0.0;
  KernelSpec kernel = epanechnikov();
};

// n^(-1/(2*alpha)) when a smoothness level is supplied, else n^(-1/3).
double default_bandwidth(int n, std::optional<double> alpha = std::nullopt);

// Local polynomial weights for a fixed (observation grid, config, eval grid)
// triple. The weights do not depend on the observed values, so one plan
// serves every data set sharing the design.
class LocalPolyPlan {
 public:
  LocalPolyPlan(const std::vector<double>& obs_times,
                const SmootherConfig& cfg, std::vector<double> eval_times);

  // values rows follow the observation grid the plan was built on.
  Trajectory apply(const Eigen::MatrixXd& values, double horizon) const;

  const std::vector<double>& eval_times() const { return eval_times_; }
  std::size_t n_obs() const { return n_obs_; }
  // First observation index with nonzero weight at eval point e.
  int offset(std::size_t e) const { return offsets_[e]; }
  const std::vector<double>& weights(std::size_t e) const {
    return weights_[e];
  }

 private:
  std::vector<double> eval_times_;
  std::vector<int> offsets_;
  std::vector<std::vector<double>> weights_;
  std::size_t n_obs_ = 0;
};

Trajectory local_poly_fit(const Observations& obs, const SmootherConfig& cfg,
                          const std::vector<double>& eval_times);

// Per-time replicate means, one row per design node.
Eigen::MatrixXd replicate_means(const RepeatedObservations& obs);

// Piecewise-constant estimator: mean of the replicates at times[i] on the
// bin (times[i-1], times[i]], extended left so the value at 0 is the value
// at the first node.
Trajectory step_estimator(const RepeatedObservations& obs,
                          const std::vector<double>& eval_times);

}  // namespace odefit
