#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "odefit/estimator.hpp"
#include "odefit/ode.hpp"
#include "odefit/smoothing.hpp"

namespace odefit {

// sigma holds per-component standard deviations; the Laplace scale is
// sigma/sqrt(2) so both distributions have variance sigma^2.
struct NoiseSpec {
  enum class Dist { gaussian, laplace };
  Dist dist = Dist::gaussian;
  Eigen::VectorXd sigma;
  std::uint64_t seed = 0;
};

// n equispaced observation times including both endpoints: t_i = i T/(n-1).
struct GridDesign {
  double T = 0.0;
  int n = 0;
};

// I design nodes t_i = i T/I (no node at 0), J replicates at each node.
struct RepeatedDesign {
  double T = 0.0;
  int I = 0;
  int J = 0;
};

Observations simulate(const OdeModel& model, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& xi, const GridDesign& design,
                      const NoiseSpec& noise);
RepeatedObservations simulate(const OdeModel& model,
                              const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& xi,
                              const RepeatedDesign& design,
                              const NoiseSpec& noise);

// {(1/T) integral |a-b|^2 dt}^(1/2) by trapezoid on the shared grid.
double trajectory_l2_distance(const Trajectory& a, const Trajectory& b);
// max over grid points and components of |a - b|.
double trajectory_sup_distance(const Trajectory& a, const Trajectory& b);

// (100/M) sum |estimate - truth| / |truth|.
double are_pct(const std::vector<double>& estimates, double true_value);

enum class PipelineKind { smooth, step };

struct McConfig {
  OdeModel model;
  Eigen::VectorXd nu_true;  // interest parameters; equals theta when h = id
  Eigen::VectorXd xi_true;
  std::variant<GridDesign, RepeatedDesign> design;
  NoiseSpec noise;  // noise.seed is ignored here; `seed` below is the master
  PipelineKind pipeline = PipelineKind::smooth;
  SmootherConfig smoother;  // bandwidth <= 0 selects default_bandwidth(n)
  int refine_factor = 4;
  int replicates = 100;  // M
  int bootstrap = 0;     // B; 0 disables the covariance stage
  int threads = 1;
  std::uint64_t seed = 0;
  // Rate sweeps skip the pullback to nu (they study theta directly).
  bool estimate_nu = true;
};

struct ReplicateRecord {
  int replicate = 0;
  bool ok = false;
  std::string error;
  Eigen::VectorXd xi_hat;
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd nu_hat;
  double traj_l2 = 0.0;
  double traj_sup = 0.0;
  double cond_c = 0.0;
  double criterion = 0.0;
  bool nu_converged = true;
};

struct McSummary {
  std::vector<std::string> param_names;  // xi entries then interest entries
  Eigen::VectorXd true_values;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;   // sample SD, denominator M-1; 0 when M < 2
  Eigen::VectorXd are;  // percent
  double traj_l2_mean = 0.0;
  double traj_l2_sd = 0.0;
  double traj_sup_mean = 0.0;
  double traj_sup_sd = 0.0;
  int completed = 0;
  int failures = 0;
  bool unreliable = false;  // more than 10% of replicates failed
};

struct McResult {
  McSummary summary;
  std::vector<ReplicateRecord> records;
};

// M independent replicates; replicate m draws noise from the stream derived
// as (seed, 0, m) and bootstrap replicate b inside it from ((seed, 1, m), b),
// so results are identical for any thread count.
McResult run_monte_carlo(const McConfig& cfg);

// Names for the summary rows: xi1..xid then the interest parameters
// (alpha/beta/gamma for the spiking-neuron models, theta1..thetap for
// identity links, nu1..nuq otherwise).
std::vector<std::string> parameter_names(const OdeModel& model);

struct RatePoint {
  int n = 0;
  double rmse_theta = 0.0;
  double rmse_xi = 0.0;
};

struct RateResult {
  std::vector<RatePoint> points;
  double slope_theta = 0.0;
  double slope_theta_se = 0.0;
  double slope_xi = 0.0;
  double slope_xi_se = 0.0;
  bool floor_dominated = false;  // flat curve, error floor reached
};

// Pooled relative RMSE of theta_hat and xi_hat along a sample-size ladder,
// with the least-squares slope of log RMSE vs log n. Grid designs use n
// observation points; repeated designs use I = J = ceil(sqrt(n)).
RateResult rate_check(const McConfig& base, const std::vector<int>& ladder,
                      int per_rung_replicates);

}  // namespace odefit
