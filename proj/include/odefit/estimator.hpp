#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "odefit/error.hpp"
#include "odefit/ode.hpp"
#include "odefit/smoothing.hpp"

namespace odefit {

// Diagonal weight measure on [0, T]. A scheme resolves to one quadrature
// mass per (grid point, component); inner products are then plain weighted
// sums. Densities and node weights must be nonnegative with positive total
// mass per component.
class WeightScheme {
 public:
  enum class Kind { uniform_lebesgue, discrete, custom_density };

  static WeightScheme uniform_lebesgue();
  // One nonnegative weight per grid point, shared by all components.
  static WeightScheme discrete(Eigen::VectorXd node_weights);
  // One density per component, integrated by composite trapezoid.
  static WeightScheme custom_density(
      std::vector<std::function<double(double)>> densities);

  Kind kind() const { return kind_; }

  // Resolves to an (grid size) x d matrix of node masses.
  Eigen::MatrixXd node_masses(const std::vector<double>& grid, int d) const;

 private:
  WeightScheme() = default;
  Kind kind_ = Kind::uniform_lebesgue;
  Eigen::VectorXd node_weights_;
  std::vector<std::function<double(double)>> densities_;
};

// Matrix-valued function sampled on a grid: values[i] is the d x k matrix
// at grid[i].
struct GridFunction {
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> values;
};

// <f, g>_W = sum_h integral f_{h,:}(t)^T g_{h,:}(t) dW_hh(t), a k x l
// matrix. f and g must share the grid and the row dimension d.
Eigen::MatrixXd inner_product(const WeightScheme& W, const GridFunction& f,
                              const GridFunction& g);

// Integration rule for the cumulative design integral.
enum class CumulativeRule {
  trapezoid,   // cumulative composite trapezoid; value 0 at the first node
  step_right,  // exact integral from absolute 0 of the step extension:
               // value(t_i) = sum_{k<=i} g(x(t_k)) (t_k - t_{k-1}), t_0 = 0
};

// Cumulative integral of g(x(s)) along the trajectory; one d x p matrix
// per grid point.
GridFunction compute_G(const OdeModel& model, const Trajectory& xhat,
                       CumulativeRule rule = CumulativeRule::trapezoid);

struct DesignMatrices {
  Eigen::MatrixXd A;  // d x d, <I, I>_W (diagonal total masses)
  Eigen::MatrixXd B;  // d x p, <I, G>_W
  Eigen::MatrixXd C;  // p x p, <G, G>_W
  double cond_c = 0.0;
  std::vector<double> grid;
};

struct FitResult {
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd xi_hat;
  std::optional<Eigen::VectorXd> nu_hat;
  std::optional<Eigen::MatrixXd> sigma_hat;
  double cond_c = 0.0;
  double criterion_value = 0.0;  // weighted squared residual at the optimum
  bool nu_converged = true;
  double nu_distance = 0.0;
};

struct FitOptions {
  CumulativeRule rule = CumulativeRule::trapezoid;
  std::optional<Eigen::VectorXd> known_xi;
  double cond_threshold = 1e-10;
};

// Closed-form least squares estimator on the integrated design. Throws
// NonIdentifiableError when C (or the Schur complement in xi) is
// numerically singular.
FitResult fit(const OdeModel& model, const Trajectory& xhat,
              const WeightScheme& W, const FitOptions& opts = {});

struct IdentifiabilityReport {
  double cond_c = 0.0;
  int rank = 0;
  Eigen::VectorXd spectrum;     // ascending eigenvalues of C
  Eigen::MatrixXd null_basis;   // p x (p - rank), orthonormal; 0 cols if full
};

// Diagnostic counterpart of fit's error path; never throws on rank
// deficiency.
IdentifiabilityReport identifiability_report(
    const OdeModel& model, const Trajectory& x, const WeightScheme& W,
    CumulativeRule rule = CumulativeRule::trapezoid);

// Smoother + fit stages shared by a fit and its bootstrap replays.
struct SmoothPipeline {
  SmootherConfig smoother;
  int refine_factor = 4;  // evaluation grid = observation grid refined 4x
  WeightScheme weights = WeightScheme::uniform_lebesgue();
  double cond_threshold = 1e-10;
};

// Uniform subdivision of each grid interval into `factor` pieces.
std::vector<double> refine_grid(const std::vector<double>& grid, int factor);

// Residual bootstrap covariance of theta_hat: resamples centered smoothing
// residuals per component, replays the pipeline B times, and averages the
// centered outer products with denominator B. Replicate b draws from the
// stream derived as (seed, b), so results do not depend on scheduling.
Eigen::MatrixXd bootstrap_covariance(const OdeModel& model,
                                     const Observations& obs,
                                     const SmoothPipeline& pipeline, int B,
                                     std::uint64_t seed, int threads = 1);

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = true;
  int evaluations = 0;
};

// Derivative-free simplex minimizer (reflection 1, expansion 2,
// contraction 0.5, shrink 0.5). Stops when the simplex diameter drops
// below diameter_tol or after max_evals evaluations.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start,
                          double diameter_tol = 1e-8, int max_evals = 10000);

struct NuResult {
  Eigen::VectorXd nu;
  double distance = 0.0;
  bool converged = true;
};

// Pulls theta_hat back through the link h by minimizing the Mahalanobis
// distance weighted by sigma_hat (eigenvalues floored at
// 1e-10 trace/p before inversion). Identity links short-circuit. The
// starting point defaults to the model's inverse link at theta_hat.
NuResult invert_to_nu(const OdeModel& model, const Eigen::VectorXd& theta_hat,
                      const Eigen::MatrixXd& sigma_hat,
                      std::optional<Eigen::VectorXd> initial = std::nullopt);

}  // namespace odefit
