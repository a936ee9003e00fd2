#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "odefit/error.hpp"

namespace odefit {

// A system x'(t) = g(x(t)) * theta with theta = h(nu). g maps a state to a
// d x p matrix; when h_eval is empty the natural parameters are the
// parameters of interest (q == p, h = identity).
struct OdeModel {
  int d = 0;  // state dimension
  int p = 0;  // natural-parameter dimension
  int q = 0;  // interest-parameter dimension
  std::string name;
  // Writes the d x p matrix row-major into g_out.
  std::function<void(const double* x, double* g_out)> g_eval;
  std::function<void(const double* nu, double* theta_out)> h_eval;
  // One-sided inverse used to seed optimization; exact where consistent.
  std::function<void(const double* theta, double* nu_out)> h_inverse;

  bool h_is_identity() const { return !h_eval; }

  Eigen::MatrixXd g(const Eigen::VectorXd& x) const;
  Eigen::VectorXd h(const Eigen::VectorXd& nu) const;
  Eigen::VectorXd h_inv(const Eigen::VectorXd& theta) const;
};

struct Trajectory {
  std::vector<double> times;   // strictly increasing, within [0, T]
  Eigen::MatrixXd values;      // times.size() x d
  double horizon = 0.0;        // T
};

Eigen::VectorXd eval_rhs(const OdeModel& model, const Eigen::VectorXd& state,
                         const Eigen::VectorXd& theta);

// Classical fixed-step RK4. Each grid interval is integrated with equal
// substeps no longer than (interval / min_substeps); the returned values sit
// exactly on `grid`. The grid must start at 0.
Trajectory solve_ode(const OdeModel& model, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& xi, const std::vector<double>& grid,
                     int min_substeps = 8);

OdeModel builtin_fitzhugh_nagumo();
OdeModel builtin_fitzhugh_nagumo_ramsay();
OdeModel builtin_lotka_volterra();

// Uniform grid {0, T/(n-1), ..., T} used by designs and trajectory metrics.
std::vector<double> uniform_grid(double T, int n);

}  // namespace odefit
