#include "odefit/ode.hpp"

#include <cmath>
#include <sstream>

namespace odefit {

Eigen::MatrixXd OdeModel::g(const Eigen::VectorXd& x) const {
  if (x.size() != d) {
    throw Error(ErrorKind::validation,
                "state dimension " + std::to_string(x.size()) +
                    " does not match model d=" + std::to_string(d));
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      d, p);
  g_eval(x.data(), out.data());
  return out;
}

Eigen::VectorXd OdeModel::h(const Eigen::VectorXd& nu) const {
  if (h_is_identity()) return nu;
  if (nu.size() != q) {
    throw Error(ErrorKind::validation,
                "nu dimension " + std::to_string(nu.size()) +
                    " does not match model q=" + std::to_string(q));
  }
  Eigen::VectorXd theta(p);
  h_eval(nu.data(), theta.data());
  return theta;
}

Eigen::VectorXd OdeModel::h_inv(const Eigen::VectorXd& theta) const {
  if (h_is_identity()) return theta;
  if (!h_inverse) {
    throw Error(ErrorKind::validation,
                "model '" + name + "' has no inverse link");
  }
  Eigen::VectorXd nu(q);
  h_inverse(theta.data(), nu.data());
  return nu;
}

Eigen::VectorXd eval_rhs(const OdeModel& model, const Eigen::VectorXd& state,
                         const Eigen::VectorXd& theta) {
  if (theta.size() != model.p) {
    throw Error(ErrorKind::validation,
                "theta dimension " + std::to_string(theta.size()) +
                    " does not match model p=" + std::to_string(model.p));
  }
  return model.g(state) * theta;
}

Trajectory solve_ode(const OdeModel& model, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& xi, const std::vector<double>& grid,
                     int min_substeps) {
  if (grid.empty() || grid.front() != 0.0) {
    throw Error(ErrorKind::validation, "solver grid must start at 0");
  }
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) {
      throw Error(ErrorKind::validation,
                  "solver grid must be strictly increasing");
    }
  }
  if (xi.size() != model.d) {
    throw Error(ErrorKind::validation, "xi dimension does not match model d");
  }
  if (theta.size() != model.p) {
    throw Error(ErrorKind::validation,
                "theta dimension does not match model p");
  }
  if (min_substeps < 1) min_substeps = 1;

  Trajectory out;
  out.times = grid;
  out.horizon = grid.back();
  out.values.resize(static_cast<Eigen::Index>(grid.size()), model.d);

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gbuf(
      model.d, model.p);
  Eigen::VectorXd x = xi;
  Eigen::VectorXd k1(model.d), k2(model.d), k3(model.d), k4(model.d),
      tmp(model.d);

  auto deriv = [&](const Eigen::VectorXd& s, Eigen::VectorXd& dx) {
    model.g_eval(s.data(), gbuf.data());
    dx.noalias() = gbuf * theta;
  };

  out.values.row(0) = x.transpose();
  for (std::size_t k = 1; k < grid.size(); ++k) {
    double span = grid[k] - grid[k - 1];
    int steps = min_substeps;
    double hstep = span / steps;
    for (int s = 0; s < steps; ++s) {
      deriv(x, k1);
      tmp = x + 0.5 * hstep * k1;
      deriv(tmp, k2);
      tmp = x + 0.5 * hstep * k2;
      deriv(tmp, k3);
      tmp = x + hstep * k3;
      deriv(tmp, k4);
      x += (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "solver diverged: non-finite state at t=" << grid[k];
      throw Error(ErrorKind::numeric, msg.str());
    }
    out.values.row(k) = x.transpose();
  }
  return out;
}

OdeModel builtin_fitzhugh_nagumo() {
  OdeModel m;
  m.d = 2;
  m.p = 4;
  m.q = 3;
  m.name = "fhn";
  // x1' = theta1 (x1 - x1^3 + x2); x2' = -theta2 x1 + theta3 - theta4 x2
  m.g_eval = [](const double* x, double* g) {
    g[0] = x[0] - x[0] * x[0] * x[0] + x[1];
    g[1] = 0.0;
    g[2] = 0.0;
    g[3] = 0.0;
    g[4] = 0.0;
    g[5] = -x[0];
    g[6] = 1.0;
    g[7] = -x[1];
  };
  // nu = (alpha, beta, gamma); theta = (gamma, 1/gamma, alpha/gamma, beta/gamma)
  m.h_eval = [](const double* nu, double* th) {
    th[0] = nu[2];
    th[1] = 1.0 / nu[2];
    th[2] = nu[0] / nu[2];
    th[3] = nu[1] / nu[2];
  };
  m.h_inverse = [](const double* th, double* nu) {
    nu[0] = th[0] * th[2];
    nu[1] = th[0] * th[3];
    nu[2] = th[0];
  };
  return m;
}

OdeModel builtin_fitzhugh_nagumo_ramsay() {
  OdeModel m;
  m.d = 2;
  m.p = 4;
  m.q = 3;
  m.name = "fhn_ramsay";
  // x1' = theta1 (x1 - x1^3/3 + x2); x2' = -theta2 x1 + theta3 - theta4 x2
  m.g_eval = [](const double* x, double* g) {
    g[0] = x[0] - x[0] * x[0] * x[0] / 3.0 + x[1];
    g[1] = 0.0;
    g[2] = 0.0;
    g[3] = 0.0;
    g[4] = 0.0;
    g[5] = -x[0];
    g[6] = 1.0;
    g[7] = -x[1];
  };
  // nu = (a, b, c); theta = (c, 1/c, a/c, b/c)
  m.h_eval = [](const double* nu, double* th) {
    th[0] = nu[2];
    th[1] = 1.0 / nu[2];
    th[2] = nu[0] / nu[2];
    th[3] = nu[1] / nu[2];
  };
  m.h_inverse = [](const double* th, double* nu) {
    nu[0] = th[0] * th[2];
    nu[1] = th[0] * th[3];
    nu[2] = th[0];
  };
  return m;
}

OdeModel builtin_lotka_volterra() {
  OdeModel m;
  m.d = 2;
  m.p = 4;
  m.q = 4;
  m.name = "lv";
  // x1' = theta1 x1 - theta2 x1 x2; x2' = -theta3 x2 + theta4 x1 x2
  m.g_eval = [](const double* x, double* g) {
    g[0] = x[0];
    g[1] = -x[0] * x[1];
    g[2] = 0.0;
    g[3] = 0.0;
    g[4] = 0.0;
    g[5] = 0.0;
    g[6] = -x[1];
    g[7] = x[0] * x[1];
  };
  return m;
}

std::vector<double> uniform_grid(double T, int n) {
  if (n < 2 || !(T > 0)) {
    throw Error(ErrorKind::validation, "uniform grid needs n >= 2 and T > 0");
  }
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = T * static_cast<double>(i) / (n - 1);
  return g;
}

}  // namespace odefit
