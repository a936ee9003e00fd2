#include "odefit/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "odefit/kernels.hpp"
#include "odefit/parallel.hpp"
#include "odefit/rng.hpp"

namespace odefit {

namespace {

Eigen::VectorXd trapezoid_masses(const std::vector<double>& grid) {
  const auto m = static_cast<Eigen::Index>(grid.size());
  if (m < 2) {
    throw Error(ErrorKind::validation,
                "density weights need at least 2 grid points");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw Error(ErrorKind::validation,
                  "weight grid must be strictly increasing");
    }
  }
  Eigen::VectorXd w(m);
  w[0] = 0.5 * (grid[1] - grid[0]);
  for (Eigen::Index i = 1; i + 1 < m; ++i) {
    w[i] = 0.5 * (grid[static_cast<std::size_t>(i) + 1] -
                  grid[static_cast<std::size_t>(i) - 1]);
  }
  w[m - 1] = 0.5 * (grid[grid.size() - 1] - grid[grid.size() - 2]);
  return w;
}

}  // namespace

WeightScheme WeightScheme::uniform_lebesgue() {
  WeightScheme w;
  w.kind_ = Kind::uniform_lebesgue;
  return w;
}

WeightScheme WeightScheme::discrete(Eigen::VectorXd node_weights) {
  WeightScheme w;
  w.kind_ = Kind::discrete;
  w.node_weights_ = std::move(node_weights);
  return w;
}

WeightScheme WeightScheme::custom_density(
    std::vector<std::function<double(double)>> densities) {
  WeightScheme w;
  w.kind_ = Kind::custom_density;
  w.densities_ = std::move(densities);
  return w;
}

Eigen::MatrixXd WeightScheme::node_masses(const std::vector<double>& grid,
                                          int d) const {
  const auto m = static_cast<Eigen::Index>(grid.size());
  if (m == 0 || d < 1) {
    throw Error(ErrorKind::validation, "weight grid or dimension is empty");
  }
  Eigen::MatrixXd masses(m, d);
  switch (kind_) {
    case Kind::uniform_lebesgue: {
      Eigen::VectorXd w = trapezoid_masses(grid);
      for (int h = 0; h < d; ++h) masses.col(h) = w;
      break;
    }
    case Kind::discrete: {
      if (node_weights_.size() != m) {
        throw Error(ErrorKind::validation,
                    "discrete weights do not match the grid size");
      }
      for (int h = 0; h < d; ++h) masses.col(h) = node_weights_;
      break;
    }
    case Kind::custom_density: {
      if (static_cast<int>(densities_.size()) != d) {
        throw Error(ErrorKind::validation,
                    "need one density per component");
      }
      Eigen::VectorXd w = trapezoid_masses(grid);
      for (int h = 0; h < d; ++h) {
        for (Eigen::Index i = 0; i < m; ++i) {
          masses(i, h) =
              w[i] * densities_[static_cast<std::size_t>(h)](
                         grid[static_cast<std::size_t>(i)]);
        }
      }
      break;
    }
  }
  if ((masses.array() < 0.0).any()) {
    throw Error(ErrorKind::validation, "weight masses must be nonnegative");
  }
  for (int h = 0; h < d; ++h) {
    if (!(masses.col(h).sum() > 0.0)) {
      throw Error(ErrorKind::validation,
                  "every component needs positive total weight mass");
    }
  }
  return masses;
}

Eigen::MatrixXd inner_product(const WeightScheme& W, const GridFunction& f,
                              const GridFunction& g) {
  if (f.grid.size() != g.grid.size() || f.grid != g.grid) {
    throw Error(ErrorKind::validation,
                "inner product operands must share the grid");
  }
  if (f.values.size() != f.grid.size() || g.values.size() != g.grid.size()) {
    throw Error(ErrorKind::validation,
                "sampled values do not match the grid");
  }
  if (f.grid.empty()) {
    throw Error(ErrorKind::validation, "inner product grid is empty");
  }
  const Eigen::Index d = f.values.front().rows();
  if (g.values.front().rows() != d) {
    throw Error(ErrorKind::validation,
                "inner product operands must share the row dimension");
  }
  const Eigen::Index k = f.values.front().cols();
  const Eigen::Index l = g.values.front().cols();
  Eigen::MatrixXd masses = W.node_masses(f.grid, static_cast<int>(d));

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, l);
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    const Eigen::MatrixXd& fi = f.values[i];
    const Eigen::MatrixXd& gi = g.values[i];
    if (fi.rows() != d || gi.rows() != d || fi.cols() != k || gi.cols() != l) {
      throw Error(ErrorKind::validation,
                  "sampled matrices change shape along the grid");
    }
    for (Eigen::Index h = 0; h < d; ++h) {
      out.noalias() += masses(static_cast<Eigen::Index>(i), h) *
                       (fi.row(h).transpose() * gi.row(h));
    }
  }
  return out;
}

GridFunction compute_G(const OdeModel& model, const Trajectory& xhat,
                       CumulativeRule rule) {
  const auto m = static_cast<Eigen::Index>(xhat.times.size());
  if (m == 0 || xhat.values.rows() != m) {
    throw Error(ErrorKind::validation,
                "trajectory values do not match its grid");
  }
  for (std::size_t i = 1; i < xhat.times.size(); ++i) {
    if (!(xhat.times[i] > xhat.times[i - 1])) {
      throw Error(ErrorKind::validation,
                  "trajectory grid must be strictly increasing");
    }
  }

  GridFunction out;
  out.grid = xhat.times;
  out.values.resize(static_cast<std::size_t>(m));

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gbuf(
      model.d, model.p);
  std::vector<Eigen::MatrixXd> gvals(static_cast<std::size_t>(m));
  Eigen::VectorXd state(model.d);  // rows of values are not contiguous
  for (Eigen::Index i = 0; i < m; ++i) {
    state = xhat.values.row(i).transpose();
    model.g_eval(state.data(), gbuf.data());
    if (!gbuf.allFinite()) {
      std::ostringstream msg;
      msg << "design function is non-finite at t="
          << xhat.times[static_cast<std::size_t>(i)];
      throw Error(ErrorKind::numeric, msg.str());
    }
    gvals[static_cast<std::size_t>(i)] = gbuf;
  }

  // values.row(i) of a row-major Eigen block is not contiguous; copy via
  // the transpose instead.
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(model.d, model.p);
  if (rule == CumulativeRule::trapezoid) {
    out.values[0] = acc;
    for (Eigen::Index i = 1; i < m; ++i) {
      const double dt = xhat.times[static_cast<std::size_t>(i)] -
                        xhat.times[static_cast<std::size_t>(i) - 1];
      acc += 0.5 * dt *
             (gvals[static_cast<std::size_t>(i) - 1] +
              gvals[static_cast<std::size_t>(i)]);
      out.values[static_cast<std::size_t>(i)] = acc;
    }
  } else {
    double prev = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = xhat.times[static_cast<std::size_t>(i)];
      acc += (t - prev) * gvals[static_cast<std::size_t>(i)];
      out.values[static_cast<std::size_t>(i)] = acc;
      prev = t;
    }
  }
  return out;
}

namespace {

// x'(i) = g(x(t_i)) theta sampled row-wise; component h of G collected as
// an m x p matrix so columns are contiguous for the reduction kernels.
struct Assembly {
  Eigen::MatrixXd masses;            // m x d
  std::vector<Eigen::MatrixXd> Gh;   // d entries, each m x p
  Eigen::MatrixXd A;                 // d x d
  Eigen::MatrixXd B;                 // d x p
  Eigen::MatrixXd C;                 // p x p
  Eigen::VectorXd Ix;                // <I, xhat>, d
  Eigen::VectorXd Gx;                // <G, xhat>, p
  Eigen::VectorXd spectrum;          // ascending eigenvalues of C
  Eigen::MatrixXd eigvecs;
  double cond_c = 0.0;
};

Assembly assemble(const OdeModel& model, const Trajectory& xhat,
                  const WeightScheme& W, CumulativeRule rule,
                  bool with_x_products) {
  if (xhat.values.cols() != model.d) {
    throw Error(ErrorKind::validation,
                "trajectory dimension does not match the model");
  }
  GridFunction G = compute_G(model, xhat, rule);
  const auto m = static_cast<Eigen::Index>(G.grid.size());
  const int d = model.d;
  const int p = model.p;

  Assembly a;
  a.masses = W.node_masses(G.grid, d);
  a.Gh.assign(static_cast<std::size_t>(d), Eigen::MatrixXd(m, p));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int h = 0; h < d; ++h) {
      a.Gh[static_cast<std::size_t>(h)].row(i) =
          G.values[static_cast<std::size_t>(i)].row(h);
    }
  }

  const auto n = static_cast<std::size_t>(m);
  a.A = Eigen::MatrixXd::Zero(d, d);
  a.B.resize(d, p);
  a.C = Eigen::MatrixXd::Zero(p, p);
  if (with_x_products) {
    a.Ix.resize(d);
    a.Gx = Eigen::VectorXd::Zero(p);
  }
  for (int h = 0; h < d; ++h) {
    const double* mass = a.masses.col(h).data();
    const Eigen::MatrixXd& Gmat = a.Gh[static_cast<std::size_t>(h)];
    a.A(h, h) = a.masses.col(h).sum();
    for (int j = 0; j < p; ++j) {
      a.B(h, j) = kern::dot(mass, Gmat.col(j).data(), n);
      for (int k = j; k < p; ++k) {
        a.C(j, k) += kern::dot3(mass, Gmat.col(j).data(), Gmat.col(k).data(), n);
      }
    }
    if (with_x_products) {
      const double* xcol = xhat.values.col(h).data();
      a.Ix[h] = kern::dot(mass, xcol, n);
      for (int j = 0; j < p; ++j) {
        a.Gx[j] += kern::dot3(mass, Gmat.col(j).data(), xcol, n);
      }
    }
  }
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < j; ++k) a.C(j, k) = a.C(k, j);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a.C);
  a.spectrum = eig.eigenvalues();
  a.eigvecs = eig.eigenvectors();
  const double lmax = a.spectrum[p - 1];
  a.cond_c = lmax > 0.0 ? std::max(a.spectrum[0], 0.0) / lmax : 0.0;
  return a;
}

NonIdentifiableError non_identifiable_from(const Assembly& a,
                                           const std::string& reason) {
  const auto p = a.spectrum.size();
  const double lmax = std::max(a.spectrum[p - 1], 0.0);
  const double tol = 1e-10 * lmax;
  std::vector<double> spectrum(a.spectrum.data(), a.spectrum.data() + p);
  std::vector<std::vector<double>> null_basis;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (a.spectrum[i] <= tol) {
      null_basis.emplace_back(a.eigvecs.col(i).data(),
                              a.eigvecs.col(i).data() + p);
    }
  }
  std::ostringstream msg;
  msg << reason << " (rcond=" << a.cond_c << ", rank "
      << (p - static_cast<Eigen::Index>(null_basis.size())) << " of " << p
      << ")";
  return NonIdentifiableError(msg.str(), std::move(spectrum),
                              std::move(null_basis));
}

}  // namespace

FitResult fit(const OdeModel& model, const Trajectory& xhat,
              const WeightScheme& W, const FitOptions& opts) {
  Assembly a = assemble(model, xhat, W, opts.rule, true);
  if (a.cond_c < opts.cond_threshold) {
    throw non_identifiable_from(a, "design Gram matrix is singular");
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrC(a.C);
  FitResult r;
  r.cond_c = a.cond_c;

  if (opts.known_xi) {
    if (opts.known_xi->size() != model.d) {
      throw Error(ErrorKind::validation,
                  "known xi dimension does not match the model");
    }
    r.xi_hat = *opts.known_xi;
  } else {
    Eigen::MatrixXd CiBt = qrC.solve(a.B.transpose());  // p x d
    Eigen::MatrixXd S = a.A - a.B * CiBt;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigS(S);
    const double smax = eigS.eigenvalues()[model.d - 1];
    const double scond =
        smax > 0.0 ? std::max(eigS.eigenvalues()[0], 0.0) / smax : 0.0;
    if (scond < 1e-12) {
      throw non_identifiable_from(
          a, "Schur complement of the design is singular");
    }
    Eigen::VectorXd rhs = a.Ix - a.B * qrC.solve(a.Gx);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrS(S);
    r.xi_hat = qrS.solve(rhs);
  }
  r.theta_hat = qrC.solve(a.Gx - a.B.transpose() * r.xi_hat);

  // Criterion value: weighted squared residual of x - xi - G theta.
  double crit = 0.0;
  for (int h = 0; h < model.d; ++h) {
    Eigen::ArrayXd res =
        xhat.values.col(h).array() - r.xi_hat[h] -
        (a.Gh[static_cast<std::size_t>(h)] * r.theta_hat).array();
    crit += (a.masses.col(h).array() * res.square()).sum();
  }
  r.criterion_value = crit;
  return r;
}

IdentifiabilityReport identifiability_report(const OdeModel& model,
                                             const Trajectory& x,
                                             const WeightScheme& W,
                                             CumulativeRule rule) {
  Assembly a = assemble(model, x, W, rule, false);
  IdentifiabilityReport rep;
  rep.cond_c = a.cond_c;
  rep.spectrum = a.spectrum;
  const int p = model.p;
  const double lmax = std::max(a.spectrum[p - 1], 0.0);
  const double tol = 1e-10 * lmax;
  int rank = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (a.spectrum[i] > tol) ++rank;
  }
  rep.rank = rank;
  rep.null_basis = a.eigvecs.leftCols(p - rank);
  return rep;
}

std::vector<double> refine_grid(const std::vector<double>& grid, int factor) {
  if (factor < 1) {
    throw Error(ErrorKind::validation, "refinement factor must be >= 1");
  }
  if (grid.size() < 2 || factor == 1) return grid;
  std::vector<double> out;
  out.reserve((grid.size() - 1) * static_cast<std::size_t>(factor) + 1);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (!(grid[i + 1] > grid[i])) {
      throw Error(ErrorKind::validation,
                  "grid must be strictly increasing to refine");
    }
    const double span = grid[i + 1] - grid[i];
    for (int k = 0; k < factor; ++k) {
      out.push_back(grid[i] + span * (static_cast<double>(k) / factor));
    }
  }
  out.push_back(grid.back());
  return out;
}

Eigen::MatrixXd bootstrap_covariance(const OdeModel& model,
                                     const Observations& obs,
                                     const SmoothPipeline& pipeline, int B,
                                     std::uint64_t seed, int threads) {
  if (B < 2) {
    throw Error(ErrorKind::validation, "bootstrap needs B >= 2");
  }
  const auto n = static_cast<Eigen::Index>(obs.times.size());
  const double T = obs.horizon > 0.0 ? obs.horizon : obs.times.back();
  std::vector<double> eval = refine_grid(obs.times, pipeline.refine_factor);
  LocalPolyPlan plan(obs.times, pipeline.smoother, eval);

  Trajectory base = plan.apply(obs.values, T);
  // The refined grid keeps the original nodes at stride `factor`.
  Eigen::MatrixXd fitted(n, obs.values.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    fitted.row(i) = base.values.row(i * pipeline.refine_factor);
  }
  Eigen::MatrixXd resid = obs.values - fitted;
  resid.rowwise() -= resid.colwise().mean();

  FitOptions fopts;
  fopts.cond_threshold = pipeline.cond_threshold;

  const int p = model.p;
  std::vector<Eigen::VectorXd> thetas(static_cast<std::size_t>(B));
  parallel_for(B, threads, [&](int b) {
    rng::Stream st(seed, {static_cast<std::uint64_t>(b)});
    Eigen::MatrixXd ystar = fitted;
    // Residuals are resampled component by component, times inner.
    for (Eigen::Index h = 0; h < ystar.cols(); ++h) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<Eigen::Index>(
            st.index(static_cast<std::uint64_t>(n)));
        ystar(i, h) += resid(idx, h);
      }
    }
    try {
      Trajectory xstar = plan.apply(ystar, T);
      thetas[static_cast<std::size_t>(b)] =
          fit(model, xstar, pipeline.weights, fopts).theta_hat;
    } catch (const Error& e) {
      throw Error(e.kind(), "bootstrap replicate " + std::to_string(b) +
                                " failed: " + e.what());
    }
  });

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& th : thetas) mean += th;
  mean /= static_cast<double>(B);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
  for (const auto& th : thetas) {
    Eigen::VectorXd c = th - mean;
    sigma.noalias() += c * c.transpose();
  }
  sigma /= static_cast<double>(B);
  return sigma;
}

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start, double diameter_tol,
                          int max_evals) {
  const auto q = start.size();
  if (q < 1) {
    throw Error(ErrorKind::validation, "simplex start point is empty");
  }
  std::vector<Eigen::VectorXd> verts(static_cast<std::size_t>(q) + 1, start);
  for (Eigen::Index i = 0; i < q; ++i) {
    auto& v = verts[static_cast<std::size_t>(i) + 1];
    v[i] = v[i] != 0.0 ? 1.05 * v[i] : 0.00025;
  }
  std::vector<double> fv(verts.size());
  int evals = 0;
  for (std::size_t i = 0; i < verts.size(); ++i) {
    fv[i] = f(verts[i]);
    ++evals;
  }

  std::vector<std::size_t> order(verts.size());
  SimplexResult result;
  for (;;) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return fv[x] < fv[y]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
      diameter = std::max(
          diameter, (verts[i] - verts[best]).cwiseAbs().maxCoeff());
    }
    if (diameter < diameter_tol) {
      result.converged = true;
      break;
    }
    if (evals >= max_evals) {
      result.converged = false;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(q);
    for (std::size_t i = 0; i < order.size() - 1; ++i) {
      centroid += verts[order[i]];
    }
    centroid /= static_cast<double>(q);

    const Eigen::VectorXd dir = centroid - verts[worst];
    Eigen::VectorXd xr = centroid + dir;
    double fr = f(xr);
    ++evals;

    if (fr < fv[best]) {
      Eigen::VectorXd xe = centroid + 2.0 * dir;
      double fe = f(xe);
      ++evals;
      if (fe < fr) {
        verts[worst] = xe;
        fv[worst] = fe;
      } else {
        verts[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      verts[worst] = xr;
      fv[worst] = fr;
    } else {
      bool shrink = false;
      if (fr < fv[worst]) {
        Eigen::VectorXd xc = centroid + 0.5 * dir;
        double fc = f(xc);
        ++evals;
        if (fc <= fr) {
          verts[worst] = xc;
          fv[worst] = fc;
        } else {
          shrink = true;
        }
      } else {
        Eigen::VectorXd xc = centroid - 0.5 * dir;
        double fc = f(xc);
        ++evals;
        if (fc < fv[worst]) {
          verts[worst] = xc;
          fv[worst] = fc;
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (std::size_t i = 0; i < verts.size(); ++i) {
          if (i == best) continue;
          verts[i] = verts[best] + 0.5 * (verts[i] - verts[best]);
          fv[i] = f(verts[i]);
          ++evals;
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < verts.size(); ++i) {
    if (fv[i] < fv[best]) best = i;
  }
  result.x = verts[best];
  result.value = fv[best];
  result.evaluations = evals;
  return result;
}

NuResult invert_to_nu(const OdeModel& model, const Eigen::VectorXd& theta_hat,
                      const Eigen::MatrixXd& sigma_hat,
                      std::optional<Eigen::VectorXd> initial) {
  if (theta_hat.size() != model.p) {
    throw Error(ErrorKind::validation,
                "theta dimension does not match the model");
  }
  if (model.h_is_identity()) {
    return NuResult{theta_hat, 0.0, true};
  }
  const int p = model.p;
  if (sigma_hat.rows() != p || sigma_hat.cols() != p) {
    throw Error(ErrorKind::validation, "sigma must be p x p");
  }
  const double scale = std::max(1.0, sigma_hat.cwiseAbs().maxCoeff());
  if ((sigma_hat - sigma_hat.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * scale) {
    throw Error(ErrorKind::validation, "sigma must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_hat);
  const Eigen::VectorXd& lam = eig.eigenvalues();
  if (lam[0] < -1e-10 * std::max(1.0, lam[p - 1])) {
    throw Error(ErrorKind::validation,
                "sigma must be positive semidefinite");
  }
  const double floor = 1e-10 * sigma_hat.trace() / p;
  if (!(floor > 0.0)) {
    throw Error(ErrorKind::validation,
                "sigma is not invertible after the eigenvalue floor");
  }
  Eigen::VectorXd inv_lam(p);
  for (int i = 0; i < p; ++i) inv_lam[i] = 1.0 / std::max(lam[i], floor);
  Eigen::MatrixXd precision =
      eig.eigenvectors() * inv_lam.asDiagonal() * eig.eigenvectors().transpose();

  Eigen::VectorXd start;
  if (initial) {
    start = *initial;
  } else if (model.h_inverse) {
    start = model.h_inv(theta_hat);
  } else {
    throw Error(ErrorKind::validation,
                "no starting point: model has no inverse link");
  }
  if (start.size() != model.q || !start.allFinite()) {
    throw Error(ErrorKind::validation,
                "starting point must be finite with the model's q entries");
  }

  auto objective = [&](const Eigen::VectorXd& nu) {
    Eigen::VectorXd r = model.h(nu) - theta_hat;
    return r.dot(precision * r);
  };
  SimplexResult sr = nelder_mead(objective, start);
  return NuResult{sr.x, std::sqrt(std::max(sr.value, 0.0)),
                  sr.converged};
}

}  // namespace odefit
