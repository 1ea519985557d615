#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>
#include <Eigen/LU>

namespace polyfb {

/// Implicit-step controls. The step residual must fall below `tolerance`
/// (sup norm); Newton keeps iterating toward round-off so that the discrete
/// flow is a smooth function of its parameters.
struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 25;
  int fixed_point_sweeps = 5;
};

struct CrankNicolsonWorkspace {
  Eigen::VectorXd residual;
  Eigen::VectorXd trial;
  Eigen::VectorXd trial_rhs;
  Eigen::VectorXd delta;
  Eigen::MatrixXd jacobian;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
};

/// Solves z = y + (h/2) (F(y) + F(z)) by damped Newton, starting from an
/// explicit Euler predictor. `rhs(x, out)` evaluates F, `jac(x, out)` its
/// Jacobian. On success z and Fz = F(z) hold the new state.
template <typename Rhs, typename Jac>
bool crank_nicolson_step(const Rhs& rhs, const Jac& jac, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& Fy, double h, const NewtonOptions& opts,
                         Eigen::VectorXd& z, Eigen::VectorXd& Fz, CrankNicolsonWorkspace& ws) {
  const Eigen::Index d = y.size();
  const double half_h = 0.5 * h;
  z = y + h * Fy;
  Fz.resize(d);
  rhs(z, Fz);
  ws.residual = z - y - half_h * (Fy + Fz);
  double rnorm = ws.residual.template lpNorm<Eigen::Infinity>();
  if (!std::isfinite(rnorm)) {
    // The predictor overshot; restart from the previous state.
    z = y;
    rhs(z, Fz);
    ws.residual = z - y - half_h * (Fy + Fz);
    rnorm = ws.residual.template lpNorm<Eigen::Infinity>();
    if (!std::isfinite(rnorm)) return false;
  }
  const double eps = std::numeric_limits<double>::epsilon();
  auto roundoff = [&]() {
    return 16.0 * eps *
           (1.0 + z.template lpNorm<Eigen::Infinity>() + y.template lpNorm<Eigen::Infinity>() +
            half_h * (Fy.template lpNorm<Eigen::Infinity>() + Fz.template lpNorm<Eigen::Infinity>()));
  };

  ws.jacobian.resize(d, d);
  for (int it = 0; it < opts.max_iterations && rnorm > roundoff(); ++it) {
    jac(z, ws.jacobian);
    ws.jacobian *= -half_h;
    ws.jacobian.diagonal().array() += 1.0;
    ws.lu.compute(ws.jacobian);
    ws.delta = ws.lu.solve(ws.residual);
    if (!ws.delta.allFinite()) break;
    double lambda = 1.0;
    bool improved = false;
    for (int k = 0; k < 12; ++k) {
      ws.trial = z - lambda * ws.delta;
      ws.trial_rhs.resize(d);
      rhs(ws.trial, ws.trial_rhs);
      const double tnorm =
          (ws.trial - y - half_h * (Fy + ws.trial_rhs)).template lpNorm<Eigen::Infinity>();
      if (std::isfinite(tnorm) && tnorm < rnorm) {
        z.swap(ws.trial);
        Fz.swap(ws.trial_rhs);
        ws.residual = z - y - half_h * (Fy + Fz);
        rnorm = ws.residual.template lpNorm<Eigen::Infinity>();
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  if (rnorm <= opts.tolerance) return true;

  for (int sweep = 0; sweep < opts.fixed_point_sweeps; ++sweep) {
    z = y + half_h * (Fy + Fz);
    rhs(z, Fz);
    ws.residual = z - y - half_h * (Fy + Fz);
    rnorm = ws.residual.template lpNorm<Eigen::Infinity>();
    if (!std::isfinite(rnorm)) return false;
    if (rnorm <= opts.tolerance) return true;
  }
  return false;
}

}  // namespace polyfb
