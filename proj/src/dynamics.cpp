#include "polyfb/dynamics.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <Eigen/LU>

namespace polyfb {

Eigen::VectorXd closed_loop_rhs(const ControlSystem& sys, const PolynomialModel& model,
                                const Eigen::Ref<const Eigen::VectorXd>& y) {
  Eigen::VectorXd out(sys.dim());
  sys.dynamics(y, out);
  ModelWorkspace work;
  Eigen::VectorXd grad(sys.dim());
  model.gradient(y, grad, work);
  out.noalias() -= sys.feedback_matrix() * grad;
  return out;
}

Trajectory integrate_closed_loop(const ControlSystem& sys, const PolynomialModel& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& y0, double horizon,
                                 double step, const NewtonOptions& opts) {
  const int d = sys.dim();
  if (model.dim() != d || y0.size() != d) {
    throw std::invalid_argument("integrate_closed_loop: dimension mismatch");
  }
  const int K = step_count(horizon, step);
  const Eigen::MatrixXd& G = sys.feedback_matrix();
  const Eigen::MatrixXd Bt_over_beta = sys.control_matrix().transpose() / sys.beta();

  ModelWorkspace work;
  ModelValue mv;
  Eigen::VectorXd grad(d);
  auto rhs = [&](const Eigen::VectorXd& y, Eigen::VectorXd& out) {
    sys.dynamics(y, out);
    model.gradient(y, grad, work);
    out.noalias() -= G * grad;
  };
  Eigen::MatrixXd hess_term(d, d);
  auto jac = [&](const Eigen::VectorXd& y, Eigen::MatrixXd& out) {
    sys.jacobian(y, out);
    model.evaluate(y, true, mv, work);
    hess_term.noalias() = G * mv.hessian;
    out -= hess_term;
  };

  Trajectory traj;
  traj.step = step;
  traj.planned_steps = K;
  traj.states.resize(d, K + 1);
  traj.controls.resize(sys.control_dim(), K + 1);

  Eigen::VectorXd y = y0;
  if (!y.allFinite() || y.lpNorm<Eigen::Infinity>() > sys.escape_bound()) {
    traj.states.resize(d, 0);
    traj.controls.resize(sys.control_dim(), 0);
    traj.escape_index = 0;
    return traj;
  }
  Eigen::VectorXd Fy(d), z(d), Fz(d);
  rhs(y, Fy);
  traj.states.col(0) = y;
  traj.controls.col(0) = -Bt_over_beta * grad;  // grad holds grad v(y0) after rhs()
  CrankNicolsonWorkspace ws;
  for (int k = 0; k < K; ++k) {
    const bool ok = crank_nicolson_step(rhs, jac, y, Fy, step, opts, z, Fz, ws);
    if (!ok || !z.allFinite() || z.lpNorm<Eigen::Infinity>() > sys.escape_bound()) {
      traj.escape_index = k + 1;
      traj.states.conservativeResize(d, k + 1);
      traj.controls.conservativeResize(sys.control_dim(), k + 1);
      return traj;
    }
    y.swap(z);
    Fy.swap(Fz);
    model.gradient(y, grad, work);
    traj.states.col(k + 1) = y;
    traj.controls.col(k + 1) = -Bt_over_beta * grad;
  }
  return traj;
}

Trajectory integrate_linear(const Eigen::Ref<const Eigen::MatrixXd>& A,
                            const Eigen::Ref<const Eigen::VectorXd>& y0, double horizon, double step) {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || y0.size() != d) throw std::invalid_argument("integrate_linear: dimension mismatch");
  const int K = step_count(horizon, step);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd lhs = I - 0.5 * step * A;
  const Eigen::MatrixXd rhs = I + 0.5 * step * A;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  if (!lu.isInvertible()) {
    throw std::invalid_argument("integrate_linear: I - hA/2 is singular for step " + std::to_string(step));
  }
  Trajectory traj;
  traj.step = step;
  traj.planned_steps = K;
  traj.states.resize(d, K + 1);
  traj.states.col(0) = y0;
  for (int k = 0; k < K; ++k) {
    traj.states.col(k + 1) = lu.solve(rhs * traj.states.col(k));
  }
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index d = traj.states.rows();
  const Eigen::Index m = traj.controls.cols() == traj.states.cols() ? traj.controls.rows() : 0;
  os << 't';
  for (Eigen::Index i = 0; i < d; ++i) os << ",y" << (i + 1);
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << (i + 1);
  os << '\n';
  const auto old_precision = os.precision(17);
  for (int k = 0; k < traj.samples(); ++k) {
    os << traj.time(k);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << traj.states(i, k);
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << traj.controls(i, k);
    os << '\n';
  }
  os.precision(old_precision);
}

Eigen::VectorXd trapezoid_weights(int steps, double step) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(steps + 1, step);
  w(0) = 0.5 * step;
  w(steps) = 0.5 * step;
  return w;
}

}  // namespace polyfb
