#include "polyfb/objective.hpp"

#include <cmath>

#include <Eigen/LU>

#include "polyfb/parallel.hpp"

namespace polyfb {

void TrainingSet::validate(const ControlSystem& sys) const {
  if (initial_conditions.empty()) throw std::invalid_argument("TrainingSet: no initial conditions");
  step_count(horizon, step);
  for (const auto& y0 : initial_conditions) {
    if (y0.size() != sys.dim()) throw std::invalid_argument("TrainingSet: initial condition has wrong dimension");
    if (!(y0.lpNorm<Eigen::Infinity>() <= sys.box())) {
      throw std::invalid_argument("TrainingSet: initial condition outside the closed box");
    }
  }
}

namespace {

TrajectoryCost integrate_cost(const Trajectory& traj, const ControlSystem& sys) {
  TrajectoryCost out;
  if (traj.escaped()) {
    out.escaped = true;
    out.state_cost = std::numeric_limits<double>::infinity();
    out.control_cost = std::numeric_limits<double>::infinity();
    return out;
  }
  const Eigen::VectorXd w = trapezoid_weights(traj.planned_steps, traj.step);
  const double half_beta = 0.5 * sys.beta();
  for (int k = 0; k < traj.samples(); ++k) {
    out.state_cost += w(k) * sys.cost(traj.states.col(k));
    out.control_cost += w(k) * half_beta * traj.controls.col(k).squaredNorm();
  }
  return out;
}

}  // namespace

ObjectiveReport cost(const PolynomialModel& model, const ControlSystem& sys, const TrainingSet& train) {
  train.validate(sys);
  const std::size_t n = train.size();
  ObjectiveReport report;
  report.trajectories.resize(n);
  report.per_trajectory.resize(n);
  parallel_for(n, [&](std::size_t i) {
    report.trajectories[i] = integrate_closed_loop(sys, model, train.initial_conditions[i],
                                                   train.horizon, train.step, train.newton);
    report.per_trajectory[i] = integrate_cost(report.trajectories[i], sys);
  });
  report.feasible = true;
  double total = 0.0;
  for (const auto& c : report.per_trajectory) {
    if (c.escaped) report.feasible = false;
    total += c.state_cost + c.control_cost;
  }
  report.value = report.feasible ? total / static_cast<double>(n)
                                 : std::numeric_limits<double>::infinity();
  return report;
}

Eigen::MatrixXd solve_adjoint(const Trajectory& traj, const PolynomialModel& model,
                              const ControlSystem& sys) {
  if (traj.escaped()) throw GradientUnavailable("solve_adjoint: trajectory escaped");
  const int d = sys.dim();
  const int K = traj.planned_steps;
  const double h = traj.step;
  const Eigen::MatrixXd& G = sys.feedback_matrix();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);

  ModelWorkspace work;
  ModelValue mv;
  Eigen::MatrixXd Df(d, d), M_next(d, d), M_curr(d, d);
  Eigen::VectorXd grad_l(d), c_next(d), c_curr(d);

  // p' = M p + c with M = -Df^T + hess(v) G and c = hess(v) G grad(v) + grad(l).
  auto coefficients = [&](int k, Eigen::MatrixXd& M, Eigen::VectorXd& c) {
    const auto y = traj.states.col(k);
    sys.jacobian(y, Df);
    model.evaluate(y, true, mv, work);
    sys.cost_gradient(y, grad_l);
    M.noalias() = mv.hessian * G;
    M -= Df.transpose();
    c.noalias() = mv.hessian * (G * mv.gradient);
    c += grad_l;
  };

  Eigen::MatrixXd p(d, K + 1);
  p.col(K).setZero();
  coefficients(K, M_next, c_next);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  for (int k = K - 1; k >= 0; --k) {
    coefficients(k, M_curr, c_curr);
    lu.compute(I + 0.5 * h * M_curr);
    const Eigen::VectorXd rhs = p.col(k + 1) - 0.5 * h * (M_next * p.col(k + 1)) - 0.5 * h * (c_curr + c_next);
    p.col(k) = lu.solve(rhs);
    M_next.swap(M_curr);
    c_next.swap(c_curr);
  }
  if (!p.allFinite()) throw GradientUnavailable("solve_adjoint: non-finite costate");
  return p;
}

Eigen::VectorXd gradient_from_report(const PolynomialModel& model, const ControlSystem& sys,
                                     const TrainingSet& train, const ObjectiveReport& report) {
  if (!report.feasible) throw GradientUnavailable("gradient: model is infeasible on the training set");
  const std::size_t n = train.size();
  const Eigen::Index M = static_cast<Eigen::Index>(model.size());
  const PolynomialSpace& space = *model.space();
  const Eigen::MatrixXd& G = sys.feedback_matrix();
  std::vector<Eigen::VectorXd> partial(n);
  parallel_for(n, [&](std::size_t i) {
    const Trajectory& traj = report.trajectories[i];
    const Eigen::MatrixXd p = solve_adjoint(traj, model, sys);
    const Eigen::VectorXd w = trapezoid_weights(traj.planned_steps, traj.step);
    ModelWorkspace work;
    Eigen::VectorXd grad_v(sys.dim());
    Eigen::VectorXd z(sys.dim());
    std::vector<double> values, scratch;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(M);
    for (int k = 0; k < traj.samples(); ++k) {
      const auto y = traj.states.col(k);
      model.gradient(y, grad_v, work);
      z.noalias() = G * (grad_v + p.col(k));
      space.accumulate_gradient_dot(y, model.scale(), z, w(k), acc, values, scratch);
    }
    partial[i] = std::move(acc);
  });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M);
  for (const auto& g : partial) out += g;
  out /= static_cast<double>(n);
  return out;
}

GradientResult gradient(const PolynomialModel& model, const ControlSystem& sys, const TrainingSet& train) {
  GradientResult out;
  out.report = cost(model, sys, train);
  out.gradient = gradient_from_report(model, sys, train, out.report);
  return out;
}

double penalty(const Eigen::Ref<const Eigen::VectorXd>& theta, double gamma, double r) {
  return gamma * (0.5 * (1.0 - r) * theta.squaredNorm() + r * theta.lpNorm<1>());
}

}  // namespace polyfb
