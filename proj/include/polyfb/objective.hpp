#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "polyfb/control_system.hpp"
#include "polyfb/dynamics.hpp"
#include "polyfb/model.hpp"

namespace polyfb {

/// Initial conditions y_0^1..y_0^I and the grid (T, h) of the training objective.
struct TrainingSet {
  std::vector<Eigen::VectorXd> initial_conditions;
  double horizon = 1.0;
  double step = 0.01;
  NewtonOptions newton;

  std::size_t size() const { return initial_conditions.size(); }
  /// Non-empty, dimensions match, every point inside the closed box.
  void validate(const ControlSystem& sys) const;
};

struct TrajectoryCost {
  double state_cost = 0.0;    // int l(y) dt
  double control_cost = 0.0;  // int (1/2 beta) |B^T grad v(y)|^2 dt
  bool escaped = false;
};

struct ObjectiveReport {
  double value = std::numeric_limits<double>::infinity();
  bool feasible = false;
  std::vector<TrajectoryCost> per_trajectory;
  std::vector<Trajectory> trajectories;
};

/// Raised when the gradient cannot be formed (infeasible iterate or
/// non-finite adjoint); the optimizer treats it as a rejected candidate.
class GradientUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training objective: the mean over initial conditions of the trapezoidal
/// integral of l(y) + (1/2 beta)|B^T grad v(y)|^2 along the Crank-Nicolson
/// closed-loop trajectory. +inf (feasible = false) if any trajectory escapes.
ObjectiveReport cost(const PolynomialModel& model, const ControlSystem& sys, const TrainingSet& train);

/// Costate of one feasible trajectory, d x (K+1), from the backward
/// Crank-Nicolson discretization of
///   -p' - Df(y)^T p + (1/beta) hess v(y) B B^T (grad v(y) + p) = -grad l(y),  p(T) = 0.
Eigen::MatrixXd solve_adjoint(const Trajectory& traj, const PolynomialModel& model,
                              const ControlSystem& sys);

struct GradientResult {
  Eigen::VectorXd gradient;
  ObjectiveReport report;
};

/// d J / d theta_k = (1/(I beta)) sum_i int grad(phi_k)(y_i)^T B B^T (grad v(y_i) + p_i) dt,
/// trapezoid rule on the forward grid. Throws GradientUnavailable when infeasible.
GradientResult gradient(const PolynomialModel& model, const ControlSystem& sys, const TrainingSet& train);
/// Gradient reusing the trajectories of an earlier cost() call at the same model.
Eigen::VectorXd gradient_from_report(const PolynomialModel& model, const ControlSystem& sys,
                                     const TrainingSet& train, const ObjectiveReport& report);

/// gamma ((1 - r)/2 |theta|_2^2 + r |theta|_1).
double penalty(const Eigen::Ref<const Eigen::VectorXd>& theta, double gamma, double r);

}  // namespace polyfb
