#include "polyfb/control_system.hpp"

#include <algorithm>
#include <cmath>

namespace polyfb {

ControlSystem::ControlSystem(Definition def) : def_(std::move(def)) {
  if (!def_.dynamics || !def_.jacobian || !def_.cost || !def_.cost_gradient) {
    throw std::invalid_argument("ControlSystem: dynamics, jacobian, cost and cost gradient are required");
  }
  if (def_.control.rows() < 1 || def_.control.cols() < 1) {
    throw std::invalid_argument("ControlSystem: control matrix must be non-empty");
  }
  if (!(def_.beta > 0.0)) throw std::invalid_argument("ControlSystem: beta must be positive");
  if (!(def_.box > 0.0)) throw std::invalid_argument("ControlSystem: box half-width must be positive");
  B_ = def_.control;
  beta_ = def_.beta;
  box_ = def_.box;
  escape_bound_ = def_.escape_bound.value_or(box_);
  if (!(escape_bound_ > 0.0)) throw std::invalid_argument("ControlSystem: escape bound must be positive");
  feedback_ = B_ * B_.transpose() / beta_;

  const int d = dim();
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd f0(d);
  def_.dynamics(origin, f0);
  if (f0.lpNorm<Eigen::Infinity>() != 0.0) {
    throw std::invalid_argument("ControlSystem: f(0) must vanish");
  }
  const double l0 = def_.cost(origin);
  if (l0 != 0.0) throw std::invalid_argument("ControlSystem: running cost must vanish at 0");
}

Eigen::VectorXd ControlSystem::dynamics(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(dim());
  def_.dynamics(y, out);
  return out;
}

Eigen::MatrixXd ControlSystem::jacobian(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd out(dim(), dim());
  def_.jacobian(y, out);
  return out;
}

Eigen::VectorXd ControlSystem::cost_gradient(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(dim());
  def_.cost_gradient(y, out);
  return out;
}

ControlSystem ControlSystem::with_escape_bound(double bound) const {
  Definition def = def_;
  def.escape_bound = bound;
  return ControlSystem(std::move(def));
}

ControlSystem ControlSystem::with_beta(double beta) const {
  Definition def = def_;
  def.beta = beta;
  return ControlSystem(std::move(def));
}

int step_count(double horizon, double step) {
  if (!(horizon > 0.0) || !(step > 0.0)) {
    throw std::invalid_argument("step_count: horizon and step must be positive");
  }
  const double ratio = horizon / step;
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(ratio - k) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument("step " + std::to_string(step) + " does not divide horizon " +
                                std::to_string(horizon));
  }
  return static_cast<int>(k);
}

}  // namespace polyfb
