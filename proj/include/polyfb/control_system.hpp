#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace polyfb {

/// y' = f(y) + B u with running cost l(y) + (beta/2)|u|^2 on the box (-l, l)^d.
///
/// `box` is the half-width l of the computational domain (also the monomial
/// normalization); a trajectory counts as escaped once |y|_inf exceeds
/// `escape_bound`, which defaults to `box`.
class ControlSystem {
 public:
  using VectorField = std::function<void(const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Ref<Eigen::VectorXd>)>;
  using MatrixField = std::function<void(const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Ref<Eigen::MatrixXd>)>;
  using ScalarField = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

  struct Definition {
    VectorField dynamics;         // f
    MatrixField jacobian;         // Df
    ScalarField cost;             // l, non-negative, l(0) = 0
    VectorField cost_gradient;    // grad l
    Eigen::MatrixXd control;      // B, d x m
    double beta = 1.0;
    double box = 1.0;
    std::optional<double> escape_bound;
  };

  ControlSystem() = default;
  /// Validates f(0) = 0, l(0) = 0, beta > 0 and the shapes by direct evaluation.
  explicit ControlSystem(Definition def);

  int dim() const { return static_cast<int>(B_.rows()); }
  int control_dim() const { return static_cast<int>(B_.cols()); }
  const Eigen::MatrixXd& control_matrix() const { return B_; }
  /// (1/beta) B B^T.
  const Eigen::MatrixXd& feedback_matrix() const { return feedback_; }
  double beta() const { return beta_; }
  double box() const { return box_; }
  double escape_bound() const { return escape_bound_; }

  void dynamics(const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) const {
    def_.dynamics(y, out);
  }
  void jacobian(const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::MatrixXd> out) const {
    def_.jacobian(y, out);
  }
  double cost(const Eigen::Ref<const Eigen::VectorXd>& y) const { return def_.cost(y); }
  void cost_gradient(const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) const {
    def_.cost_gradient(y, out);
  }

  Eigen::VectorXd dynamics(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& y) const;
  Eigen::VectorXd cost_gradient(const Eigen::VectorXd& y) const;

  /// Same system with a different escape bound.
  ControlSystem with_escape_bound(double bound) const;
  /// Same system with a different control weight.
  ControlSystem with_beta(double beta) const;

 private:
  Definition def_;
  Eigen::MatrixXd B_;
  Eigen::MatrixXd feedback_;
  double beta_ = 1.0;
  double box_ = 1.0;
  double escape_bound_ = 1.0;
};

/// Number of steps K with K h = T; throws if h does not divide T.
int step_count(double horizon, double step);

}  // namespace polyfb
