#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "polyfb/basis.hpp"
#include "polyfb/eval_tree.hpp"

namespace polyfb {

/// One nonzero entry of d phi / d y_i = factor * c(node) / l.
struct GradientStencil {
  int coord;
  double factor;
  std::size_t node;
};

/// One nonzero entry (i <= j) of d^2 phi / dy_i dy_j = factor * c(node) / l^2.
struct HessianStencil {
  int row;
  int col;
  double factor;
  std::size_t node;
};

/// A monomial basis X together with the evaluation tree over its downward
/// closure and the derivative lookups of each element. Shared, immutable.
class PolynomialSpace {
 public:
  explicit PolynomialSpace(BasisSet basis);

  const BasisSet& basis() const { return basis_; }
  const EvalTree& tree() const { return tree_; }
  int dim() const { return basis_.dim(); }
  std::size_t size() const { return basis_.size(); }

  std::size_t node_of(std::size_t k) const { return node_[k]; }
  std::span<const GradientStencil> gradient_stencil(std::size_t k) const;
  std::span<const HessianStencil> hessian_stencil(std::size_t k) const;

  /// out(k) += weight * grad(phi_k)(y)^T z for every basis element k.
  void accumulate_gradient_dot(const Eigen::Ref<const Eigen::VectorXd>& y, double scale,
                               const Eigen::Ref<const Eigen::VectorXd>& z, double weight,
                               Eigen::Ref<Eigen::VectorXd> out, std::vector<double>& values,
                               std::vector<double>& scratch) const;

 private:
  BasisSet basis_;
  EvalTree tree_;
  std::vector<std::size_t> node_;
  std::vector<std::size_t> grad_offset_;
  std::vector<GradientStencil> grad_;
  std::vector<std::size_t> hess_offset_;
  std::vector<HessianStencil> hess_;
};

struct ModelValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Reusable buffers for PolynomialModel::evaluate.
struct ModelWorkspace {
  std::vector<double> values;
  std::vector<double> scaled;
};

/// v(y) = sum_k theta_k phi_k(y / l) over a shared PolynomialSpace.
///
/// Construction compiles the support of theta into a sub-tree, so evaluation
/// touches only the monomials that the nonzero coefficients need.
class PolynomialModel {
 public:
  PolynomialModel() = default;
  PolynomialModel(std::shared_ptr<const PolynomialSpace> space, Eigen::VectorXd theta, double scale);

  const std::shared_ptr<const PolynomialSpace>& space() const { return space_; }
  const BasisSet& basis() const { return space_->basis(); }
  const Eigen::VectorXd& theta() const { return theta_; }
  double scale() const { return scale_; }
  int dim() const { return space_->dim(); }
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }
  const std::vector<std::size_t>& support() const { return support_; }
  const EvalTree& support_tree() const { return subtree_; }

  PolynomialModel with_theta(Eigen::VectorXd theta) const {
    return PolynomialModel(space_, std::move(theta), scale_);
  }

  /// Value, gradient and (optionally) Hessian at y.
  void evaluate(const Eigen::Ref<const Eigen::VectorXd>& y, bool with_hessian, ModelValue& out,
                ModelWorkspace& work) const;
  /// Gradient only.
  void gradient(const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> grad,
                ModelWorkspace& work) const;

 private:
  struct Term {
    double theta;
    std::size_t node;
    std::size_t grad_begin, grad_end;
    std::size_t hess_begin, hess_end;
  };

  std::shared_ptr<const PolynomialSpace> space_;
  Eigen::VectorXd theta_;
  double scale_ = 1.0;
  std::vector<std::size_t> support_;
  EvalTree subtree_;
  std::vector<Term> terms_;
  std::vector<GradientStencil> grad_;
  std::vector<HessianStencil> hess_;
};

/// (v, grad v, hess v) at y; the Hessian is left empty unless requested.
ModelValue eval_model(const PolynomialModel& model, const Eigen::Ref<const Eigen::VectorXd>& y,
                      bool with_hessian = true);

/// Builds a model on `space` whose coefficients are copied from `source` for
/// shared multi-indices and zero elsewhere.
PolynomialModel inject_coefficients(const PolynomialModel& source,
                                    std::shared_ptr<const PolynomialSpace> space);

/// Coefficients on `basis` of a polynomial given in physical (unscaled)
/// variables, sum_alpha coef_alpha y^alpha, for monomials normalized by l.
Eigen::VectorXd coefficients_from_physical(
    const BasisSet& basis, const std::vector<std::pair<MultiIndex, double>>& physical, double scale);

}  // namespace polyfb
