#include "polyfb/model.hpp"

#include <cmath>
#include <stdexcept>

namespace polyfb {

PolynomialSpace::PolynomialSpace(BasisSet basis)
    : basis_(std::move(basis)), tree_(build_eval_tree(downward_closure(basis_))) {
  const std::size_t m = basis_.size();
  node_.resize(m);
  grad_offset_.assign(m + 1, 0);
  hess_offset_.assign(m + 1, 0);
  for (std::size_t k = 0; k < m; ++k) {
    const MultiIndex& alpha = basis_[k];
    node_[k] = tree_.require(alpha);
    grad_offset_[k] = grad_.size();
    hess_offset_[k] = hess_.size();
    for (int i = 0; i < alpha.dim(); ++i) {
      if (alpha[i] == 0) continue;
      const MultiIndex lower = *alpha.decremented(i);
      grad_.push_back({i, static_cast<double>(alpha[i]), tree_.require(lower)});
      if (alpha[i] >= 2) {
        hess_.push_back({i, i, static_cast<double>(alpha[i] * (alpha[i] - 1)),
                         tree_.require(*lower.decremented(i))});
      }
      for (int j = i + 1; j < alpha.dim(); ++j) {
        if (alpha[j] == 0) continue;
        hess_.push_back({i, j, static_cast<double>(alpha[i] * alpha[j]),
                         tree_.require(*lower.decremented(j))});
      }
    }
  }
  grad_offset_[m] = grad_.size();
  hess_offset_[m] = hess_.size();
}

std::span<const GradientStencil> PolynomialSpace::gradient_stencil(std::size_t k) const {
  return {grad_.data() + grad_offset_[k], grad_offset_[k + 1] - grad_offset_[k]};
}

std::span<const HessianStencil> PolynomialSpace::hessian_stencil(std::size_t k) const {
  return {hess_.data() + hess_offset_[k], hess_offset_[k + 1] - hess_offset_[k]};
}

void PolynomialSpace::accumulate_gradient_dot(const Eigen::Ref<const Eigen::VectorXd>& y,
                                              double scale,
                                              const Eigen::Ref<const Eigen::VectorXd>& z,
                                              double weight, Eigen::Ref<Eigen::VectorXd> out,
                                              std::vector<double>& values,
                                              std::vector<double>& scratch) const {
  evaluate_into(tree_, y, scale, values, scratch);
  const double w = weight / scale;
  for (std::size_t k = 0; k < basis_.size(); ++k) {
    double acc = 0.0;
    for (std::size_t e = grad_offset_[k]; e < grad_offset_[k + 1]; ++e) {
      const auto& s = grad_[e];
      acc += s.factor * values[s.node] * z(s.coord);
    }
    out(static_cast<Eigen::Index>(k)) += w * acc;
  }
}

PolynomialModel::PolynomialModel(std::shared_ptr<const PolynomialSpace> space, Eigen::VectorXd theta,
                                 double scale)
    : space_(std::move(space)), theta_(std::move(theta)), scale_(scale) {
  if (!space_) throw std::invalid_argument("PolynomialModel: null polynomial space");
  if (static_cast<std::size_t>(theta_.size()) != space_->size()) {
    throw std::invalid_argument("PolynomialModel: " + std::to_string(theta_.size()) +
                                " coefficients for a basis of " + std::to_string(space_->size()));
  }
  if (!(scale_ > 0.0)) throw std::invalid_argument("PolynomialModel: scale must be positive");
  for (std::size_t k = 0; k < space_->size(); ++k) {
    if (theta_(static_cast<Eigen::Index>(k)) != 0.0) support_.push_back(k);
  }
  std::vector<std::size_t> nodes;
  nodes.reserve(support_.size());
  for (std::size_t k : support_) nodes.push_back(space_->node_of(k));
  subtree_ = support_subtree(space_->tree(), nodes);

  const EvalTree& full = space_->tree();
  terms_.reserve(support_.size());
  for (std::size_t k : support_) {
    Term t{};
    t.theta = theta_(static_cast<Eigen::Index>(k));
    t.node = subtree_.require(full.node(space_->node_of(k)));
    t.grad_begin = grad_.size();
    for (const auto& s : space_->gradient_stencil(k)) {
      grad_.push_back({s.coord, s.factor, subtree_.require(full.node(s.node))});
    }
    t.grad_end = grad_.size();
    t.hess_begin = hess_.size();
    for (const auto& s : space_->hessian_stencil(k)) {
      hess_.push_back({s.row, s.col, s.factor, subtree_.require(full.node(s.node))});
    }
    t.hess_end = hess_.size();
    terms_.push_back(t);
  }
}

void PolynomialModel::evaluate(const Eigen::Ref<const Eigen::VectorXd>& y, bool with_hessian,
                               ModelValue& out, ModelWorkspace& work) const {
  const int d = dim();
  evaluate_into(subtree_, y, scale_, work.values, work.scaled);
  const auto& c = work.values;
  out.value = 0.0;
  out.gradient.setZero(d);
  if (with_hessian) {
    out.hessian.setZero(d, d);
  } else {
    out.hessian.resize(0, 0);
  }
  const double inv_l = 1.0 / scale_;
  const double inv_l2 = inv_l * inv_l;
  for (const Term& t : terms_) {
    out.value += t.theta * c[t.node];
    for (std::size_t e = t.grad_begin; e < t.grad_end; ++e) {
      const auto& s = grad_[e];
      out.gradient(s.coord) += t.theta * s.factor * c[s.node] * inv_l;
    }
    if (!with_hessian) continue;
    for (std::size_t e = t.hess_begin; e < t.hess_end; ++e) {
      const auto& s = hess_[e];
      const double h = t.theta * s.factor * c[s.node] * inv_l2;
      out.hessian(s.row, s.col) += h;
      if (s.row != s.col) out.hessian(s.col, s.row) += h;
    }
  }
}

void PolynomialModel::gradient(const Eigen::Ref<const Eigen::VectorXd>& y,
                               Eigen::Ref<Eigen::VectorXd> grad, ModelWorkspace& work) const {
  evaluate_into(subtree_, y, scale_, work.values, work.scaled);
  const auto& c = work.values;
  grad.setZero();
  const double inv_l = 1.0 / scale_;
  for (const Term& t : terms_) {
    for (std::size_t e = t.grad_begin; e < t.grad_end; ++e) {
      const auto& s = grad_[e];
      grad(s.coord) += t.theta * s.factor * c[s.node] * inv_l;
    }
  }
}

ModelValue eval_model(const PolynomialModel& model, const Eigen::Ref<const Eigen::VectorXd>& y,
                      bool with_hessian) {
  ModelValue out;
  ModelWorkspace work;
  model.evaluate(y, with_hessian, out, work);
  return out;
}

PolynomialModel inject_coefficients(const PolynomialModel& source,
                                    std::shared_ptr<const PolynomialSpace> space) {
  if (space->dim() != source.dim()) {
    throw std::invalid_argument("inject_coefficients: dimension mismatch");
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space->size()));
  const BasisSet& from = source.basis();
  for (std::size_t k = 0; k < from.size(); ++k) {
    if (auto pos = space->basis().find(from[k])) {
      theta(static_cast<Eigen::Index>(*pos)) = source.theta()(static_cast<Eigen::Index>(k));
    }
  }
  return PolynomialModel(std::move(space), std::move(theta), source.scale());
}

Eigen::VectorXd coefficients_from_physical(
    const BasisSet& basis, const std::vector<std::pair<MultiIndex, double>>& physical, double scale) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (const auto& [alpha, coef] : physical) {
    auto pos = basis.find(alpha);
    if (!pos) {
      throw std::invalid_argument("coefficients_from_physical: " + to_string(alpha) +
                                  " is not in the basis");
    }
    theta(static_cast<Eigen::Index>(*pos)) += coef * std::pow(scale, alpha.degree());
  }
  return theta;
}

}  // namespace polyfb
