#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "polyfb/basis.hpp"

namespace polyfb {

/// Raised when a multi-index cannot be reached from the origin by unit steps
/// inside the set, or when a derivative lookup alpha - e_i is missing.
class ConnectivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rooted spanning tree over a multi-index set.
///
/// Every non-root node alpha has exactly one parent alpha~ with
/// alpha = alpha~ + e_j, so phi_alpha(y) = y_j * phi_alpha~(y) costs one
/// multiplication once the parent is known. The tree is the breadth-first
/// search tree from the origin, visiting children in coordinate order.
class EvalTree {
 public:
  static constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

  EvalTree() = default;

  int dim() const { return dim_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t root() const { return root_; }

  const MultiIndex& node(std::size_t pos) const { return nodes_[pos]; }
  const std::vector<MultiIndex>& nodes() const { return nodes_; }
  std::size_t parent(std::size_t pos) const { return parent_[pos]; }
  /// Coordinate j of the edge parent -> node (-1 for the root).
  int edge_coordinate(std::size_t pos) const { return coord_[pos]; }
  /// BFS visitation sequence, root first; parents precede their children.
  const std::vector<std::size_t>& order() const { return order_; }

  std::optional<std::size_t> locate(const MultiIndex& alpha) const;
  /// Like locate(), but throws ConnectivityError naming the index.
  std::size_t require(const MultiIndex& alpha) const;

  /// Multiplications performed by evaluate_all: one per non-root node.
  std::size_t multiplication_count() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }

 private:
  friend EvalTree build_eval_tree(const BasisSet& set);
  friend EvalTree support_subtree(const EvalTree& tree, std::span<const std::size_t> support);

  int dim_ = 0;
  std::size_t root_ = 0;
  std::vector<MultiIndex> nodes_;
  std::vector<std::size_t> parent_;
  std::vector<int> coord_;
  std::vector<std::size_t> order_;
  std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> locator_;
};

/// BFS spanning tree over set ∪ {0}; throws ConnectivityError if some index
/// is unreachable.
EvalTree build_eval_tree(const BasisSet& set);

/// Minimal sub-tree holding the root, the given nodes, their ancestors, and
/// every alpha - e_i and alpha - e_i - e_j that their first and second
/// derivatives look up. Parent edges are inherited from `tree`.
EvalTree support_subtree(const EvalTree& tree, std::span<const std::size_t> support);

/// Monomial values c(alpha) = prod_j (y_j / l)^alpha_j at every node of a tree.
template <typename Scalar>
struct EvalResult {
  const EvalTree* tree = nullptr;
  std::vector<Scalar> values;  // indexed by node position
  std::vector<Scalar> point;
  Scalar scale{1};

  const Scalar& value(const MultiIndex& alpha) const { return values[tree->require(alpha)]; }
};

/// Fills `values` (resized to tree.size()) with the scaled monomials at y.
template <typename Scalar, typename Derived>
void evaluate_into(const EvalTree& tree, const Eigen::MatrixBase<Derived>& y, const Scalar& scale,
                   std::vector<Scalar>& values, std::vector<Scalar>& scaled_point) {
  const int d = tree.dim();
  scaled_point.resize(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) scaled_point[static_cast<std::size_t>(j)] = Scalar(y(j)) / scale;
  values.resize(tree.size());
  const auto& order = tree.order();
  if (order.empty()) return;
  values[order.front()] = Scalar(1);
  for (std::size_t k = 1; k < order.size(); ++k) {
    const std::size_t pos = order[k];
    values[pos] = scaled_point[static_cast<std::size_t>(tree.edge_coordinate(pos))] *
                  values[tree.parent(pos)];
  }
}

template <typename Scalar, typename Derived>
EvalResult<Scalar> evaluate_all(const EvalTree& tree, const Eigen::MatrixBase<Derived>& y,
                                const Scalar& scale) {
  if (y.size() != tree.dim()) {
    throw std::invalid_argument("evaluate_all: point has dimension " + std::to_string(y.size()) +
                                ", tree has " + std::to_string(tree.dim()));
  }
  EvalResult<Scalar> result;
  result.tree = &tree;
  result.scale = scale;
  std::vector<Scalar> scaled;
  evaluate_into(tree, y, scale, result.values, scaled);
  result.point.resize(static_cast<std::size_t>(y.size()));
  for (Eigen::Index j = 0; j < y.size(); ++j) result.point[static_cast<std::size_t>(j)] = Scalar(y(j));
  return result;
}

/// Gradient of phi_alpha(y/l) with respect to y.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gradient_of(const MultiIndex& alpha,
                                                     const EvalResult<Scalar>& result) {
  const int d = alpha.dim();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(d);
  for (int i = 0; i < d; ++i) {
    if (alpha[i] == 0) continue;
    const Scalar c = result.value(*alpha.decremented(i));
    g(i) = Scalar(alpha[i]) * c / result.scale;
  }
  return g;
}

/// Hessian of phi_alpha(y/l) with respect to y.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hessian_of(const MultiIndex& alpha,
                                                                 const EvalResult<Scalar>& result) {
  const int d = alpha.dim();
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat H = Mat::Zero(d, d);
  const Scalar l2 = result.scale * result.scale;
  for (int i = 0; i < d; ++i) {
    if (alpha[i] == 0) continue;
    const MultiIndex lower = *alpha.decremented(i);
    if (alpha[i] >= 2) {
      H(i, i) = Scalar(alpha[i] * (alpha[i] - 1)) * result.value(*lower.decremented(i)) / l2;
    }
    for (int j = i + 1; j < d; ++j) {
      if (alpha[j] == 0) continue;
      const Scalar h = Scalar(alpha[i] * alpha[j]) * result.value(*lower.decremented(j)) / l2;
      H(i, j) = h;
      H(j, i) = h;
    }
  }
  return H;
}

}  // namespace polyfb
