#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace polyfb {

/// Exponent tuple alpha in N^d of the monomial prod_j y_j^{alpha_j}.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> exponents);

  static MultiIndex zero(int dim);
  static MultiIndex unit(int dim, int j);

  int dim() const { return static_cast<int>(exponents_.size()); }
  int operator[](int i) const { return exponents_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& exponents() const { return exponents_; }

  int degree() const;
  /// Coordinates with a positive exponent, ascending.
  std::vector<int> support() const;
  bool is_zero() const { return degree() == 0; }

  MultiIndex incremented(int j) const;
  /// alpha - e_j, or nothing when alpha_j == 0.
  std::optional<MultiIndex> decremented(int j) const;

  /// Componentwise alpha <= other.
  bool divides(const MultiIndex& other) const;

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  friend std::strong_ordering operator<=>(const MultiIndex& a, const MultiIndex& b) {
    return a.exponents_ <=> b.exponents_;
  }

 private:
  std::vector<int> exponents_;
};

/// Graded lexicographic order: total degree first, then ascending lexicographic.
bool graded_lex_less(const MultiIndex& a, const MultiIndex& b);

std::ostream& operator<<(std::ostream& os, const MultiIndex& alpha);
std::string to_string(const MultiIndex& alpha);

struct MultiIndexHash {
  std::size_t operator()(const MultiIndex& alpha) const noexcept;
};

enum class BasisKind { kTotalDegree, kHyperbolicCross, kCustom };

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

/// Thrown when a requested index set cannot be represented.
class BasisSizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// An ordered, duplicate-free set of multi-indices of a common dimension.
///
/// Indices are kept in graded lexicographic order, so every degree prefix of
/// a total-degree set is the total-degree set of that lower degree.
class BasisSet {
 public:
  BasisSet() = default;
  /// Sorts and deduplicates `indices`; throws on dimension mismatch.
  BasisSet(int dim, std::vector<MultiIndex> indices,
           BasisKind kind = BasisKind::kCustom, int degree = -1);

  int dim() const { return dim_; }
  BasisKind kind() const { return kind_; }
  /// Generating degree n for total-degree/hyperbolic-cross sets, else the max degree.
  int degree() const { return degree_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }

  const MultiIndex& operator[](std::size_t k) const { return indices_[k]; }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  std::optional<std::size_t> find(const MultiIndex& alpha) const;
  bool contains(const MultiIndex& alpha) const { return find(alpha).has_value(); }

  /// Same indices, relabelled as a custom set.
  BasisSet as_custom() const;

  friend bool operator==(const BasisSet& a, const BasisSet& b) {
    return a.dim_ == b.dim_ && a.indices_ == b.indices_;
  }

 private:
  int dim_ = 0;
  BasisKind kind_ = BasisKind::kCustom;
  int degree_ = 0;
  std::vector<MultiIndex> indices_;
  std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> position_;
};

/// binomial(n + d, d), throwing BasisSizeError if it does not fit in size_t.
std::size_t total_degree_cardinality(int dim, int degree);

/// All alpha with |alpha| <= n.
BasisSet total_degree_indices(int dim, int degree);

/// All alpha with prod_j (alpha_j + 1) <= n + 1, generated depth first.
BasisSet hyperbolic_cross_indices(int dim, int degree);

/// Drops every index of total degree <= 1 (so v(0) = 0 and grad v(0) = 0).
BasisSet strip_low_order(const BasisSet& set);

/// Smallest downward-closed set containing `set` (always includes the origin).
BasisSet downward_closure(const BasisSet& set);

/// True iff B^T grad(phi_alpha) vanishes identically, i.e. every row of B
/// indexed by a coordinate in the support of alpha is zero.
template <typename Derived>
bool is_b_orthogonal(const MultiIndex& alpha, const Eigen::MatrixBase<Derived>& B) {
  if (B.rows() != alpha.dim()) {
    throw std::invalid_argument("is_b_orthogonal: B has " + std::to_string(B.rows()) +
                                " rows but the multi-index has dimension " +
                                std::to_string(alpha.dim()));
  }
  for (int i = 0; i < alpha.dim(); ++i) {
    if (alpha[i] > 0 && (B.row(i).array() != 0).any()) return false;
  }
  return true;
}

/// X minus its B-orthogonal elements; order preserved, result is a custom set.
template <typename Derived>
BasisSet reduce_basis(const BasisSet& set, const Eigen::MatrixBase<Derived>& B) {
  std::vector<MultiIndex> kept;
  kept.reserve(set.size());
  for (const auto& alpha : set) {
    if (!is_b_orthogonal(alpha, B)) kept.push_back(alpha);
  }
  return BasisSet(set.dim(), std::move(kept), BasisKind::kCustom, set.degree());
}

/// Plain-text listing: header "d n kind", then one index per line.
void write_basis(std::ostream& os, const BasisSet& set);
BasisSet read_basis(std::istream& is);
std::string basis_to_string(const BasisSet& set);
BasisSet basis_from_string(const std::string& text);

}  // namespace polyfb
