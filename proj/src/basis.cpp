#include "polyfb/basis.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace polyfb {

MultiIndex::MultiIndex(std::vector<int> exponents) : exponents_(std::move(exponents)) {
  for (int e : exponents_) {
    if (e < 0) throw std::invalid_argument("MultiIndex: negative exponent");
  }
}

MultiIndex MultiIndex::zero(int dim) {
  if (dim < 1) throw std::invalid_argument("MultiIndex: dimension must be positive");
  return MultiIndex(std::vector<int>(static_cast<std::size_t>(dim), 0));
}

MultiIndex MultiIndex::unit(int dim, int j) {
  MultiIndex e = zero(dim);
  if (j < 0 || j >= dim) throw std::out_of_range("MultiIndex::unit: coordinate out of range");
  e.exponents_[static_cast<std::size_t>(j)] = 1;
  return e;
}

int MultiIndex::degree() const {
  return std::accumulate(exponents_.begin(), exponents_.end(), 0);
}

std::vector<int> MultiIndex::support() const {
  std::vector<int> s;
  for (int i = 0; i < dim(); ++i) {
    if (exponents_[static_cast<std::size_t>(i)] > 0) s.push_back(i);
  }
  return s;
}

MultiIndex MultiIndex::incremented(int j) const {
  MultiIndex out = *this;
  ++out.exponents_.at(static_cast<std::size_t>(j));
  return out;
}

std::optional<MultiIndex> MultiIndex::decremented(int j) const {
  if (exponents_.at(static_cast<std::size_t>(j)) == 0) return std::nullopt;
  MultiIndex out = *this;
  --out.exponents_[static_cast<std::size_t>(j)];
  return out;
}

bool MultiIndex::divides(const MultiIndex& other) const {
  if (other.dim() != dim()) return false;
  for (int i = 0; i < dim(); ++i) {
    if ((*this)[i] > other[i]) return false;
  }
  return true;
}

bool graded_lex_less(const MultiIndex& a, const MultiIndex& b) {
  const int da = a.degree();
  const int db = b.degree();
  if (da != db) return da < db;
  return a.exponents() < b.exponents();
}

std::ostream& operator<<(std::ostream& os, const MultiIndex& alpha) {
  os << '(';
  for (int i = 0; i < alpha.dim(); ++i) {
    if (i > 0) os << ',';
    os << alpha[i];
  }
  return os << ')';
}

std::string to_string(const MultiIndex& alpha) {
  std::ostringstream os;
  os << alpha;
  return os.str();
}

std::size_t MultiIndexHash::operator()(const MultiIndex& alpha) const noexcept {
  // FNV-1a over the exponents.
  std::size_t h = 1469598103934665603ULL;
  for (int e : alpha.exponents()) {
    h ^= static_cast<std::size_t>(e) + 0x9e3779b97f4a7c15ULL;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::kTotalDegree:
      return "total_degree";
    case BasisKind::kHyperbolicCross:
      return "hyperbolic_cross";
    case BasisKind::kCustom:
      return "custom";
  }
  return "custom";
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "total_degree") return BasisKind::kTotalDegree;
  if (name == "hyperbolic_cross") return BasisKind::kHyperbolicCross;
  if (name == "custom") return BasisKind::kCustom;
  throw std::invalid_argument("unknown basis kind '" + name + "'");
}

BasisSet::BasisSet(int dim, std::vector<MultiIndex> indices, BasisKind kind, int degree)
    : dim_(dim), kind_(kind), indices_(std::move(indices)) {
  if (dim < 1) throw std::invalid_argument("BasisSet: dimension must be positive");
  for (const auto& alpha : indices_) {
    if (alpha.dim() != dim) {
      throw std::invalid_argument("BasisSet: index " + to_string(alpha) +
                                  " does not have dimension " + std::to_string(dim));
    }
  }
  std::sort(indices_.begin(), indices_.end(), graded_lex_less);
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (degree >= 0) {
    degree_ = degree;
  } else {
    degree_ = indices_.empty() ? 0 : indices_.back().degree();
  }
  position_.reserve(indices_.size());
  for (std::size_t k = 0; k < indices_.size(); ++k) position_.emplace(indices_[k], k);
}

std::optional<std::size_t> BasisSet::find(const MultiIndex& alpha) const {
  auto it = position_.find(alpha);
  if (it == position_.end()) return std::nullopt;
  return it->second;
}

BasisSet BasisSet::as_custom() const {
  return BasisSet(dim_, indices_, BasisKind::kCustom, degree_);
}

std::size_t total_degree_cardinality(int dim, int degree) {
  if (dim < 1) throw std::invalid_argument("total_degree_cardinality: dimension must be positive");
  if (degree < 0) throw std::invalid_argument("total_degree_cardinality: negative degree");
  // binomial(n + d, min(n, d)) by the multiplicative formula, exact at every step.
  const unsigned long long k = static_cast<unsigned long long>(std::min(dim, degree));
  const unsigned long long n = static_cast<unsigned long long>(dim) + static_cast<unsigned long long>(degree);
  unsigned __int128 c = 1;
  for (unsigned long long i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > std::numeric_limits<std::size_t>::max()) {
      throw BasisSizeError("total-degree set with d=" + std::to_string(dim) + ", n=" +
                           std::to_string(degree) + " exceeds the addressable size");
    }
  }
  return static_cast<std::size_t>(c);
}

namespace {

// Refuse sets whose listing alone would exhaust memory.
constexpr std::size_t kMaxIndexCount = std::size_t{1} << 26;

void check_storable(std::size_t count, int dim) {
  if (count > kMaxIndexCount / static_cast<std::size_t>(std::max(dim, 1))) {
    throw BasisSizeError("index set of " + std::to_string(count) + " elements in dimension " +
                         std::to_string(dim) + " is too large to store");
  }
}

}  // namespace

BasisSet total_degree_indices(int dim, int degree) {
  const std::size_t count = total_degree_cardinality(dim, degree);
  check_storable(count, dim);
  std::vector<MultiIndex> out;
  out.reserve(count);
  std::vector<int> current(static_cast<std::size_t>(dim), 0);
  std::function<void(int, int)> recurse = [&](int coord, int budget) {
    if (coord == dim) {
      out.emplace_back(current);
      return;
    }
    for (int e = 0; e <= budget; ++e) {
      current[static_cast<std::size_t>(coord)] = e;
      recurse(coord + 1, budget - e);
    }
    current[static_cast<std::size_t>(coord)] = 0;
  };
  recurse(0, degree);
  return BasisSet(dim, std::move(out), BasisKind::kTotalDegree, degree);
}

BasisSet hyperbolic_cross_indices(int dim, int degree) {
  if (dim < 1) throw std::invalid_argument("hyperbolic_cross_indices: dimension must be positive");
  if (degree < 0) throw std::invalid_argument("hyperbolic_cross_indices: negative degree");
  const long long budget = static_cast<long long>(degree) + 1;
  std::vector<MultiIndex> out;
  std::vector<int> current(static_cast<std::size_t>(dim), 0);
  // Depth-first over coordinates; `product` is prod (alpha_j + 1) so far.
  std::function<void(int, long long)> recurse = [&](int coord, long long product) {
    if (coord == dim) {
      out.emplace_back(current);
      check_storable(out.size(), dim);
      return;
    }
    for (int e = 0; product * (e + 1) <= budget; ++e) {
      current[static_cast<std::size_t>(coord)] = e;
      recurse(coord + 1, product * (e + 1));
    }
    current[static_cast<std::size_t>(coord)] = 0;
  };
  recurse(0, 1);
  return BasisSet(dim, std::move(out), BasisKind::kHyperbolicCross, degree);
}

BasisSet strip_low_order(const BasisSet& set) {
  std::vector<MultiIndex> kept;
  for (const auto& alpha : set) {
    if (alpha.degree() > 1) kept.push_back(alpha);
  }
  if (set.dim() == 0) return set;
  return BasisSet(set.dim(), std::move(kept), BasisKind::kCustom, set.degree());
}

BasisSet downward_closure(const BasisSet& set) {
  std::unordered_map<MultiIndex, bool, MultiIndexHash> seen;
  std::vector<MultiIndex> stack;
  std::vector<MultiIndex> out;
  auto visit = [&](const MultiIndex& alpha) {
    if (seen.emplace(alpha, true).second) {
      stack.push_back(alpha);
      out.push_back(alpha);
    }
  };
  visit(MultiIndex::zero(set.dim()));
  for (const auto& alpha : set) visit(alpha);
  while (!stack.empty()) {
    MultiIndex alpha = std::move(stack.back());
    stack.pop_back();
    for (int j = 0; j < alpha.dim(); ++j) {
      if (auto lower = alpha.decremented(j)) visit(*lower);
    }
  }
  return BasisSet(set.dim(), std::move(out), BasisKind::kCustom, set.degree());
}

void write_basis(std::ostream& os, const BasisSet& set) {
  os << set.dim() << ' ' << set.degree() << ' ' << to_string(set.kind()) << '\n';
  for (const auto& alpha : set) {
    for (int i = 0; i < alpha.dim(); ++i) {
      if (i > 0) os << ' ';
      os << alpha[i];
    }
    os << '\n';
  }
}

BasisSet read_basis(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_basis: missing header line");
  std::istringstream header(line);
  int dim = 0;
  int degree = 0;
  std::string kind;
  if (!(header >> dim >> degree >> kind) || dim < 1) {
    throw std::runtime_error("read_basis: malformed header '" + line + "'");
  }
  std::vector<MultiIndex> indices;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::vector<int> exps;
    int e = 0;
    while (row >> e) exps.push_back(e);
    if (!row.eof() || static_cast<int>(exps.size()) != dim) {
      throw std::runtime_error("read_basis: malformed index line '" + line + "'");
    }
    indices.emplace_back(std::move(exps));
  }
  return BasisSet(dim, std::move(indices), basis_kind_from_string(kind), degree);
}

std::string basis_to_string(const BasisSet& set) {
  std::ostringstream os;
  write_basis(os, set);
  return os.str();
}

BasisSet basis_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_basis(is);
}

}  // namespace polyfb
