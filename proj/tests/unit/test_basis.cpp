#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "polyfb/basis.hpp"
#include "polyfb/eval_tree.hpp"
#include "test_systems.hpp"

using polyfb::BasisSet;
using polyfb::MultiIndex;

namespace {

MultiIndex mi(std::vector<int> e) { return MultiIndex(std::move(e)); }

std::set<std::vector<int>> as_set(const BasisSet& b) {
  std::set<std::vector<int>> out;
  for (const auto& a : b) out.insert(a.exponents());
  return out;
}

// Every alpha in {0..n}^d, filtered by a predicate.
std::set<std::vector<int>> brute_force(int d, int n, const std::function<bool(const std::vector<int>&)>& keep) {
  std::set<std::vector<int>> out;
  std::vector<int> a(static_cast<std::size_t>(d), 0);
  while (true) {
    if (keep(a)) out.insert(a);
    int j = 0;
    while (j < d && a[static_cast<std::size_t>(j)] == n) a[static_cast<std::size_t>(j++)] = 0;
    if (j == d) break;
    ++a[static_cast<std::size_t>(j)];
  }
  return out;
}

std::size_t binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<std::size_t>(std::llround(r));
}

}  // namespace

TEST_CASE("multi-index basics") {
  const MultiIndex a = mi({2, 0, 1});
  CHECK(a.degree() == 3);
  CHECK(a.support() == std::vector<int>{0, 2});
  CHECK(a.incremented(1) == mi({2, 1, 1}));
  CHECK(*a.decremented(0) == mi({1, 0, 1}));
  CHECK_FALSE(a.decremented(1).has_value());
  CHECK(mi({1, 0, 1}).divides(a));
  CHECK_FALSE(mi({0, 1, 0}).divides(a));
  CHECK_THROWS(MultiIndex(std::vector<int>{1, -1}));
}

TEST_CASE("total degree examples") {
  const BasisSet l1 = polyfb::total_degree_indices(2, 1);
  REQUIRE(l1.size() == 3);
  CHECK(l1[0] == mi({0, 0}));
  CHECK(l1[1] == mi({0, 1}));
  CHECK(l1[2] == mi({1, 0}));

  const BasisSet d1 = polyfb::total_degree_indices(1, 3);
  REQUIRE(d1.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(d1[static_cast<std::size_t>(k)] == mi({k}));

  CHECK(polyfb::total_degree_indices(3, 2).size() == 10);
}

TEST_CASE("total degree cardinality matches brute force and nests") {
  for (int d = 1; d <= 5; ++d) {
    for (int n = 0; n <= 6; ++n) {
      const BasisSet set = polyfb::total_degree_indices(d, n);
      const auto oracle = brute_force(d, n, [n](const std::vector<int>& a) {
        int s = 0;
        for (int v : a) s += v;
        return s <= n;
      });
      CHECK(as_set(set) == oracle);
      CHECK(set.size() == binomial(n + d, d));
      CHECK(polyfb::total_degree_cardinality(d, n) == set.size());
      const BasisSet next = polyfb::total_degree_indices(d, n + 1);
      CHECK(std::equal(set.begin(), set.end(), next.begin()));
      for (std::size_t k = 1; k < set.size(); ++k) CHECK(set[k - 1].degree() <= set[k].degree());
    }
  }
}

TEST_CASE("cardinality overflow is reported") {
  CHECK_THROWS_AS(polyfb::total_degree_cardinality(200, 200), polyfb::BasisSizeError);
  CHECK_THROWS_AS(polyfb::total_degree_indices(40, 30), polyfb::BasisSizeError);
}

TEST_CASE("hyperbolic cross examples") {
  const BasisSet g = polyfb::hyperbolic_cross_indices(2, 3);
  const std::set<std::vector<int>> expected{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1}, {3, 0}, {0, 3}};
  CHECK(as_set(g) == expected);
  for (int k = 0; k <= 6; ++k) {
    CHECK(polyfb::hyperbolic_cross_indices(1, k) == polyfb::total_degree_indices(1, k));
  }
  const double bound = std::min(2.0 * 125 * 256, std::exp(2.0) * std::pow(5.0, 2.0 + std::log2(5.0)));
  CHECK(static_cast<double>(polyfb::hyperbolic_cross_indices(4, 5).size()) <= bound);
}

TEST_CASE("hyperbolic cross agrees with brute force and its size bound") {
  for (int d = 1; d <= 6; ++d) {
    for (int n = 1; n <= 8; ++n) {
      const BasisSet g = polyfb::hyperbolic_cross_indices(d, n);
      if (d <= 4) {
        const auto oracle = brute_force(d, n, [n](const std::vector<int>& a) {
          long p = 1;
          for (int v : a) p *= v + 1;
          return p <= n + 1;
        });
        CHECK(as_set(g) == oracle);
      }
      const double bound = std::min(2.0 * n * n * n * std::pow(4.0, d),
                                    std::exp(2.0) * std::pow(double(n), 2.0 + std::log2(double(n))));
      CHECK(static_cast<double>(g.size()) <= bound);
      for (std::size_t k = 1; k < g.size(); ++k) CHECK(polyfb::graded_lex_less(g[k - 1], g[k]));
    }
  }
}

TEST_CASE("hyperbolic cross stays cheap in high dimension") {
  // S_4 in d = 40: origin, 40 linear, 40 squares, C(40,2) products, 40 cubes, 40 quartics.
  CHECK(polyfb::hyperbolic_cross_indices(40, 4).size() == 1 + 40 + 40 + 780 + 40 + 40);
}

TEST_CASE("strip low order") {
  CHECK(polyfb::strip_low_order(BasisSet(2, {mi({0, 0}), mi({1, 0}), mi({0, 1}), mi({2, 0})})) ==
        BasisSet(2, {mi({2, 0})}));
  const BasisSet stripped = polyfb::strip_low_order(polyfb::total_degree_indices(2, 2));
  CHECK(as_set(stripped) == std::set<std::vector<int>>{{2, 0}, {1, 1}, {0, 2}});
  CHECK(polyfb::strip_low_order(BasisSet(3, {})).empty());
}

TEST_CASE("B-orthogonality") {
  const Eigen::MatrixXd B = testsys::lc_B();
  CHECK(polyfb::is_b_orthogonal(mi({2, 0, 1}), B));
  CHECK_FALSE(polyfb::is_b_orthogonal(mi({0, 1, 0}), B));
  CHECK(polyfb::is_b_orthogonal(mi({0, 0, 0}), Eigen::MatrixXd::Random(3, 2)));
  CHECK_THROWS_AS(polyfb::is_b_orthogonal(mi({1, 0}), B), std::invalid_argument);
}

TEST_CASE("reduce basis") {
  const Eigen::MatrixXd B = testsys::lc_B();
  const BasisSet x = polyfb::strip_low_order(polyfb::total_degree_indices(3, 2));
  const BasisSet r = polyfb::reduce_basis(x, B);
  CHECK(r.size() == 3);
  for (const auto& a : r) CHECK(a[1] > 0);
  for (const auto& a : x) {
    if (a[1] > 0) CHECK(r.contains(a));
  }
  CHECK(polyfb::reduce_basis(r, B) == r);

  const Eigen::MatrixXd full = Eigen::MatrixXd::Ones(3, 2);
  CHECK(polyfb::reduce_basis(x, full) == x);
  CHECK(polyfb::reduce_basis(x, Eigen::MatrixXd::Zero(3, 2)).empty());
}

TEST_CASE("B-orthogonality agrees with numeric B^T grad phi") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> exp_dist(0, 3);
  std::uniform_int_distribution<int> row_dist(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 4;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, 2);
    for (int i = 0; i < d; ++i) {
      if (row_dist(rng)) B.row(i) = testsys::random_vector(rng, 2, 0.5, 1.5).transpose();
    }
    std::vector<int> e(d);
    for (auto& v : e) v = exp_dist(rng);
    const MultiIndex alpha(e);
    const bool orth = polyfb::is_b_orthogonal(alpha, B);
    const polyfb::EvalTree tree = polyfb::build_eval_tree(polyfb::downward_closure(BasisSet(d, {alpha})));
    double worst = 0.0;
    for (int p = 0; p < 50; ++p) {
      const Eigen::VectorXd y = testsys::random_vector(rng, d, 0.2, 1.0);
      const auto res = polyfb::evaluate_all(tree, y, 1.0);
      worst = std::max(worst, (B.transpose() * polyfb::gradient_of(alpha, res)).cwiseAbs().maxCoeff());
    }
    if (orth) {
      CHECK(worst <= 1e-12);
    } else {
      CHECK(worst > 1e-6);
    }
  }
}

TEST_CASE("downward closure") {
  const BasisSet c = polyfb::downward_closure(BasisSet(2, {mi({2, 1})}));
  CHECK(as_set(c) == std::set<std::vector<int>>{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {2, 1}});
}

TEST_CASE("basis text round trip") {
  const BasisSet g = polyfb::hyperbolic_cross_indices(3, 4);
  const std::string text = polyfb::basis_to_string(g);
  CHECK(text.rfind("3 4 hyperbolic_cross\n", 0) == 0);
  const BasisSet back = polyfb::basis_from_string(text);
  CHECK(back == g);
  CHECK(back.kind() == polyfb::BasisKind::kHyperbolicCross);
  CHECK_THROWS(polyfb::basis_from_string("2 1 custom\n1 2 3\n"));
}
