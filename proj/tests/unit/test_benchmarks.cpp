#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>

#include "polyfb/benchmarks.hpp"
#include "polyfb/dynamics.hpp"
#include "test_systems.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using polyfb::MultiIndex;

namespace {

// Fourth-order central differences of the vector field, column by column.
MatrixXd jacobian_fd(const polyfb::ControlSystem& sys, const VectorXd& y, double h) {
  const int d = sys.dim();
  MatrixXd J(d, d);
  for (int k = 0; k < d; ++k) {
    auto at = [&](double t) {
      VectorXd z = y;
      z(k) += t;
      return sys.dynamics(z);
    };
    J.col(k) = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
  }
  return J;
}

void check_jacobian(const polyfb::ControlSystem& sys, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd y = testsys::random_vector(rng, sys.dim(), -radius, radius);
    const MatrixXd fd = jacobian_fd(sys, y, 1e-3);
    const MatrixXd an = sys.jacobian(y);
    CHECK((an - fd).norm() <= 1e-6 * std::max(1.0, an.norm()));
  }
}

// p(x) = sum c_k x^k and its derivatives.
double poly(const VectorXd& c, double x, int deriv) {
  double s = 0.0;
  for (int k = deriv; k < c.size(); ++k) {
    double f = 1.0;
    for (int j = 0; j < deriv; ++j) f *= (k - j);
    s += c(k) * f * std::pow(x, k - deriv);
  }
  return s;
}

std::set<MultiIndex> as_set(const polyfb::BasisSet& b) { return {b.begin(), b.end()}; }

}  // namespace

TEST_CASE("Chebyshev grid invariants") {
  for (int N : {2, 4, 7, 16, 20, 33}) {
    const auto g = polyfb::cheb_grid(N);
    REQUIRE(g.points.size() == N + 1);
    CHECK(g.points(0) == 1.0);
    CHECK(g.points(N) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(std::abs(g.weights.sum() - 2.0) <= 1e-12);
    CHECK((g.D * VectorXd::Ones(N + 1)).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((g.D * g.points - VectorXd::Ones(N + 1)).lpNorm<Eigen::Infinity>() <= 1e-10);
    const VectorXd x2 = g.points.array().square();
    const VectorXd d2 = g.D2 * x2;
    for (int j = 1; j < N; ++j) CHECK(std::abs(d2(j) - 2.0) <= 1e-8);
    if (N >= 4) CHECK(std::abs(g.weights.dot(x2) - 2.0 / 3.0) <= 1e-12);
    CHECK((g.weights.array() > 0).all());
  }
  CHECK_THROWS_AS(polyfb::cheb_grid(1), std::invalid_argument);
}

TEST_CASE("Chebyshev differentiation and quadrature are exact on polynomials") {
  std::mt19937_64 rng(3);
  const int N = 12;
  const auto g = polyfb::cheb_grid(N);
  const VectorXd c = testsys::random_vector(rng, N + 1, -1, 1);
  VectorXd p(N + 1), dp(N + 1), d2p(N + 1);
  for (int j = 0; j <= N; ++j) {
    p(j) = poly(c, g.points(j), 0);
    dp(j) = poly(c, g.points(j), 1);
    d2p(j) = poly(c, g.points(j), 2);
  }
  CHECK((g.D * p - dp).lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK((g.D2 * p - d2p).lpNorm<Eigen::Infinity>() <= 1e-7);
  // Clenshaw-Curtis integrates degree <= N exactly.
  double exact = 0.0;
  for (int k = 0; k <= N; k += 2) exact += 2.0 * c(k) / (k + 1);
  CHECK(std::abs(g.weights.dot(p) - exact) <= 1e-12);
}

TEST_CASE("LC circuit benchmark") {
  const auto s = polyfb::make_lc_circuit();
  CHECK(s.name == "lc_circuit");
  REQUIRE(s.linear.has_value());
  CHECK(s.linear->A == testsys::lc_A());
  CHECK(s.linear->A.trace() == 1.0);
  CHECK(s.system.control_matrix() == testsys::lc_B());
  CHECK(s.system.beta() == 1.0);
  CHECK(s.scale == 10.0);
  CHECK(s.horizon == 10.0);
  CHECK(s.gamma == 1e-30);
  CHECK(s.r == 0.1);
  CHECK(as_set(s.space->basis()) == std::set<MultiIndex>{MultiIndex({0, 2, 0}), MultiIndex({1, 1, 0}),
                                                         MultiIndex({0, 1, 1})});
  CHECK(s.initial_model.theta().isZero(0.0));
  CHECK(s.pool_size == 20);
  CHECK(s.test_size == 100);
  const VectorXd y = VectorXd::LinSpaced(3, -1, 2);
  CHECK(s.system.cost(y) == doctest::Approx(0.5 * y.squaredNorm()));
  CHECK((s.system.dynamics(y) - testsys::lc_A() * y).norm() == 0.0);
  CHECK(polyfb::make_lc_circuit(2.5).system.beta() == 2.5);
}

TEST_CASE("Van der Pol benchmark") {
  const double nu = 1.5, mu = 0.8, beta = 1e-3, l = 10.0;
  const auto s = polyfb::make_vanderpol(4);
  CHECK(s.system.dim() == 2);
  CHECK(s.horizon == 3.0);
  CHECK(s.system.beta() == beta);
  CHECK(s.scale == l);
  CHECK(s.system.dynamics(VectorXd::Zero(2)).isZero(0.0));

  // v0 = mu beta y1^3 y2 + (beta nu / 2) y2^2 in physical variables.
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const VectorXd y = testsys::random_vector(rng, 2, -l, l);
    const double want = mu * beta * std::pow(y(0), 3) * y(1) + 0.5 * beta * nu * y(1) * y(1);
    CHECK(polyfb::eval_model(s.initial_model, y, false).value == doctest::Approx(want).epsilon(1e-12));
  }
  const auto& th = s.initial_model.theta();
  CHECK(th(static_cast<Eigen::Index>(*s.space->basis().find(MultiIndex({3, 1})))) ==
        doctest::Approx(mu * beta * std::pow(l, 4)));
  CHECK(th(static_cast<Eigen::Index>(*s.space->basis().find(MultiIndex({0, 2})))) ==
        doctest::Approx(beta * nu / 2 * l * l));
  CHECK(s.initial_model.support().size() == 2);

  // Closed loop under v0 at (1, 1): second component nu*0 - 1 + mu - (mu + nu).
  CHECK(polyfb::closed_loop_rhs(s.system, s.initial_model, VectorXd::Ones(2))(1) ==
        doctest::Approx(-1.0 - nu).epsilon(1e-12));

  const std::size_t sizes[] = {9, 14, 20, 27, 35};
  for (int n = 4; n <= 8; ++n) CHECK(polyfb::make_vanderpol(n).space->size() == sizes[n - 4]);
  CHECK_THROWS_AS(polyfb::make_vanderpol(3), std::invalid_argument);
  check_jacobian(s.system, l, 6);
}

TEST_CASE("Cucker-Smale benchmark") {
  const auto s = polyfb::make_cucker_smale();
  const int N = 10, d = 40;
  REQUIRE(s.system.dim() == d);
  CHECK(s.system.control_dim() == 2 * N);
  CHECK(s.space->size() == 650);
  CHECK(s.scale == 5.0);
  CHECK(s.gamma == 1e-5);
  CHECK(s.r == 0.9);
  CHECK(s.system.dynamics(VectorXd::Zero(d)).isZero(0.0));
  // Controls act on velocities only.
  const MatrixXd& B = s.system.control_matrix();
  CHECK(B.topRows(2 * N).isZero(0.0));
  CHECK(B.bottomRows(2 * N) == MatrixXd::Identity(2 * N, 2 * N));
  // Every reduced monomial involves a velocity.
  for (const auto& a : s.space->basis()) {
    int vel = 0;
    for (int k = 2 * N; k < d; ++k) vel += a[k];
    CHECK(vel > 0);
  }

  // a(0) = K: agents at one point, agent 0 moving, the others at rest.
  VectorXd y = VectorXd::Zero(d);
  y(2 * N) = 1.0;
  const VectorXd f = s.system.dynamics(y);
  CHECK(f(2 * N) == doctest::Approx(-0.1 * (N - 1) / N).epsilon(1e-14));
  CHECK(f(2 * N + 2) == doctest::Approx(0.1 / N).epsilon(1e-14));
  CHECK(f(0) == 1.0);

  // Consensus costs nothing.
  VectorXd c = VectorXd::Zero(d);
  for (int i = 0; i < N; ++i) c.segment(2 * N + 2 * i, 2) = Eigen::Vector2d(0.3, -1.2);
  c.head(2 * N).setLinSpaced(-3, 4);
  CHECK(s.system.cost(c) == doctest::Approx(0.0).scale(1.0));

  std::mt19937_64 rng(7);
  const VectorXd z = testsys::random_vector(rng, d, -5, 5);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int i = 0; i < N; ++i) mean += z.segment<2>(2 * N + 2 * i) / N;
  double want = 0.0;
  for (int i = 0; i < N; ++i) want += (z.segment<2>(2 * N + 2 * i) - mean).squaredNorm() / N;
  CHECK(s.system.cost(z) == doctest::Approx(want).epsilon(1e-13));
  const auto cost = [&](const VectorXd& x) { return s.system.cost(x); };
  const VectorXd g = s.system.cost_gradient(z);
  for (int k : {0, 5, 2 * N, 2 * N + 7, d - 1}) {
    CHECK(g(k) == doctest::Approx(testsys::richardson_fd(cost, z, k, 1e-3)).epsilon(1e-8).scale(1.0));
  }
  check_jacobian(s.system, 5.0, 8);

  // The interaction term is antisymmetric, so the uncontrolled mean velocity is conserved.
  const auto zero = polyfb::PolynomialModel(s.space, VectorXd::Zero(650), s.scale);
  const auto traj = polyfb::integrate_closed_loop(s.system, zero, z, 3.0, 0.01);
  REQUIRE_FALSE(traj.escaped());
  for (int k = 0; k < traj.samples(); k += 50) {
    Eigen::Vector2d m = Eigen::Vector2d::Zero();
    for (int i = 0; i < N; ++i) m += traj.states.col(k).segment<2>(2 * N + 2 * i) / N;
    CHECK((m - mean).norm() <= 1e-10);
  }
}

TEST_CASE("Allen-Cahn benchmark") {
  const double nu = 0.5;
  const auto s = polyfb::make_allen_cahn();
  const int n = 19;
  REQUIRE(s.system.dim() == n);
  CHECK(s.system.control_dim() == 3);
  CHECK(s.space->size() == 350);
  CHECK(s.horizon == 4.0);
  CHECK(s.r == 0.9);
  CHECK(s.system.beta() == 0.1);
  REQUIRE(s.gamma_ladder.size() == 10);
  CHECK(s.gamma_ladder.front() == 1e-1);
  CHECK(s.gamma_ladder.back() == 1e-6);
  for (std::size_t k = 1; k < s.gamma_ladder.size(); ++k) CHECK(s.gamma_ladder[k] < s.gamma_ladder[k - 1]);

  // Steady states -1, 0, 1.
  for (double c : {-1.0, 0.0, 1.0}) {
    CHECK(s.system.dynamics(VectorXd::Constant(n, c)).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
  // Clenshaw-Curtis of y^2 = 1 over (-1, 1).
  CHECK(s.system.cost(VectorXd::Ones(n)) == doctest::Approx(2.0).epsilon(1e-12));

  // Indicator columns against the interior Chebyshev nodes.
  const auto g = polyfb::cheb_grid(n + 1);
  const MatrixXd& B = s.system.control_matrix();
  const double lo[] = {-0.7, -0.2, 0.4}, hi[] = {-0.4, 0.2, 0.7};
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < 3; ++i) {
      const double x = g.points(j + 1);
      CHECK(B(j, i) == ((x > lo[i] && x < hi[i]) ? 1.0 : 0.0));
    }
  }
  check_jacobian(s.system, 2.0, 9);

  // Lowest nonconstant Neumann mode of nu y_xx decays at nu pi^2 / 4.
  const MatrixXd L = s.system.jacobian(VectorXd::Zero(n)) - MatrixXd::Identity(n, n);
  Eigen::EigenSolver<MatrixXd> es(L);
  double slowest = INFINITY;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lam = -es.eigenvalues()(k).real();
    if (lam > 1e-8) slowest = std::min(slowest, lam);
  }
  const double rate = nu * std::numbers::pi * std::numbers::pi / 4;
  CHECK(std::abs(slowest - rate) <= 0.02 * rate);
  for (int interior : {15, 23}) {
    const auto t = polyfb::make_allen_cahn(nu, interior);
    CHECK(t.system.dim() == interior);
  }
  CHECK_THROWS_AS(polyfb::make_allen_cahn(nu, 2), std::invalid_argument);
}

TEST_CASE("f(0) = 0 for every registered benchmark") {
  for (const auto& name : polyfb::benchmark_names()) {
    const auto s = polyfb::make_benchmark(name);
    CHECK(s.name == name);
    CHECK(s.system.dynamics(VectorXd::Zero(s.system.dim())).isZero(0.0));
    CHECK(s.system.cost(VectorXd::Zero(s.system.dim())) == 0.0);
    CHECK_NOTHROW(polyfb::check_initial_guess(s));
  }
  CHECK_THROWS_AS(polyfb::make_benchmark("pendulum"), std::invalid_argument);
}

TEST_CASE("seeded initial conditions") {
  const auto a = polyfb::sample_initial_conditions(3, 10.0, 50, 42);
  const auto b = polyfb::sample_initial_conditions(3, 10.0, 50, 42);
  const auto c = polyfb::sample_initial_conditions(3, 10.0, 50, 43);
  const auto prefix = polyfb::sample_initial_conditions(3, 10.0, 7, 42);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i] - b[i]).norm() == 0.0);
    CHECK((a[i] - c[i]).norm() > 0.0);
    CHECK(a[i].lpNorm<Eigen::Infinity>() < 10.0);
  }
  for (std::size_t i = 0; i < prefix.size(); ++i) CHECK((prefix[i] - a[i]).norm() == 0.0);
  // Reference stream: SplitMix64 finalizer keyed by the seed, one counter per coordinate.
  const auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  CHECK(mix(0) == 0xe220a8397b1dcdafULL);
  const auto p = polyfb::sample_initial_conditions(4, 2.5, 3, 17);
  for (std::uint64_t i = 0; i < 3; ++i) {
    for (std::uint64_t j = 0; j < 4; ++j) {
      const std::uint64_t bits = mix(mix(17) ^ mix(i * 4 + j));
      const double u = (static_cast<double>(bits >> 11) + 0.5) / 9007199254740992.0;
      CHECK(p[i](static_cast<Eigen::Index>(j)) == 2.5 * (2 * u - 1));
    }
  }
  CHECK(polyfb::sample_initial_conditions(2, 1.0, 1, 0)[0](0) == 0x1.8882a0e5ec774p-1);
  CHECK(polyfb::sample_initial_conditions(2, 1.0, 0, 1).empty());

  const int count = 100000;
  const double l = 5.0;
  const auto big = polyfb::sample_initial_conditions(2, l, count, 9);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& y : big) mean += y;
  mean /= count;
  CHECK(mean.lpNorm<Eigen::Infinity>() <= 3 * l / std::sqrt(12.0 * count));
}
