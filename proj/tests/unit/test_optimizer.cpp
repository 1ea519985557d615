#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "polyfb/basis.hpp"
#include "polyfb/optimizer.hpp"
#include "test_systems.hpp"

using polyfb::BasisSet;
using polyfb::MultiIndex;
using polyfb::OptimizerConfig;
using polyfb::PolynomialModel;

namespace {

// Minimizer of (1/2s)(t - a)^2 + g|t| over a fine grid around a.
double grid_prox(double a, double s, double g) {
  double best_t = 0.0, best = 0.5 / s * a * a;
  const double lo = a - 3 * std::abs(a) - 1, hi = a + 3 * std::abs(a) + 1;
  const int n = 2000000;
  for (int i = 0; i <= n; ++i) {
    const double t = lo + (hi - lo) * i / n;
    const double val = 0.5 / s * (t - a) * (t - a) + g * std::abs(t);
    if (val < best) {
      best = val;
      best_t = t;
    }
  }
  return best_t;
}

// Stationarity of theta for grad + gamma(1-r) theta + gamma r subdiff|theta|_1 per coordinate.
bool stationary(const Eigen::VectorXd& d, const Eigen::VectorXd& theta, double gr) {
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (theta(j) != 0.0) {
      if (d(j) + gr * (theta(j) > 0 ? 1.0 : -1.0) != 0.0) return false;
    } else if (std::abs(d(j)) > gr) {
      return false;
    }
  }
  return true;
}

polyfb::SmoothProblem quadratic(const Eigen::VectorXd& c) {
  polyfb::SmoothProblem p;
  p.value = [c](const Eigen::VectorXd& t) { return 0.5 * (t - c).squaredNorm(); };
  p.gradient = [c](const Eigen::VectorXd& t) { return Eigen::VectorXd(t - c); };
  return p;
}

}  // namespace

TEST_CASE("shrink") {
  CHECK(polyfb::shrink(5, 2) == 3);
  CHECK(polyfb::shrink(-5, 2) == -3);
  CHECK(polyfb::shrink(1, 2) == 0);
  CHECK(polyfb::shrink(-2, 2) == 0);
}

TEST_CASE("proximal update") {
  Eigen::Vector2d theta(1, -1), d(0.5, -0.25);
  CHECK((polyfb::prox_update(theta, d, 0.5, 0.0) - (theta - 0.5 * d)).norm() == 0.0);
  CHECK(polyfb::prox_update(Eigen::Vector2d(1, -1), Eigen::Vector2d::Zero(), 1.0, 2.0).isZero(0.0));
  const Eigen::VectorXd one = polyfb::prox_update(theta, Eigen::Vector2d(10, 10), 1.0, 0.0, 1);
  CHECK(one(0) == 1.0);
  CHECK(one(1) == -11.0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd t = testsys::random_vector(rng, 3, -2, 2);
    const Eigen::VectorXd g = testsys::random_vector(rng, 3, -2, 2);
    const double s = testsys::random_vector(rng, 1, 0.1, 2)(0);
    const double gr = testsys::random_vector(rng, 1, 0, 1)(0);
    const Eigen::VectorXd got = polyfb::prox_update(t, g, s, gr);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(got(j) - grid_prox(t(j) - s * g(j), s, gr)) <= 1e-5);
  }
}

TEST_CASE("greedy coordinate examples") {
  CHECK(polyfb::greedy_coordinate(Eigen::Vector3d(3, -7, 1), Eigen::Vector3d::Zero(), 0.0) == 1);
  CHECK(polyfb::greedy_coordinate(Eigen::Vector3d(3, -7, 1), Eigen::Vector3d::Zero(), 7.0) == 0);
  const Eigen::VectorXd s = polyfb::greedy_scores(Eigen::Vector2d(-5, 4), Eigen::Vector2d(1, 0), 1.0);
  CHECK(s(0) == 4.0);
  CHECK(s(1) == 3.0);
  CHECK(polyfb::greedy_coordinate(Eigen::Vector2d(-5, 4), Eigen::Vector2d(1, 0), 1.0) == 0);
}

TEST_CASE("greedy score vanishes exactly at stationary points") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> coin(0, 2);
  int stationary_count = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double gr = std::ldexp(std::uniform_int_distribution<int>(0, 8)(rng), -2);
    Eigen::VectorXd theta(4), d(4);
    const bool make_stationary = trial % 2 == 0;
    for (int j = 0; j < 4; ++j) {
      const int kind = coin(rng);
      theta(j) = kind == 0 ? 0.0 : (kind == 1 ? 1.5 : -0.75);
      if (make_stationary) {
        // Dyadic values keep d + gr sign(theta) exact.
        d(j) = theta(j) != 0.0 ? -gr * (theta(j) > 0 ? 1.0 : -1.0)
                               : gr * std::ldexp(std::uniform_int_distribution<int>(-4, 4)(rng), -2);
      } else {
        d(j) = std::ldexp(std::uniform_int_distribution<int>(-16, 16)(rng), -2);
      }
    }
    const bool oracle = stationary(d, theta, gr);
    stationary_count += oracle;
    const double best = polyfb::greedy_scores(d, theta, gr).maxCoeff();
    CHECK((best == 0.0) == oracle);
  }
  CHECK(stationary_count >= 500);
}

TEST_CASE("proximal fixed point at stationary points") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double gr = 0.5;
    Eigen::VectorXd theta = testsys::random_vector(rng, 5, -1, 1);
    Eigen::VectorXd d(5);
    for (int j = 0; j < 5; ++j) {
      if (j % 2 == 0) theta(j) = 0.0;
      d(j) = theta(j) != 0.0 ? -gr * (theta(j) > 0 ? 1.0 : -1.0) : testsys::random_vector(rng, 1, -gr, gr)(0);
    }
    for (double s : {1e-3, 0.1, 1.0, 10.0}) {
      CHECK((polyfb::prox_update(theta, d, s, gr) - theta).lpNorm<Eigen::Infinity>() <= 1e-15);
    }
  }
}

TEST_CASE("Barzilai-Borwein steps") {
  const Eigen::Vector2d t0(0, 0), t1(1, 0), d0(0, 0), d1(2, 1);
  CHECK(polyfb::bb_step(t1, t0, d1, d0, 1, 1e-8, 1e3) == doctest::Approx(0.4));
  CHECK(polyfb::bb_step(t1, t0, d1, d0, 2, 1e-8, 1e3) == doctest::Approx(0.5));
  const double fallback = std::sqrt(1e-8 * 1e3);
  CHECK(polyfb::bb_step(t1, t0, d0, d0, 1, 1e-8, 1e3) == doctest::Approx(fallback));
  CHECK(polyfb::bb_step(t1, t0, Eigen::Vector2d(-1, 0), d0, 2, 1e-8, 1e3) == doctest::Approx(fallback));
  CHECK(polyfb::bb_step(t1, t0, Eigen::Vector2d(1e-6, 0), d0, 2, 1e-8, 1e3) == 1e3);
}

TEST_CASE("backtracking") {
  OptimizerConfig cfg;
  cfg.gamma = 0.0;
  cfg.kappa = 0.1;
  auto J = [](const Eigen::VectorXd& t) { return 0.5 * t.squaredNorm(); };
  const Eigen::VectorXd theta = Eigen::Vector2d(1.0, -2.0);
  auto res = polyfb::backtrack(theta, J(theta), theta, 0.5, cfg, std::nullopt, J);
  CHECK(res.status == polyfb::BacktrackResult::Status::kAccepted);
  CHECK(res.trials == 1);
  CHECK(res.step == 0.5);

  res = polyfb::backtrack(theta, J(theta), Eigen::Vector2d::Zero(), 1.0, cfg, std::nullopt, J);
  CHECK(res.status == polyfb::BacktrackResult::Status::kZeroStep);

  // Candidates beyond |t| > 0.5 are infeasible.
  auto Jbox = [](const Eigen::VectorXd& t) {
    return t.lpNorm<Eigen::Infinity>() > 0.5 ? std::numeric_limits<double>::infinity() : 0.5 * t.squaredNorm();
  };
  const Eigen::VectorXd t0 = Eigen::Vector2d(0.4, 0.0);
  res = polyfb::backtrack(t0, Jbox(t0), Eigen::Vector2d(-1.0, 0.0), 1.0, cfg, std::nullopt, Jbox);
  CHECK(res.status == polyfb::BacktrackResult::Status::kFailed);
  res = polyfb::backtrack(t0, Jbox(t0), Eigen::Vector2d(1.0, 0.0), 2.0, cfg, std::nullopt, Jbox);
  CHECK(res.status == polyfb::BacktrackResult::Status::kAccepted);
}

TEST_CASE("backtracking rejects candidates whose trajectories escape") {
  const double l = 10.0;
  const auto sys = testsys::linear(testsys::lc_A(), testsys::lc_B(), 1.0, l);
  auto space = testsys::space_of(polyfb::reduce_basis(
      polyfb::strip_low_order(polyfb::total_degree_indices(3, 2)), testsys::lc_B()));
  const BasisSet& basis = space->basis();
  // A stabilizing quadratic: gain (theta_110, 2 theta_020, theta_011) / l^2 = (4, 3, 4).
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  theta(static_cast<Eigen::Index>(*basis.find(MultiIndex({1, 1, 0})))) = 4 * l * l;
  theta(static_cast<Eigen::Index>(*basis.find(MultiIndex({0, 2, 0})))) = 1.5 * l * l;
  theta(static_cast<Eigen::Index>(*basis.find(MultiIndex({0, 1, 1})))) = 4 * l * l;
  polyfb::TrainingSet train;
  train.initial_conditions = {Eigen::Vector3d(3, -3, 3)};
  train.horizon = 10.0;
  train.step = 0.025;
  auto J = [&](const Eigen::VectorXd& t) { return polyfb::cost(PolynomialModel(space, t, l), sys, train).value; };
  REQUIRE(std::isfinite(J(theta)));
  // A step that removes the feedback entirely: the uncontrolled circuit leaves the box.
  OptimizerConfig cfg;
  cfg.gamma = 0.0;
  const Eigen::VectorXd d = theta;
  REQUIRE(std::isinf(J(theta - d)));
  const auto res = polyfb::backtrack(theta, J(theta) + 1e9, d, 1.0, cfg, std::nullopt, J);
  CHECK(res.status == polyfb::BacktrackResult::Status::kAccepted);
  CHECK(res.trials > 1);
  CHECK(std::isfinite(res.objective));
}

TEST_CASE("lasso surrogate converges to the soft-threshold solution") {
  const Eigen::VectorXd c = (Eigen::VectorXd(6) << 3.0, -0.2, 0.05, -2.5, 0.0, 1.0).finished();
  for (auto mode : {polyfb::UpdateMode::kFull, polyfb::UpdateMode::kGreedy}) {
    OptimizerConfig cfg;
    cfg.gamma = 0.5;
    cfg.r = 1.0;
    cfg.update_mode = mode;
    cfg.max_iterations = 200;
    const auto [theta, trace] = polyfb::minimize(quadratic(c), Eigen::VectorXd::Zero(6), cfg);
    for (Eigen::Index j = 0; j < 6; ++j) CHECK(theta(j) == doctest::Approx(polyfb::shrink(c(j), 0.5)).epsilon(1e-8));
    for (std::size_t k = 1; k < trace.records.size(); ++k) {
      CHECK(trace.records[k].objective <= trace.records[k - 1].objective);
    }
  }
}

TEST_CASE("elastic net surrogate") {
  // argmin |t - c|^2/2 + gamma((1-r)/2 t^2 + r|t|) = shrink(c, gamma r) / (1 + gamma (1 - r)).
  const Eigen::VectorXd c = (Eigen::VectorXd(4) << 2.0, -1.0, 0.1, -0.3).finished();
  OptimizerConfig cfg;
  cfg.gamma = 0.4;
  cfg.r = 0.5;
  const auto [theta, trace] = polyfb::minimize(quadratic(c), Eigen::VectorXd::Ones(4), cfg);
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(theta(j) == doctest::Approx(polyfb::shrink(c(j), 0.2) / 1.2).epsilon(1e-8));
  }
  CHECK(trace.reason != polyfb::StopReason::kStepFailure);
}

TEST_CASE("greedy support grows by at most one per iteration") {
  std::mt19937_64 rng(12);
  const Eigen::VectorXd c = testsys::random_vector(rng, 30, -1, 1);
  OptimizerConfig cfg;
  cfg.gamma = 0.05;
  cfg.r = 0.9;
  cfg.update_mode = polyfb::UpdateMode::kGreedy;
  cfg.max_iterations = 100;
  const auto [theta, trace] = polyfb::minimize(quadratic(c), Eigen::VectorXd::Zero(30), cfg);
  for (std::size_t k = 1; k < trace.records.size(); ++k) {
    CHECK(trace.records[k].support <= trace.records[k - 1].support + 1);
    CHECK(trace.records[k].objective <= trace.records[k - 1].objective);
  }
}

TEST_CASE("huge penalty returns zero") {
  OptimizerConfig cfg;
  cfg.gamma = 1e6;
  cfg.r = 0.9;
  const auto [theta, trace] = polyfb::minimize(quadratic(Eigen::Vector3d(1, -2, 3)), Eigen::Vector3d(0.5, 0.5, 0.5), cfg);
  CHECK(theta.isZero(0.0));
}

TEST_CASE("infeasible initial guess is reported") {
  const auto sys = testsys::linear(testsys::lc_A(), testsys::lc_B(), 1.0, 10.0);
  auto space = testsys::space_of(polyfb::reduce_basis(
      polyfb::strip_low_order(polyfb::total_degree_indices(3, 2)), testsys::lc_B()));
  polyfb::TrainingSet train;
  train.initial_conditions = {Eigen::Vector3d(9, -9, 9.5)};
  train.horizon = 10.0;
  train.step = 0.025;
  CHECK_THROWS_AS(polyfb::run(sys, train, PolynomialModel(space, Eigen::VectorXd::Zero(3), 10.0), OptimizerConfig{}),
                  polyfb::InfeasibleInitialGuess);
}

TEST_CASE("trace CSV and config validation") {
  OptimizerConfig cfg;
  cfg.gamma = 0.1;
  cfg.max_iterations = 3;
  const auto [theta, trace] = polyfb::minimize(quadratic(Eigen::Vector2d(1, 2)), Eigen::Vector2d::Zero(), cfg);
  std::ostringstream os;
  polyfb::write_trace_csv(os, trace);
  CHECK(os.str().rfind("iter,J,grad_norm,step,support,seconds\n", 0) == 0);
  OptimizerConfig bad;
  bad.kappa = 1.5;
  CHECK_THROWS(bad.validate());
  bad = OptimizerConfig{};
  bad.r = -0.1;
  CHECK_THROWS(bad.validate());
  CHECK(polyfb::update_mode_from_string("greedy") == polyfb::UpdateMode::kGreedy);
  CHECK_THROWS(polyfb::update_mode_from_string("sgd"));
}
