#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "polyfb/basis.hpp"
#include "polyfb/control_system.hpp"
#include "polyfb/model.hpp"

namespace polyfb {

/// Chebyshev extreme points x_j = cos(j pi / N), j = 0..N, with the
/// collocation differentiation matrices and Clenshaw-Curtis weights.
struct ChebGrid {
  Eigen::VectorXd points;
  Eigen::MatrixXd D;
  Eigen::MatrixXd D2;
  Eigen::VectorXd weights;

  int order() const { return static_cast<int>(points.size()) - 1; }
};

ChebGrid cheb_grid(int N);

/// Data for the Riccati oracle of a linear-quadratic benchmark.
struct LinearQuadratic {
  Eigen::MatrixXd A;
  Eigen::MatrixXd Q;  // l(y) = y^T Q y / 2
};

/// One benchmark problem with its default experiment parameters.
struct BenchmarkSpec {
  std::string name;
  ControlSystem system;
  double horizon = 1.0;
  double step = 0.01;
  double scale = 1.0;  // l, the half-width of the sampling box
  double gamma = 0.0;
  double r = 0.5;
  /// Progressive penalty ladder (first entry trained from the initial guess).
  std::vector<double> gamma_ladder;
  BasisKind basis_kind = BasisKind::kTotalDegree;
  int degree = 2;
  std::shared_ptr<const PolynomialSpace> space;  // reduced basis
  PolynomialModel initial_model;
  int train_size = 1;  // prefix of the training pool used by default
  int pool_size = 1;
  int test_size = 100;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  std::optional<LinearQuadratic> linear;
};

/// X = (generating set of `kind`, degree n) minus degree <= 1 minus the
/// B-orthogonal monomials.
BasisSet learning_basis(BasisKind kind, int dim, int degree, const Eigen::Ref<const Eigen::MatrixXd>& B);

/// v0 must keep every default training trajectory inside the escape bound;
/// throws std::runtime_error otherwise.
void check_initial_guess(const BenchmarkSpec& spec);

/// y' = A y + B u with the 3x3 circuit matrix, l = |y|^2/2, l = 10, T = 10.
BenchmarkSpec make_lc_circuit(double beta = 1.0);

/// y1' = y2, y2' = nu (1 - y1^2) y2 - y1 + mu y1^3 + u on (-10, 10)^2, T = 3.
/// The initial guess is mu beta y1^3 y2 + (beta nu / 2) y2^2, so degree >= 4.
BenchmarkSpec make_vanderpol(int degree = 4, double nu = 1.5, double mu = 0.8, double beta = 1e-3);

/// N agents in the plane, state (x_1..x_N, v_1..v_N), controls on the
/// velocities, l = (1/N) sum |v_i - mean v|^2. `beta` weighs (beta/2)|u|^2.
BenchmarkSpec make_cucker_smale(int agents = 10, double K = 0.1, double beta = 2e-2);

/// Collocation of y_t = nu y_xx + y(1 - y^2) + sum chi_i u_i with Neumann
/// boundary values eliminated; the state is the `interior` inner nodal values.
BenchmarkSpec make_allen_cahn(double nu = 0.5, int interior = 19, double beta = 0.1);

/// Names accepted by make_benchmark.
std::vector<std::string> benchmark_names();
/// Registry lookup with the default parameters; throws std::invalid_argument.
BenchmarkSpec make_benchmark(const std::string& name);

/// `count` points uniform in (-l, l)^d from a counter-based SplitMix64 stream:
/// coordinate j of point i depends only on (seed, i d + j).
std::vector<Eigen::VectorXd> sample_initial_conditions(int dim, double scale, int count, std::uint64_t seed);
std::vector<Eigen::VectorXd> sample_initial_conditions(const BenchmarkSpec& spec, int count, std::uint64_t seed);

/// Default training pool and test set of a benchmark.
std::vector<Eigen::VectorXd> training_pool(const BenchmarkSpec& spec);
std::vector<Eigen::VectorXd> test_set(const BenchmarkSpec& spec);

}  // namespace polyfb
