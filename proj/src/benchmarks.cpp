#include "polyfb/benchmarks.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

#include "polyfb/objective.hpp"

namespace polyfb {

ChebGrid cheb_grid(int N) {
  if (N < 2) throw std::invalid_argument("cheb_grid: N must be at least 2");
  const double pi = std::numbers::pi;
  ChebGrid g;
  g.points.resize(N + 1);
  for (int j = 0; j <= N; ++j) g.points(j) = std::cos(pi * j / N);

  Eigen::VectorXd c(N + 1);
  for (int j = 0; j <= N; ++j) c(j) = ((j == 0 || j == N) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0);
  g.D.setZero(N + 1, N + 1);
  for (int i = 0; i <= N; ++i) {
    double row = 0.0;
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      g.D(i, j) = c(i) / c(j) / (g.points(i) - g.points(j));
      row += g.D(i, j);
    }
    // Negative-sum trick: exact annihilation of constants.
    g.D(i, i) = -row;
  }
  g.D2 = g.D * g.D;

  g.weights.setZero(N + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(N - 1);
  const auto theta = [&](int j) { return pi * j / N; };
  if (N % 2 == 0) {
    g.weights(0) = g.weights(N) = 1.0 / (N * N - 1.0);
    for (int k = 1; k < N / 2; ++k) {
      for (int j = 1; j < N; ++j) v(j - 1) -= 2.0 * std::cos(2.0 * k * theta(j)) / (4.0 * k * k - 1.0);
    }
    for (int j = 1; j < N; ++j) v(j - 1) -= std::cos(N * theta(j)) / (N * N - 1.0);
  } else {
    g.weights(0) = g.weights(N) = 1.0 / (static_cast<double>(N) * N);
    for (int k = 1; k <= (N - 1) / 2; ++k) {
      for (int j = 1; j < N; ++j) v(j - 1) -= 2.0 * std::cos(2.0 * k * theta(j)) / (4.0 * k * k - 1.0);
    }
  }
  g.weights.segment(1, N - 1) = 2.0 * v / N;
  return g;
}

BasisSet learning_basis(BasisKind kind, int dim, int degree, const Eigen::Ref<const Eigen::MatrixXd>& B) {
  BasisSet full;
  switch (kind) {
    case BasisKind::kTotalDegree:
      full = total_degree_indices(dim, degree);
      break;
    case BasisKind::kHyperbolicCross:
      full = hyperbolic_cross_indices(dim, degree);
      break;
    default:
      throw std::invalid_argument("learning_basis: basis kind must be total_degree or hyperbolic_cross");
  }
  const BasisSet reduced = reduce_basis(strip_low_order(full), B);
  return BasisSet(dim, reduced.indices(), kind, degree);
}

void check_initial_guess(const BenchmarkSpec& spec) {
  TrainingSet train;
  auto pool = training_pool(spec);
  pool.resize(static_cast<std::size_t>(spec.train_size));
  train.initial_conditions = std::move(pool);
  train.horizon = spec.horizon;
  train.step = spec.step;
  const ObjectiveReport rep = cost(spec.initial_model, spec.system, train);
  if (!rep.feasible) {
    throw std::runtime_error(spec.name + ": the initial guess does not keep the training trajectories bounded");
  }
}

namespace {

std::shared_ptr<const PolynomialSpace> space_for(BasisKind kind, int dim, int degree, const Eigen::MatrixXd& B) {
  return std::make_shared<const PolynomialSpace>(learning_basis(kind, dim, degree, B));
}

PolynomialModel zero_model(const std::shared_ptr<const PolynomialSpace>& space, double scale) {
  return PolynomialModel(space, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space->size())), scale);
}

// Quadratic benchmark cost l(y) = y^T Q y (without a 1/2 when half = false).
void quadratic_cost(ControlSystem::Definition& def, const Eigen::MatrixXd& Q, bool half) {
  const double c = half ? 0.5 : 1.0;
  def.cost = [Q, c](const Eigen::Ref<const Eigen::VectorXd>& y) { return c * y.dot(Q * y); };
  def.cost_gradient = [Q, c](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) {
    out.noalias() = (2.0 * c) * (Q * y);
  };
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

BenchmarkSpec make_lc_circuit(double beta) {
  Eigen::MatrixXd A(3, 3);
  A << 0, 1, -1, -1, 0, 0, 1, 0, 1;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(3, 1);
  B(1, 0) = 1;
  const double l = 10.0;

  ControlSystem::Definition def;
  def.dynamics = [A](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) {
    out.noalias() = A * y;
  };
  def.jacobian = [A](const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Ref<Eigen::MatrixXd> out) { out = A; };
  quadratic_cost(def, Eigen::MatrixXd::Identity(3, 3), true);
  def.control = B;
  def.beta = beta;
  def.box = l;
  // The open loop grows like e^{0.57 t}; early iterates (v0 = 0 included)
  // must be allowed to leave the sampling box.
  def.escape_bound = 1e4 * l;

  BenchmarkSpec s;
  s.name = "lc_circuit";
  s.system = ControlSystem(std::move(def));
  s.horizon = 10.0;
  s.step = 0.025;
  s.scale = l;
  s.gamma = 1e-30;
  s.r = 0.1;
  s.basis_kind = BasisKind::kTotalDegree;
  s.degree = 2;
  s.space = space_for(s.basis_kind, 3, 2, B);
  s.initial_model = zero_model(s.space, l);
  s.train_size = 2;
  s.pool_size = 20;
  s.test_size = 100;
  s.train_seed = 101;
  s.test_seed = 102;
  s.linear = LinearQuadratic{A, Eigen::MatrixXd::Identity(3, 3)};
  check_initial_guess(s);
  return s;
}

BenchmarkSpec make_vanderpol(int degree, double nu, double mu, double beta) {
  if (degree < 4) {
    throw std::invalid_argument("make_vanderpol: the analytic initial guess needs degree >= 4, got " +
                                std::to_string(degree));
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, 1);
  B(1, 0) = 1;
  const double l = 10.0;

  ControlSystem::Definition def;
  def.dynamics = [nu, mu](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) {
    out(0) = y(1);
    out(1) = nu * (1 - y(0) * y(0)) * y(1) - y(0) + mu * y(0) * y(0) * y(0);
  };
  def.jacobian = [nu, mu](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::MatrixXd> out) {
    out(0, 0) = 0;
    out(0, 1) = 1;
    out(1, 0) = -2 * nu * y(0) * y(1) - 1 + 3 * mu * y(0) * y(0);
    out(1, 1) = nu * (1 - y(0) * y(0));
  };
  quadratic_cost(def, Eigen::MatrixXd::Identity(2, 2), true);
  def.control = B;
  def.beta = beta;
  def.box = l;

  BenchmarkSpec s;
  s.name = "vanderpol";
  s.system = ControlSystem(std::move(def));
  s.horizon = 3.0;
  s.step = 0.0075;
  s.scale = l;
  s.gamma = 1e-6;
  s.r = 0.9;
  s.basis_kind = BasisKind::kTotalDegree;
  s.degree = degree;
  s.space = space_for(s.basis_kind, 2, degree, B);
  const std::vector<std::pair<MultiIndex, double>> v0 = {{MultiIndex({3, 1}), mu * beta},
                                                         {MultiIndex({0, 2}), beta * nu / 2}};
  s.initial_model = PolynomialModel(s.space, coefficients_from_physical(s.space->basis(), v0, l), l);
  s.train_size = 2;
  s.pool_size = 5;
  s.test_size = 100;
  s.train_seed = 212;
  s.test_seed = 202;
  check_initial_guess(s);
  return s;
}

BenchmarkSpec make_cucker_smale(int agents, double K, double beta) {
  if (agents < 2) throw std::invalid_argument("make_cucker_smale: need at least two agents");
  const int N = agents;
  const int d = 4 * N;
  const int off = 2 * N;  // velocities start here
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, 2 * N);
  B.bottomRows(2 * N).setIdentity();
  const double l = 5.0;

  ControlSystem::Definition def;
  def.dynamics = [N, K, off](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) {
    out.head(off) = y.tail(off);
    for (int i = 0; i < N; ++i) {
      double a0 = 0.0, a1 = 0.0;
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        const double dx = y(2 * i) - y(2 * j), dy = y(2 * i + 1) - y(2 * j + 1);
        const double a = K / (1.0 + dx * dx + dy * dy);
        a0 += a * (y(off + 2 * j) - y(off + 2 * i));
        a1 += a * (y(off + 2 * j + 1) - y(off + 2 * i + 1));
      }
      out(off + 2 * i) = a0 / N;
      out(off + 2 * i + 1) = a1 / N;
    }
  };
  def.jacobian = [N, K, off](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::MatrixXd> out) {
    out.setZero();
    out.topRightCorner(off, off).setIdentity();
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        const double dx = y(2 * i) - y(2 * j), dy = y(2 * i + 1) - y(2 * j + 1);
        const double q = 1.0 + dx * dx + dy * dy;
        const double a = K / q / N;
        // d a / d x_i = -2 K (x_i - x_j) / q^2, scaled by 1/N.
        const double g0 = -2.0 * a / q * dx, g1 = -2.0 * a / q * dy;
        for (int c = 0; c < 2; ++c) {
          const double dv = y(off + 2 * j + c) - y(off + 2 * i + c);
          out(off + 2 * i + c, 2 * i) += dv * g0;
          out(off + 2 * i + c, 2 * i + 1) += dv * g1;
          out(off + 2 * i + c, 2 * j) -= dv * g0;
          out(off + 2 * i + c, 2 * j + 1) -= dv * g1;
          out(off + 2 * i + c, off + 2 * j + c) += a;
          out(off + 2 * i + c, off + 2 * i + c) -= a;
        }
      }
    }
  };
  def.cost = [N, off](const Eigen::Ref<const Eigen::VectorXd>& y) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int i = 0; i < N; ++i) mean += y.segment<2>(off + 2 * i);
    mean /= N;
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += (y.segment<2>(off + 2 * i) - mean).squaredNorm();
    return s / N;
  };
  def.cost_gradient = [N, off](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (int i = 0; i < N; ++i) mean += y.segment<2>(off + 2 * i);
    mean /= N;
    out.head(off).setZero();
    for (int i = 0; i < N; ++i) out.segment<2>(off + 2 * i) = (2.0 / N) * (y.segment<2>(off + 2 * i) - mean);
  };
  def.control = B;
  def.beta = beta;
  def.box = l;
  // Positions drift with the velocities and leave (-l, l) within the horizon.
  def.escape_bound = 10 * l;

  BenchmarkSpec s;
  s.name = "cucker_smale";
  s.system = ControlSystem(std::move(def));
  s.horizon = 3.0;
  s.step = 0.01;
  s.scale = l;
  s.gamma = 1e-5;
  s.r = 0.9;
  s.basis_kind = BasisKind::kHyperbolicCross;
  s.degree = 4;
  s.space = space_for(s.basis_kind, d, 4, B);
  // 10 K beta' sum |v_i|^2 with beta' = beta / 2 the weight of |u|^2 in the cost.
  std::vector<std::pair<MultiIndex, double>> v0;
  for (int k = off; k < d; ++k) {
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    e[static_cast<std::size_t>(k)] = 2;
    v0.emplace_back(MultiIndex(e), 10.0 * K * beta / 2);
  }
  s.initial_model = PolynomialModel(s.space, coefficients_from_physical(s.space->basis(), v0, l), l);
  s.train_size = 5;
  s.pool_size = 5;
  s.test_size = 100;
  s.train_seed = 401;
  s.test_seed = 402;
  check_initial_guess(s);
  return s;
}

BenchmarkSpec make_allen_cahn(double nu, int interior, double beta) {
  if (interior < 3) throw std::invalid_argument("make_allen_cahn: need at least 3 interior nodes");
  const int N = interior + 1;
  const ChebGrid g = cheb_grid(N);
  const int n = interior;

  // Full nodal vector from interior values: boundary values solve the two
  // Neumann rows (D y)_0 = (D y)_N = 0.
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(N + 1, n);
  E.middleRows(1, n).setIdentity();
  Eigen::Matrix2d M;
  M << g.D(0, 0), g.D(0, N), g.D(N, 0), g.D(N, N);
  Eigen::MatrixXd R(2, n);
  R.row(0) = -g.D.row(0).segment(1, n);
  R.row(1) = -g.D.row(N).segment(1, n);
  const Eigen::MatrixXd bnd = M.inverse() * R;
  E.row(0) = bnd.row(0);
  E.row(N) = bnd.row(1);
  const Eigen::MatrixXd L = nu * (g.D2 * E).middleRows(1, n);
  const Eigen::MatrixXd Q = E.transpose() * g.weights.asDiagonal() * E;

  const double omega[3][2] = {{-0.7, -0.4}, {-0.2, 0.2}, {0.4, 0.7}};
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, 3);
  for (int j = 0; j < n; ++j) {
    const double x = g.points(j + 1);
    for (int i = 0; i < 3; ++i) {
      if (x > omega[i][0] && x < omega[i][1]) B(j, i) = 1.0;
    }
  }
  const double l = 10.0;

  ControlSystem::Definition def;
  def.dynamics = [L](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::VectorXd> out) {
    out.noalias() = L * y;
    out.array() += y.array() * (1.0 - y.array().square());
  };
  def.jacobian = [L](const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Ref<Eigen::MatrixXd> out) {
    out = L;
    out.diagonal().array() += 1.0 - 3.0 * y.array().square();
  };
  quadratic_cost(def, Q, false);
  def.control = B;
  def.beta = beta;
  def.box = l;

  BenchmarkSpec s;
  s.name = "allen_cahn";
  s.system = ControlSystem(std::move(def));
  s.horizon = 4.0;
  s.step = 0.02;
  s.scale = l;
  s.gamma_ladder = {1e-1, 8.9e-2, 7.8e-2, 6.7e-2, 5.6e-2, 4.4e-2, 3.3e-2, 2.2e-2, 1.1e-2, 1e-6};
  s.gamma = s.gamma_ladder.front();
  s.r = 0.9;
  s.basis_kind = BasisKind::kHyperbolicCross;
  s.degree = 6;
  s.space = space_for(s.basis_kind, n, 6, B);
  s.initial_model = zero_model(s.space, l);
  s.train_size = 5;
  s.pool_size = 5;
  s.test_size = 100;
  s.train_seed = 301;
  s.test_seed = 302;
  check_initial_guess(s);
  return s;
}

std::vector<std::string> benchmark_names() { return {"lc_circuit", "vanderpol", "allen_cahn", "cucker_smale"}; }

BenchmarkSpec make_benchmark(const std::string& name) {
  if (name == "lc_circuit") return make_lc_circuit();
  if (name == "vanderpol") return make_vanderpol();
  if (name == "allen_cahn") return make_allen_cahn();
  if (name == "cucker_smale") return make_cucker_smale();
  std::ostringstream msg;
  msg << "unknown benchmark '" << name << "'; known:";
  for (const auto& n : benchmark_names()) msg << ' ' << n;
  throw std::invalid_argument(msg.str());
}

std::vector<Eigen::VectorXd> sample_initial_conditions(int dim, double scale, int count, std::uint64_t seed) {
  if (dim < 1 || count < 0 || !(scale > 0)) throw std::invalid_argument("sample_initial_conditions: bad arguments");
  const std::uint64_t key = splitmix64(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd y(dim);
    for (int j = 0; j < dim; ++j) {
      const std::uint64_t ctr = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(dim) + j;
      const std::uint64_t bits = splitmix64(key ^ splitmix64(ctr));
      // (k + 1/2) 2^-53 lies strictly inside (0, 1).
      const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
      y(j) = scale * (2.0 * u - 1.0);
      if (std::abs(y(j)) >= scale) y(j) = std::nextafter(y(j), 0.0);
    }
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<Eigen::VectorXd> sample_initial_conditions(const BenchmarkSpec& spec, int count, std::uint64_t seed) {
  return sample_initial_conditions(spec.system.dim(), spec.scale, count, seed);
}

std::vector<Eigen::VectorXd> training_pool(const BenchmarkSpec& spec) {
  return sample_initial_conditions(spec, spec.pool_size, spec.train_seed);
}

std::vector<Eigen::VectorXd> test_set(const BenchmarkSpec& spec) {
  return sample_initial_conditions(spec, spec.test_size, spec.test_seed);
}

}  // namespace polyfb
