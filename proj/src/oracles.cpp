#include "polyfb/oracles.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <json.hpp>

namespace polyfb {

Eigen::MatrixXd solve_lyapunov(const Eigen::Ref<const Eigen::MatrixXd>& M,
                               const Eigen::Ref<const Eigen::MatrixXd>& Q) {
  const Eigen::Index d = M.rows();
  if (M.cols() != d || Q.rows() != d || Q.cols() != d) {
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  }
  const Eigen::Index n = d * (d + 1) / 2;
  // Position of the upper-triangle entry (i, j), i <= j, row by row.
  auto slot = [d](Eigen::Index i, Eigen::Index j) { return i * d - i * (i - 1) / 2 + (j - i); };

  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs(n);
  Eigen::MatrixXd S(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      // S = M^T E + E M for the symmetric unit E with E_ij = E_ji = 1.
      S.setZero();
      S.col(j) += M.row(i).transpose();
      S.row(i) += M.row(j);
      if (i != j) {
        S.col(i) += M.row(j).transpose();
        S.row(j) += M.row(i);
      }
      const Eigen::Index u = slot(i, j);
      for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = r; c < d; ++c) L(slot(r, c), u) = S(r, c);
      }
    }
  }
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = r; c < d; ++c) rhs(slot(r, c)) = -0.5 * (Q(r, c) + Q(c, r));
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(L);
  if (!lu.isInvertible()) throw OracleError("solve_lyapunov: singular Lyapunov operator");
  const Eigen::VectorXd x = lu.solve(rhs);
  Eigen::MatrixXd P(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      P(i, j) = x(slot(i, j));
      P(j, i) = P(i, j);
    }
  }
  return P;
}

double are_residual(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                    const Eigen::Ref<const Eigen::MatrixXd>& Q, double beta,
                    const Eigen::Ref<const Eigen::MatrixXd>& P) {
  const Eigen::MatrixXd R = A.transpose() * P + P * A - P * B * B.transpose() * P / beta + Q;
  return R.norm();
}

bool is_hurwitz(const Eigen::Ref<const Eigen::MatrixXd>& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  if (es.info() != Eigen::Success) return false;
  return (es.eigenvalues().real().array() < 0.0).all();
}

RiccatiSolution solve_are(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                          const Eigen::Ref<const Eigen::MatrixXd>& Q, double beta, double tol,
                          int max_iterations) {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || B.rows() != d || Q.rows() != d || Q.cols() != d) {
    throw std::invalid_argument("solve_are: dimension mismatch");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("solve_are: beta must be positive");

  Eigen::MatrixXd K;
  if (is_hurwitz(A)) {
    K = Eigen::MatrixXd::Zero(B.cols(), d);
  } else {
    // Bass: with Ab = A + sigma I anti-stable, Ab Z + Z Ab^T = 2 B B^T gives a
    // positive definite Z for controllable pairs and K0 = B^T Z^{-1} stabilizes A.
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    const double sigma = 1.0 + es.eigenvalues().real().cwiseAbs().maxCoeff();
    const Eigen::MatrixXd Ab = A + sigma * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd Z = solve_lyapunov(Ab.transpose(), -2.0 * B * B.transpose());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Z);
    if (!lu.isInvertible()) throw OracleError("solve_are: (A, B) is not controllable, no stabilizing start");
    K = B.transpose() * lu.inverse();
  }
  if (!is_hurwitz(A - B * K)) throw OracleError("solve_are: no stabilizing initial gain found");

  RiccatiSolution sol;
  double best = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::MatrixXd Acl = A - B * K;
    Eigen::MatrixXd P = solve_lyapunov(Acl, Q + beta * K.transpose() * K);
    P = 0.5 * (P + P.transpose()).eval();
    K = B.transpose() * P / beta;
    const double res = are_residual(A, B, Q, beta, P);
    sol.P = P;
    sol.gain = K;
    sol.residual = res;
    sol.iterations = it;
    if (res <= tol) break;
    // Quadratic convergence ends at round-off; stop once progress stops.
    if (res >= 0.5 * best) {
      if (++stalled >= 3) break;
    } else {
      stalled = 0;
    }
    best = std::min(best, res);
  }
  if (!(sol.residual <= tol)) {
    std::ostringstream msg;
    msg << "solve_are: residual stagnated at " << sol.residual << " after " << sol.iterations << " iterations";
    throw OracleError(msg.str());
  }
  if (!is_hurwitz(A - B * sol.gain)) throw OracleError("solve_are: closed loop is not Hurwitz");
  return sol;
}

Trajectory riccati_rollout(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                           const RiccatiSolution& ric, const Eigen::Ref<const Eigen::VectorXd>& y0, double horizon,
                           double step) {
  Trajectory traj = integrate_linear(A - B * ric.gain, y0, horizon, step);
  traj.controls = -ric.gain * traj.states;
  return traj;
}

namespace {

double safety_bound(const ControlSystem& sys, const OpenLoopOptions& opts) {
  return opts.safety_bound ? *opts.safety_bound : 1e3 * std::max(sys.box(), sys.escape_bound());
}

// Forward Crank-Nicolson with piecewise-linear control samples; false on divergence.
bool forward(const ControlSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& y0,
             const Eigen::Ref<const Eigen::MatrixXd>& U, double h, const OpenLoopOptions& opts,
             Eigen::MatrixXd& Y) {
  const int d = sys.dim();
  const int K = static_cast<int>(U.cols()) - 1;
  const double bound = safety_bound(sys, opts);
  const Eigen::MatrixXd& B = sys.control_matrix();
  Y.resize(d, K + 1);
  Y.col(0) = y0;
  Eigen::VectorXd y = y0, Fy(d), z(d), Fz(d);
  sys.dynamics(y, Fy);
  Fy.noalias() += B * U.col(0);
  CrankNicolsonWorkspace ws;
  for (int k = 0; k < K; ++k) {
    const auto u_next = U.col(k + 1);
    auto rhs = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
      sys.dynamics(x, out);
      out.noalias() += B * u_next;
    };
    auto jac = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& out) { sys.jacobian(x, out); };
    if (!crank_nicolson_step(rhs, jac, y, Fy, h, opts.newton, z, Fz, ws)) return false;
    if (!z.allFinite() || z.lpNorm<Eigen::Infinity>() > bound) return false;
    y.swap(z);
    Fy.swap(Fz);
    Y.col(k + 1) = y;
  }
  return true;
}

double weighted_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& w) {
  return ((a.array() * b.array()).colwise().sum().transpose() * w.array()).sum();
}

}  // namespace

double open_loop_cost(const ControlSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& y0,
                      const Eigen::Ref<const Eigen::MatrixXd>& controls, double step,
                      const OpenLoopOptions& opts, Eigen::MatrixXd* states) {
  Eigen::MatrixXd Y;
  if (!forward(sys, y0, controls, step, opts, Y)) return std::numeric_limits<double>::infinity();
  const int K = static_cast<int>(controls.cols()) - 1;
  const Eigen::VectorXd w = trapezoid_weights(K, step);
  double J = 0.0;
  for (int k = 0; k <= K; ++k) {
    J += w(k) * (sys.cost(Y.col(k)) + 0.5 * sys.beta() * controls.col(k).squaredNorm());
  }
  if (states) *states = std::move(Y);
  return J;
}

Eigen::MatrixXd open_loop_gradient(const ControlSystem& sys, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                   const Eigen::Ref<const Eigen::MatrixXd>& controls, double step) {
  const int d = sys.dim();
  const int K = static_cast<int>(controls.cols()) - 1;
  const double half_h = 0.5 * step;
  const Eigen::VectorXd w = trapezoid_weights(K, step);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  // Multipliers lambda_1..lambda_K of the step equations; lambda_0 = lambda_{K+1} = 0.
  Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(d, K + 2);
  Eigen::MatrixXd Df(d, d);
  Eigen::VectorXd gl(d);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  for (int k = K; k >= 1; --k) {
    const auto y = states.col(k);
    sys.jacobian(y, Df);
    sys.cost_gradient(y, gl);
    lu.compute(I - half_h * Df.transpose());
    Eigen::VectorXd rhs = -w(k) * gl;
    if (k < K) rhs.noalias() += lam.col(k + 1) + half_h * (Df.transpose() * lam.col(k + 1));
    lam.col(k) = lu.solve(rhs);
  }
  const Eigen::MatrixXd& B = sys.control_matrix();
  Eigen::MatrixXd G(controls.rows(), K + 1);
  for (int k = 0; k <= K; ++k) {
    G.col(k) = sys.beta() * controls.col(k) - (half_h / w(k)) * (B.transpose() * (lam.col(k) + lam.col(k + 1)));
  }
  return G;
}

OpenLoopSolution open_loop_solve(const ControlSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& y0,
                                 double horizon, double step, const OpenLoopOptions& opts) {
  const int K = step_count(horizon, step);
  const int m = sys.control_dim();
  OpenLoopSolution sol;
  sol.step = step;
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(m, K + 1);
  if (opts.initial_control) {
    if (opts.initial_control->rows() != m || opts.initial_control->cols() != K + 1) {
      throw std::invalid_argument("open_loop_solve: initial control has the wrong shape");
    }
    U = *opts.initial_control;
    sol.warm_started = true;
  }
  const Eigen::VectorXd w = trapezoid_weights(K, step);
  Eigen::MatrixXd Y;
  double J = open_loop_cost(sys, y0, U, step, opts, &Y);
  if (!std::isfinite(J)) throw OracleError("open_loop_solve: the initial control diverges");
  Eigen::MatrixXd G = open_loop_gradient(sys, Y, U, step);

  // L-BFGS memory (or the previous pair for Barzilai-Borwein steps).
  std::deque<Eigen::MatrixXd> S_hist, Yg_hist;
  Eigen::MatrixXd Y_trial, D;
  const bool bfgs = opts.method == OpenLoopMethod::kLbfgs;
  for (int it = 0; it < opts.max_iterations; ++it) {
    sol.iterations = it;
    if (G.lpNorm<Eigen::Infinity>() <= opts.tolerance) {
      sol.converged = true;
      break;
    }
    double s = 1.0;
    if (S_hist.empty()) {
      D = -G;
      s = std::min(opts.step_max, 1.0 / sys.beta());
    } else if (bfgs) {
      // Two-loop recursion in the weighted inner product.
      const std::size_t n = S_hist.size();
      std::vector<double> alpha(n), rho(n);
      D = -G;
      for (std::size_t i = n; i-- > 0;) {
        rho[i] = 1.0 / weighted_dot(S_hist[i], Yg_hist[i], w);
        alpha[i] = rho[i] * weighted_dot(S_hist[i], D, w);
        D -= alpha[i] * Yg_hist[i];
      }
      D *= weighted_dot(S_hist.back(), Yg_hist.back(), w) / weighted_dot(Yg_hist.back(), Yg_hist.back(), w);
      for (std::size_t i = 0; i < n; ++i) {
        const double b = rho[i] * weighted_dot(Yg_hist[i], D, w);
        D += (alpha[i] - b) * S_hist[i];
      }
      if (!(weighted_dot(G, D, w) < 0.0)) {
        S_hist.clear();
        Yg_hist.clear();
        D = -G;
        s = std::min(opts.step_max, 1.0 / sys.beta());
      }
    } else {
      const Eigen::MatrixXd& dU = S_hist.back();
      const Eigen::MatrixXd& dG = Yg_hist.back();
      const double cross = weighted_dot(dU, dG, w);
      s = (it % 2 != 0) ? cross / weighted_dot(dG, dG, w) : weighted_dot(dU, dU, w) / cross;
      if (!(s > 0.0) || !std::isfinite(s)) s = 1.0 / sys.beta();
      s = std::clamp(s, opts.step_min, opts.step_max);
      D = -G;
    }
    const double slope = weighted_dot(G, D, w);
    bool accepted = false;
    Eigen::MatrixXd trial, G_new;
    for (int b = 0; b < opts.max_backtracks; ++b, s *= opts.shrink_factor) {
      trial = U + s * D;
      const double Jt = open_loop_cost(sys, y0, trial, step, opts, &Y_trial);
      if (!std::isfinite(Jt)) continue;
      if (Jt <= J + opts.armijo * s * slope) {
        J = Jt;
        accepted = true;
        break;
      }
      // Near the optimum the decrease drowns in round-off of J; fall back to
      // the approximate Wolfe test on the directional derivative.
      if (Jt <= J + 1e-12 * std::abs(J)) {
        G_new = open_loop_gradient(sys, Y_trial, trial, step);
        const double slope_t = weighted_dot(G_new, D, w);
        if (slope_t <= (2 * opts.armijo - 1) * slope && slope_t >= 0.9 * slope) {
          J = Jt;
          accepted = true;
          break;
        }
        G_new.resize(0, 0);
      }
    }
    if (!accepted) break;
    if (G_new.size() == 0) G_new = open_loop_gradient(sys, Y_trial, trial, step);
    Eigen::MatrixXd dU = trial - U, dG = G_new - G;
    U = std::move(trial);
    Y.swap(Y_trial);
    G = std::move(G_new);
    if (bfgs && weighted_dot(dU, dG, w) <= 1e-12 * std::sqrt(weighted_dot(dU, dU, w) * weighted_dot(dG, dG, w))) {
      sol.iterations = it + 1;
      continue;
    }
    S_hist.push_back(std::move(dU));
    Yg_hist.push_back(std::move(dG));
    const std::size_t keep = bfgs ? static_cast<std::size_t>(std::max(1, opts.memory)) : 1;
    while (S_hist.size() > keep) {
      S_hist.pop_front();
      Yg_hist.pop_front();
    }
    sol.iterations = it + 1;
  }
  sol.controls = std::move(U);
  sol.states = std::move(Y);
  sol.objective = J;
  sol.gradient_sup = G.lpNorm<Eigen::Infinity>();
  if (sol.gradient_sup <= opts.tolerance) sol.converged = true;
  return sol;
}

void write_open_loop_csv(std::ostream& os, const OpenLoopSolution& sol) {
  const Eigen::Index m = sol.controls.rows();
  const Eigen::Index d = sol.states.rows();
  os << 't';
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << (i + 1);
  for (Eigen::Index i = 0; i < d; ++i) os << ",y" << (i + 1);
  os << '\n';
  const auto old = os.precision(17);
  for (Eigen::Index k = 0; k < sol.controls.cols(); ++k) {
    os << sol.step * static_cast<double>(k);
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << sol.controls(i, k);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << sol.states(i, k);
    os << '\n';
  }
  os.precision(old);
}

std::string open_loop_summary_json(const OpenLoopSolution& sol) {
  nlohmann::json j;
  j["J"] = sol.objective;
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  j["gradient_sup"] = sol.gradient_sup;
  j["warm_started"] = sol.warm_started;
  return j.dump(2);
}

}  // namespace polyfb
