#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "polyfb/control_system.hpp"
#include "polyfb/crank_nicolson.hpp"
#include "polyfb/dynamics.hpp"

namespace polyfb {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solves M^T P + P M = -Q for symmetric Q through the d(d+1)/2 unknowns of
/// the upper triangle of P.
Eigen::MatrixXd solve_lyapunov(const Eigen::Ref<const Eigen::MatrixXd>& M,
                               const Eigen::Ref<const Eigen::MatrixXd>& Q);

struct RiccatiSolution {
  Eigen::MatrixXd P;     // A^T P + P A - (1/beta) P B B^T P + Q = 0
  Eigen::MatrixXd gain;  // K = (1/beta) B^T P, so u = -K y
  double residual = 0.0;
  int iterations = 0;
};

/// Newton-Kleinman iteration from a stabilizing gain obtained by Bass's
/// shifted-Lyapunov construction. The value of the associated problem with
/// running cost (1/2)(y^T Q y + beta |u|^2) is V(y) = (1/2) y^T P y.
RiccatiSolution solve_are(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                          const Eigen::Ref<const Eigen::MatrixXd>& Q, double beta, double tol = 1e-10,
                          int max_iterations = 100);

/// ARE residual, Frobenius norm.
double are_residual(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                    const Eigen::Ref<const Eigen::MatrixXd>& Q, double beta,
                    const Eigen::Ref<const Eigen::MatrixXd>& P);

/// True when every eigenvalue has a negative real part.
bool is_hurwitz(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// Closed-loop rollout of u = -K y on y' = A y + B u with Crank-Nicolson.
Trajectory riccati_rollout(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                           const RiccatiSolution& ric, const Eigen::Ref<const Eigen::VectorXd>& y0, double horizon,
                           double step);

enum class OpenLoopMethod {
  kLbfgs,     // limited-memory BFGS directions, Armijo backtracking from a unit step
  kGradient,  // steepest descent with alternating Barzilai-Borwein trial steps
};

struct OpenLoopOptions {
  OpenLoopMethod method = OpenLoopMethod::kLbfgs;
  int memory = 30;
  double tolerance = 1e-6;  // on the sup norm of the L2 gradient
  int max_iterations = 20000;
  double armijo = 1e-4;
  double shrink_factor = 0.5;
  int max_backtracks = 60;
  double step_min = 1e-10;
  double step_max = 1e6;
  /// States with |y|_inf above this bound count as diverged (candidate rejected).
  std::optional<double> safety_bound;
  NewtonOptions newton;
  /// Optional m x (K+1) initial control; zero when absent.
  std::optional<Eigen::MatrixXd> initial_control;
};

struct OpenLoopSolution {
  double step = 0.0;
  Eigen::MatrixXd controls;  // m x (K+1)
  Eigen::MatrixXd states;    // d x (K+1)
  double objective = 0.0;
  double gradient_sup = 0.0;
  int iterations = 0;
  bool converged = false;
  bool warm_started = false;
};

/// J(u, y0) = trapezoid sum of l(y_k) + (beta/2)|u_k|^2 along the Crank-Nicolson
/// solution of y' = f(y) + B u; +inf if the state diverges.
double open_loop_cost(const ControlSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& y0,
                      const Eigen::Ref<const Eigen::MatrixXd>& controls, double step,
                      const OpenLoopOptions& opts, Eigen::MatrixXd* states = nullptr);

/// L2 gradient of open_loop_cost with respect to the control samples, from the
/// exact adjoint of the discrete scheme. `states` must be the forward solution.
Eigen::MatrixXd open_loop_gradient(const ControlSystem& sys, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                   const Eigen::Ref<const Eigen::MatrixXd>& controls, double step);

/// Descent in L2 with Armijo backtracking; the search direction comes from
/// `opts.method`. Returns the last iterate with converged=false when the
/// iteration budget runs out. Throws OracleError when the initial control diverges.
OpenLoopSolution open_loop_solve(const ControlSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& y0,
                                 double horizon, double step, const OpenLoopOptions& opts = {});

/// CSV "t,u1..um,y1..yd".
void write_open_loop_csv(std::ostream& os, const OpenLoopSolution& sol);
/// JSON {"J", "iterations", "converged"} plus the gradient norm and warm-start flag.
std::string open_loop_summary_json(const OpenLoopSolution& sol);

}  // namespace polyfb
