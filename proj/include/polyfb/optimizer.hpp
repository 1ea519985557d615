#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "polyfb/control_system.hpp"
#include "polyfb/model.hpp"
#include "polyfb/objective.hpp"

namespace polyfb {

enum class UpdateMode { kFull, kGreedy };

std::string to_string(UpdateMode mode);
UpdateMode update_mode_from_string(const std::string& name);

struct OptimizerConfig {
  double gamma = 1e-3;
  double r = 0.5;
  double kappa = 0.5;           // sufficient-decrease constant
  double shrink_factor = 0.5;   // backtracking ratio
  int max_iterations = 500;
  int max_backtracks = 40;
  double gtol = 1e-6;
  double tol = 1e-10;
  /// Stop once |Phi_k - Phi_{k-1}| <= tol holds this many iterations in a row.
  int stall_iterations = 5;
  double step_min = 1e-8;
  double step_max = 1e3;
  double initial_step = 1.0;
  UpdateMode update_mode = UpdateMode::kFull;
  /// Greedy score with the l1 subgradient scaled by gamma r (vanishes exactly
  /// at stationary points); false selects the unscaled subgradient rule.
  bool scaled_greedy_score = true;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;       // J~_T(theta) + P(theta)
  double smooth_objective = 0.0;
  double grad_norm = 0.0;       // |d^k|
  double prox_residual = 0.0;   // |theta - prox(theta - d)| at unit step
  double step = 0.0;
  int backtracks = 0;
  std::size_t support = 0;
  double seconds = 0.0;
};

enum class StopReason { kGradientTolerance, kObjectiveStagnation, kStepFailure, kZeroStep, kMaxIterations };

std::string to_string(StopReason reason);

struct OptimizerTrace {
  std::vector<IterationRecord> records;
  StopReason reason = StopReason::kMaxIterations;
  std::string diagnostic;
};

/// Trace CSV: "iter,J,grad_norm,step,support,seconds".
void write_trace_csv(std::ostream& os, const OptimizerTrace& trace);

/// Soft thresholding: a - b if a > b, a + b if a < -b, else 0.
double shrink(double a, double b);

/// theta_j <- shrink(theta_j - s d_j, s gamma r) on every coordinate, or on
/// `coordinate` only when given.
Eigen::VectorXd prox_update(const Eigen::Ref<const Eigen::VectorXd>& theta,
                            const Eigen::Ref<const Eigen::VectorXd>& d, double step, double gamma_r,
                            std::optional<Eigen::Index> coordinate = std::nullopt);

/// argmax_j min_{z in gamma_r * subdiff|.|(theta_j)} |d_j + z|, lowest index on ties.
Eigen::Index greedy_coordinate(const Eigen::Ref<const Eigen::VectorXd>& d,
                               const Eigen::Ref<const Eigen::VectorXd>& theta, double gamma_r);
/// The score maximized by greedy_coordinate, per coordinate.
Eigen::VectorXd greedy_scores(const Eigen::Ref<const Eigen::VectorXd>& d,
                              const Eigen::Ref<const Eigen::VectorXd>& theta, double gamma_r);

/// Barzilai-Borwein initial step from consecutive iterates and directions:
/// (dtheta . dd) / |dd|^2 for odd k, |dtheta|^2 / (dtheta . dd) for even k,
/// clamped to [step_min, step_max]; sqrt(step_min * step_max) when the
/// quotient is undefined or non-positive.
double bb_step(const Eigen::Ref<const Eigen::VectorXd>& theta, const Eigen::Ref<const Eigen::VectorXd>& theta_prev,
               const Eigen::Ref<const Eigen::VectorXd>& d, const Eigen::Ref<const Eigen::VectorXd>& d_prev,
               int k, double step_min, double step_max);

struct BacktrackResult {
  enum class Status { kAccepted, kZeroStep, kFailed };
  Status status = Status::kFailed;
  double step = 0.0;
  Eigen::VectorXd theta;
  double objective = 0.0;
  int trials = 0;
};

/// Tries s = s0 * shrink_factor^i, i = 0, 1, ..., until
///   Phi(theta+) <= Phi(theta) - (kappa / s) |theta - theta+|^2,
/// where Phi is `objective` (+inf for infeasible candidates).
BacktrackResult backtrack(const Eigen::Ref<const Eigen::VectorXd>& theta, double objective_at_theta,
                          const Eigen::Ref<const Eigen::VectorXd>& d, double s0, const OptimizerConfig& cfg,
                          std::optional<Eigen::Index> coordinate,
                          const std::function<double(const Eigen::VectorXd&)>& objective);

/// Raised when the initial guess makes the training objective infinite.
class InfeasibleInitialGuess : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerResult {
  PolynomialModel model;
  OptimizerTrace trace;
};

/// Observer called after each accepted iterate with (k, theta^k, grad J~_T(theta^k)).
using IterationObserver =
    std::function<void(int, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// Proximal gradient iteration with Barzilai-Borwein trial steps and
/// backtracking, on J~_T(theta) + P_{gamma,r}(theta).
OptimizerResult run(const ControlSystem& sys, const TrainingSet& train, const PolynomialModel& initial,
                    const OptimizerConfig& cfg, const IterationObserver& observer = {});

/// Same iteration on an arbitrary smooth function given with its gradient;
/// `smooth` returns +inf where undefined.
struct SmoothProblem {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};
std::pair<Eigen::VectorXd, OptimizerTrace> minimize(const SmoothProblem& problem,
                                                    const Eigen::VectorXd& theta0,
                                                    const OptimizerConfig& cfg,
                                                    const IterationObserver& observer = {});

}  // namespace polyfb
