#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "polyfb/control_system.hpp"
#include "polyfb/dynamics.hpp"
#include "polyfb/model.hpp"
#include "polyfb/oracles.hpp"

namespace polyfb {

/// Optimal (or reference) control and state on the grid t_k = k h.
struct ReferenceSolution {
  Eigen::MatrixXd controls;  // m x (K+1)
  Eigen::MatrixXd states;    // d x (K+1)
  double objective = 0.0;
  bool converged = true;
  bool warm_started = false;
  int iterations = 0;
};

/// Trapezoid sum of l(y_k) + (beta/2)|u_k|^2 over the stored samples.
double trajectory_objective(const ControlSystem& sys, const Eigen::Ref<const Eigen::MatrixXd>& states,
                            const Eigen::Ref<const Eigen::MatrixXd>& controls, double step);

struct ReferenceOptions {
  /// Linear-quadratic data; when present the Riccati feedback is used.
  std::optional<Eigen::MatrixXd> linear_A;
  std::optional<Eigen::MatrixXd> linear_Q;
  OpenLoopOptions open_loop;
  /// Feedback whose control signal seeds the open-loop solver when u = 0 diverges.
  const PolynomialModel* warm_start = nullptr;
};

/// One reference per test point, computed in parallel.
std::vector<ReferenceSolution> reference_solutions(const ControlSystem& sys,
                                                   const std::vector<Eigen::VectorXd>& points, double horizon,
                                                   double step, const ReferenceOptions& opts);

struct ValuePair {
  std::size_t index = 0;
  double oracle = 0.0;
  double learned = 0.0;
};

struct EvaluationReport {
  double sse_u = 0.0;
  double sse_y = 0.0;
  double sse_j = 0.0;
  std::vector<ValuePair> pairs;
  std::optional<double> slope;
  std::optional<double> intercept;
  /// Escaped rollouts, excluded from the sums.
  std::vector<std::size_t> failed;
  /// Non-escaped rollouts with |y(T)|_2 above the threshold.
  std::vector<std::size_t> unstabilized;
  std::vector<double> final_norms;  // |y(T)|_2 per test point, +inf on escape
  double threshold = 0.5;

  std::size_t failures() const { return failed.size(); }
  std::size_t unstabilized_count() const { return failed.size() + unstabilized.size(); }
};

/// Rolls out the learned feedback from every test point and compares against
/// the references; throws std::runtime_error when every rollout escapes.
EvaluationReport evaluate(const PolynomialModel& model, const ControlSystem& sys,
                          const std::vector<Eigen::VectorXd>& points,
                          const std::vector<ReferenceSolution>& references, double horizon, double step,
                          double threshold = 0.5);

/// Least squares line learned = slope * oracle + intercept.
std::pair<double, double> scatter_regression(const std::vector<ValuePair>& pairs);

/// {"sse_u", "sse_y", "sse_j", "failures", "slope", "intercept", ...}.
std::string report_json(const EvaluationReport& report);
/// "index,J_oracle,J_learned".
void write_pairs_csv(std::ostream& os, const EvaluationReport& report);

}  // namespace polyfb
