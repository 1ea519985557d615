#include "polyfb/metrics.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "polyfb/parallel.hpp"

namespace polyfb {

double trajectory_objective(const ControlSystem& sys, const Eigen::Ref<const Eigen::MatrixXd>& states,
                            const Eigen::Ref<const Eigen::MatrixXd>& controls, double step) {
  const int K = static_cast<int>(states.cols()) - 1;
  const Eigen::VectorXd w = trapezoid_weights(K, step);
  double J = 0.0;
  for (int k = 0; k <= K; ++k) {
    J += w(k) * (sys.cost(states.col(k)) + 0.5 * sys.beta() * controls.col(k).squaredNorm());
  }
  return J;
}

std::vector<ReferenceSolution> reference_solutions(const ControlSystem& sys,
                                                   const std::vector<Eigen::VectorXd>& points, double horizon,
                                                   double step, const ReferenceOptions& opts) {
  std::vector<ReferenceSolution> out(points.size());
  if (opts.linear_A) {
    const Eigen::MatrixXd Q = opts.linear_Q ? *opts.linear_Q : Eigen::MatrixXd::Identity(sys.dim(), sys.dim());
    const RiccatiSolution ric = solve_are(*opts.linear_A, sys.control_matrix(), Q, sys.beta());
    parallel_for(points.size(), [&](std::size_t i) {
      const Trajectory t = riccati_rollout(*opts.linear_A, sys.control_matrix(), ric, points[i], horizon, step);
      ReferenceSolution& r = out[i];
      r.states = t.states;
      r.controls = t.controls;
      r.objective = trajectory_objective(sys, r.states, r.controls, step);
    });
    return out;
  }
  parallel_for(points.size(), [&](std::size_t i) {
    OpenLoopSolution sol;
    try {
      sol = open_loop_solve(sys, points[i], horizon, step, opts.open_loop);
    } catch (const OracleError&) {
      if (!opts.warm_start) throw;
      const Trajectory t = integrate_closed_loop(sys, *opts.warm_start, points[i], horizon, step);
      if (t.escaped()) throw OracleError("reference_solutions: the warm-start feedback escapes as well");
      OpenLoopOptions warm = opts.open_loop;
      warm.initial_control = t.controls;
      sol = open_loop_solve(sys, points[i], horizon, step, warm);
    }
    ReferenceSolution& r = out[i];
    r.states = std::move(sol.states);
    r.controls = std::move(sol.controls);
    r.objective = sol.objective;
    r.converged = sol.converged;
    r.warm_started = sol.warm_started;
    r.iterations = sol.iterations;
  });
  return out;
}

EvaluationReport evaluate(const PolynomialModel& model, const ControlSystem& sys,
                          const std::vector<Eigen::VectorXd>& points,
                          const std::vector<ReferenceSolution>& references, double horizon, double step,
                          double threshold) {
  if (points.size() != references.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(points.size()) + " test points but " +
                                std::to_string(references.size()) + " references");
  }
  const int K = step_count(horizon, step);
  for (const auto& r : references) {
    if (r.states.cols() != K + 1 || r.controls.cols() != K + 1) {
      throw std::invalid_argument("evaluate: reference and rollout grids differ");
    }
  }
  std::vector<Trajectory> rollouts(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    rollouts[i] = integrate_closed_loop(sys, model, points[i], horizon, step);
  });

  const Eigen::VectorXd w = trapezoid_weights(K, step);
  EvaluationReport rep;
  rep.threshold = threshold;
  rep.final_norms.assign(points.size(), std::numeric_limits<double>::infinity());
  double num_u = 0, den_u = 0, num_y = 0, den_y = 0, num_j = 0, den_j = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Trajectory& t = rollouts[i];
    if (t.escaped()) {
      rep.failed.push_back(i);
      continue;
    }
    const ReferenceSolution& ref = references[i];
    rep.final_norms[i] = t.states.col(K).norm();
    if (rep.final_norms[i] > threshold) rep.unstabilized.push_back(i);
    for (int k = 0; k <= K; ++k) {
      num_u += w(k) * (t.controls.col(k) - ref.controls.col(k)).squaredNorm();
      den_u += w(k) * ref.controls.col(k).squaredNorm();
      num_y += w(k) * (t.states.col(k) - ref.states.col(k)).squaredNorm();
      den_y += w(k) * ref.states.col(k).squaredNorm();
    }
    const double J = trajectory_objective(sys, t.states, t.controls, step);
    num_j += (ref.objective - J) * (ref.objective - J);
    den_j += ref.objective * ref.objective;
    rep.pairs.push_back({i, ref.objective, J});
  }
  if (rep.pairs.empty()) throw std::runtime_error("evaluate: every test rollout escaped");
  const auto ratio = [](double num, double den) { return den > 0 ? num / den : (num > 0 ? INFINITY : 0.0); };
  rep.sse_u = ratio(num_u, den_u);
  rep.sse_y = ratio(num_y, den_y);
  rep.sse_j = ratio(num_j, den_j);
  if (rep.pairs.size() >= 2) {
    try {
      const auto [a, b] = scatter_regression(rep.pairs);
      rep.slope = a;
      rep.intercept = b;
    } catch (const std::invalid_argument&) {
    }
  }
  return rep;
}

std::pair<double, double> scatter_regression(const std::vector<ValuePair>& pairs) {
  if (pairs.size() < 2) throw std::invalid_argument("scatter_regression: need at least two pairs");
  const double n = static_cast<double>(pairs.size());
  double mx = 0, my = 0;
  for (const auto& p : pairs) {
    mx += p.oracle;
    my += p.learned;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& p : pairs) {
    sxx += (p.oracle - mx) * (p.oracle - mx);
    sxy += (p.oracle - mx) * (p.learned - my);
  }
  if (!(sxx > 0)) throw std::invalid_argument("scatter_regression: oracle values are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

std::string report_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["sse_u"] = report.sse_u;
  j["sse_y"] = report.sse_y;
  j["sse_j"] = report.sse_j;
  j["sse_u_percent"] = 100 * report.sse_u;
  j["sse_y_percent"] = 100 * report.sse_y;
  j["sse_j_percent"] = 100 * report.sse_j;
  j["failures"] = report.failures();
  j["unstabilized"] = report.unstabilized_count();
  j["threshold"] = report.threshold;
  j["evaluated"] = report.pairs.size();
  j["slope"] = report.slope ? nlohmann::json(*report.slope) : nlohmann::json(nullptr);
  j["intercept"] = report.intercept ? nlohmann::json(*report.intercept) : nlohmann::json(nullptr);
  return j.dump(2);
}

void write_pairs_csv(std::ostream& os, const EvaluationReport& report) {
  os << "index,J_oracle,J_learned\n";
  const auto old = os.precision(17);
  for (const auto& p : report.pairs) os << p.index << ',' << p.oracle << ',' << p.learned << '\n';
  os.precision(old);
}

}  // namespace polyfb
