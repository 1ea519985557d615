#include "polyfb/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

namespace polyfb {

std::string to_string(UpdateMode mode) { return mode == UpdateMode::kFull ? "full" : "greedy"; }

UpdateMode update_mode_from_string(const std::string& name) {
  if (name == "full") return UpdateMode::kFull;
  if (name == "greedy") return UpdateMode::kGreedy;
  throw std::invalid_argument("unknown update mode '" + name + "' (expected full or greedy)");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kGradientTolerance: return "gradient_tolerance";
    case StopReason::kObjectiveStagnation: return "objective_stagnation";
    case StopReason::kStepFailure: return "step_failure";
    case StopReason::kZeroStep: return "zero_step";
    case StopReason::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("OptimizerConfig: " + what); };
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma must be finite and >= 0");
  if (!(r >= 0.0 && r <= 1.0)) fail("r must lie in [0, 1]");
  if (!(kappa > 0.0 && kappa < 1.0)) fail("kappa must lie in (0, 1)");
  if (!(shrink_factor > 0.0 && shrink_factor < 1.0)) fail("shrink_factor must lie in (0, 1)");
  if (max_iterations < 0) fail("max_iterations must be >= 0");
  if (max_backtracks < 1) fail("max_backtracks must be >= 1");
  if (!(gtol >= 0.0)) fail("gtol must be >= 0");
  if (!(tol >= 0.0)) fail("tol must be >= 0");
  if (stall_iterations < 1) fail("stall_iterations must be >= 1");
  if (!(step_min > 0.0 && step_max >= step_min)) fail("need 0 < step_min <= step_max");
  if (!(initial_step > 0.0)) fail("initial_step must be > 0");
}

void write_trace_csv(std::ostream& os, const OptimizerTrace& trace) {
  const auto old = os.precision(17);
  os << "iter,J,grad_norm,step,support,seconds\n";
  for (const auto& rec : trace.records) {
    os << rec.iteration << ',' << rec.objective << ',' << rec.grad_norm << ',' << rec.step << ','
       << rec.support << ',' << rec.seconds << '\n';
  }
  os.precision(old);
}

double shrink(double a, double b) {
  if (a - b > 0.0) return a - b;
  if (a + b < 0.0) return a + b;
  return 0.0;
}

Eigen::VectorXd prox_update(const Eigen::Ref<const Eigen::VectorXd>& theta,
                            const Eigen::Ref<const Eigen::VectorXd>& d, double step, double gamma_r,
                            std::optional<Eigen::Index> coordinate) {
  Eigen::VectorXd out = theta;
  const double thresh = step * gamma_r;
  if (coordinate) {
    const Eigen::Index j = *coordinate;
    out(j) = shrink(theta(j) - step * d(j), thresh);
    return out;
  }
  for (Eigen::Index j = 0; j < theta.size(); ++j) out(j) = shrink(theta(j) - step * d(j), thresh);
  return out;
}

Eigen::VectorXd greedy_scores(const Eigen::Ref<const Eigen::VectorXd>& d,
                              const Eigen::Ref<const Eigen::VectorXd>& theta, double gamma_r) {
  Eigen::VectorXd s(d.size());
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (theta(j) > 0.0) {
      s(j) = std::abs(d(j) + gamma_r);
    } else if (theta(j) < 0.0) {
      s(j) = std::abs(d(j) - gamma_r);
    } else {
      s(j) = std::max(std::abs(d(j)) - gamma_r, 0.0);
    }
  }
  return s;
}

Eigen::Index greedy_coordinate(const Eigen::Ref<const Eigen::VectorXd>& d,
                               const Eigen::Ref<const Eigen::VectorXd>& theta, double gamma_r) {
  const Eigen::VectorXd s = greedy_scores(d, theta, gamma_r);
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < s.size(); ++j) {
    if (s(j) > s(best)) best = j;
  }
  return best;
}

double bb_step(const Eigen::Ref<const Eigen::VectorXd>& theta, const Eigen::Ref<const Eigen::VectorXd>& theta_prev,
               const Eigen::Ref<const Eigen::VectorXd>& d, const Eigen::Ref<const Eigen::VectorXd>& d_prev,
               int k, double step_min, double step_max) {
  const Eigen::VectorXd dt = theta - theta_prev;
  const Eigen::VectorXd dd = d - d_prev;
  const double cross = dt.dot(dd);
  const double num = (k % 2 != 0) ? cross : dt.squaredNorm();
  const double den = (k % 2 != 0) ? dd.squaredNorm() : cross;
  const double fallback = std::sqrt(step_min * step_max);
  if (!(den > 0.0) || !std::isfinite(den) || !std::isfinite(num)) return fallback;
  const double s = num / den;
  if (!(s > 0.0) || !std::isfinite(s)) return fallback;
  return std::clamp(s, step_min, step_max);
}

BacktrackResult backtrack(const Eigen::Ref<const Eigen::VectorXd>& theta, double objective_at_theta,
                          const Eigen::Ref<const Eigen::VectorXd>& d, double s0, const OptimizerConfig& cfg,
                          std::optional<Eigen::Index> coordinate,
                          const std::function<double(const Eigen::VectorXd&)>& objective) {
  BacktrackResult res;
  const double gamma_r = cfg.gamma * cfg.r;
  double s = s0;
  for (int i = 0; i < cfg.max_backtracks; ++i, s *= cfg.shrink_factor) {
    res.trials = i + 1;
    Eigen::VectorXd cand = prox_update(theta, d, s, gamma_r, coordinate);
    if (cand == theta) {
      res.status = BacktrackResult::Status::kZeroStep;
      res.step = s;
      res.theta = std::move(cand);
      res.objective = objective_at_theta;
      return res;
    }
    const double phi = objective(cand);
    if (!std::isfinite(phi)) continue;
    const double decrease = cfg.kappa / s * (theta - cand).squaredNorm();
    if (phi <= objective_at_theta - decrease) {
      res.status = BacktrackResult::Status::kAccepted;
      res.step = s;
      res.theta = std::move(cand);
      res.objective = phi;
      return res;
    }
  }
  res.status = BacktrackResult::Status::kFailed;
  res.step = s;
  return res;
}

namespace {

std::size_t count_support(const Eigen::VectorXd& theta) {
  std::size_t n = 0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) n += theta(j) != 0.0;
  return n;
}

}  // namespace

std::pair<Eigen::VectorXd, OptimizerTrace> minimize(const SmoothProblem& problem,
                                                    const Eigen::VectorXd& theta0,
                                                    const OptimizerConfig& cfg,
                                                    const IterationObserver& observer) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const double gamma_r = cfg.gamma * cfg.r;
  const double greedy_weight = cfg.scaled_greedy_score ? gamma_r : 1.0;

  auto full_objective = [&](const Eigen::VectorXd& th) {
    const double j = problem.value(th);
    return std::isfinite(j) ? j + penalty(th, cfg.gamma, cfg.r) : std::numeric_limits<double>::infinity();
  };

  Eigen::VectorXd theta = theta0;
  const double smooth0 = problem.value(theta);
  if (!std::isfinite(smooth0)) {
    throw InfeasibleInitialGuess(
        "initial guess is infeasible (a training trajectory leaves the admissible region); "
        "choose a different initial coefficient vector");
  }
  double smooth = smooth0;
  double phi = smooth + penalty(theta, cfg.gamma, cfg.r);
  Eigen::VectorXd g = problem.gradient(theta);
  Eigen::VectorXd d = g + cfg.gamma * (1.0 - cfg.r) * theta;

  OptimizerTrace trace;
  auto record = [&](int k, double step, int backtracks) {
    IterationRecord rec;
    rec.iteration = k;
    rec.objective = phi;
    rec.smooth_objective = smooth;
    rec.grad_norm = d.norm();
    rec.prox_residual = (theta - prox_update(theta, d, 1.0, gamma_r)).norm();
    rec.step = step;
    rec.backtracks = backtracks;
    rec.support = count_support(theta);
    rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
    trace.records.push_back(rec);
  };
  record(0, 0.0, 0);
  if (observer) observer(0, theta, g);

  Eigen::VectorXd theta_prev, d_prev;
  int stalled = 0;
  trace.reason = StopReason::kMaxIterations;
  for (int k = 0; k < cfg.max_iterations; ++k) {
    if (d.norm() <= cfg.gtol) {
      trace.reason = StopReason::kGradientTolerance;
      break;
    }
    const double s0 = k == 0 ? std::clamp(cfg.initial_step, cfg.step_min, cfg.step_max)
                             : bb_step(theta, theta_prev, d, d_prev, k, cfg.step_min, cfg.step_max);
    std::optional<Eigen::Index> coord;
    if (cfg.update_mode == UpdateMode::kGreedy) coord = greedy_coordinate(d, theta, greedy_weight);

    const BacktrackResult bt = backtrack(theta, phi, d, s0, cfg, coord, full_objective);
    if (bt.status == BacktrackResult::Status::kZeroStep) {
      trace.reason = StopReason::kZeroStep;
      break;
    }
    if (bt.status == BacktrackResult::Status::kFailed) {
      trace.reason = StopReason::kStepFailure;
      std::ostringstream msg;
      msg << "no acceptable step after " << bt.trials << " trials from s0=" << s0 << " at iteration " << k;
      trace.diagnostic = msg.str();
      break;
    }

    Eigen::VectorXd g_next;
    try {
      g_next = problem.gradient(bt.theta);
    } catch (const GradientUnavailable& e) {
      trace.reason = StopReason::kStepFailure;
      trace.diagnostic = e.what();
      break;
    }
    theta_prev = std::move(theta);
    d_prev = std::move(d);
    theta = bt.theta;
    g = std::move(g_next);
    d = g + cfg.gamma * (1.0 - cfg.r) * theta;
    const double phi_prev = phi;
    phi = bt.objective;
    smooth = phi - penalty(theta, cfg.gamma, cfg.r);
    record(k + 1, bt.step, bt.trials - 1);
    if (observer) observer(k + 1, theta, g);
    stalled = std::abs(phi - phi_prev) <= cfg.tol ? stalled + 1 : 0;
    if (stalled >= cfg.stall_iterations) {
      trace.reason = StopReason::kObjectiveStagnation;
      break;
    }
  }
  return {theta, trace};
}

OptimizerResult run(const ControlSystem& sys, const TrainingSet& train, const PolynomialModel& initial,
                    const OptimizerConfig& cfg, const IterationObserver& observer) {
  train.validate(sys);
  // The line search evaluates J~ at the candidate that is then accepted; keep
  // that forward solve so the gradient does not integrate the same trajectories again.
  struct Cache {
    Eigen::VectorXd theta;
    ObjectiveReport report;
  };
  auto cache = std::make_shared<Cache>();
  SmoothProblem problem;
  problem.value = [&, cache](const Eigen::VectorXd& th) {
    cache->theta = th;
    cache->report = cost(initial.with_theta(th), sys, train);
    return cache->report.value;
  };
  problem.gradient = [&, cache](const Eigen::VectorXd& th) {
    const PolynomialModel model = initial.with_theta(th);
    if (cache->theta.size() == th.size() && cache->theta == th) {
      return gradient_from_report(model, sys, train, cache->report);
    }
    return gradient(model, sys, train).gradient;
  };
  auto [theta, trace] = minimize(problem, initial.theta(), cfg, observer);
  return OptimizerResult{initial.with_theta(std::move(theta)), std::move(trace)};
}

}  // namespace polyfb
