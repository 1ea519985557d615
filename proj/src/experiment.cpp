#include "polyfb/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "polyfb/dynamics.hpp"
#include "polyfb/objective.hpp"

namespace polyfb {

using nlohmann::json;

std::string to_string(InitialGuess guess) {
  switch (guess) {
    case InitialGuess::kZero: return "zero";
    case InitialGuess::kAnalytic: return "analytic";
    case InitialGuess::kWarmStart: return "warm_start";
  }
  return "unknown";
}

namespace {

InitialGuess initial_guess_from_string(const std::string& name) {
  if (name == "zero") return InitialGuess::kZero;
  if (name == "analytic") return InitialGuess::kAnalytic;
  if (name == "warm_start") return InitialGuess::kWarmStart;
  throw ConfigError("initial_guess must be zero, analytic or warm_start, got '" + name + "'");
}

StopReason stop_reason_from_string(const std::string& name) {
  for (auto r : {StopReason::kGradientTolerance, StopReason::kObjectiveStagnation, StopReason::kStepFailure,
                 StopReason::kZeroStep, StopReason::kMaxIterations}) {
    if (to_string(r) == name) return r;
  }
  throw FormatError("unknown stop reason '" + name + "'");
}

// Strict typed reads: a key of the wrong type is a configuration error.
class Reader {
 public:
  Reader(const json& j, std::string where, std::set<std::string> allowed) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (!allowed.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& at(const std::string& key) const { return j_.at(key); }

  double number(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "a finite number");
    return x;
  }
  int integer(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "a 32-bit integer");
    return static_cast<int>(x);
  }
  std::uint64_t unsigned_integer(const std::string& key) const {
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(key, "a non-negative integer");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  std::string string(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "a string");
    return v.get<std::string>();
  }
  bool boolean(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "a boolean");
    return v.get<bool>();
  }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(where_ + ": '" + key + "' must be " + what);
  }

 private:
  const json& j_;
  std::string where_;
};

OptimizerConfig parse_optimizer(const json& j) {
  const Reader r(j, "optimizer",
                 {"kappa", "shrink_factor", "max_iterations", "max_backtracks", "gtol", "tol", "stall_iterations",
                  "step_min", "step_max", "initial_step", "update_mode", "scaled_greedy_score"});
  OptimizerConfig c;
  if (r.has("kappa")) c.kappa = r.number("kappa");
  if (r.has("shrink_factor")) c.shrink_factor = r.number("shrink_factor");
  if (r.has("max_iterations")) c.max_iterations = r.integer("max_iterations");
  if (r.has("max_backtracks")) c.max_backtracks = r.integer("max_backtracks");
  if (r.has("gtol")) c.gtol = r.number("gtol");
  if (r.has("tol")) c.tol = r.number("tol");
  if (r.has("stall_iterations")) c.stall_iterations = r.integer("stall_iterations");
  if (r.has("step_min")) c.step_min = r.number("step_min");
  if (r.has("step_max")) c.step_max = r.number("step_max");
  if (r.has("initial_step")) c.initial_step = r.number("initial_step");
  if (r.has("update_mode")) {
    try {
      c.update_mode = update_mode_from_string(r.string("update_mode"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("optimizer: ") + e.what());
    }
  }
  if (r.has("scaled_greedy_score")) c.scaled_greedy_score = r.boolean("scaled_greedy_score");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json optimizer_to_json(const OptimizerConfig& c) {
  return {{"kappa", c.kappa},
          {"shrink_factor", c.shrink_factor},
          {"max_iterations", c.max_iterations},
          {"max_backtracks", c.max_backtracks},
          {"gtol", c.gtol},
          {"tol", c.tol},
          {"stall_iterations", c.stall_iterations},
          {"step_min", c.step_min},
          {"step_max", c.step_max},
          {"initial_step", c.initial_step},
          {"update_mode", to_string(c.update_mode)},
          {"scaled_greedy_score", c.scaled_greedy_score}};
}

OpenLoopOptions parse_open_loop(const json& j) {
  const Reader r(j, "open_loop", {"method", "memory", "tolerance", "max_iterations"});
  OpenLoopOptions o;
  if (r.has("method")) {
    const std::string m = r.string("method");
    if (m == "lbfgs") {
      o.method = OpenLoopMethod::kLbfgs;
    } else if (m == "gradient") {
      o.method = OpenLoopMethod::kGradient;
    } else {
      r.fail("method", "lbfgs or gradient");
    }
  }
  if (r.has("memory")) o.memory = r.integer("memory");
  if (r.has("tolerance")) o.tolerance = r.number("tolerance");
  if (r.has("max_iterations")) o.max_iterations = r.integer("max_iterations");
  if (o.memory < 1) r.fail("memory", ">= 1");
  if (!(o.tolerance > 0)) r.fail("tolerance", "> 0");
  if (o.max_iterations < 1) r.fail("max_iterations", ">= 1");
  return o;
}

json open_loop_to_json(const OpenLoopOptions& o) {
  return {{"method", o.method == OpenLoopMethod::kLbfgs ? "lbfgs" : "gradient"},
          {"memory", o.memory},
          {"tolerance", o.tolerance},
          {"max_iterations", o.max_iterations}};
}

template <typename T>
std::vector<T> scalar_or_list(const Reader& r, const std::string& key, T (Reader::*get)(const std::string&) const) {
  const json& v = r.at(key);
  if (!v.is_array()) return {(r.*get)(key)};
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const json one = {{key, v[i]}};
    const Reader sub(one, "config", {key});
    out.push_back((sub.*get)(key));
  }
  if (out.empty()) r.fail(key, "non-empty");
  return out;
}

void write_number(std::ostream& os, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  os.write(buf, res.ptr - buf);
}

json report_to_json(const EvaluationReport& rep) {
  json finals = json::array();
  for (double x : rep.final_norms) finals.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  json pairs = json::array();
  for (const auto& p : rep.pairs) pairs.push_back({p.index, p.oracle, p.learned});
  return {{"sse_u", rep.sse_u},
          {"sse_y", rep.sse_y},
          {"sse_j", rep.sse_j},
          {"failed", rep.failed},
          {"unstabilized", rep.unstabilized},
          {"threshold", rep.threshold},
          {"final_norms", finals},
          {"pairs", pairs},
          {"slope", rep.slope ? json(*rep.slope) : json(nullptr)},
          {"intercept", rep.intercept ? json(*rep.intercept) : json(nullptr)}};
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport rep;
  rep.sse_u = j.at("sse_u").get<double>();
  rep.sse_y = j.at("sse_y").get<double>();
  rep.sse_j = j.at("sse_j").get<double>();
  rep.failed = j.at("failed").get<std::vector<std::size_t>>();
  rep.unstabilized = j.at("unstabilized").get<std::vector<std::size_t>>();
  rep.threshold = j.at("threshold").get<double>();
  for (const auto& x : j.at("final_norms")) {
    rep.final_norms.push_back(x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>());
  }
  for (const auto& p : j.at("pairs")) {
    rep.pairs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  if (!j.at("slope").is_null()) rep.slope = j.at("slope").get<double>();
  if (!j.at("intercept").is_null()) rep.intercept = j.at("intercept").get<double>();
  return rep;
}

BenchmarkSpec base_benchmark(const std::string& name, std::optional<double> beta) {
  try {
    if (!beta) return make_benchmark(name);
    if (name == "lc_circuit") return make_lc_circuit(*beta);
    if (name == "vanderpol") return make_vanderpol(4, 1.5, 0.8, *beta);
    if (name == "allen_cahn") return make_allen_cahn(0.5, 19, *beta);
    if (name == "cucker_smale") return make_cucker_smale(10, 0.1, *beta);
    return make_benchmark(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ReferenceOptions reference_options(const BenchmarkSpec& spec, const ExperimentConfig& cfg) {
  ReferenceOptions ro;
  if (spec.linear) {
    ro.linear_A = spec.linear->A;
    ro.linear_Q = spec.linear->Q;
  }
  ro.open_loop = cfg.open_loop;
  ro.warm_start = &spec.initial_model;
  return ro;
}

std::optional<EvaluationReport> try_evaluate(const PolynomialModel& model, const BenchmarkSpec& spec,
                                             const std::vector<Eigen::VectorXd>& pts,
                                             const std::vector<ReferenceSolution>& refs, double threshold,
                                             std::string* error) {
  try {
    return evaluate(model, spec.system, pts, refs, spec.horizon, spec.step, threshold);
  } catch (const std::runtime_error& e) {
    if (error) *error = e.what();
    return std::nullopt;
  }
}

void write_trajectories_csv(std::ostream& os, const BenchmarkSpec& spec, const PolynomialModel& model,
                            const std::vector<Eigen::VectorXd>& pts, const std::vector<ReferenceSolution>& refs,
                            int count) {
  const int d = spec.system.dim(), m = spec.system.control_dim();
  os << "ic,source,t";
  for (int i = 1; i <= d; ++i) os << ",y" << i;
  for (int i = 1; i <= m; ++i) os << ",u" << i;
  os << '\n';
  const auto emit = [&](std::size_t ic, const char* source, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& U) {
    for (Eigen::Index k = 0; k < Y.cols(); ++k) {
      os << ic << ',' << source << ',';
      write_number(os, static_cast<double>(k) * spec.step);
      for (int i = 0; i < d; ++i) {
        os << ',';
        write_number(os, Y(i, k));
      }
      for (int i = 0; i < m; ++i) {
        os << ',';
        write_number(os, U(i, k));
      }
      os << '\n';
    }
  };
  const std::size_t n = std::min(pts.size(), static_cast<std::size_t>(std::max(count, 0)));
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory t = integrate_closed_loop(spec.system, model, pts[i], spec.horizon, spec.step);
    emit(i, "learned", t.states, t.controls);
    emit(i, "oracle", refs[i].states, refs[i].controls);
  }
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
  if (!os) throw std::runtime_error("error while writing " + path.string());
}

}  // namespace

std::string hex_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_hex_double(const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double x = std::strtod(begin, &end);
  if (text.empty() || end != begin + text.size()) throw FormatError("not a number: '" + text + "'");
  return x;
}

ExperimentConfig parse_config(const json& j) {
  const Reader r(j, "config",
                 {"benchmark", "basis_kind", "degree", "beta", "gamma", "r", "horizon", "step", "train_sizes",
                  "pool_size", "test_size", "train_seed", "test_seed", "optimizer", "open_loop", "initial_guess",
                  "warm_start_from", "threshold", "trajectories", "output_dir"});
  ExperimentConfig c;
  if (!r.has("benchmark")) throw ConfigError("config: 'benchmark' is required");
  c.benchmark = r.string("benchmark");
  const auto names = benchmark_names();
  if (std::find(names.begin(), names.end(), c.benchmark) == names.end()) {
    throw ConfigError("config: unknown benchmark '" + c.benchmark + "'");
  }
  if (r.has("basis_kind")) {
    const std::string k = r.string("basis_kind");
    if (k == "total_degree") {
      c.basis_kind = BasisKind::kTotalDegree;
    } else if (k == "hyperbolic_cross") {
      c.basis_kind = BasisKind::kHyperbolicCross;
    } else {
      r.fail("basis_kind", "total_degree or hyperbolic_cross");
    }
  }
  if (r.has("degree")) {
    c.degree = r.integer("degree");
    if (*c.degree < 2) r.fail("degree", ">= 2");
  }
  if (r.has("beta")) {
    c.beta = r.number("beta");
    if (!(*c.beta > 0)) r.fail("beta", "> 0");
  }
  if (r.has("gamma")) {
    c.gamma = scalar_or_list<double>(r, "gamma", &Reader::number);
    for (std::size_t i = 0; i < c.gamma.size(); ++i) {
      if (!(c.gamma[i] >= 0)) r.fail("gamma", "non-negative");
      if (i > 0 && !(c.gamma[i] < c.gamma[i - 1])) r.fail("gamma", "strictly decreasing");
    }
  }
  if (r.has("r")) {
    c.r = r.number("r");
    if (!(*c.r >= 0 && *c.r <= 1)) r.fail("r", "in [0, 1]");
  }
  if (r.has("horizon")) {
    c.horizon = r.number("horizon");
    if (!(*c.horizon > 0)) r.fail("horizon", "> 0");
  }
  if (r.has("step")) {
    c.step = r.number("step");
    if (!(*c.step > 0)) r.fail("step", "> 0");
  }
  if (r.has("train_sizes")) {
    c.train_sizes = scalar_or_list<int>(r, "train_sizes", &Reader::integer);
    for (int s : c.train_sizes) {
      if (s < 1) r.fail("train_sizes", "positive");
    }
  }
  if (r.has("pool_size")) {
    c.pool_size = r.integer("pool_size");
    if (*c.pool_size < 1) r.fail("pool_size", ">= 1");
  }
  if (r.has("test_size")) {
    c.test_size = r.integer("test_size");
    if (*c.test_size < 1) r.fail("test_size", ">= 1");
  }
  if (r.has("train_seed")) c.train_seed = r.unsigned_integer("train_seed");
  if (r.has("test_seed")) c.test_seed = r.unsigned_integer("test_seed");
  if (r.has("optimizer")) c.optimizer = parse_optimizer(r.at("optimizer"));
  if (r.has("open_loop")) c.open_loop = parse_open_loop(r.at("open_loop"));
  if (r.has("initial_guess")) c.initial_guess = initial_guess_from_string(r.string("initial_guess"));
  if (r.has("warm_start_from")) c.warm_start_from = r.string("warm_start_from");
  if (c.initial_guess == InitialGuess::kWarmStart && c.warm_start_from.empty()) {
    throw ConfigError("config: initial_guess = warm_start needs 'warm_start_from'");
  }
  if (c.initial_guess != InitialGuess::kWarmStart && !c.warm_start_from.empty()) {
    throw ConfigError("config: 'warm_start_from' is only used with initial_guess = warm_start");
  }
  if (r.has("threshold")) {
    c.threshold = r.number("threshold");
    if (!(c.threshold > 0)) r.fail("threshold", "> 0");
  }
  if (r.has("trajectories")) {
    c.trajectories = r.integer("trajectories");
    if (c.trajectories < 0) r.fail("trajectories", ">= 0");
  }
  if (r.has("output_dir")) c.output_dir = r.string("output_dir");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["benchmark"] = c.benchmark;
  if (c.basis_kind) j["basis_kind"] = to_string(*c.basis_kind);
  if (c.degree) j["degree"] = *c.degree;
  if (c.beta) j["beta"] = *c.beta;
  if (!c.gamma.empty()) j["gamma"] = c.gamma;
  if (c.r) j["r"] = *c.r;
  if (c.horizon) j["horizon"] = *c.horizon;
  if (c.step) j["step"] = *c.step;
  if (!c.train_sizes.empty()) j["train_sizes"] = c.train_sizes;
  if (c.pool_size) j["pool_size"] = *c.pool_size;
  if (c.test_size) j["test_size"] = *c.test_size;
  if (c.train_seed) j["train_seed"] = *c.train_seed;
  if (c.test_seed) j["test_seed"] = *c.test_seed;
  j["optimizer"] = optimizer_to_json(c.optimizer);
  j["open_loop"] = open_loop_to_json(c.open_loop);
  j["initial_guess"] = to_string(c.initial_guess);
  if (!c.warm_start_from.empty()) j["warm_start_from"] = c.warm_start_from;
  j["threshold"] = c.threshold;
  j["trajectories"] = c.trajectories;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig resolve_config(const ExperimentConfig& cfg) {
  const BenchmarkSpec base = base_benchmark(cfg.benchmark, cfg.beta);
  ExperimentConfig c = cfg;
  if (!c.basis_kind) c.basis_kind = base.basis_kind;
  if (!c.degree) c.degree = base.degree;
  if (!c.beta) c.beta = base.system.beta();
  if (c.gamma.empty()) c.gamma = base.gamma_ladder.empty() ? std::vector<double>{base.gamma} : base.gamma_ladder;
  if (!c.r) c.r = base.r;
  if (!c.horizon) c.horizon = base.horizon;
  if (!c.step) c.step = base.step;
  if (c.train_sizes.empty()) c.train_sizes = {base.train_size};
  if (!c.pool_size) c.pool_size = base.pool_size;
  if (!c.test_size) c.test_size = base.test_size;
  if (!c.train_seed) c.train_seed = base.train_seed;
  if (!c.test_seed) c.test_seed = base.test_seed;
  for (int s : c.train_sizes) {
    if (s > *c.pool_size) {
      throw ConfigError("config: training size " + std::to_string(s) + " exceeds the pool size " +
                        std::to_string(*c.pool_size));
    }
  }
  try {
    step_count(*c.horizon, *c.step);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

BenchmarkSpec build_benchmark(const ExperimentConfig& c) {
  if (!c.basis_kind || !c.degree || !c.horizon || !c.step || !c.pool_size || !c.test_size || !c.train_seed ||
      !c.test_seed || !c.r || c.gamma.empty() || c.train_sizes.empty()) {
    throw std::invalid_argument("build_benchmark: configuration is not resolved");
  }
  BenchmarkSpec spec = base_benchmark(c.benchmark, c.beta);
  if (*c.basis_kind != spec.basis_kind || *c.degree != spec.degree) {
    std::shared_ptr<const PolynomialSpace> space;
    try {
      space = std::make_shared<const PolynomialSpace>(
          learning_basis(*c.basis_kind, spec.system.dim(), *c.degree, spec.system.control_matrix()));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    const PolynomialModel analytic = inject_coefficients(spec.initial_model, space);
    if (analytic.support().size() != spec.initial_model.support().size()) {
      throw ConfigError("config: the analytic initial guess of " + spec.name + " is not in the " +
                        to_string(*c.basis_kind) + " basis of degree " + std::to_string(*c.degree));
    }
    spec.basis_kind = *c.basis_kind;
    spec.degree = *c.degree;
    spec.space = std::move(space);
    spec.initial_model = analytic;
  }
  spec.horizon = *c.horizon;
  spec.step = *c.step;
  spec.gamma = c.gamma.front();
  spec.gamma_ladder = c.gamma;
  spec.r = *c.r;
  spec.pool_size = *c.pool_size;
  spec.test_size = *c.test_size;
  spec.train_seed = *c.train_seed;
  spec.test_seed = *c.test_seed;
  spec.train_size = c.train_sizes.front();
  return spec;
}

const PolynomialModel& RunArtifact::final_model() const {
  if (stages.empty()) throw FormatError("artifact has no stages");
  return stages.back().model;
}

RunArtifact run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  const ExperimentConfig c = resolve_config(cfg);
  const BenchmarkSpec spec = build_benchmark(c);

  PolynomialModel start;
  switch (c.initial_guess) {
    case InitialGuess::kZero:
      start = spec.initial_model.with_theta(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.space->size())));
      break;
    case InitialGuess::kAnalytic:
      start = spec.initial_model;
      break;
    case InitialGuess::kWarmStart: {
      RunArtifact prev;
      try {
        prev = load_artifact(c.warm_start_from);
      } catch (const std::exception& e) {
        throw ConfigError("warm start: " + std::string(e.what()));
      }
      if (prev.config.benchmark != c.benchmark || prev.basis.dim() != spec.space->dim() ||
          prev.scale != spec.scale || prev.config.beta != c.beta) {
        throw ConfigError("warm start: " + c.warm_start_from + " was trained on a different problem");
      }
      start = inject_coefficients(prev.final_model(), spec.space);
      break;
    }
  }

  const ReferenceOptions ro = reference_options(spec, c);
  const auto pool = sample_initial_conditions(spec, *c.pool_size, *c.train_seed);
  const int max_train = *std::max_element(c.train_sizes.begin(), c.train_sizes.end());
  const std::vector<Eigen::VectorXd> train_pts(pool.begin(), pool.begin() + max_train);
  {
    TrainingSet all;
    all.initial_conditions = train_pts;
    all.horizon = spec.horizon;
    all.step = spec.step;
    if (!cost(start, spec.system, all).feasible) {
      throw InfeasibleInitialGuess(to_string(c.initial_guess) +
                                   " initial guess: a training trajectory leaves the admissible region");
    }
  }
  const auto test_pts = sample_initial_conditions(spec, *c.test_size, *c.test_seed);
  if (log) *log << "references: " << train_pts.size() << " training, " << test_pts.size() << " test\n";
  const auto train_refs = reference_solutions(spec.system, train_pts, spec.horizon, spec.step, ro);
  const auto test_refs = reference_solutions(spec.system, test_pts, spec.horizon, spec.step, ro);

  RunArtifact art;
  art.config = c;
  art.basis = spec.space->basis();
  art.scale = spec.scale;
  for (int size : c.train_sizes) {
    TrainingSet train;
    train.initial_conditions.assign(train_pts.begin(), train_pts.begin() + size);
    train.horizon = spec.horizon;
    train.step = spec.step;
    const std::vector<ReferenceSolution> refs(train_refs.begin(), train_refs.begin() + size);
    PolynomialModel model = start;
    for (double gamma : c.gamma) {
      OptimizerConfig oc = c.optimizer;
      oc.gamma = gamma;
      oc.r = *c.r;
      OptimizerResult res = run(spec.system, train, model, oc);
      model = res.model;
      StageResult st;
      st.train_size = size;
      st.gamma = gamma;
      st.model = model;
      st.trace = std::move(res.trace);
      st.train = try_evaluate(model, spec, train.initial_conditions, refs, c.threshold, nullptr);
      st.test = try_evaluate(model, spec, test_pts, test_refs, c.threshold, &st.test_error);
      if (log) {
        *log << "size " << size << " gamma " << gamma << ": " << st.trace.records.size() << " iterations ("
             << to_string(st.trace.reason) << "), support " << model.support().size();
        if (st.test) {
          *log << ", test SSE_u " << 100 * st.test->sse_u << "% SSE_y " << 100 * st.test->sse_y << "% SSE_J "
               << 100 * st.test->sse_j << "%, failures " << st.test->failures();
        }
        *log << '\n';
      }
      art.stages.push_back(std::move(st));
    }
  }

  if (!c.output_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(c.output_dir);
    fs::create_directories(dir);
    save_artifact(art, (dir / "artifact.json").string());
    write_file(dir / "table.csv", [&](std::ostream& os) { write_table_csv(os, art); });
    for (std::size_t i = 0; i < art.stages.size(); ++i) {
      write_file(dir / ("trace_" + std::to_string(i) + ".csv"),
                 [&](std::ostream& os) { write_trace_csv(os, art.stages[i].trace); });
    }
    const StageResult& last = art.stages.back();
    if (last.test) write_file(dir / "pairs.csv", [&](std::ostream& os) { write_pairs_csv(os, *last.test); });
    write_file(dir / "trajectories.csv", [&](std::ostream& os) {
      write_trajectories_csv(os, spec, last.model, test_pts, test_refs, c.trajectories);
    });
  }
  return art;
}

json artifact_to_json(const RunArtifact& a) {
  json basis = json::array();
  for (const auto& alpha : a.basis) basis.push_back(alpha.exponents());
  json stages = json::array();
  for (const auto& s : a.stages) {
    json theta = json::array();
    for (Eigen::Index k = 0; k < s.model.theta().size(); ++k) theta.push_back(hex_double(s.model.theta()(k)));
    json trace = json::array();
    for (const auto& r : s.trace.records) {
      trace.push_back({{"iteration", r.iteration},
                       {"objective", r.objective},
                       {"smooth_objective", r.smooth_objective},
                       {"grad_norm", r.grad_norm},
                       {"prox_residual", r.prox_residual},
                       {"step", r.step},
                       {"backtracks", r.backtracks},
                       {"support", r.support}});
    }
    stages.push_back({{"train_size", s.train_size},
                      {"gamma", s.gamma},
                      {"theta", theta},
                      {"support", s.model.support().size()},
                      {"stop_reason", to_string(s.trace.reason)},
                      {"diagnostic", s.trace.diagnostic},
                      {"trace", trace},
                      {"train", s.train ? report_to_json(*s.train) : json(nullptr)},
                      {"test", s.test ? report_to_json(*s.test) : json(nullptr)},
                      {"test_error", s.test_error}});
  }
  return {{"format", RunArtifact::kFormat},
          {"benchmark", a.config.benchmark},
          {"dim", a.basis.dim()},
          {"scale", a.scale},
          {"basis_kind", to_string(a.config.basis_kind.value_or(BasisKind::kCustom))},
          {"degree", a.config.degree.value_or(a.basis.degree())},
          {"basis", basis},
          {"config", config_to_json(a.config)},
          {"stages", stages}};
}

RunArtifact artifact_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != RunArtifact::kFormat) {
      throw FormatError("missing or unsupported format tag (expected " + std::string(RunArtifact::kFormat) + ")");
    }
    RunArtifact a;
    a.config = parse_config(j.at("config"));
    a.scale = j.at("scale").get<double>();
    const int dim = j.at("dim").get<int>();
    std::vector<MultiIndex> indices;
    for (const auto& e : j.at("basis")) {
      const auto exps = e.get<std::vector<int>>();
      if (static_cast<int>(exps.size()) != dim) throw FormatError("basis entry of the wrong dimension");
      indices.emplace_back(exps);
    }
    a.basis = BasisSet(dim, indices, BasisKind::kCustom, j.at("degree").get<int>());
    if (a.basis.size() != indices.size()) throw FormatError("duplicate basis entries");
    const auto space = std::make_shared<const PolynomialSpace>(a.basis);
    for (const auto& s : j.at("stages")) {
      StageResult st;
      st.train_size = s.at("train_size").get<int>();
      st.gamma = s.at("gamma").get<double>();
      const auto& th = s.at("theta");
      if (th.size() != a.basis.size()) throw FormatError("theta length differs from the basis size");
      Eigen::VectorXd theta(static_cast<Eigen::Index>(th.size()));
      // Stored in listing order; the space keeps the same graded-lex order.
      for (std::size_t k = 0; k < th.size(); ++k) {
        const std::size_t pos = *space->basis().find(indices[k]);
        theta(static_cast<Eigen::Index>(pos)) = parse_hex_double(th[k].get<std::string>());
      }
      st.model = PolynomialModel(space, std::move(theta), a.scale);
      st.trace.reason = stop_reason_from_string(s.at("stop_reason").get<std::string>());
      st.trace.diagnostic = s.at("diagnostic").get<std::string>();
      for (const auto& r : s.at("trace")) {
        IterationRecord rec;
        rec.iteration = r.at("iteration").get<int>();
        rec.objective = r.at("objective").get<double>();
        rec.smooth_objective = r.at("smooth_objective").get<double>();
        rec.grad_norm = r.at("grad_norm").get<double>();
        rec.prox_residual = r.at("prox_residual").get<double>();
        rec.step = r.at("step").get<double>();
        rec.backtracks = r.at("backtracks").get<int>();
        rec.support = r.at("support").get<std::size_t>();
        st.trace.records.push_back(rec);
      }
      if (!s.at("train").is_null()) st.train = report_from_json(s.at("train"));
      if (!s.at("test").is_null()) st.test = report_from_json(s.at("test"));
      st.test_error = s.at("test_error").get<std::string>();
      a.stages.push_back(std::move(st));
    }
    if (a.stages.empty()) throw FormatError("artifact has no stages");
    return a;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed artifact: ") + e.what());
  }
}

void save_artifact(const RunArtifact& artifact, const std::string& path) {
  write_file(path, [&](std::ostream& os) { os << artifact_to_json(artifact).dump(2) << '\n'; });
}

RunArtifact load_artifact(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open artifact " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return artifact_from_json(j);
}

EvaluationReport replay(const RunArtifact& artifact, const ReplayOptions& opts) {
  const ExperimentConfig c = resolve_config(artifact.config);
  const BenchmarkSpec spec = build_benchmark(c);
  if (!(spec.space->basis() == artifact.basis) || spec.scale != artifact.scale) {
    throw FormatError("artifact basis does not match its configuration");
  }
  const std::size_t stage = opts.stage.value_or(artifact.stages.size() - 1);
  if (stage >= artifact.stages.size()) throw std::invalid_argument("replay: no stage " + std::to_string(stage));
  const int count = opts.count.value_or(*c.test_size);
  if (count < 1) throw std::invalid_argument("replay: need at least one test point");
  const auto pts = sample_initial_conditions(spec, count, opts.seed.value_or(*c.test_seed));
  const auto refs = reference_solutions(spec.system, pts, spec.horizon, spec.step, reference_options(spec, c));
  const PolynomialModel model(spec.space, artifact.stages[stage].model.theta(), spec.scale);
  return evaluate(model, spec.system, pts, refs, spec.horizon, spec.step, c.threshold);
}

void write_table_csv(std::ostream& os, const RunArtifact& artifact) {
  os << "train_size,gamma,support,sse_u_percent,sse_y_percent,sse_j_percent,train_sse_u_percent,"
        "train_sse_y_percent,train_sse_j_percent,failures,unstabilized,iterations,stop_reason\n";
  const auto pct = [&](const std::optional<EvaluationReport>& r, double EvaluationReport::*field) {
    os << ',';
    if (r) write_number(os, 100 * ((*r).*field));
  };
  for (const auto& s : artifact.stages) {
    os << s.train_size << ',';
    write_number(os, s.gamma);
    os << ',' << s.model.support().size();
    pct(s.test, &EvaluationReport::sse_u);
    pct(s.test, &EvaluationReport::sse_y);
    pct(s.test, &EvaluationReport::sse_j);
    pct(s.train, &EvaluationReport::sse_u);
    pct(s.train, &EvaluationReport::sse_y);
    pct(s.train, &EvaluationReport::sse_j);
    os << ',';
    if (s.test) os << s.test->failures();
    os << ',';
    if (s.test) os << s.test->unstabilized_count();
    os << ',' << s.trace.records.size() << ',' << to_string(s.trace.reason) << '\n';
  }
}

}  // namespace polyfb
