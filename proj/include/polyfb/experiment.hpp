#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyfb/benchmarks.hpp"
#include "polyfb/metrics.hpp"
#include "polyfb/optimizer.hpp"

namespace polyfb {

/// Bad configuration: unknown keys, wrong types, out-of-range values, or an
/// incompatible warm start.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or inconsistent run artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InitialGuess { kZero, kAnalytic, kWarmStart };

std::string to_string(InitialGuess guess);

/// Everything a run depends on. Unset optionals take the benchmark defaults
/// in resolve_config.
struct ExperimentConfig {
  std::string benchmark;
  std::optional<BasisKind> basis_kind;
  std::optional<int> degree;
  std::optional<double> beta;
  /// One entry per stage, strictly decreasing; later stages start from the previous result.
  std::vector<double> gamma;
  std::optional<double> r;
  std::optional<double> horizon;
  std::optional<double> step;
  /// One training run per entry, each a prefix of the seeded pool.
  std::vector<int> train_sizes;
  std::optional<int> pool_size;
  std::optional<int> test_size;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::uint64_t> test_seed;
  OptimizerConfig optimizer;
  OpenLoopOptions open_loop;
  InitialGuess initial_guess = InitialGuess::kAnalytic;
  std::string warm_start_from;  // artifact path, with initial_guess = warm_start
  double threshold = 0.5;       // |y(T)| counted as stabilized
  int trajectories = 10;        // test rollouts dumped to CSV
  std::string output_dir;       // empty: nothing written
};

/// Parses a JSON object; throws ConfigError on unknown keys or bad values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
/// Inverse of parse_config (every field written, including resolved defaults).
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Fills every unset field from the benchmark defaults.
ExperimentConfig resolve_config(const ExperimentConfig& cfg);

/// The benchmark with the configured basis, beta, horizon and step; the
/// initial model is the analytic guess on the configured basis.
BenchmarkSpec build_benchmark(const ExperimentConfig& resolved);

/// One optimization (one training size, one penalty weight).
struct StageResult {
  int train_size = 0;
  double gamma = 0.0;
  PolynomialModel model;
  OptimizerTrace trace;
  std::optional<EvaluationReport> train;
  std::optional<EvaluationReport> test;
  std::string test_error;  // set when every test rollout escaped
};

struct RunArtifact {
  static constexpr const char* kFormat = "polyfb-run/1";

  ExperimentConfig config;  // resolved
  BasisSet basis;
  double scale = 1.0;
  std::vector<StageResult> stages;

  /// Model of the last stage.
  const PolynomialModel& final_model() const;
};

/// Trains every (size, gamma) stage, evaluates on the training and test sets,
/// and writes artifact.json, table.csv, trace_*.csv, pairs.csv and
/// trajectories.csv to the output directory when one is set. Throws
/// InfeasibleInitialGuess when the initial model escapes on training data.
RunArtifact run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

nlohmann::json artifact_to_json(const RunArtifact& artifact);
/// Throws FormatError on malformed input.
RunArtifact artifact_from_json(const nlohmann::json& j);
void save_artifact(const RunArtifact& artifact, const std::string& path);
RunArtifact load_artifact(const std::string& path);

/// Bit-exact text form of a double ("%a").
std::string hex_double(double x);
double parse_hex_double(const std::string& text);

struct ReplayOptions {
  std::optional<std::uint64_t> seed;  // default: the artifact's test seed
  std::optional<int> count;           // default: the artifact's test size
  std::optional<std::size_t> stage;   // default: the last stage
};

/// Re-evaluates a stored model on freshly sampled points without retraining.
EvaluationReport replay(const RunArtifact& artifact, const ReplayOptions& opts = {});

/// Table rows: "train_size,gamma,support,sse_u_percent,...".
void write_table_csv(std::ostream& os, const RunArtifact& artifact);

}  // namespace polyfb
