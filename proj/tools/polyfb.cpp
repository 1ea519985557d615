// Command line front end: run, replay, benchmarks list.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "polyfb/experiment.hpp"
#include "polyfb/parallel.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kInfeasible = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse polynomial feedback laws: training and evaluation"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads for trajectory fan-out")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Train and evaluate from a JSON config");
  std::string config_path, output_dir;
  bool quiet = false;
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("-o,--output", output_dir, "Output directory (overrides output_dir)");
  run->add_flag("-q,--quiet", quiet, "No progress on stderr");

  auto* rep = app.add_subcommand("replay", "Evaluate a stored model on a fresh test set");
  std::string artifact_path;
  polyfb::ReplayOptions ropts;
  std::uint64_t seed = 0;
  int count = 0;
  std::size_t stage = 0;
  rep->add_option("artifact", artifact_path, "artifact.json of an earlier run")->required();
  auto* seed_opt = rep->add_option("--seed", seed, "Test-set seed (default: the run's test seed)");
  auto* count_opt = rep->add_option("--count", count, "Number of test points (default: the run's test size)");
  auto* stage_opt = rep->add_option("--stage", stage, "Stage index (default: the last)");

  auto* bench = app.add_subcommand("benchmarks", "Benchmark registry");
  bench->require_subcommand(1);
  bench->add_subcommand("list", "Print benchmark names with their defaults");

  CLI11_PARSE(app, argc, argv);
  polyfb::set_thread_count(threads);

  try {
    if (run->parsed()) {
      polyfb::ExperimentConfig cfg = polyfb::load_config(config_path);
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      const auto art = polyfb::run_experiment(cfg, quiet ? nullptr : &std::cerr);
      polyfb::write_table_csv(std::cout, art);
      return 0;
    }
    if (rep->parsed()) {
      const auto art = polyfb::load_artifact(artifact_path);
      if (*seed_opt) ropts.seed = seed;
      if (*count_opt) ropts.count = count;
      if (*stage_opt) ropts.stage = stage;
      std::cout << polyfb::report_json(polyfb::replay(art, ropts)) << '\n';
      return 0;
    }
    for (const auto& name : polyfb::benchmark_names()) {
      const auto spec = polyfb::make_benchmark(name);
      std::printf("%-13s d=%-3d |X|=%-4zu %s n=%d T=%g h=%g l=%g beta=%g\n", name.c_str(), spec.system.dim(),
                  spec.space->size(), polyfb::to_string(spec.basis_kind).c_str(), spec.degree, spec.horizon,
                  spec.step, spec.scale, spec.system.beta());
    }
    return 0;
  } catch (const polyfb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const polyfb::FormatError& e) {
    std::cerr << "artifact error: " << e.what() << '\n';
    return kConfigError;
  } catch (const polyfb::InfeasibleInitialGuess& e) {
    std::cerr << "infeasible initial guess: " << e.what() << '\n';
    return kInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
