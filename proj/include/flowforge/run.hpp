#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowforge/config.hpp"
#include "flowforge/registry.hpp"
#include "flowforge/rewards.hpp"
#include "flowforge/trainers.hpp"

namespace flowforge::run {

using config::RunConfig;
using model::ModelParams;

// A fully wired run: model adapter, scheduler, trainer and loaded rewards.
struct AssembledRun {
  RunConfig config;
  std::unique_ptr<registry::ModelAdapter> model;
  std::unique_ptr<registry::Scheduler> scheduler;
  std::unique_ptr<trainers::Trainer> trainer;
  rewards::LoadedRewards rewards;
  rewards::AdvantageMode advantage_mode = rewards::AdvantageMode::WeightedSum;

  std::vector<model::Condition> conditions() const;
};

// Throws RegistryError for unknown names and IncompatibleError when a
// trainer that needs log-probabilities meets deterministic dynamics.
AssembledRun build_run(const RunConfig& config, const registry::Registry& registry);

// ---------------------------------------------------------------------------

struct PretrainResult {
  ModelParams params;
  double final_loss = 0.0;
};

// Flow-matching regression on the adapter's data distribution.
PretrainResult pretrain(const AssembledRun& run, ModelParams params, std::size_t steps);

// ---------------------------------------------------------------------------

struct MetricsRow {
  std::size_t step = 0;
  double mean_reward = 0.0;
  std::vector<double> per_reward;
  double loss = 0.0;
  std::optional<double> clip_fraction;
  double sde_steps_per_traj = 0.0;
  std::uint64_t encoder_invocations_cumulative = 0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::optional<std::size_t> steps;
  std::function<void(const MetricsRow&, const trainers::OptimizeStats&)> on_step;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<trainers::OptimizeStats> stats;
  // Velocity net after training; the encoder table is absent when the
  // cache was used.
  ModelParams params;
};

// With cache enabled, embeddings come from the on-disk cache and the
// encoder is offloaded before the first step. Both paths consume the same
// random streams.
TrainResult train(const AssembledRun& run, ModelParams params, const TrainOptions& options = {});

// Trained velocity net combined with the encoder table of `original`.
ModelParams with_encoder_of(const ModelParams& trained, const ModelParams& original);

// ---------------------------------------------------------------------------

struct EvalResult {
  std::size_t samples = 0;
  // Within 3 * mode_std of any mode of the sample's own condition.
  double coverage = 0.0;
  // Within 3 * mode_std of the target mode.
  double target_fraction = 0.0;
  // Mean exp(-||x - target||^2).
  double mean_affinity = 0.0;
};

// ODE samples split evenly across conditions, noise drawn from `seed`.
EvalResult evaluate(const ModelParams& params, const model::ToyDataSpec& data,
                    const sde::TimeGrid& grid, std::size_t n_samples, std::size_t target_mode,
                    std::uint64_t seed, sde::Solver solver = sde::Solver::Euler);

std::vector<numkit::Vec64> generate_samples(const ModelParams& params, const sde::TimeGrid& grid,
                                            model::Condition cond, std::size_t n,
                                            std::uint64_t seed, sde::Solver solver);

// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsSchemaLine = "# flowforge-metrics v1";

std::vector<std::string> metrics_header(const std::vector<std::string>& reward_names);
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& reward_names,
                       const std::vector<MetricsRow>& rows);

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // Numeric column; empty cells become nullopt.
  std::vector<std::optional<double>> column(const std::string& name) const;
};

// Throws FormatError with the offending line number on malformed input.
MetricsTable read_metrics_csv(const std::filesystem::path& path);

}  // namespace flowforge::run
