#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/rewards.hpp"

namespace flowforge::config {

struct ModelSection {
  std::string name = "toy_flow";
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t embed_dim = 4;
  std::size_t num_conditions = 2;
  double mode_std = 0.15;
  // modes[cond][mode] = {x, y}
  std::vector<std::vector<std::vector<double>>> modes{
      {{-1.0, 1.0}, {1.0, 1.0}},
      {{-1.0, -1.0}, {1.0, -1.0}},
  };
  friend bool operator==(const ModelSection&, const ModelSection&) = default;
};

struct PretrainSection {
  std::size_t steps = 3000;
  std::size_t batch_size = 128;
  double lr = 2e-3;
  friend bool operator==(const PretrainSection&, const PretrainSection&) = default;
};

struct SchedulerSection {
  std::string dynamics = "flow_sde";
  double eta = 0.7;
  std::size_t n_steps = 10;
  double t_min = 0.02;
  double t_max = 0.98;
  friend bool operator==(const SchedulerSection&, const SchedulerSection&) = default;
};

struct TrainerSection {
  std::string trainer_type = "grpo";
  std::size_t group_size = 16;
  double clip_eps = 0.2;
  std::size_t mix_k = 2;
  double nft_beta = 1.0;
  std::string timestep_strategy = "uniform";
  double logit_normal_loc = 0.0;
  double logit_normal_scale = 1.0;
  double lr = 1e-3;
  std::size_t total_steps = 200;
  std::size_t inner_epochs = 1;
  // Forward-process draws per sample for the nft/awm objectives.
  std::size_t timesteps_per_sample = 4;
  friend bool operator==(const TrainerSection&, const TrainerSection&) = default;
};

struct CacheSection {
  bool enabled = false;
  std::string dir = "cache";
  friend bool operator==(const CacheSection&, const CacheSection&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string advantage_mode = "weighted_sum";
  ModelSection model;
  PretrainSection pretrain;
  SchedulerSection scheduler;
  TrainerSection trainer;
  std::vector<rewards::RewardSpec> rewards{
      rewards::RewardSpec{"affinity", "mode_affinity", 1.0, {{"target_mode", 0.0}}}};
  CacheSection cache;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ParsedConfig {
  RunConfig config;
  std::vector<std::string> warnings;
};

// Parses and validates a run config; missing keys take the defaults above.
// Throws YamlSyntaxError (with line) or ConfigError naming the offending key.
ParsedConfig parse_config(std::string_view text);
ParsedConfig load_config_file(const std::string& path);

std::string emit_config(const RunConfig& config);

model::ToyDataSpec data_spec(const RunConfig& config);
rewards::AdvantageMode advantage_mode(const RunConfig& config);

}  // namespace flowforge::config
