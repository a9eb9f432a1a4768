#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/config.hpp"
#include "flowforge/flow_model.hpp"
#include "flowforge/numkit.hpp"
#include "flowforge/rewards.hpp"
#include "flowforge/sde_scheduler.hpp"

namespace flowforge::trainers {

using model::Condition;
using model::CondEmbedding;
using model::LossGrad;
using model::ModelParams;
using numkit::AdamState;
using numkit::Rng;
using numkit::Vec64;

using EmbeddingFn = std::function<CondEmbedding(Condition)>;

enum class TimestepStrategy { Uniform, LogitNormal, Discrete };
std::optional<TimestepStrategy> parse_timestep_strategy(std::string_view name);

struct TimestepSampler {
  TimestepStrategy strategy = TimestepStrategy::Uniform;
  double logit_normal_loc = 0.0;
  double logit_normal_scale = 1.0;
};

// uniform: U(t_min, t_max); logit_normal: sigmoid(N(loc, scale)) clamped to
// [t_min, t_max]; discrete: a uniformly chosen grid timestep.
double sample_timestep(const TimestepSampler& sampler, Rng& rng, const sde::TimeGrid& grid);

// ---------------------------------------------------------------------------

struct RolloutGroup {
  Condition cond;
  CondEmbedding emb;
  std::vector<sde::Trajectory> members;
  std::vector<rewards::RewardOutput> rewards;
  Vec64 advantages;

  std::vector<Vec64> final_samples() const;
};

struct RolloutBatch {
  std::vector<RolloutGroup> groups;
  // Velocity net at collection time: the old policy for ratios and the
  // reference for the negative branch of the nft objective.
  Vec64 snapshot;
};

struct CollectOptions {
  std::size_t group_size = 2;
  rewards::AdvantageMode advantage_mode = rewards::AdvantageMode::WeightedSum;
  // Every member of a group reuses the group's first stream.
  bool shared_member_noise = false;
};

// Rolls out group_size trajectories per condition, scores them and fills in
// group-normalized advantages. Member g of condition c draws from
// rng.split(c * group_size + g).
RolloutBatch collect_rollouts(const ModelParams& params, const sde::NoiseSchedule& schedule,
                              const sde::TimeGrid& grid, const rewards::LoadedRewards& rewards,
                              const std::vector<Condition>& conditions,
                              const EmbeddingFn& embed, const std::vector<bool>& sde_mask,
                              const CollectOptions& options, const Rng& rng);

// Recomputes every group's advantages from its stored reward outputs.
void compute_advantages(RolloutBatch& batch, const rewards::LoadedRewards& rewards,
                        rewards::AdvantageMode mode);

// ---------------------------------------------------------------------------

struct GrpoLoss {
  double loss = 0.0;
  // d loss / d new_logps, one entry per term.
  Vec64 grad;
  // Share of terms with |ratio - 1| > clip_eps.
  double clip_fraction = 0.0;
};

// loss = -(1/N) sum_j w_j min(rho_j A_j, clip(rho_j, 1-eps, 1+eps) A_j),
// rho_j = exp(new_j - old_j). All spans have one entry per (sample, step).
GrpoLoss grpo_loss(std::span<const double> new_logps, std::span<const double> old_logps,
                   std::span<const double> advantages, double clip_eps,
                   std::span<const double> step_weights);

// Sliding window of k consecutive non-terminal intervals starting at
// (train_step * k) mod (n_intervals - 1), wrapping within the non-terminal
// range.
std::vector<bool> mixgrpo_select(std::size_t n_intervals, std::size_t k, std::size_t train_step);

struct GuardStats {
  // Indexed by grid interval; entries without SDE samples have count 0.
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::size_t> count;
};

struct LogRatioTerm {
  std::size_t step_index;
  double log_ratio;
};

GuardStats guard_stats(std::span<const LogRatioTerm> terms, std::size_t n_intervals);

// w_k = 1 / max(std_k, 1e-8), rescaled to mean 1 over intervals that carry
// samples. Intervals without samples get weight 0.
std::vector<double> guard_weights(const GuardStats& stats);

// r ||v_theta - v||^2 + (1-r) ||v_ref + beta (v_ref - v_theta) - v||^2
LossGrad nft_loss(const ModelParams& params, std::span<const double> ref_velocity_net,
                  const Vec64& x_t, const Vec64& v_target, double t, const CondEmbedding& emb,
                  double r, double beta);

// A ||v_theta(x_t, t) - (eps - x0)||^2 with x_t = (1-t) x0 + t eps
LossGrad awm_loss(const ModelParams& params, const Vec64& x0, const Vec64& eps, double t,
                  const CondEmbedding& emb, double advantage);

// ---------------------------------------------------------------------------

struct OptimizeStats {
  double loss = 0.0;
  std::optional<double> clip_fraction;
  // Largest |mean| of recentered per-interval log-ratios (grpo_guard only).
  std::optional<double> guard_max_abs_centered_mean;
  std::size_t log_prob_evaluations = 0;
};

struct TrainerContext {
  const sde::TimeGrid& grid;
  const rewards::LoadedRewards& rewards;
};

// Owns one training objective. Parameters are updated in place.
class Trainer {
 public:
  explicit Trainer(config::TrainerSection config) : config_(std::move(config)) {}
  virtual ~Trainer() = default;

  virtual std::string_view name() const = 0;
  // True when the objective is built from SDE transition log-probabilities.
  virtual bool needs_log_probs() const = 0;
  virtual std::vector<bool> sde_mask(std::size_t n_intervals, std::size_t train_step) const = 0;
  virtual OptimizeStats optimize(ModelParams& params, const RolloutBatch& batch,
                                 AdamState& adam, const TrainerContext& ctx, Rng& rng) = 0;

  const config::TrainerSection& config() const { return config_; }

 protected:
  config::TrainerSection config_;
};

enum class GrpoVariant { Plain, Mix, Guard };

class GrpoTrainer final : public Trainer {
 public:
  GrpoTrainer(config::TrainerSection config, GrpoVariant variant);
  std::string_view name() const override;
  bool needs_log_probs() const override { return true; }
  std::vector<bool> sde_mask(std::size_t n_intervals, std::size_t train_step) const override;
  OptimizeStats optimize(ModelParams& params, const RolloutBatch& batch, AdamState& adam,
                         const TrainerContext& ctx, Rng& rng) override;

 private:
  GrpoVariant variant_;
};

class NftTrainer final : public Trainer {
 public:
  using Trainer::Trainer;
  std::string_view name() const override { return "nft"; }
  bool needs_log_probs() const override { return false; }
  std::vector<bool> sde_mask(std::size_t n_intervals, std::size_t) const override {
    return std::vector<bool>(n_intervals, false);
  }
  OptimizeStats optimize(ModelParams& params, const RolloutBatch& batch, AdamState& adam,
                         const TrainerContext& ctx, Rng& rng) override;
};

class AwmTrainer final : public Trainer {
 public:
  using Trainer::Trainer;
  std::string_view name() const override { return "awm"; }
  bool needs_log_probs() const override { return false; }
  std::vector<bool> sde_mask(std::size_t n_intervals, std::size_t) const override {
    return std::vector<bool>(n_intervals, false);
  }
  OptimizeStats optimize(ModelParams& params, const RolloutBatch& batch, AdamState& adam,
                         const TrainerContext& ctx, Rng& rng) override;
};

TimestepSampler timestep_sampler(const config::TrainerSection& config);

// Per-member reward in [0,1] for the nft objective: the |weight|-weighted
// mean of each reward's unit-interval scores.
Vec64 nft_rewards(const RolloutGroup& group, const rewards::LoadedRewards& rewards);

}  // namespace flowforge::trainers
