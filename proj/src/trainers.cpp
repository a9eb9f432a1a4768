#include "flowforge/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowforge/errors.hpp"

namespace flowforge::trainers {

std::optional<TimestepStrategy> parse_timestep_strategy(std::string_view name) {
  if (name == "uniform") return TimestepStrategy::Uniform;
  if (name == "logit_normal") return TimestepStrategy::LogitNormal;
  if (name == "discrete") return TimestepStrategy::Discrete;
  return std::nullopt;
}

double sample_timestep(const TimestepSampler& sampler, Rng& rng, const sde::TimeGrid& grid) {
  switch (sampler.strategy) {
    case TimestepStrategy::Uniform:
      return rng.uniform(grid.t_min(), grid.t_max());
    case TimestepStrategy::LogitNormal: {
      const double z = sampler.logit_normal_loc + sampler.logit_normal_scale * rng.normal();
      const double t = 1.0 / (1.0 + std::exp(-z));
      return std::clamp(t, grid.t_min(), grid.t_max());
    }
    case TimestepStrategy::Discrete: {
      const auto& ts = grid.timesteps();
      return ts[rng.index(ts.size())];
    }
  }
  return grid.t_min();
}

TimestepSampler timestep_sampler(const config::TrainerSection& config) {
  const auto strategy = parse_timestep_strategy(config.timestep_strategy);
  if (!strategy) throw ConfigError("unknown timestep_strategy '" + config.timestep_strategy + "'");
  return TimestepSampler{*strategy, config.logit_normal_loc, config.logit_normal_scale};
}

// ---------------------------------------------------------------------------

std::vector<Vec64> RolloutGroup::final_samples() const {
  std::vector<Vec64> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(m.final_sample);
  return out;
}

namespace {

std::vector<double> reward_weights(const rewards::LoadedRewards& rewards) {
  std::vector<double> w;
  for (const auto& spec : rewards.specs()) w.push_back(spec.weight);
  return w;
}

}  // namespace

RolloutBatch collect_rollouts(const ModelParams& params, const sde::NoiseSchedule& schedule,
                              const sde::TimeGrid& grid, const rewards::LoadedRewards& rewards,
                              const std::vector<Condition>& conditions,
                              const EmbeddingFn& embed, const std::vector<bool>& sde_mask,
                              const CollectOptions& options, const Rng& rng) {
  if (options.group_size < 2) throw DomainError("collect_rollouts: group size must be >= 2");
  const std::size_t g_size = options.group_size;
  RolloutBatch batch;
  batch.snapshot = params.velocity_net();
  batch.groups.reserve(conditions.size());
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    RolloutGroup group;
    group.cond = conditions[ci];
    group.emb = embed(group.cond);
    group.members.reserve(g_size);
    for (std::size_t g = 0; g < g_size; ++g) {
      Rng stream = rng.split(ci * g_size + (options.shared_member_noise ? 0 : g));
      group.members.push_back(
          sde::rollout(params, schedule, grid, group.cond, group.emb, stream, sde_mask));
    }
    group.rewards = rewards.score_group(group.final_samples(), group.cond);
    batch.groups.push_back(std::move(group));
  }
  compute_advantages(batch, rewards, options.advantage_mode);
  return batch;
}

void compute_advantages(RolloutBatch& batch, const rewards::LoadedRewards& rewards,
                        rewards::AdvantageMode mode) {
  const auto weights = reward_weights(rewards);
  for (auto& group : batch.groups) {
    group.advantages = rewards::aggregate_advantages(group.rewards, weights, mode);
  }
}

// ---------------------------------------------------------------------------

GrpoLoss grpo_loss(std::span<const double> new_logps, std::span<const double> old_logps,
                   std::span<const double> advantages, double clip_eps,
                   std::span<const double> step_weights) {
  const std::size_t n = new_logps.size();
  numkit::require_same_size(old_logps.size(), n, "grpo_loss old_logps");
  numkit::require_same_size(advantages.size(), n, "grpo_loss advantages");
  numkit::require_same_size(step_weights.size(), n, "grpo_loss step_weights");
  if (!(clip_eps > 0.0)) throw DomainError("grpo_loss: clip_eps must be > 0");
  GrpoLoss out;
  out.grad = Vec64(n);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t clipped = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double rho = std::exp(new_logps[j] - old_logps[j]);
    const double a = advantages[j];
    const double unclipped = rho * a;
    const double clipped_val = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps) * a;
    if (std::abs(rho - 1.0) > clip_eps) ++clipped;
    const double w = step_weights[j];
    if (unclipped <= clipped_val) {
      out.loss -= w * unclipped * inv_n;
      out.grad[j] = -w * a * rho * inv_n;
    } else {
      out.loss -= w * clipped_val * inv_n;
    }
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  return out;
}

std::vector<bool> mixgrpo_select(std::size_t n_intervals, std::size_t k, std::size_t train_step) {
  if (k < 1 || k > 2) throw DomainError("mixgrpo_select: k must be 1 or 2");
  if (n_intervals < 2 || k > n_intervals - 1) {
    throw DomainError("mixgrpo_select: need at least k non-terminal intervals");
  }
  const std::size_t span = n_intervals - 1;
  std::vector<bool> mask(n_intervals, false);
  const std::size_t start = (train_step * k) % span;
  for (std::size_t j = 0; j < k; ++j) mask[(start + j) % span] = true;
  return mask;
}

GuardStats guard_stats(std::span<const LogRatioTerm> terms, std::size_t n_intervals) {
  GuardStats s{std::vector<double>(n_intervals, 0.0), std::vector<double>(n_intervals, 0.0),
               std::vector<std::size_t>(n_intervals, 0)};
  for (const auto& t : terms) {
    if (t.step_index >= n_intervals) throw ShapeError("guard_stats: step index out of range");
    s.mean[t.step_index] += t.log_ratio;
    ++s.count[t.step_index];
  }
  for (std::size_t k = 0; k < n_intervals; ++k) {
    if (s.count[k]) s.mean[k] /= static_cast<double>(s.count[k]);
  }
  for (const auto& t : terms) {
    const double d = t.log_ratio - s.mean[t.step_index];
    s.std[t.step_index] += d * d;
  }
  for (std::size_t k = 0; k < n_intervals; ++k) {
    if (s.count[k]) s.std[k] = std::sqrt(s.std[k] / static_cast<double>(s.count[k]));
  }
  return s;
}

std::vector<double> guard_weights(const GuardStats& stats) {
  const std::size_t n = stats.std.size();
  std::vector<double> w(n, 0.0);
  double total = 0.0;
  std::size_t active = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (stats.count[k] == 0) continue;
    w[k] = 1.0 / std::max(stats.std[k], numkit::kStdFloor);
    total += w[k];
    ++active;
  }
  if (active == 0) return w;
  const double scale = static_cast<double>(active) / total;
  for (double& x : w) x *= scale;
  return w;
}

LossGrad nft_loss(const ModelParams& params, std::span<const double> ref_velocity_net,
                  const Vec64& x_t, const Vec64& v_target, double t, const CondEmbedding& emb,
                  double r, double beta) {
  if (!(r >= 0.0 && r <= 1.0)) throw DomainError("nft_loss: r must lie in [0,1]");
  const Vec64 v_theta = model::velocity(params, x_t, t, emb);
  const Vec64 v_ref = model::velocity(ref_velocity_net, params.spec(), x_t, t, emb);
  const Vec64 pos = v_theta - v_target;
  // v_neg = v_ref + beta (v_ref - v_theta)
  Vec64 neg = v_ref + beta * (v_ref - v_theta);
  neg -= v_target;
  LossGrad out{r * numkit::squared_norm(pos) + (1.0 - r) * numkit::squared_norm(neg),
               Vec64(params.trainable_params())};
  Vec64 upstream = (2.0 * r) * pos;
  upstream.axpy(-2.0 * beta * (1.0 - r), neg);
  model::accumulate_velocity_grad(params, x_t, t, emb, upstream, 1.0, out.grad);
  return out;
}

LossGrad awm_loss(const ModelParams& params, const Vec64& x0, const Vec64& eps, double t,
                  const CondEmbedding& emb, double advantage) {
  LossGrad fm = model::fm_loss(params, x0, eps, t, emb);
  fm.loss *= advantage;
  fm.grad *= advantage;
  return fm;
}

Vec64 nft_rewards(const RolloutGroup& group, const rewards::LoadedRewards& rewards) {
  const std::size_t g = group.members.size();
  Vec64 r(g);
  double total_w = 0.0;
  for (std::size_t i = 0; i < group.rewards.size(); ++i) {
    const double w = std::abs(rewards.specs().at(i).weight);
    const Vec64 unit = rewards::unit_interval_scores(group.rewards[i], rewards.backend_for(i).kind());
    r.axpy(w, unit);
    total_w += w;
  }
  if (total_w == 0.0) return Vec64(g, 0.5);
  r *= 1.0 / total_w;
  for (double& x : r) x = std::clamp(x, 0.0, 1.0);
  return r;
}

// ---------------------------------------------------------------------------

GrpoTrainer::GrpoTrainer(config::TrainerSection config, GrpoVariant variant)
    : Trainer(std::move(config)), variant_(variant) {}

std::string_view GrpoTrainer::name() const {
  switch (variant_) {
    case GrpoVariant::Plain:
      return "grpo";
    case GrpoVariant::Mix:
      return "mix_grpo";
    case GrpoVariant::Guard:
      return "grpo_guard";
  }
  return "grpo";
}

std::vector<bool> GrpoTrainer::sde_mask(std::size_t n_intervals, std::size_t train_step) const {
  if (variant_ == GrpoVariant::Mix) return mixgrpo_select(n_intervals, config_.mix_k, train_step);
  return std::vector<bool>(n_intervals, true);
}

namespace {

struct PolicyTerm {
  const sde::StepRecord* step;
  const CondEmbedding* emb;
  std::size_t step_index;
  double advantage;
};

}  // namespace

OptimizeStats GrpoTrainer::optimize(ModelParams& params, const RolloutBatch& batch,
                                    AdamState& adam, const TrainerContext& ctx, Rng&) {
  std::vector<PolicyTerm> terms;
  for (const auto& group : batch.groups) {
    for (std::size_t m = 0; m < group.members.size(); ++m) {
      const auto& steps = group.members[m].steps;
      for (std::size_t k = 0; k < steps.size(); ++k) {
        if (steps[k].kind != sde::StepKind::SDE) continue;
        terms.push_back(PolicyTerm{&steps[k], &group.emb, k, group.advantages[m]});
      }
    }
  }
  OptimizeStats stats;
  if (terms.empty()) {
    stats.clip_fraction = 0.0;
    return stats;
  }

  const std::size_t n = terms.size();
  const std::size_t n_intervals = ctx.grid.intervals();
  std::vector<double> new_lp(n), old_lp(n), adv(n), weights(n, 1.0);
  double loss_sum = 0.0;
  double clip_sum = 0.0;
  double worst_centered = 0.0;
  for (std::size_t epoch = 0; epoch < config_.inner_epochs; ++epoch) {
    for (std::size_t j = 0; j < n; ++j) {
      new_lp[j] = sde::transition_log_prob(params, *terms[j].step, *terms[j].emb);
      old_lp[j] = *terms[j].step->log_prob;
      adv[j] = terms[j].advantage;
    }
    stats.log_prob_evaluations += n;

    if (variant_ == GrpoVariant::Guard) {
      std::vector<LogRatioTerm> ratios(n);
      for (std::size_t j = 0; j < n; ++j) {
        ratios[j] = LogRatioTerm{terms[j].step_index, new_lp[j] - old_lp[j]};
      }
      const GuardStats gs = guard_stats(ratios, n_intervals);
      const std::vector<double> w = guard_weights(gs);
      // Statistics are treated as constants: shifting new_lp by the
      // per-interval mean leaves d loss / d new_lp unchanged.
      std::vector<double> centered_sum(n_intervals, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = terms[j].step_index;
        new_lp[j] -= gs.mean[k];
        weights[j] = w[k];
        centered_sum[k] += new_lp[j] - old_lp[j];
      }
      for (std::size_t k = 0; k < n_intervals; ++k) {
        if (gs.count[k] == 0) continue;
        worst_centered =
            std::max(worst_centered, std::abs(centered_sum[k] / static_cast<double>(gs.count[k])));
      }
    }

    const GrpoLoss res = grpo_loss(new_lp, old_lp, adv, config_.clip_eps, weights);
    Vec64 grad(params.trainable_params());
    for (std::size_t j = 0; j < n; ++j) {
      if (res.grad[j] == 0.0) continue;
      sde::accumulate_log_prob_grad(params, *terms[j].step, *terms[j].emb, res.grad[j], grad);
    }
    numkit::adam_update(params.velocity_net(), grad, adam);
    loss_sum += res.loss;
    clip_sum += res.clip_fraction;
  }
  const double epochs = static_cast<double>(config_.inner_epochs);
  stats.loss = loss_sum / epochs;
  stats.clip_fraction = clip_sum / epochs;
  if (variant_ == GrpoVariant::Guard) stats.guard_max_abs_centered_mean = worst_centered;
  return stats;
}

OptimizeStats NftTrainer::optimize(ModelParams& params, const RolloutBatch& batch,
                                   AdamState& adam, const TrainerContext& ctx, Rng& rng) {
  const TimestepSampler sampler = timestep_sampler(config_);
  std::vector<Vec64> r_values;
  for (const auto& group : batch.groups) r_values.push_back(nft_rewards(group, ctx.rewards));

  OptimizeStats stats;
  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < config_.inner_epochs; ++epoch) {
    Vec64 grad(params.trainable_params());
    double loss = 0.0;
    std::size_t count = 0;
    for (std::size_t gi = 0; gi < batch.groups.size(); ++gi) {
      const auto& group = batch.groups[gi];
      for (std::size_t m = 0; m < group.members.size(); ++m) {
        const Vec64& x0 = group.members[m].final_sample;
        for (std::size_t j = 0; j < config_.timesteps_per_sample; ++j) {
          const double t = sample_timestep(sampler, rng, ctx.grid);
          const Vec64 eps = numkit::randn(rng, x0.size());
          const Vec64 x_t = model::interpolate(x0, eps, t);
          const LossGrad lg = nft_loss(params, batch.snapshot.span(), x_t, eps - x0, t, group.emb,
                                       r_values[gi][m], config_.nft_beta);
          loss += lg.loss;
          grad += lg.grad;
          ++count;
        }
      }
    }
    if (count == 0) break;
    grad *= 1.0 / static_cast<double>(count);
    numkit::adam_update(params.velocity_net(), grad, adam);
    loss_sum += loss / static_cast<double>(count);
  }
  stats.loss = loss_sum / static_cast<double>(config_.inner_epochs);
  return stats;
}

OptimizeStats AwmTrainer::optimize(ModelParams& params, const RolloutBatch& batch,
                                   AdamState& adam, const TrainerContext& ctx, Rng& rng) {
  const TimestepSampler sampler = timestep_sampler(config_);
  OptimizeStats stats;
  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < config_.inner_epochs; ++epoch) {
    Vec64 grad(params.trainable_params());
    double loss = 0.0;
    std::size_t count = 0;
    for (const auto& group : batch.groups) {
      for (std::size_t m = 0; m < group.members.size(); ++m) {
        const Vec64& x0 = group.members[m].final_sample;
        for (std::size_t j = 0; j < config_.timesteps_per_sample; ++j) {
          const double t = sample_timestep(sampler, rng, ctx.grid);
          const Vec64 eps = numkit::randn(rng, x0.size());
          const LossGrad lg = awm_loss(params, x0, eps, t, group.emb, group.advantages[m]);
          loss += lg.loss;
          grad += lg.grad;
          ++count;
        }
      }
    }
    if (count == 0) break;
    grad *= 1.0 / static_cast<double>(count);
    numkit::adam_update(params.velocity_net(), grad, adam);
    loss_sum += loss / static_cast<double>(count);
  }
  stats.loss = loss_sum / static_cast<double>(config_.inner_epochs);
  return stats;
}

}  // namespace flowforge::trainers
