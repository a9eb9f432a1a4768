#include "flowforge/rewards.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "flowforge/errors.hpp"

namespace flowforge::rewards {

namespace {
std::atomic<std::uint64_t> g_constructions{0};
}  // namespace

RewardBackend::RewardBackend(std::string backend_id) : id_(std::move(backend_id)) {
  g_constructions.fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t RewardBackend::constructions() {
  return g_constructions.load(std::memory_order_relaxed);
}

double RewardBackend::score(const Vec64&, Condition, const RewardParams&) const {
  throw DomainError("reward backend '" + id_ + "' is not pointwise");
}

Vec64 RewardBackend::rank(const std::vector<Vec64>&, Condition, const RewardParams&) const {
  throw DomainError("reward backend '" + id_ + "' is not groupwise");
}

const Vec64& target_mode(const ToyDataSpec& data, Condition cond, const RewardParams& params) {
  const auto it = params.find("target_mode");
  if (it == params.end()) throw ConfigError("reward params: missing 'target_mode'");
  const auto& modes = data.modes_of(cond);
  const double idx = it->second;
  if (idx < 0 || idx != std::floor(idx) || idx >= static_cast<double>(modes.size())) {
    throw ConfigError("reward params: target_mode " + std::to_string(idx) + " out of range");
  }
  return modes[static_cast<std::size_t>(idx)];
}

ModeAffinityBackend::ModeAffinityBackend(std::string backend_id, ToyDataSpec data)
    : RewardBackend(std::move(backend_id)), data_(std::move(data)) {}

double ModeAffinityBackend::score(const Vec64& sample, Condition cond,
                                  const RewardParams& params) const {
  return std::exp(-numkit::squared_norm(sample - target_mode(data_, cond, params)));
}

ModeWinrateBackend::ModeWinrateBackend(std::string backend_id, ToyDataSpec data)
    : RewardBackend(std::move(backend_id)), data_(std::move(data)) {}

Vec64 ModeWinrateBackend::rank(const std::vector<Vec64>& samples, Condition cond,
                               const RewardParams& params) const {
  const std::size_t k = samples.size();
  if (k < 2) throw DomainError("groupwise ranking needs at least 2 samples");
  const Vec64& mu = target_mode(data_, cond, params);
  std::vector<double> dist(k);
  for (std::size_t i = 0; i < k; ++i) dist[i] = numkit::squared_norm(samples[i] - mu);
  Vec64 scores(k);
  for (std::size_t i = 0; i < k; ++i) {
    double wins = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      if (dist[i] < dist[j]) {
        wins += 1.0;
      } else if (dist[i] == dist[j]) {
        wins += 0.5;
      }
    }
    scores[i] = wins / static_cast<double>(k - 1);
  }
  return scores;
}

double score_pointwise(const RewardBackend& backend, const Vec64& sample, Condition cond,
                       const RewardParams& params) {
  if (backend.kind() != RewardKind::Pointwise) {
    throw DomainError("reward backend '" + backend.id() + "' is not pointwise");
  }
  return backend.score(sample, cond, params);
}

Vec64 rank_groupwise(const RewardBackend& backend, const std::vector<Vec64>& samples,
                     Condition cond, const RewardParams& params) {
  if (backend.kind() != RewardKind::Groupwise) {
    throw DomainError("reward backend '" + backend.id() + "' is not groupwise");
  }
  return backend.rank(samples, cond, params);
}

// ---------------------------------------------------------------------------

std::size_t LoadedRewards::load_count(const std::string& backend_id) const {
  const auto it = load_counts_.find(backend_id);
  return it == load_counts_.end() ? 0 : it->second;
}

const RewardBackend& LoadedRewards::backend_for(std::size_t spec_index) const {
  return *backends_.at(specs_.at(spec_index).backend_id);
}

std::vector<RewardOutput> LoadedRewards::score_group(const std::vector<Vec64>& samples,
                                                     Condition cond) const {
  std::vector<RewardOutput> out;
  out.reserve(specs_.size());
  for (std::size_t r = 0; r < specs_.size(); ++r) {
    const auto& spec = specs_[r];
    const RewardBackend& backend = backend_for(r);
    RewardOutput o{spec.name, Vec64(samples.size())};
    if (backend.kind() == RewardKind::Pointwise) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        o.scores[i] = score_pointwise(backend, samples[i], cond, spec.params);
      }
    } else {
      o.scores = rank_groupwise(backend, samples, cond, spec.params);
    }
    out.push_back(std::move(o));
  }
  return out;
}

LoadedRewards load_rewards(const std::vector<RewardSpec>& specs, const BackendFactory& factory) {
  if (specs.empty()) throw ConfigError("at least one reward must be configured");
  LoadedRewards loaded;
  for (const auto& spec : specs) {
    if (!std::isfinite(spec.weight)) {
      throw ConfigError("reward '" + spec.name + "': weight must be finite");
    }
    for (const auto& prev : loaded.specs_) {
      if (prev.name == spec.name) throw ConfigError("duplicate reward name '" + spec.name + "'");
    }
    if (!loaded.backends_.contains(spec.backend_id)) {
      loaded.backends_.emplace(spec.backend_id, factory(spec.backend_id));
      ++loaded.load_counts_[spec.backend_id];
    }
    loaded.specs_.push_back(spec);
  }
  return loaded;
}

// ---------------------------------------------------------------------------

std::string_view advantage_mode_name(AdvantageMode m) {
  return m == AdvantageMode::WeightedSum ? "weighted_sum" : "gdpo";
}

std::optional<AdvantageMode> parse_advantage_mode(std::string_view name) {
  if (name == "weighted_sum") return AdvantageMode::WeightedSum;
  if (name == "gdpo") return AdvantageMode::Gdpo;
  return std::nullopt;
}

namespace {

Vec64 normalized(const Vec64& s) {
  const double mu = numkit::mean(s.span());
  const double sd = numkit::population_std(s.span());
  Vec64 out(s.size());
  // Zero-variance groups carry no signal.
  if (sd == 0.0) return out;
  const double denom = std::max(sd, numkit::kStdFloor);
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - mu) / denom;
  return out;
}

}  // namespace

Vec64 aggregate_advantages(const std::vector<RewardOutput>& per_reward,
                           const std::vector<double>& weights, AdvantageMode mode) {
  if (per_reward.empty()) throw DomainError("aggregate_advantages: no rewards");
  numkit::require_same_size(weights.size(), per_reward.size(), "aggregate_advantages weights");
  const std::size_t g = per_reward.front().scores.size();
  for (const auto& r : per_reward) {
    numkit::require_same_size(r.scores.size(), g, "aggregate_advantages scores");
  }
  if (g < 2) throw DomainError("aggregate_advantages: group size must be >= 2");

  if (mode == AdvantageMode::WeightedSum) {
    Vec64 total(g);
    for (std::size_t r = 0; r < per_reward.size(); ++r) total.axpy(weights[r], per_reward[r].scores);
    return normalized(total);
  }
  Vec64 adv(g);
  for (std::size_t r = 0; r < per_reward.size(); ++r) {
    adv.axpy(weights[r], normalized(per_reward[r].scores));
  }
  return adv;
}

Vec64 unit_interval_scores(const RewardOutput& output, RewardKind kind) {
  if (kind == RewardKind::Groupwise) return output.scores;
  const auto [lo, hi] = std::minmax_element(output.scores.begin(), output.scores.end());
  Vec64 out(output.scores.size(), 0.5);
  if (lo == output.scores.end() || *hi == *lo) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (output.scores[i] - *lo) / (*hi - *lo);
  }
  return out;
}

}  // namespace flowforge::rewards
