#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/flow_model.hpp"
#include "flowforge/numkit.hpp"

namespace flowforge::rewards {

using model::Condition;
using model::ToyDataSpec;
using numkit::Vec64;

using RewardParams = std::map<std::string, double>;

struct RewardSpec {
  std::string name;
  std::string backend_id;
  double weight = 1.0;
  RewardParams params;

  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;
};

enum class RewardKind { Pointwise, Groupwise };

// A loaded reward model. Backends are stateless after construction.
class RewardBackend {
 public:
  explicit RewardBackend(std::string backend_id);
  virtual ~RewardBackend() = default;
  RewardBackend(const RewardBackend&) = delete;
  RewardBackend& operator=(const RewardBackend&) = delete;

  const std::string& id() const { return id_; }
  virtual RewardKind kind() const = 0;

  // Pointwise backends override this.
  virtual double score(const Vec64& sample, Condition cond, const RewardParams& params) const;
  // Groupwise backends override this.
  virtual Vec64 rank(const std::vector<Vec64>& samples, Condition cond,
                     const RewardParams& params) const;

  // Number of backend objects ever constructed in this process.
  static std::uint64_t constructions();

 private:
  std::string id_;
};

// exp(-||x - mu_target||^2), mu_target = modes_of(cond)[params["target_mode"]].
class ModeAffinityBackend final : public RewardBackend {
 public:
  ModeAffinityBackend(std::string backend_id, ToyDataSpec data);
  RewardKind kind() const override { return RewardKind::Pointwise; }
  double score(const Vec64& sample, Condition cond, const RewardParams& params) const override;

 private:
  ToyDataSpec data_;
};

// Round-robin win rate by distance to the target mode; ties count half.
class ModeWinrateBackend final : public RewardBackend {
 public:
  ModeWinrateBackend(std::string backend_id, ToyDataSpec data);
  RewardKind kind() const override { return RewardKind::Groupwise; }
  Vec64 rank(const std::vector<Vec64>& samples, Condition cond,
             const RewardParams& params) const override;

 private:
  ToyDataSpec data_;
};

const Vec64& target_mode(const ToyDataSpec& data, Condition cond, const RewardParams& params);

double score_pointwise(const RewardBackend& backend, const Vec64& sample, Condition cond,
                       const RewardParams& params);
Vec64 rank_groupwise(const RewardBackend& backend, const std::vector<Vec64>& samples,
                     Condition cond, const RewardParams& params);

struct RewardOutput {
  std::string name;
  Vec64 scores;
};

using BackendFactory = std::function<std::unique_ptr<RewardBackend>(const std::string& backend_id)>;

// Reward configurations bound to shared backend instances; each distinct
// backend_id is constructed exactly once.
class LoadedRewards {
 public:
  const std::vector<RewardSpec>& specs() const { return specs_; }
  std::size_t backend_count() const { return backends_.size(); }
  std::size_t load_count(const std::string& backend_id) const;
  const RewardBackend& backend_for(std::size_t spec_index) const;

  // Scores a whole group for every configured reward, in spec order.
  std::vector<RewardOutput> score_group(const std::vector<Vec64>& samples, Condition cond) const;

 private:
  friend LoadedRewards load_rewards(const std::vector<RewardSpec>&, const BackendFactory&);
  std::vector<RewardSpec> specs_;
  std::map<std::string, std::shared_ptr<const RewardBackend>> backends_;
  std::map<std::string, std::size_t> load_counts_;
};

LoadedRewards load_rewards(const std::vector<RewardSpec>& specs, const BackendFactory& factory);

enum class AdvantageMode { WeightedSum, Gdpo };
std::string_view advantage_mode_name(AdvantageMode m);
std::optional<AdvantageMode> parse_advantage_mode(std::string_view name);

// weighted_sum: normalize(sum_r w_r s_r).  gdpo: sum_r w_r normalize(s_r).
// normalize(s) = (s - mean) / max(population_std, 1e-8); constant groups map to 0.
Vec64 aggregate_advantages(const std::vector<RewardOutput>& per_reward,
                           const std::vector<double>& weights, AdvantageMode mode);

// Maps raw scores to [0,1] for use as a mixing weight: groupwise scores are
// used as-is, pointwise scores are min-max normalized within the group
// (constant groups map to 0.5).
Vec64 unit_interval_scores(const RewardOutput& output, RewardKind kind);

}  // namespace flowforge::rewards
