#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/config.hpp"
#include "flowforge/errors.hpp"
#include "flowforge/flow_model.hpp"
#include "flowforge/rewards.hpp"
#include "flowforge/sde_scheduler.hpp"
#include "flowforge/trainers.hpp"

namespace flowforge::registry {

using config::RunConfig;

enum class ComponentKind { Model, Trainer, Scheduler, RewardBackend };
std::string_view kind_name(ComponentKind kind);

// Model adapter: owns the data distribution and knows how to build fresh
// parameters for it.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  virtual std::string_view name() const = 0;
  virtual model::ModelParams initialize(std::uint64_t seed) const = 0;
  virtual const model::ToyDataSpec& data() const = 0;
};

class ToyFlowAdapter final : public ModelAdapter {
 public:
  explicit ToyFlowAdapter(const RunConfig& config);
  std::string_view name() const override { return "toy_flow"; }
  model::ModelParams initialize(std::uint64_t seed) const override;
  const model::ToyDataSpec& data() const override { return data_; }

 private:
  std::vector<std::size_t> hidden_dims_;
  std::size_t embed_dim_;
  model::ToyDataSpec data_;
};

struct Scheduler {
  sde::NoiseSchedule schedule;
  sde::TimeGrid grid;
};

template <typename Product, typename... Args>
class FactoryTable {
 public:
  using Factory = std::function<std::unique_ptr<Product>(Args...)>;

  explicit FactoryTable(ComponentKind kind) : kind_(kind) {}

  void add(const std::string& name, Factory factory);
  std::unique_ptr<Product> create(const std::string& name, Args... args) const;
  bool contains(const std::string& name) const { return factories_.contains(name); }
  std::vector<std::string> names() const;

 private:
  ComponentKind kind_;
  std::map<std::string, Factory> factories_;
};

// (kind, name) -> factory. Populated at startup, read-only afterwards.
class Registry {
 public:
  using ModelFactory = FactoryTable<ModelAdapter, const RunConfig&>::Factory;
  using SchedulerFactory = FactoryTable<Scheduler, const RunConfig&>::Factory;
  using TrainerFactory = FactoryTable<trainers::Trainer, const RunConfig&>::Factory;
  using RewardFactory =
      FactoryTable<rewards::RewardBackend, const RunConfig&, const std::string&>::Factory;

  void register_model(const std::string& name, ModelFactory f);
  void register_scheduler(const std::string& name, SchedulerFactory f);
  void register_trainer(const std::string& name, TrainerFactory f);
  void register_reward_backend(const std::string& name, RewardFactory f);

  std::unique_ptr<ModelAdapter> create_model(const std::string& name, const RunConfig& c) const;
  std::unique_ptr<Scheduler> create_scheduler(const std::string& name, const RunConfig& c) const;
  std::unique_ptr<trainers::Trainer> create_trainer(const std::string& name,
                                                    const RunConfig& c) const;
  std::unique_ptr<rewards::RewardBackend> create_reward_backend(const std::string& name,
                                                                const RunConfig& c) const;

  std::vector<std::string> names(ComponentKind kind) const;
  bool contains(ComponentKind kind, const std::string& name) const;

 private:
  FactoryTable<ModelAdapter, const RunConfig&> models_{ComponentKind::Model};
  FactoryTable<Scheduler, const RunConfig&> schedulers_{ComponentKind::Scheduler};
  FactoryTable<trainers::Trainer, const RunConfig&> trainers_{ComponentKind::Trainer};
  FactoryTable<rewards::RewardBackend, const RunConfig&, const std::string&> rewards_{
      ComponentKind::RewardBackend};
};

// Registry with every built-in component: model toy_flow; schedulers
// flow_sde, dance_sde, cps, ode; trainers grpo, mix_grpo, grpo_guard, nft,
// awm; reward backends mode_affinity, mode_winrate.
Registry default_registry();

// ---------------------------------------------------------------------------

template <typename Product, typename... Args>
void FactoryTable<Product, Args...>::add(const std::string& name, Factory factory) {
  if (name.empty()) throw flowforge::RegistryError(std::string(kind_name(kind_)) + " name must be non-empty");
  if (factories_.contains(name)) {
    throw flowforge::RegistryError("duplicate registration of " + std::string(kind_name(kind_)) + " '" +
                        name + "'");
  }
  factories_.emplace(name, std::move(factory));
}

template <typename Product, typename... Args>
std::unique_ptr<Product> FactoryTable<Product, Args...>::create(const std::string& name,
                                                                Args... args) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) {
    std::string known;
    for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
    throw flowforge::RegistryError("unknown " + std::string(kind_name(kind_)) + " '" + name +
                        "'; registered: {" + known + "}");
  }
  return it->second(args...);
}

template <typename Product, typename... Args>
std::vector<std::string> FactoryTable<Product, Args...>::names() const {
  std::vector<std::string> out;
  for (const auto& [n, f] : factories_) out.push_back(n);
  return out;
}

}  // namespace flowforge::registry
