#include "flowforge/registry.hpp"

namespace flowforge::registry {

std::string_view kind_name(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Model:
      return "model";
    case ComponentKind::Trainer:
      return "trainer";
    case ComponentKind::Scheduler:
      return "scheduler";
    case ComponentKind::RewardBackend:
      return "reward_backend";
  }
  return "?";
}

ToyFlowAdapter::ToyFlowAdapter(const RunConfig& config)
    : hidden_dims_(config.model.hidden_dims),
      embed_dim_(config.model.embed_dim),
      data_(config::data_spec(config)) {}

model::ModelParams ToyFlowAdapter::initialize(std::uint64_t seed) const {
  numkit::Rng rng(seed);
  return model::init_model_params(hidden_dims_, data_.num_conditions(), embed_dim_, rng);
}

void Registry::register_model(const std::string& name, ModelFactory f) {
  models_.add(name, std::move(f));
}
void Registry::register_scheduler(const std::string& name, SchedulerFactory f) {
  schedulers_.add(name, std::move(f));
}
void Registry::register_trainer(const std::string& name, TrainerFactory f) {
  trainers_.add(name, std::move(f));
}
void Registry::register_reward_backend(const std::string& name, RewardFactory f) {
  rewards_.add(name, std::move(f));
}

std::unique_ptr<ModelAdapter> Registry::create_model(const std::string& name,
                                                     const RunConfig& c) const {
  return models_.create(name, c);
}
std::unique_ptr<Scheduler> Registry::create_scheduler(const std::string& name,
                                                      const RunConfig& c) const {
  return schedulers_.create(name, c);
}
std::unique_ptr<trainers::Trainer> Registry::create_trainer(const std::string& name,
                                                            const RunConfig& c) const {
  return trainers_.create(name, c);
}
std::unique_ptr<rewards::RewardBackend> Registry::create_reward_backend(const std::string& name,
                                                                        const RunConfig& c) const {
  return rewards_.create(name, c, name);
}

std::vector<std::string> Registry::names(ComponentKind kind) const {
  switch (kind) {
    case ComponentKind::Model:
      return models_.names();
    case ComponentKind::Trainer:
      return trainers_.names();
    case ComponentKind::Scheduler:
      return schedulers_.names();
    case ComponentKind::RewardBackend:
      return rewards_.names();
  }
  return {};
}

bool Registry::contains(ComponentKind kind, const std::string& name) const {
  switch (kind) {
    case ComponentKind::Model:
      return models_.contains(name);
    case ComponentKind::Trainer:
      return trainers_.contains(name);
    case ComponentKind::Scheduler:
      return schedulers_.contains(name);
    case ComponentKind::RewardBackend:
      return rewards_.contains(name);
  }
  return false;
}

Registry default_registry() {
  Registry r;
  r.register_model("toy_flow",
                   [](const RunConfig& c) { return std::make_unique<ToyFlowAdapter>(c); });

  for (auto dyn : {sde::Dynamics::FlowSDE, sde::Dynamics::DanceSDE, sde::Dynamics::CPS,
                   sde::Dynamics::ODE}) {
    r.register_scheduler(std::string(sde::dynamics_name(dyn)), [dyn](const RunConfig& c) {
      const auto& s = c.scheduler;
      return std::make_unique<Scheduler>(Scheduler{sde::NoiseSchedule{dyn, s.eta},
                                                   sde::make_time_grid(s.n_steps, s.t_min, s.t_max)});
    });
  }

  using trainers::GrpoVariant;
  for (auto [name, variant] : {std::pair{"grpo", GrpoVariant::Plain},
                               std::pair{"mix_grpo", GrpoVariant::Mix},
                               std::pair{"grpo_guard", GrpoVariant::Guard}}) {
    r.register_trainer(name, [variant](const RunConfig& c) {
      if (variant == GrpoVariant::Mix && c.trainer.mix_k + 1 > c.scheduler.n_steps) {
        throw ConfigError("trainer.mix_k exceeds the number of non-terminal grid intervals");
      }
      return std::make_unique<trainers::GrpoTrainer>(c.trainer, variant);
    });
  }
  r.register_trainer("nft",
                     [](const RunConfig& c) { return std::make_unique<trainers::NftTrainer>(c.trainer); });
  r.register_trainer("awm",
                     [](const RunConfig& c) { return std::make_unique<trainers::AwmTrainer>(c.trainer); });

  r.register_reward_backend("mode_affinity", [](const RunConfig& c, const std::string& id) {
    return std::make_unique<rewards::ModeAffinityBackend>(id, config::data_spec(c));
  });
  r.register_reward_backend("mode_winrate", [](const RunConfig& c, const std::string& id) {
    return std::make_unique<rewards::ModeWinrateBackend>(id, config::data_spec(c));
  });
  return r;
}

}  // namespace flowforge::registry
