#include "flowforge/run.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "flowforge/cache.hpp"
#include "flowforge/errors.hpp"
#include "flowforge/yaml.hpp"

namespace flowforge::run {

namespace {

constexpr std::uint64_t kPretrainStream = 1;
constexpr std::uint64_t kTrainStream = 2;

}  // namespace

std::vector<model::Condition> AssembledRun::conditions() const {
  std::vector<model::Condition> out;
  for (std::uint32_t c = 0; c < model->data().num_conditions(); ++c) out.push_back({c});
  return out;
}

AssembledRun build_run(const RunConfig& config, const registry::Registry& registry) {
  AssembledRun run;
  run.config = config;
  run.model = registry.create_model(config.model.name, config);
  run.scheduler = registry.create_scheduler(config.scheduler.dynamics, config);
  run.trainer = registry.create_trainer(config.trainer.trainer_type, config);
  if (run.trainer->needs_log_probs() && run.scheduler->schedule.dynamics == sde::Dynamics::ODE) {
    throw IncompatibleError("trainer '" + config.trainer.trainer_type +
                            "' optimizes SDE transition log-probabilities, but scheduler "
                            "dynamics 'ode' is deterministic and has none; use flow_sde, "
                            "dance_sde or cps, or pick a solver-agnostic trainer (nft, awm)");
  }
  run.rewards = rewards::load_rewards(config.rewards, [&](const std::string& id) {
    return registry.create_reward_backend(id, config);
  });
  run.advantage_mode = config::advantage_mode(config);
  return run;
}

// ---------------------------------------------------------------------------

PretrainResult pretrain(const AssembledRun& run, ModelParams params, std::size_t steps) {
  const auto& data = run.model->data();
  const auto conds = run.conditions();
  std::vector<model::CondEmbedding> embs;
  for (auto c : conds) embs.push_back(model::encode_condition(params, c));

  const auto& pc = run.config.pretrain;
  numkit::AdamState adam = numkit::AdamState::for_params(params.trainable_params(), pc.lr);
  numkit::Rng rng = numkit::Rng(run.config.seed).split(kPretrainStream);
  PretrainResult out;
  for (std::size_t step = 0; step < steps; ++step) {
    numkit::Vec64 grad(params.trainable_params());
    double loss = 0.0;
    for (std::size_t b = 0; b < pc.batch_size; ++b) {
      const model::Condition cond{static_cast<std::uint32_t>(rng.index(conds.size()))};
      const numkit::Vec64 x0 = model::sample_data(data, cond, rng);
      const numkit::Vec64 eps = numkit::randn(rng, model::kDataDim);
      const double t = rng.uniform();
      const auto lg = model::fm_loss(params, x0, eps, t, embs[cond.id]);
      loss += lg.loss;
      grad += lg.grad;
    }
    const double inv = 1.0 / static_cast<double>(pc.batch_size);
    grad *= inv;
    numkit::adam_update(params.velocity_net(), grad, adam);
    out.final_loss = loss * inv;
  }
  out.params = std::move(params);
  return out;
}

// ---------------------------------------------------------------------------

TrainResult train(const AssembledRun& run, ModelParams params, const TrainOptions& options) {
  const auto conds = run.conditions();
  const auto& tc = run.config.trainer;
  const std::size_t total_steps = options.steps.value_or(tc.total_steps);

  std::map<std::uint32_t, model::CondEmbedding> cached;
  trainers::EmbeddingFn embed;
  if (run.config.cache.enabled) {
    cached = cache::load_all(run.config.cache.dir, conds);
    const auto& table = params.encoder_table();
    for (auto c : conds) {
      const auto row = table.row(c.id);
      const auto& values = cached.at(c.id).values;
      if (!std::equal(row.begin(), row.end(), values.begin(), values.end())) {
        throw FormatError("cache at " + run.config.cache.dir +
                          " was built from a different encoder than the checkpoint");
      }
    }
    cache::offload_encoder(params, run.config.cache.dir);
    embed = [&cached](model::Condition c) { return cached.at(c.id); };
  } else {
    embed = [&params](model::Condition c) { return model::encode_condition(params, c); };
  }

  const std::uint64_t encoder_baseline = model::encoder_invocations();
  numkit::AdamState adam = numkit::AdamState::for_params(params.trainable_params(), tc.lr);
  const numkit::Rng root = numkit::Rng(run.config.seed).split(kTrainStream);
  const auto& grid = run.scheduler->grid;
  const trainers::TrainerContext ctx{grid, run.rewards};
  trainers::CollectOptions collect{tc.group_size, run.advantage_mode, false};

  TrainResult result;
  for (std::size_t step = 0; step < total_steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    const numkit::Rng step_rng = root.split(step);
    const auto mask = run.trainer->sde_mask(grid.intervals(), step);
    const trainers::RolloutBatch batch =
        trainers::collect_rollouts(params, run.scheduler->schedule, grid, run.rewards, conds,
                                   embed, mask, collect, step_rng.split(0));
    numkit::Rng opt_rng = step_rng.split(1);
    const trainers::OptimizeStats stats =
        run.trainer->optimize(params, batch, adam, ctx, opt_rng);

    MetricsRow row;
    row.step = step;
    const std::size_t n_rewards = run.rewards.specs().size();
    row.per_reward.assign(n_rewards, 0.0);
    std::size_t members = 0;
    std::size_t sde_steps = 0;
    for (const auto& group : batch.groups) {
      for (std::size_t r = 0; r < n_rewards; ++r) {
        for (double s : group.rewards[r].scores) row.per_reward[r] += s;
      }
      for (const auto& m : group.members) sde_steps += m.sde_steps();
      members += group.members.size();
    }
    for (std::size_t r = 0; r < n_rewards; ++r) {
      row.per_reward[r] /= static_cast<double>(members);
      row.mean_reward += run.rewards.specs()[r].weight * row.per_reward[r];
    }
    row.loss = stats.loss;
    row.clip_fraction = stats.clip_fraction;
    row.sde_steps_per_traj = static_cast<double>(sde_steps) / static_cast<double>(members);
    row.encoder_invocations_cumulative = model::encoder_invocations() - encoder_baseline;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
    if (options.on_step) options.on_step(row, stats);
    result.rows.push_back(std::move(row));
    result.stats.push_back(stats);
  }
  result.params = std::move(params);
  return result;
}

ModelParams with_encoder_of(const ModelParams& trained, const ModelParams& original) {
  return ModelParams(trained.spec(), trained.velocity_net(), original.encoder_table());
}

// ---------------------------------------------------------------------------

std::vector<numkit::Vec64> generate_samples(const ModelParams& params, const sde::TimeGrid& grid,
                                            model::Condition cond, std::size_t n,
                                            std::uint64_t seed, sde::Solver solver) {
  const model::CondEmbedding emb = model::encode_condition(params, cond);
  numkit::Rng rng = numkit::Rng(seed).split(cond.id);
  std::vector<numkit::Vec64> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(sde::ode_sample(params, grid, emb, numkit::randn(rng, model::kDataDim), solver));
  }
  return out;
}

EvalResult evaluate(const ModelParams& params, const model::ToyDataSpec& data,
                    const sde::TimeGrid& grid, std::size_t n_samples, std::size_t target_mode,
                    std::uint64_t seed, sde::Solver solver) {
  EvalResult out;
  const std::size_t n_cond = data.num_conditions();
  const double radius = 3.0 * data.mode_std;
  std::size_t covered = 0;
  std::size_t on_target = 0;
  double affinity = 0.0;
  for (std::uint32_t c = 0; c < n_cond; ++c) {
    const std::size_t n = n_samples / n_cond + (c < n_samples % n_cond ? 1 : 0);
    const model::Condition cond{c};
    const auto& modes = data.modes_of(cond);
    const numkit::Vec64& target = modes.at(target_mode);
    for (const auto& x : generate_samples(params, grid, cond, n, seed, solver)) {
      if (model::nearest_mode_within(data, cond, x, radius)) ++covered;
      const double d2 = numkit::squared_norm(x - target);
      if (std::sqrt(d2) <= radius) ++on_target;
      affinity += std::exp(-d2);
      ++out.samples;
    }
  }
  if (out.samples) {
    const double n = static_cast<double>(out.samples);
    out.coverage = static_cast<double>(covered) / n;
    out.target_fraction = static_cast<double>(on_target) / n;
    out.mean_affinity = affinity / n;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> metrics_header(const std::vector<std::string>& reward_names) {
  std::vector<std::string> h{"step", "mean_reward"};
  for (const auto& n : reward_names) h.push_back("reward_" + n);
  for (const char* c : {"loss", "clip_fraction", "sde_steps_per_traj",
                        "encoder_invocations_cumulative", "wall_ms"}) {
    h.emplace_back(c);
  }
  return h;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& reward_names,
                       const std::vector<MetricsRow>& rows) {
  using yaml::format_double;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMetricsSchemaLine << "\n";
  const auto header = metrics_header(reward_names);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& r : rows) {
    out << r.step << "," << format_double(r.mean_reward);
    for (double v : r.per_reward) out << "," << format_double(v);
    out << "," << format_double(r.loss) << ","
        << (r.clip_fraction ? format_double(*r.clip_fraction) : "") << ","
        << format_double(r.sde_steps_per_traj) << "," << r.encoder_invocations_cumulative;
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", r.wall_ms);
    out << "," << wall << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

bool parse_number(const std::string& s, double& v) {
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && end == s.data() + s.size();
}

}  // namespace

std::vector<std::optional<double>> MetricsTable::column(const std::string& name) const {
  std::size_t idx = columns.size();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) idx = i;
  }
  if (idx == columns.size()) throw FormatError("metrics: no column '" + name + "'");
  std::vector<std::optional<double>> out;
  for (const auto& row : rows) {
    double v = 0.0;
    if (row[idx].empty()) {
      out.emplace_back();
    } else if (parse_number(row[idx], v)) {
      out.emplace_back(v);
    } else {
      out.emplace_back();
    }
  }
  return out;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  MetricsTable table;
  std::string line;
  int number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (number == 1 && line != kMetricsSchemaLine) {
        throw FormatError("metrics line 1: unsupported schema '" + line + "'");
      }
      continue;
    }
    auto cells = split_csv(line);
    if (!have_header) {
      table.columns = std::move(cells);
      have_header = true;
      if (table.columns.empty() || table.columns.front() != "step") {
        throw FormatError("metrics line " + std::to_string(number) + ": bad header");
      }
      continue;
    }
    if (cells.size() != table.columns.size()) {
      throw FormatError("metrics line " + std::to_string(number) + ": expected " +
                        std::to_string(table.columns.size()) + " fields, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v = 0.0;
      const bool optional_cell = table.columns[i] == "clip_fraction";
      if ((cells[i].empty() && !optional_cell) || (!cells[i].empty() && !parse_number(cells[i], v))) {
        throw FormatError("metrics line " + std::to_string(number) + ": bad value '" +
                          cells[i] + "' in column " + table.columns[i]);
      }
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw FormatError("metrics: missing header in " + path.string());
  return table;
}

}  // namespace flowforge::run
