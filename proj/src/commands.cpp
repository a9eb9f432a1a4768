#include "flowforge/commands.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>

#include "flowforge/cache.hpp"
#include "flowforge/config.hpp"
#include "flowforge/errors.hpp"
#include "flowforge/registry.hpp"
#include "flowforge/run.hpp"
#include "flowforge/yaml.hpp"

namespace flowforge::cli {

namespace fs = std::filesystem;

namespace {

// Runs `body`, translating library errors into exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const IncompatibleError& e) {
    err << "error: " << e.what() << "\n";
    return kIncompatible;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kIoError;
  } catch (const MissingEntryError& e) {
    err << "data error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

config::RunConfig load_config(const std::string& path, std::ostream& err) {
  auto parsed = config::load_config_file(path);
  for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
  if (const char* env = std::getenv("FLOWFORGE_SEED")) {
    const std::string s(env);
    std::uint64_t seed = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || end != s.data() + s.size()) {
      throw ConfigError("FLOWFORGE_SEED must be a non-negative integer, got '" + s + "'");
    }
    parsed.config.seed = seed;
  }
  return parsed.config;
}

}  // namespace

int cmd_preprocess(const PreprocessArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(args.config, err);
    const auto registry = registry::default_registry();
    const auto adapter = registry.create_model(cfg.model.name, cfg);
    const model::ModelParams params =
        args.ckpt ? model::load_checkpoint(*args.ckpt) : adapter->initialize(cfg.seed);
    std::vector<model::Condition> conds;
    for (std::uint32_t c = 0; c < params.num_conditions(); ++c) conds.push_back({c});
    const auto index = cache::preprocess(params, conds, cfg.cache.dir);
    std::uintmax_t bytes = fs::file_size(cache::index_path(cfg.cache.dir));
    for (auto c : conds) bytes += fs::file_size(cache::entry_path(cfg.cache.dir, c));
    out << "cache: " << cfg.cache.dir << "\n"
        << "entries: " << index.cond_ids.size() << "\n"
        << "bytes: " << bytes << "\n"
        << "offloadable encoder parameters: " << params.resident_frozen_params() << "\n";
    return kOk;
  });
}

int cmd_pretrain(const PretrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(args.config, err);
    const auto registry = registry::default_registry();
    // Only the model matters here; building the whole run would reject
    // trainer/scheduler mismatches that pretraining does not care about.
    run::AssembledRun run;
    run.config = cfg;
    run.model = registry.create_model(cfg.model.name, cfg);
    const auto& adapter = run.model;
    const std::size_t steps = args.steps.value_or(cfg.pretrain.steps);
    auto result = run::pretrain(run, adapter->initialize(cfg.seed), steps);
    model::save_checkpoint(result.params, args.out);

    const auto grid = sde::make_time_grid(cfg.scheduler.n_steps, cfg.scheduler.t_min,
                                          cfg.scheduler.t_max);
    const auto eval = run::evaluate(result.params, adapter->data(), grid, 500, 0, cfg.seed);
    out << "checkpoint: " << args.out << "\n"
        << "steps: " << steps << "\n"
        << "final fm_loss: " << yaml::format_double(result.final_loss) << "\n"
        << "mode coverage (500 ODE samples): " << eval.coverage << "\n";
    return kOk;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(args.config, err);
    const auto registry = registry::default_registry();
    const run::AssembledRun run = run::build_run(cfg, registry);
    const model::ModelParams original = model::load_checkpoint(args.ckpt);
    const fs::path dir = args.out_dir.value_or(cfg.output_dir);
    fs::create_directories(dir);

    run::TrainOptions opts;
    opts.steps = args.steps;
    const auto result = run::train(run, original, opts);

    std::vector<std::string> names;
    for (const auto& s : run.rewards.specs()) names.push_back(s.name);
    run::write_metrics_csv(dir / "metrics.csv", names, result.rows);
    model::save_checkpoint(run::with_encoder_of(result.params, original), dir / "final.ckpt");

    out << "trainer: " << run.trainer->name() << "  dynamics: " << cfg.scheduler.dynamics
        << "  steps: " << result.rows.size() << "\n";
    if (!result.rows.empty()) {
      out << "mean reward: initial " << result.rows.front().mean_reward << " -> final "
          << result.rows.back().mean_reward << "\n"
          << "encoder invocations: " << result.rows.back().encoder_invocations_cumulative << "\n";
    }
    out << "metrics: " << (dir / "metrics.csv").string() << "\n";
    return kOk;
  });
}

int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(args.config, err);
    const auto solver = sde::parse_solver(args.solver);
    if (!solver) throw ConfigError("--solver must be euler or heun");
    const model::ModelParams params = model::load_checkpoint(args.ckpt);
    if (args.cond < 0 || static_cast<std::uint64_t>(args.cond) >= params.num_conditions()) {
      throw DomainError("--cond " + std::to_string(args.cond) + " out of range [0, " +
                        std::to_string(params.num_conditions()) + ")");
    }
    const auto grid = sde::make_time_grid(cfg.scheduler.n_steps, cfg.scheduler.t_min,
                                          cfg.scheduler.t_max);
    const model::Condition cond{static_cast<std::uint32_t>(args.cond)};
    const auto samples = run::generate_samples(params, grid, cond, args.n, cfg.seed, *solver);

    if (fs::path(args.out).has_parent_path()) fs::create_directories(fs::path(args.out).parent_path());
    std::ofstream f(args.out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + args.out);
    f << "x,y\n";
    for (const auto& s : samples) {
      f << yaml::format_double(s[0]) << "," << yaml::format_double(s[1]) << "\n";
    }
    if (!f) throw IoError("write failed: " + args.out);
    out << "wrote " << samples.size() << " samples to " << args.out << "\n";
    return kOk;
  });
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path path = fs::path(args.run_dir) / "metrics.csv";
    if (!fs::exists(path)) throw IoError("no metrics.csv in " + args.run_dir);
    const run::MetricsTable table = run::read_metrics_csv(path);
    if (table.rows.empty()) throw FormatError("metrics.csv has no data rows");

    const auto reward = table.column("mean_reward");
    const std::size_t n = reward.size();
    const std::size_t window = std::max<std::size_t>(1, n / 10);
    auto window_mean = [&](std::size_t begin) {
      double acc = 0.0;
      for (std::size_t i = begin; i < begin + window; ++i) acc += reward[i].value_or(0.0);
      return acc / static_cast<double>(window);
    };
    const double first = window_mean(0);
    const double last = window_mean(n - window);

    out << std::setprecision(6);
    out << "steps: " << n << "\n"
        << "reward window: " << window << " steps\n"
        << "mean reward first window: " << first << "\n"
        << "mean reward last window: " << last << "\n"
        << "trend delta: " << (last - first) << "\n";

    const auto clip = table.column("clip_fraction");
    double clip_sum = 0.0;
    double clip_max = 0.0;
    std::size_t clip_n = 0;
    for (const auto& c : clip) {
      if (!c) continue;
      clip_sum += *c;
      clip_max = std::max(clip_max, *c);
      ++clip_n;
    }
    if (clip_n) {
      out << "clip fraction: mean " << clip_sum / static_cast<double>(clip_n) << ", max "
          << clip_max << "\n";
    } else {
      out << "clip fraction: n/a\n";
    }
    const auto enc = table.column("encoder_invocations_cumulative");
    out << "encoder invocations: " << static_cast<std::uint64_t>(enc.back().value_or(0.0)) << "\n";
    return kOk;
  });
}

}  // namespace flowforge::cli
