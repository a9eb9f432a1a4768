// Acceptance suite: one PASS/FAIL line per criterion. Exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "flowforge/binary_io.hpp"
#include "flowforge/cache.hpp"
#include "flowforge/commands.hpp"
#include "flowforge/errors.hpp"
#include "flowforge/registry.hpp"
#include "flowforge/run.hpp"
#include "test_util.hpp"

using namespace flowforge;
using config::RunConfig;
using model::Condition;
using model::ModelParams;
using numkit::Rng;
using numkit::Vec64;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kWork = fs::temp_directory_path() / "flowforge_acceptance";

// ---------------------------------------------------------------------------
// 1. Gradients against central finite differences.

ModelParams tiny_model(Rng& rng) {
  const std::size_t hidden = 3 + rng.index(6);
  return model::init_model_params({hidden}, 2, 2, rng);
}

ModelParams with_net(const ModelParams& p, const Vec64& net) {
  ModelParams q = p;
  q.set_velocity_net(net);
  return q;
}

struct GradCase {
  Vec64 analytic;
  std::function<double(const Vec64&)> loss;
  Vec64 at;
};

double worst_error(const std::vector<GradCase>& cases) {
  double worst = 0.0;
  for (const auto& c : cases) {
    const Vec64 fd = testing::finite_diff(c.loss, c.at);
    worst = std::max(worst, testing::max_rel_error(c.analytic, fd));
  }
  return worst;
}

// A GRPO-style instance: SDE rollouts of a tiny model, then the surrogate
// evaluated at slightly perturbed parameters so ratios differ from one.
struct PolicyInstance {
  ModelParams params;
  std::vector<sde::StepRecord> steps;
  std::vector<std::size_t> step_index;
  std::vector<double> advantages;
  model::CondEmbedding emb;
};

PolicyInstance policy_instance(Rng& rng) {
  PolicyInstance inst;
  const ModelParams base = tiny_model(rng);
  inst.emb = model::encode_condition(base, Condition{0});
  const auto grid = sde::make_time_grid(4);
  const std::vector<bool> mask(grid.intervals(), true);
  for (int m = 0; m < 3; ++m) {
    const auto traj = sde::rollout(base, {sde::Dynamics::FlowSDE, 0.7}, grid, Condition{0}, inst.emb,
                                   rng, mask);
    const double a = rng.normal();
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
      if (traj.steps[k].kind != sde::StepKind::SDE) continue;
      inst.steps.push_back(traj.steps[k]);
      inst.step_index.push_back(k);
      inst.advantages.push_back(a);
    }
  }
  inst.params = base;
  inst.params.velocity_net().axpy(0.01, numkit::randn(rng, base.trainable_params()));
  return inst;
}

Outcome criterion_gradients() {
  Rng rng(101);
  std::vector<std::pair<std::string, std::vector<GradCase>>> suites;
  const int n = 20;

  std::vector<GradCase> fm, grpo, guard, nft, awm;
  for (int i = 0; i < n; ++i) {
    const ModelParams p = tiny_model(rng);
    const auto emb = model::encode_condition(p, Condition{static_cast<std::uint32_t>(i % 2)});
    const Vec64 x0 = numkit::randn(rng, 2), eps = numkit::randn(rng, 2);
    const double t = rng.uniform(0.05, 0.95);
    fm.push_back({model::fm_loss(p, x0, eps, t, emb).grad,
                  [=](const Vec64& w) { return model::fm_loss(with_net(p, w), x0, eps, t, emb).loss; },
                  p.velocity_net()});

    const double adv = rng.normal();
    awm.push_back({trainers::awm_loss(p, x0, eps, t, emb, adv).grad,
                   [=](const Vec64& w) {
                     return trainers::awm_loss(with_net(p, w), x0, eps, t, emb, adv).loss;
                   },
                   p.velocity_net()});

    const ModelParams ref = tiny_model(rng);
    Vec64 ref_net = p.velocity_net();
    ref_net.axpy(0.1, numkit::randn(rng, ref_net.size()));
    const double r = rng.uniform(), beta = rng.uniform(0.0, 2.0);
    const Vec64 x_t = model::interpolate(x0, eps, t);
    nft.push_back({trainers::nft_loss(p, ref_net.span(), x_t, eps - x0, t, emb, r, beta).grad,
                   [=](const Vec64& w) {
                     return trainers::nft_loss(with_net(p, w), ref_net.span(), x_t, eps - x0, t, emb,
                                               r, beta)
                         .loss;
                   },
                   p.velocity_net()});
    (void)ref;

    for (bool guarded : {false, true}) {
      const PolicyInstance inst = policy_instance(rng);
      const std::size_t m = inst.steps.size();
      std::vector<double> old_lp(m), new_lp(m);
      for (std::size_t j = 0; j < m; ++j) {
        old_lp[j] = *inst.steps[j].log_prob;
        new_lp[j] = sde::transition_log_prob(inst.params, inst.steps[j], inst.emb);
      }
      // Guard statistics are computed once and held fixed, as in training.
      std::vector<double> shift(m, 0.0), weights(m, 1.0);
      if (guarded) {
        std::vector<trainers::LogRatioTerm> terms;
        for (std::size_t j = 0; j < m; ++j) terms.push_back({inst.step_index[j], new_lp[j] - old_lp[j]});
        const auto stats = trainers::guard_stats(terms, 4);
        const auto w = trainers::guard_weights(stats);
        for (std::size_t j = 0; j < m; ++j) {
          shift[j] = stats.mean[inst.step_index[j]];
          weights[j] = w[inst.step_index[j]];
        }
      }
      auto loss_at = [=](const ModelParams& q) {
        std::vector<double> lp(m);
        for (std::size_t j = 0; j < m; ++j)
          lp[j] = sde::transition_log_prob(q, inst.steps[j], inst.emb) - shift[j];
        return trainers::grpo_loss(lp, old_lp, inst.advantages, 0.2, weights);
      };
      const auto res = loss_at(inst.params);
      Vec64 grad(inst.params.trainable_params());
      for (std::size_t j = 0; j < m; ++j)
        sde::accumulate_log_prob_grad(inst.params, inst.steps[j], inst.emb, res.grad[j], grad);
      (guarded ? guard : grpo)
          .push_back({grad, [=](const Vec64& w) { return loss_at(with_net(inst.params, w)).loss; },
                      inst.params.velocity_net()});
    }
  }
  suites = {{"fm", fm}, {"grpo", grpo}, {"grpo_guard", guard}, {"nft", nft}, {"awm", awm}};
  bool pass = true;
  std::string detail;
  for (const auto& [name, cases] : suites) {
    const double e = worst_error(cases);
    pass = pass && e < 1e-4 && cases.size() == static_cast<std::size_t>(n);
    detail += fmt("%s %.1e  ", name.c_str(), e);
  }
  return {pass, "max rel err: " + detail};
}

// ---------------------------------------------------------------------------
// 2. SDE correctness.

Outcome criterion_sde() {
  Rng rng(202);
  const ModelParams p = model::init_model_params({16}, 2, 3, rng);
  const auto emb = model::encode_condition(p, Condition{1});
  const auto grid = sde::make_time_grid(12);
  const std::vector<bool> all(grid.intervals(), true);

  bool ode_equal = true;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec64 start = numkit::randn(rng, 2);
    Vec64 x = start;
    for (std::size_t k = 0; k < grid.intervals(); ++k)
      x = sde::ode_step_euler(model::velocity(p, x, grid.t(k), emb), x, grid.dt(k));
    for (sde::NoiseSchedule s : {sde::NoiseSchedule{sde::Dynamics::ODE, 0.7},
                                 sde::NoiseSchedule{sde::Dynamics::FlowSDE, 0.0},
                                 sde::NoiseSchedule{sde::Dynamics::DanceSDE, 0.0},
                                 sde::NoiseSchedule{sde::Dynamics::CPS, 0.0}}) {
      Rng r = rng.split(trial);
      ode_equal = ode_equal && sde::rollout(p, s, grid, Condition{1}, emb, start, r, all).final_sample == x;
    }
  }

  double worst_lp = 0.0;
  for (auto d : {sde::Dynamics::FlowSDE, sde::Dynamics::DanceSDE, sde::Dynamics::CPS}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto traj = sde::rollout(p, {d, 0.7}, grid, Condition{1}, emb, rng, all);
      for (const auto& s : traj.steps) {
        if (s.kind != sde::StepKind::SDE) continue;
        worst_lp = std::max(worst_lp, std::abs(sde::step_log_prob(s.x_next, s.mean, s.std) - *s.log_prob));
      }
    }
  }

  const double mu = -0.3, sd = 0.2;
  const int cells = 40000;
  const double lo = mu - 12 * sd, h = 24 * sd / cells;
  double mass = 0.0;
  for (int i = 0; i < cells; ++i)
    mass += std::exp(sde::step_log_prob(Vec64{lo + (i + 0.5) * h}, Vec64{mu}, sd)) * h;

  auto heun_error = [](std::size_t n) {
    const auto g = sde::make_time_grid(n);
    const sde::VelocityFn f = [](const Vec64& x, double) { return -1.0 * x; };
    Vec64 x{1.0};
    for (std::size_t k = 0; k < g.intervals(); ++k) x = sde::ode_step_heun(f, x, g.t(k), g.dt(k));
    return std::abs(x[0] - std::exp(g.t_max() - g.t_min()));
  };
  const double order = std::log2(heun_error(16) / heun_error(32));

  const bool pass = ode_equal && worst_lp <= 1e-12 && std::abs(mass - 1.0) <= 1e-3 && order >= 1.9;
  return {pass, fmt("(a) sigma=0 bit-equal %s; (b) log-prob err %.1e; (c) mass %.6f; (d) Heun order %.3f",
                    ode_equal ? "yes" : "no", worst_lp, mass, order)};
}

// ---------------------------------------------------------------------------
// 3. Noise schedule table.

Outcome criterion_schedules() {
  using sde::Dynamics;
  const double flow = sde::sigma_at({Dynamics::FlowSDE, 0.7}, 0.5, std::nullopt);
  bool dance = true;
  for (double t : {0.05, 0.3, 0.5, 0.8, 0.95})
    dance = dance && std::abs(sde::sigma_at({Dynamics::DanceSDE, 0.3}, t, std::nullopt) - 0.3) <= 1e-12;
  double cps_err = 0.0;
  for (double prev : {0.1, 0.37, 1.0, 2.5})
    cps_err = std::max(cps_err, std::abs(sde::sigma_at({Dynamics::CPS, 1.0}, 0.4, prev) - prev));
  bool ode = true;
  for (double t : {0.05, 0.5, 0.95}) ode = ode && sde::sigma_at({Dynamics::ODE, 0.7}, t, std::nullopt) == 0.0;
  const bool pass = std::abs(flow - 0.7) <= 1e-12 && dance && cps_err <= 1e-12 && ode;
  return {pass, fmt("flow_sde(0.5)=%.15f dance const %s cps err %.1e ode zero %s", flow,
                    dance ? "yes" : "no", cps_err, ode ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 4 and 5. Reward growth on the toy task.

struct GrowthRun {
  run::EvalResult before, after;
  double max_centered_mean = 0.0;
  double seconds = 0.0;
};

const ModelParams& pretrained() {
  static const ModelParams params = [] {
    RunConfig cfg;
    cfg.seed = 1;
    run::AssembledRun r;
    r.config = cfg;
    r.model = registry::default_registry().create_model(cfg.model.name, cfg);
    return run::pretrain(r, r.model->initialize(cfg.seed), cfg.pretrain.steps).params;
  }();
  return params;
}

GrowthRun growth_run(const std::string& trainer, std::uint64_t seed, std::size_t inner_epochs = 1) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.trainer.trainer_type = trainer;
  cfg.trainer.mix_k = 2;
  cfg.trainer.inner_epochs = inner_epochs;
  const auto assembled = run::build_run(cfg, registry::default_registry());
  const auto grid = assembled.scheduler->grid;
  const auto& data = assembled.model->data();
  const std::size_t target = 0;

  GrowthRun out;
  const auto t0 = std::chrono::steady_clock::now();
  out.before = run::evaluate(pretrained(), data, grid, 500, target, 12345 + seed);
  run::TrainOptions opts;
  opts.on_step = [&](const run::MetricsRow&, const trainers::OptimizeStats& s) {
    if (s.guard_max_abs_centered_mean)
      out.max_centered_mean = std::max(out.max_centered_mean, *s.guard_max_abs_centered_mean);
  };
  const auto result = run::train(assembled, pretrained(), opts);
  out.after = run::evaluate(result.params, data, grid, 500, target, 12345 + seed);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

bool growth_ok(const GrowthRun& g) {
  return g.after.mean_affinity >= 1.5 * g.before.mean_affinity && g.before.target_fraction <= 0.6 &&
         g.after.target_fraction >= 0.8 && g.seconds < 300.0;
}

std::string growth_detail(const std::string& name, const std::vector<GrowthRun>& runs) {
  std::string s = name + " [";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& g = runs[i];
    s += fmt("%s%s r %.3f->%.3f frac %.2f->%.2f %.0fs", i ? "; " : "", growth_ok(g) ? "ok" : "x",
             g.before.mean_affinity, g.after.mean_affinity, g.before.target_fraction,
             g.after.target_fraction, g.seconds);
  }
  return s + "]";
}

bool majority(const std::vector<GrowthRun>& runs) {
  std::size_t ok = 0;
  for (const auto& g : runs) ok += growth_ok(g);
  return 2 * ok > runs.size();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

Outcome criterion_growth() {
  bool pass = true;
  std::string detail;
  for (const char* t : {"grpo", "mix_grpo", "nft", "awm"}) {
    std::vector<GrowthRun> runs;
    for (auto s : kSeeds) runs.push_back(growth_run(t, s));
    pass = pass && majority(runs);
    detail += growth_detail(t, runs) + " ";
  }
  return {pass, detail};
}

Outcome criterion_guard() {
  std::vector<GrowthRun> runs;
  double worst = 0.0;
  for (auto s : kSeeds) {
    // Two inner epochs so the second sees ratios away from one and the
    // recentering has something to remove.
    runs.push_back(growth_run("grpo_guard", s, 2));
    worst = std::max(worst, runs.back().max_centered_mean);
  }
  const bool pass = majority(runs) && worst < 1e-9;
  return {pass, growth_detail("grpo_guard", runs) + fmt(" max |centered mean| %.1e", worst)};
}

// ---------------------------------------------------------------------------
// 6. MixGRPO uses exactly k log-prob-bearing steps.

Outcome criterion_mixgrpo() {
  const auto reg = registry::default_registry();
  std::string detail;
  bool pass = true;
  std::size_t last_n = 0;
  for (const char* t : {"mix_grpo", "grpo"}) {
    for (std::size_t k : {1, 2}) {
      RunConfig cfg;
      cfg.model.hidden_dims = {16};
      cfg.trainer.trainer_type = t;
      cfg.trainer.mix_k = k;
      cfg.trainer.group_size = 4;
      cfg.trainer.total_steps = 5;
      const auto assembled = run::build_run(cfg, reg);
      const std::size_t n = assembled.scheduler->grid.intervals();
      const std::size_t trajectories = 4 * assembled.conditions().size();
      const auto result = run::train(assembled, assembled.model->initialize(3));
      const std::size_t expected = std::string(t) == "mix_grpo" ? k : n - 1;
      last_n = n;
      for (std::size_t i = 0; i < result.rows.size(); ++i) {
        pass = pass && result.rows[i].sde_steps_per_traj == static_cast<double>(expected);
        pass = pass && result.stats[i].log_prob_evaluations == expected * trajectories;
      }
      detail += fmt("%s k=%zu: %g SDE steps/traj, %zu log-probs/traj; ", t, k,
                    result.rows.front().sde_steps_per_traj,
                    result.stats.front().log_prob_evaluations / trajectories);
      if (std::string(t) == "grpo") break;
    }
  }
  return {pass, detail + fmt("(n-1 = %zu)", last_n - 1)};
}

// ---------------------------------------------------------------------------
// 7. Multi-reward loading and aggregation.

Outcome criterion_rewards() {
  RunConfig cfg;
  cfg.rewards = {{"near", "mode_affinity", 1.0, {{"target_mode", 0.0}}},
                 {"far", "mode_affinity", 0.5, {{"target_mode", 1.0}}},
                 {"rank", "mode_winrate", 1.0, {{"target_mode", 0.0}}}};
  const auto before = rewards::RewardBackend::constructions();
  const auto assembled = run::build_run(cfg, registry::default_registry());
  const auto built = rewards::RewardBackend::constructions() - before;
  const bool dedup = assembled.rewards.backend_count() == 2 && built == 2 &&
                     assembled.rewards.load_count("mode_affinity") == 1;

  const std::vector<rewards::RewardOutput> crafted{{"r1", Vec64{0, 10}}, {"r2", Vec64{1, 0}}};
  const Vec64 ws = rewards::aggregate_advantages(crafted, {1, 1}, rewards::AdvantageMode::WeightedSum);
  const Vec64 gd = rewards::aggregate_advantages(crafted, {1, 1}, rewards::AdvantageMode::Gdpo);
  const double ws_err = std::max(std::abs(ws[0] + 1), std::abs(ws[1] - 1));
  const double gd_err = std::max(std::abs(gd[0]), std::abs(gd[1]));

  Rng rng(707);
  double sum_err = 0.0;
  const auto& winrate = assembled.rewards.backend_for(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.index(15);
    std::vector<Vec64> samples;
    for (std::size_t i = 0; i < k; ++i) samples.push_back(numkit::randn(rng, 2));
    const Vec64 s = rewards::rank_groupwise(winrate, samples, Condition{0}, {{"target_mode", 0.0}});
    double total = 0.0;
    for (double x : s) total += x;
    sum_err = std::max(sum_err, std::abs(total - k / 2.0));
  }
  const bool pass = dedup && ws_err <= 1e-9 && gd_err <= 1e-9 && sum_err <= 1e-12;
  return {pass, fmt("(a) backends %zu for 3 specs; (b) weighted_sum [%.3g, %.3g] gdpo [%.3g, %.3g]; "
                    "(c) win-rate sum err %.1e",
                    assembled.rewards.backend_count(), ws[0], ws[1], gd[0], gd[1], sum_err)};
}

// ---------------------------------------------------------------------------
// 8. Cache semantics.

Outcome criterion_cache() {
  RunConfig cfg;
  cfg.seed = 8;
  cfg.trainer.total_steps = 20;
  cfg.trainer.group_size = 8;
  cfg.cache.dir = (kWork / "cache").string();
  fs::remove_all(cfg.cache.dir);
  const auto reg = registry::default_registry();

  const auto plain_run = run::build_run(cfg, reg);
  const ModelParams params = pretrained();
  const auto plain = run::train(plain_run, params);
  const std::uint64_t plain_calls = plain.rows.back().encoder_invocations_cumulative;

  cache::preprocess(params, plain_run.conditions(), cfg.cache.dir);
  cfg.cache.enabled = true;
  const auto cached_run = run::build_run(cfg, reg);
  model::reset_encoder_invocations();
  const auto cached = run::train(cached_run, params);
  const bool zero_calls = model::encoder_invocations() == 0;

  bool identical = plain.rows.size() == cached.rows.size();
  for (std::size_t i = 0; identical && i < plain.rows.size(); ++i) {
    const auto& a = plain.rows[i];
    const auto& b = cached.rows[i];
    identical = a.step == b.step && a.mean_reward == b.mean_reward && a.per_reward == b.per_reward &&
                a.loss == b.loss && a.clip_fraction == b.clip_fraction &&
                a.sde_steps_per_traj == b.sde_steps_per_traj && b.encoder_invocations_cumulative == 0;
  }
  identical = identical && plain.params.velocity_net() == cached.params.velocity_net();

  ModelParams offloaded = params;
  const std::size_t resident = offloaded.resident_frozen_params();
  cache::offload_encoder(offloaded, cfg.cache.dir);
  const std::size_t drop = resident - offloaded.resident_frozen_params();
  const std::size_t ce = params.num_conditions() * params.embed_dim();

  const bool pass = zero_calls && plain_calls > 0 && identical && drop == ce;
  return {pass, fmt("encoder calls cached %llu (uncached %llu); metrics bit-identical %s; "
                    "ledger drop %zu (C*E = %zu)",
                    static_cast<unsigned long long>(model::encoder_invocations()),
                    static_cast<unsigned long long>(plain_calls), identical ? "yes" : "no", drop, ce)};
}

// ---------------------------------------------------------------------------
// 9. Registry grid.

Outcome criterion_grid() {
  const auto reg = registry::default_registry();
  std::size_t built = 0, rejected = 0, bad = 0;
  std::string failures;
  for (const char* t : {"grpo", "mix_grpo", "grpo_guard", "nft", "awm"}) {
    for (const char* d : {"flow_sde", "dance_sde", "cps", "ode"}) {
      RunConfig cfg;
      cfg.model.hidden_dims = {16};
      cfg.trainer.trainer_type = t;
      cfg.trainer.group_size = 4;
      cfg.trainer.total_steps = 2;
      cfg.scheduler.dynamics = d;
      const bool grpo_family = std::string(t).find("grpo") != std::string::npos;
      const bool expect_reject = grpo_family && std::string(d) == "ode";
      try {
        const auto assembled = run::build_run(cfg, reg);
        const auto result = run::train(assembled, assembled.model->initialize(1));
        bool finite = result.rows.size() == 2;
        for (const auto& r : result.rows) finite = finite && std::isfinite(r.loss) && std::isfinite(r.mean_reward);
        if (expect_reject || !finite) {
          ++bad;
          failures += fmt(" %s/%s", t, d);
        } else {
          ++built;
        }
      } catch (const IncompatibleError&) {
        if (expect_reject) ++rejected;
        else {
          ++bad;
          failures += fmt(" %s/%s", t, d);
        }
      } catch (const std::exception& e) {
        ++bad;
        failures += fmt(" %s/%s(%s)", t, d, e.what());
      }
    }
  }
  const bool pass = built == 17 && rejected == 3 && bad == 0;
  return {pass, fmt("built+trained %zu/17, rejected %zu/3%s", built, rejected,
                    bad ? (" unexpected:" + failures).c_str() : "")};
}

// ---------------------------------------------------------------------------
// 10. Determinism of every command.

Outcome criterion_determinism() {
  fs::remove_all(kWork / "det");
  fs::create_directories(kWork / "det");
  const fs::path cfg_path = kWork / "det" / "run.yaml";
  {
    RunConfig cfg;
    cfg.seed = 10;
    cfg.model.hidden_dims = {32, 32};
    cfg.pretrain.steps = 300;
    cfg.trainer.group_size = 8;
    cfg.trainer.total_steps = 10;
    cfg.cache.dir = (kWork / "det" / "cache").string();
    const std::string text = config::emit_config(cfg);
    io::write_file(cfg_path, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  std::ostringstream sink;
  std::vector<std::string> mismatches;
  auto same = [&](const fs::path& a, const fs::path& b, const char* what) {
    if (io::read_file(a) != io::read_file(b)) mismatches.push_back(what);
  };
  auto metrics_without_wall = [](const fs::path& p) {
    const auto t = run::read_metrics_csv(p);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : t.rows) {
      std::vector<std::string> keep;
      for (std::size_t c = 0; c < t.columns.size(); ++c)
        if (t.columns[c] != "wall_ms") keep.push_back(r[c]);
      rows.push_back(keep);
    }
    return rows;
  };

  int rc = 0;
  std::vector<fs::path> ckpts, entries, samples, runs;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = kWork / "det" / ("rep" + std::to_string(rep));
    ckpts.push_back(dir / "pre.ckpt");
    rc |= cli::cmd_pretrain({cfg_path.string(), ckpts.back().string(), std::nullopt}, sink, sink);
    rc |= cli::cmd_preprocess({cfg_path.string(), ckpts.back().string()}, sink, sink);
    entries.push_back(dir / "cond_1.ffe");
    fs::create_directories(dir);
    fs::copy_file(cache::entry_path(kWork / "det" / "cache", Condition{1}), entries.back(),
                  fs::copy_options::overwrite_existing);
    runs.push_back(dir / "train");
    rc |= cli::cmd_train({cfg_path.string(), ckpts.back().string(), runs.back().string(), std::nullopt},
                         sink, sink);
    samples.push_back(dir / "samples.csv");
    rc |= cli::cmd_sample({cfg_path.string(), ckpts.back().string(), 200, 1, "heun",
                           samples.back().string()},
                          sink, sink);
  }
  same(ckpts[0], ckpts[1], "pretrain checkpoint");
  same(entries[0], entries[1], "cache entry");
  same(runs[0] / "final.ckpt", runs[1] / "final.ckpt", "train checkpoint");
  same(samples[0], samples[1], "samples");
  if (metrics_without_wall(runs[0] / "metrics.csv") != metrics_without_wall(runs[1] / "metrics.csv"))
    mismatches.push_back("metrics");

  std::string detail = rc == 0 ? "all commands exit 0; " : "a command failed; ";
  detail += mismatches.empty() ? "pretrain/preprocess/train/sample outputs bit-identical"
                               : "differs:";
  for (const auto& m : mismatches) detail += " " + m;
  return {rc == 0 && mismatches.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", criterion_gradients},
      {"SDE correctness", criterion_sde},
      {"noise schedule table", criterion_schedules},
      {"reward growth (grpo, mix_grpo, nft, awm)", criterion_growth},
      {"GRPO-Guard", criterion_guard},
      {"MixGRPO contract", criterion_mixgrpo},
      {"multi-reward", criterion_rewards},
      {"cache", criterion_cache},
      {"registry grid", criterion_grid},
      {"determinism", criterion_determinism},
  };
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("[%s] %2zu %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
