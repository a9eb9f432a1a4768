#include "flowforge/sde_scheduler.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "flowforge/errors.hpp"

namespace flowforge::sde {

std::string_view dynamics_name(Dynamics d) {
  switch (d) {
    case Dynamics::FlowSDE:
      return "flow_sde";
    case Dynamics::DanceSDE:
      return "dance_sde";
    case Dynamics::CPS:
      return "cps";
    case Dynamics::ODE:
      return "ode";
  }
  return "?";
}

std::optional<Dynamics> parse_dynamics(std::string_view name) {
  for (Dynamics d : {Dynamics::FlowSDE, Dynamics::DanceSDE, Dynamics::CPS, Dynamics::ODE}) {
    if (dynamics_name(d) == name) return d;
  }
  return std::nullopt;
}

TimeGrid::TimeGrid(std::vector<double> timesteps) : t_(std::move(timesteps)) {
  if (t_.size() < 2) throw DomainError("time grid needs at least two timesteps");
  for (std::size_t k = 0; k + 1 < t_.size(); ++k) {
    if (!(t_[k] > t_[k + 1])) throw DomainError("time grid must be strictly decreasing");
  }
  if (!(t_.front() < 1.0 && t_.back() > 0.0)) {
    throw DomainError("time grid must lie inside (0,1)");
  }
}

TimeGrid make_time_grid(std::size_t n_steps, double t_min, double t_max) {
  if (n_steps < 1) throw DomainError("make_time_grid: n_steps must be >= 1");
  if (!(t_min > 0.0 && t_min < t_max && t_max < 1.0)) {
    throw DomainError("make_time_grid: need 0 < t_min < t_max < 1");
  }
  std::vector<double> t(n_steps + 1);
  const double n = static_cast<double>(n_steps);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    t[k] = t_max - (t_max - t_min) * (static_cast<double>(k) / n);
  }
  t.back() = t_min;
  return TimeGrid(std::move(t));
}

double sigma_at(const NoiseSchedule& schedule, double t, std::optional<double> prev_sigma) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("sigma_at: t must lie in (0,1)");
  switch (schedule.dynamics) {
    case Dynamics::FlowSDE:
      return schedule.eta * std::sqrt(t / (1.0 - t));
    case Dynamics::DanceSDE:
      return schedule.eta;
    case Dynamics::CPS:
      if (!prev_sigma) throw DomainError("sigma_at: CPS requires the previous sigma");
      return *prev_sigma * std::sin(schedule.eta * std::numbers::pi / 2.0);
    case Dynamics::ODE:
      return 0.0;
  }
  return 0.0;
}

std::vector<double> sigma_schedule(const NoiseSchedule& schedule, const TimeGrid& grid) {
  std::vector<double> out(grid.intervals());
  std::optional<double> prev;
  if (schedule.dynamics == Dynamics::CPS) {
    prev = sigma_at(NoiseSchedule{Dynamics::FlowSDE, schedule.eta}, grid.t(0), std::nullopt);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = sigma_at(schedule, grid.t(k), prev);
    prev = out[k];
  }
  return out;
}

double sde_mean_velocity_coeff(double t, double dt, double sigma) {
  return (1.0 + sigma * sigma / (2.0 * t) * (1.0 - t)) * dt;
}

SdeStepResult sde_step(const Vec64& v, const Vec64& x, double t, double dt, double sigma,
                       const Vec64& noise) {
  if (!(t > 0.0)) throw DomainError("sde_step: t must be > 0");
  numkit::require_same_size(v.size(), x.size(), "sde_step v");
  numkit::require_same_size(noise.size(), x.size(), "sde_step noise");
  SdeStepResult out{Vec64(x.size()), Vec64(x.size()), sigma * std::sqrt(std::abs(dt))};
  const double k = sigma * sigma / (2.0 * t);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double drift = v[i] + k * (x[i] + (1.0 - t) * v[i]);
    out.mean[i] = x[i] + drift * dt;
    out.x_next[i] = out.mean[i] + out.std * noise[i];
  }
  return out;
}

double step_log_prob(const Vec64& x_next, const Vec64& mean, double std) {
  if (!(std > 0.0)) throw DomainError("step_log_prob: std must be > 0");
  numkit::require_same_size(x_next.size(), mean.size(), "step_log_prob");
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(std);
  double acc = 0.0;
  for (std::size_t i = 0; i < x_next.size(); ++i) {
    const double d = x_next[i] - mean[i];
    acc += log_norm - d * d / (2.0 * std * std);
  }
  return acc;
}

Vec64 ode_step_euler(const Vec64& v, const Vec64& x, double dt) {
  numkit::require_same_size(v.size(), x.size(), "ode_step_euler");
  Vec64 out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + v[i] * dt;
  return out;
}

Vec64 ode_step_heun(const VelocityFn& velocity_fn, const Vec64& x, double t, double dt) {
  const Vec64 v1 = velocity_fn(x, t);
  const Vec64 predictor = ode_step_euler(v1, x, dt);
  const Vec64 v2 = velocity_fn(predictor, t + dt);
  numkit::require_same_size(v1.size(), v2.size(), "ode_step_heun");
  Vec64 out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + 0.5 * (v1[i] + v2[i]) * dt;
  return out;
}

std::size_t Trajectory::sde_steps() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.kind == StepKind::SDE ? 1 : 0;
  return n;
}

Trajectory rollout(const ModelParams& params, const NoiseSchedule& schedule, const TimeGrid& grid,
                   Condition cond, const CondEmbedding& emb, Rng& rng,
                   const std::vector<bool>& sde_mask) {
  Vec64 x_start = numkit::randn(rng, model::kDataDim);
  return rollout(params, schedule, grid, cond, emb, std::move(x_start), rng, sde_mask);
}

Trajectory rollout(const ModelParams& params, const NoiseSchedule& schedule, const TimeGrid& grid,
                   Condition cond, const CondEmbedding& emb, Vec64 x_start, Rng& rng,
                   const std::vector<bool>& sde_mask) {
  numkit::require_same_size(sde_mask.size(), grid.intervals(), "sde_mask");
  numkit::require_same_size(x_start.size(), model::kDataDim, "rollout start");
  const std::vector<double> sigmas = sigma_schedule(schedule, grid);

  Trajectory traj;
  traj.cond = cond;
  traj.steps.reserve(grid.intervals());
  Vec64 x = std::move(x_start);
  for (std::size_t k = 0; k < grid.intervals(); ++k) {
    StepRecord rec;
    rec.t = grid.t(k);
    rec.dt = grid.dt(k);
    rec.sigma = sigmas[k];
    rec.x = x;
    const Vec64 v = model::velocity(params, x, rec.t, emb);
    const bool terminal = k + 1 == grid.intervals();
    if (sde_mask[k] && !terminal && rec.sigma > 0.0) {
      rec.noise = numkit::randn(rng, x.size());
      auto step = sde_step(v, x, rec.t, rec.dt, rec.sigma, rec.noise);
      rec.kind = StepKind::SDE;
      rec.mean = std::move(step.mean);
      rec.std = step.std;
      rec.x_next = std::move(step.x_next);
      rec.log_prob = step_log_prob(rec.x_next, rec.mean, rec.std);
    } else {
      rec.kind = StepKind::ODE;
      rec.x_next = ode_step_euler(v, x, rec.dt);
      rec.mean = rec.x_next;
    }
    x = rec.x_next;
    traj.steps.push_back(std::move(rec));
  }
  traj.final_sample = std::move(x);
  return traj;
}

double transition_log_prob(const ModelParams& params, const StepRecord& step,
                           const CondEmbedding& emb) {
  if (step.kind != StepKind::SDE) throw DomainError("transition_log_prob: ODE step has no density");
  const Vec64 v = model::velocity(params, step.x, step.t, emb);
  const auto res = sde_step(v, step.x, step.t, step.dt, step.sigma, step.noise);
  return step_log_prob(step.x_next, res.mean, res.std);
}

void accumulate_log_prob_grad(const ModelParams& params, const StepRecord& step,
                              const CondEmbedding& emb, double scale, Vec64& grad) {
  if (step.kind != StepKind::SDE) throw DomainError("accumulate_log_prob_grad: ODE step");
  const Vec64 v = model::velocity(params, step.x, step.t, emb);
  const auto res = sde_step(v, step.x, step.t, step.dt, step.sigma, step.noise);
  // d logp / d mean = (x_next - mean) / std^2, and d mean / d v = coeff * I.
  const double coeff = sde_mean_velocity_coeff(step.t, step.dt, step.sigma);
  const double inv_var = 1.0 / (res.std * res.std);
  Vec64 upstream(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    upstream[i] = (step.x_next[i] - res.mean[i]) * inv_var * coeff;
  }
  model::accumulate_velocity_grad(params, step.x, step.t, emb, upstream, scale, grad);
}

std::optional<Solver> parse_solver(std::string_view name) {
  if (name == "euler") return Solver::Euler;
  if (name == "heun") return Solver::Heun;
  return std::nullopt;
}

Vec64 ode_sample(const ModelParams& params, const TimeGrid& grid, const CondEmbedding& emb,
                 Vec64 x_start, Solver solver) {
  Vec64 x = std::move(x_start);
  const VelocityFn fn = [&](const Vec64& y, double t) { return model::velocity(params, y, t, emb); };
  for (std::size_t k = 0; k < grid.intervals(); ++k) {
    if (solver == Solver::Euler) {
      x = ode_step_euler(fn(x, grid.t(k)), x, grid.dt(k));
    } else {
      x = ode_step_heun(fn, x, grid.t(k), grid.dt(k));
    }
  }
  return x;
}

}  // namespace flowforge::sde
