#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/flow_model.hpp"
#include "flowforge/numkit.hpp"

namespace flowforge::sde {

using model::Condition;
using model::CondEmbedding;
using model::ModelParams;
using numkit::Rng;
using numkit::Vec64;

enum class Dynamics { FlowSDE, DanceSDE, CPS, ODE };

std::string_view dynamics_name(Dynamics d);
// Accepts "flow_sde", "dance_sde", "cps", "ode".
std::optional<Dynamics> parse_dynamics(std::string_view name);

struct NoiseSchedule {
  Dynamics dynamics = Dynamics::FlowSDE;
  double eta = 0.7;

  // True when every sigma is zero (ODE dynamics or eta == 0).
  bool deterministic() const { return dynamics == Dynamics::ODE || eta == 0.0; }
  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;
};

// Strictly decreasing timesteps, t_max first. Interval k runs from
// timesteps[k] to timesteps[k+1], so dt is negative.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> timesteps);

  const std::vector<double>& timesteps() const { return t_; }
  std::size_t intervals() const { return t_.size() - 1; }
  double t(std::size_t k) const { return t_[k]; }
  double dt(std::size_t k) const { return t_[k + 1] - t_[k]; }
  double t_max() const { return t_.front(); }
  double t_min() const { return t_.back(); }

 private:
  std::vector<double> t_;
};

TimeGrid make_time_grid(std::size_t n_steps, double t_min = 0.02, double t_max = 0.98);

// Noise level for one timestep. CPS needs the previous step's sigma.
double sigma_at(const NoiseSchedule& schedule, double t, std::optional<double> prev_sigma);

// sigma for every interval of the grid, evaluated at the interval's start.
// The CPS recursion is seeded with the FlowSDE value at the first timestep.
std::vector<double> sigma_schedule(const NoiseSchedule& schedule, const TimeGrid& grid);

struct SdeStepResult {
  Vec64 x_next;
  Vec64 mean;
  double std = 0.0;
};

// x_next = x + [v + sigma^2/(2t) (x + (1-t) v)] dt + sigma sqrt(|dt|) noise
SdeStepResult sde_step(const Vec64& v, const Vec64& x, double t, double dt, double sigma,
                       const Vec64& noise);

// d(mean)/d(v) for the step above; the map is a scalar multiple of identity.
double sde_mean_velocity_coeff(double t, double dt, double sigma);

// Diagonal Gaussian log-density of x_next under N(mean, std^2 I).
double step_log_prob(const Vec64& x_next, const Vec64& mean, double std);

Vec64 ode_step_euler(const Vec64& v, const Vec64& x, double dt);

using VelocityFn = std::function<Vec64(const Vec64& x, double t)>;
// Trapezoidal predictor-corrector (two velocity evaluations).
Vec64 ode_step_heun(const VelocityFn& velocity_fn, const Vec64& x, double t, double dt);

enum class StepKind { SDE, ODE };

struct StepRecord {
  double t = 0.0;
  double dt = 0.0;
  double sigma = 0.0;
  Vec64 x;
  Vec64 x_next;
  Vec64 mean;
  double std = 0.0;
  Vec64 noise;
  std::optional<double> log_prob;
  StepKind kind = StepKind::ODE;
};

struct Trajectory {
  Condition cond;
  std::vector<StepRecord> steps;
  Vec64 final_sample;

  std::size_t sde_steps() const;
};

// Samples x ~ N(0, I) from rng and integrates from t_max to t_min. Steps
// with sde_mask[k] set and sigma > 0 are stochastic; all others, and always
// the final interval, are Euler ODE steps.
Trajectory rollout(const ModelParams& params, const NoiseSchedule& schedule, const TimeGrid& grid,
                   Condition cond, const CondEmbedding& emb, Rng& rng,
                   const std::vector<bool>& sde_mask);

Trajectory rollout(const ModelParams& params, const NoiseSchedule& schedule, const TimeGrid& grid,
                   Condition cond, const CondEmbedding& emb, Vec64 x_start, Rng& rng,
                   const std::vector<bool>& sde_mask);

// Log-probability of a recorded SDE step under `params` (the mean is
// recomputed; the realized x_next is taken from the record).
double transition_log_prob(const ModelParams& params, const StepRecord& step,
                           const CondEmbedding& emb);

// grad += scale * d transition_log_prob / d(velocity_net)
void accumulate_log_prob_grad(const ModelParams& params, const StepRecord& step,
                              const CondEmbedding& emb, double scale, Vec64& grad);

enum class Solver { Euler, Heun };
std::optional<Solver> parse_solver(std::string_view name);

// Deterministic sample from x_start at t_max down to t_min.
Vec64 ode_sample(const ModelParams& params, const TimeGrid& grid, const CondEmbedding& emb,
                 Vec64 x_start, Solver solver);

}  // namespace flowforge::sde
