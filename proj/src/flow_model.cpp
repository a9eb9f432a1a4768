#include "flowforge/flow_model.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "flowforge/binary_io.hpp"
#include "flowforge/errors.hpp"

namespace flowforge::model {

namespace {
std::atomic<std::uint64_t> g_encoder_calls{0};
}  // namespace

ModelParams::ModelParams(MlpSpec spec, Vec64 velocity_net, Mat64 encoder_table)
    : spec_(std::move(spec)),
      velocity_net_(std::move(velocity_net)),
      encoder_table_(std::move(encoder_table)),
      num_conditions_(encoder_table_.rows()),
      embed_dim_(encoder_table_.cols()) {
  spec_.validate();
  numkit::require_same_size(velocity_net_.size(), spec_.param_count(), "velocity_net");
  numkit::require_same_size(spec_.input_dim, kDataDim + kTimeFeatures + embed_dim_,
                            "velocity net input_dim");
  numkit::require_same_size(spec_.output_dim, kDataDim, "velocity net output_dim");
  if (num_conditions_ == 0 || embed_dim_ == 0) {
    throw ShapeError("encoder table must be at least 1x1");
  }
}

void ModelParams::set_velocity_net(Vec64 v) {
  numkit::require_same_size(v.size(), velocity_net_.size(), "velocity_net");
  velocity_net_ = std::move(v);
}

const Mat64& ModelParams::encoder_table() const {
  if (offloaded_) throw OffloadedError("frozen condition encoder has been offloaded");
  return encoder_table_;
}

void ModelParams::release_encoder() {
  encoder_table_ = Mat64();
  offloaded_ = true;
}

MlpSpec velocity_spec(std::vector<std::size_t> hidden_dims, std::size_t embed_dim) {
  MlpSpec s{kDataDim + kTimeFeatures + embed_dim, std::move(hidden_dims), kDataDim};
  s.validate();
  return s;
}

ModelParams init_model_params(const std::vector<std::size_t>& hidden_dims,
                              std::size_t num_conditions, std::size_t embed_dim, Rng& rng) {
  auto spec = velocity_spec(hidden_dims, embed_dim);
  Rng net_rng = rng.split(0);
  Rng enc_rng = rng.split(1);
  Vec64 net = numkit::mlp_init(spec, net_rng);
  Mat64 table(num_conditions, embed_dim);
  for (double& v : table.span()) v = enc_rng.normal();
  return ModelParams(std::move(spec), std::move(net), std::move(table));
}

void validate_condition(const ModelParams& params, Condition cond) {
  if (cond.id >= params.num_conditions()) {
    throw DomainError("condition id " + std::to_string(cond.id) + " out of range [0, " +
                      std::to_string(params.num_conditions()) + ")");
  }
}

CondEmbedding encode_condition(const ModelParams& params, Condition cond) {
  validate_condition(params, cond);
  const Mat64& table = params.encoder_table();
  g_encoder_calls.fetch_add(1, std::memory_order_relaxed);
  return CondEmbedding{Vec64(table.row(cond.id))};
}

std::uint64_t encoder_invocations() { return g_encoder_calls.load(std::memory_order_relaxed); }
void reset_encoder_invocations() { g_encoder_calls.store(0, std::memory_order_relaxed); }

Vec64 network_input(const Vec64& x, double t, const CondEmbedding& emb) {
  numkit::require_same_size(x.size(), kDataDim, "velocity x");
  if (!(t > 0.0 && t < 1.0)) throw DomainError("velocity: t must lie in (0,1)");
  const Vec64 tf{t, std::sin(2.0 * std::numbers::pi * t), std::cos(2.0 * std::numbers::pi * t)};
  return numkit::concat({&x, &tf, &emb.values});
}

Vec64 velocity(std::span<const double> net, const MlpSpec& spec, const Vec64& x, double t,
               const CondEmbedding& emb) {
  return numkit::mlp_forward(net, spec, network_input(x, t, emb));
}

Vec64 velocity(const ModelParams& params, const Vec64& x, double t, const CondEmbedding& emb) {
  return velocity(params.velocity_net().span(), params.spec(), x, t, emb);
}

void accumulate_velocity_grad(const ModelParams& params, const Vec64& x, double t,
                              const CondEmbedding& emb, const Vec64& upstream, double scale,
                              Vec64& grad) {
  numkit::mlp_accumulate_param_grad(params.velocity_net().span(), params.spec(),
                                    network_input(x, t, emb), upstream, scale, grad);
}

Vec64 interpolate(const Vec64& x0, const Vec64& eps, double t) {
  numkit::require_same_size(x0.size(), eps.size(), "interpolate");
  Vec64 out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * eps[i];
  return out;
}

LossGrad fm_loss(const ModelParams& params, const Vec64& x0, const Vec64& eps, double t,
                 const CondEmbedding& emb) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("fm_loss: t must lie in (0,1)");
  const Vec64 xt = interpolate(x0, eps, t);
  const Vec64 residual = velocity(params, xt, t, emb) - (eps - x0);
  LossGrad out{numkit::squared_norm(residual), Vec64(params.trainable_params())};
  accumulate_velocity_grad(params, xt, t, emb, residual, 2.0, out.grad);
  return out;
}

void ToyDataSpec::validate() const {
  if (modes.empty()) throw ConfigError("data spec needs at least one condition");
  if (!(mode_std > 0.0)) throw ConfigError("mode_std must be > 0");
  for (const auto& ms : modes) {
    if (ms.empty()) throw ConfigError("every condition needs at least one mode");
    for (const auto& m : ms) numkit::require_same_size(m.size(), kDataDim, "mode mean");
  }
}

const std::vector<Vec64>& ToyDataSpec::modes_of(Condition cond) const {
  if (cond.id >= modes.size()) {
    throw DomainError("condition id " + std::to_string(cond.id) + " has no modes");
  }
  return modes[cond.id];
}

Vec64 sample_data(const ToyDataSpec& spec, Condition cond, Rng& rng) {
  const auto& ms = spec.modes_of(cond);
  const Vec64& mu = ms[rng.index(ms.size())];
  Vec64 noise = numkit::randn(rng, kDataDim);
  return mu + spec.mode_std * noise;
}

std::optional<std::size_t> nearest_mode_within(const ToyDataSpec& spec, Condition cond,
                                               const Vec64& x, double radius) {
  const auto& ms = spec.modes_of(cond);
  std::optional<std::size_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const double d = std::sqrt(numkit::squared_norm(x - ms[i]));
    if (d <= radius && d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const Mat64& table = params.encoder_table();
  const MlpSpec& spec = params.spec();
  io::ByteWriter w;
  w.magic("FFCK");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(spec.input_dim));
  w.u32(static_cast<std::uint32_t>(spec.hidden_dims.size()));
  for (std::size_t h : spec.hidden_dims) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(spec.output_dim));
  w.u32(static_cast<std::uint32_t>(table.rows()));
  w.u32(static_cast<std::uint32_t>(table.cols()));
  w.f64s(params.velocity_net().span());
  w.f64s(table.span());
  io::write_file(path, w.bytes());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, "checkpoint " + path.string());
  r.expect_magic("FFCK");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint " + path.string() + ": unsupported version " +
                       std::to_string(version));
  }
  MlpSpec spec;
  spec.input_dim = r.u32();
  const std::uint32_t n_hidden = r.u32();
  if (n_hidden > 64) throw FormatError("checkpoint: implausible hidden layer count");
  for (std::uint32_t i = 0; i < n_hidden; ++i) spec.hidden_dims.push_back(r.u32());
  spec.output_dim = r.u32();
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  try {
    spec.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  Vec64 net(r.f64s(spec.param_count()));
  Mat64 table(rows, cols, r.f64s(rows * cols));
  r.expect_end();
  try {
    return ModelParams(std::move(spec), std::move(net), std::move(table));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace flowforge::model
