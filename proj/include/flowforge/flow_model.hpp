#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "flowforge/numkit.hpp"

namespace flowforge::model {

using numkit::Mat64;
using numkit::MlpSpec;
using numkit::Rng;
using numkit::Vec64;

inline constexpr std::size_t kDataDim = 2;
// Raw t plus (sin 2πt, cos 2πt).
inline constexpr std::size_t kTimeFeatures = 3;

struct Condition {
  std::uint32_t id = 0;
  friend bool operator==(const Condition&, const Condition&) = default;
};

struct CondEmbedding {
  Vec64 values;
  friend bool operator==(const CondEmbedding&, const CondEmbedding&) = default;
};

// Trainable velocity network plus the frozen condition encoder table.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(MlpSpec spec, Vec64 velocity_net, Mat64 encoder_table);

  const MlpSpec& spec() const { return spec_; }
  const Vec64& velocity_net() const { return velocity_net_; }
  Vec64& velocity_net() { return velocity_net_; }
  void set_velocity_net(Vec64 v);

  std::size_t num_conditions() const { return num_conditions_; }
  std::size_t embed_dim() const { return embed_dim_; }

  bool encoder_offloaded() const { return offloaded_; }
  // Throws OffloadedError after release_encoder().
  const Mat64& encoder_table() const;
  // Drops the encoder table. Only the cache module should call this.
  void release_encoder();

  // Frozen parameters currently held in memory (C*E, or 0 once offloaded).
  std::size_t resident_frozen_params() const { return offloaded_ ? 0 : encoder_table_.size(); }
  std::size_t trainable_params() const { return velocity_net_.size(); }

 private:
  MlpSpec spec_;
  Vec64 velocity_net_;
  Mat64 encoder_table_;
  std::size_t num_conditions_ = 0;
  std::size_t embed_dim_ = 0;
  bool offloaded_ = false;
};

// Network spec for a velocity net with the given hidden widths and
// embedding size: input is [x (2), time features (3), embedding (E)].
MlpSpec velocity_spec(std::vector<std::size_t> hidden_dims, std::size_t embed_dim);

// Fresh parameters: scaled-normal velocity net, N(0,1) encoder table.
ModelParams init_model_params(const std::vector<std::size_t>& hidden_dims,
                              std::size_t num_conditions, std::size_t embed_dim, Rng& rng);

void validate_condition(const ModelParams& params, Condition cond);

// Row cond.id of the encoder table. Counts every call.
CondEmbedding encode_condition(const ModelParams& params, Condition cond);

std::uint64_t encoder_invocations();
void reset_encoder_invocations();

Vec64 network_input(const Vec64& x, double t, const CondEmbedding& emb);

Vec64 velocity(const ModelParams& params, const Vec64& x, double t, const CondEmbedding& emb);
Vec64 velocity(std::span<const double> net, const MlpSpec& spec, const Vec64& x, double t,
               const CondEmbedding& emb);

// grad += scale * d(upstream . v(x,t,emb)) / d(velocity_net)
void accumulate_velocity_grad(const ModelParams& params, const Vec64& x, double t,
                              const CondEmbedding& emb, const Vec64& upstream, double scale,
                              Vec64& grad);

// x_t = (1-t) x0 + t eps
Vec64 interpolate(const Vec64& x0, const Vec64& eps, double t);

struct LossGrad {
  double loss = 0.0;
  Vec64 grad;
};

// ||v(x_t, t, emb) - (eps - x0)||^2 and its gradient w.r.t. the velocity net.
LossGrad fm_loss(const ModelParams& params, const Vec64& x0, const Vec64& eps, double t,
                 const CondEmbedding& emb);

// Per-condition isotropic Gaussian mixture, uniform over modes.
struct ToyDataSpec {
  std::vector<std::vector<Vec64>> modes;
  double mode_std = 0.1;

  void validate() const;
  std::size_t num_conditions() const { return modes.size(); }
  const std::vector<Vec64>& modes_of(Condition cond) const;

  friend bool operator==(const ToyDataSpec&, const ToyDataSpec&) = default;
};

Vec64 sample_data(const ToyDataSpec& spec, Condition cond, Rng& rng);

// Index of the nearest mode of `cond` within `radius`, or nullopt.
std::optional<std::size_t> nearest_mode_within(const ToyDataSpec& spec, Condition cond,
                                               const Vec64& x, double radius);

// Checkpoint file "FFCK" v1, see docs/file_formats.md.
inline constexpr std::uint16_t kCheckpointVersion = 1;
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace flowforge::model
