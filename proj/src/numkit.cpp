#include "flowforge/numkit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "flowforge/errors.hpp"

namespace flowforge::numkit {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

Vec64& Vec64::operator+=(const Vec64& rhs) {
  require_same_size(size(), rhs.size(), "Vec64 +=");
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += rhs.v_[i];
  return *this;
}

Vec64& Vec64::operator-=(const Vec64& rhs) {
  require_same_size(size(), rhs.size(), "Vec64 -=");
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= rhs.v_[i];
  return *this;
}

Vec64& Vec64::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

Vec64& Vec64::axpy(double s, const Vec64& rhs) {
  require_same_size(size(), rhs.size(), "Vec64 axpy");
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += s * rhs.v_[i];
  return *this;
}

Vec64 operator+(Vec64 lhs, const Vec64& rhs) { return lhs += rhs; }
Vec64 operator-(Vec64 lhs, const Vec64& rhs) { return lhs -= rhs; }
Vec64 operator*(Vec64 lhs, double s) { return lhs *= s; }
Vec64 operator*(double s, Vec64 rhs) { return rhs *= s; }

double dot(const Vec64& a, const Vec64& b) {
  require_same_size(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Vec64& a) { return dot(a, a); }

Vec64 concat(std::initializer_list<const Vec64*> parts) {
  std::vector<double> out;
  for (const Vec64* p : parts) out.insert(out.end(), p->begin(), p->end());
  return Vec64(std::move(out));
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
  require_same_size(v_.size(), rows * cols, "Mat64");
}

std::span<const double> Mat64::row(std::size_t r) const {
  if (r >= rows_) throw ShapeError("Mat64 row " + std::to_string(r) + " out of range");
  return std::span<const double>(v_).subspan(r * cols_, cols_);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGolden)), counter_(0) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ ^ mix64(counter_ * kGolden));
}

double Rng::uniform() {
  // 53 random bits, shifted half a unit off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw DomainError("Rng::index: n must be positive");
  return static_cast<std::size_t>(next_u64() % n);
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix64(key_ ^ mix64(index + 0x5851F42D4C957F2DULL)), 0);
}

Vec64 randn(Rng& rng, std::size_t n) {
  if (n == 0) throw DomainError("randn: n must be >= 1");
  Vec64 out(n);
  // Box-Muller, both outputs of each pair used.
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    out[i] = r * std::cos(a);
    if (i + 1 < n) out[i + 1] = r * std::sin(a);
  }
  return out;
}

// ---------------------------------------------------------------------------

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ShapeError("MlpSpec: dims must be >= 1");
  if (hidden_dims.empty()) throw ShapeError("MlpSpec: at least one hidden layer required");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ShapeError("MlpSpec: hidden dims must be >= 1");
  }
}

std::vector<std::size_t> MlpSpec::widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
  w.push_back(output_dim);
  return w;
}

std::size_t MlpSpec::param_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 1; l < w.size(); ++l) n += w[l] * w[l - 1] + w[l];
  return n;
}

Vec64 mlp_init(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  const auto w = spec.widths();
  Vec64 params(spec.param_count());
  std::size_t off = 0;
  for (std::size_t l = 1; l < w.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(w[l - 1]));
    for (std::size_t i = 0; i < w[l] * w[l - 1]; ++i) params[off + i] = scale * rng.normal();
    off += w[l] * w[l - 1] + w[l];
  }
  return params;
}

namespace {

void check_params(std::span<const double> params, const MlpSpec& spec) {
  spec.validate();
  require_same_size(params.size(), spec.param_count(), "mlp params");
}

// Activations of every layer; acts[0] is the input, acts.back() the output.
std::vector<std::vector<double>> forward_all(std::span<const double> params, const MlpSpec& spec,
                                             const Vec64& input) {
  check_params(params, spec);
  require_same_size(input.size(), spec.input_dim, "mlp input");
  const auto w = spec.widths();
  const std::size_t n_layers = w.size() - 1;
  std::vector<std::vector<double>> acts(w.size());
  acts[0] = input.values();
  std::size_t off = 0;
  for (std::size_t l = 1; l <= n_layers; ++l) {
    const std::size_t in = w[l - 1];
    const std::size_t out = w[l];
    const double* W = params.data() + off;
    const double* b = W + out * in;
    const auto& prev = acts[l - 1];
    auto& cur = acts[l];
    cur.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      double z = b[o];
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) z += row[i] * prev[i];
      cur[o] = (l < n_layers) ? std::tanh(z) : z;
    }
    off += out * in + out;
  }
  return acts;
}

// Backpropagates `upstream`; writes scale * dparams into param_grad (added)
// and, if requested, the input gradient.
void backward_all(std::span<const double> params, const MlpSpec& spec, const Vec64& input,
                  const Vec64& upstream, double scale, Vec64& param_grad, Vec64* input_grad) {
  require_same_size(upstream.size(), spec.output_dim, "mlp upstream grad");
  require_same_size(param_grad.size(), spec.param_count(), "mlp param grad");
  const auto acts = forward_all(params, spec, input);
  const auto w = spec.widths();
  const std::size_t n_layers = w.size() - 1;

  std::vector<std::size_t> offsets(n_layers + 1, 0);
  for (std::size_t l = 1; l <= n_layers; ++l) {
    offsets[l] = offsets[l - 1] + (l > 1 ? w[l - 1] * w[l - 2] + w[l - 1] : 0);
  }

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = n_layers; l >= 1; --l) {
    const std::size_t in = w[l - 1];
    const std::size_t out = w[l];
    const std::size_t off = offsets[l];
    const double* W = params.data() + off;
    double* gW = param_grad.data() + off;
    double* gb = gW + out * in;
    const auto& prev = acts[l - 1];
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o] * scale;
      if (d == 0.0) continue;
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * prev[i];
      gb[o] += d;
    }
    if (l == 1 && input_grad == nullptr) break;
    std::vector<double> next(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) next[i] += row[i] * delta[o];
    }
    if (l > 1) {
      for (std::size_t i = 0; i < in; ++i) next[i] *= 1.0 - prev[i] * prev[i];
    } else {
      *input_grad = Vec64(std::move(next));
      break;
    }
    delta = std::move(next);
  }
}

}  // namespace

Vec64 mlp_forward(std::span<const double> params, const MlpSpec& spec, const Vec64& input) {
  auto acts = forward_all(params, spec, input);
  return Vec64(std::move(acts.back()));
}

MlpGrads mlp_backward(std::span<const double> params, const MlpSpec& spec, const Vec64& input,
                      const Vec64& upstream_grad) {
  check_params(params, spec);
  MlpGrads g{Vec64(spec.param_count()), Vec64(spec.input_dim)};
  backward_all(params, spec, input, upstream_grad, 1.0, g.param_grad, &g.input_grad);
  return g;
}

void mlp_accumulate_param_grad(std::span<const double> params, const MlpSpec& spec,
                               const Vec64& input, const Vec64& upstream_grad, double scale,
                               Vec64& param_grad) {
  backward_all(params, spec, input, upstream_grad, scale, param_grad, nullptr);
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(std::size_t n, double lr) {
  AdamState s;
  s.first_moment = Vec64(n);
  s.second_moment = Vec64(n);
  s.lr = lr;
  return s;
}

void adam_update(Vec64& params, const Vec64& grads, AdamState& state) {
  require_same_size(params.size(), grads.size(), "adam grads");
  require_same_size(params.size(), state.first_moment.size(), "adam first moment");
  require_same_size(params.size(), state.second_moment.size(), "adam second moment");
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

std::pair<Vec64, AdamState> adam_step(Vec64 params, const Vec64& grads, AdamState state) {
  adam_update(params, grads, state);
  return {std::move(params), std::move(state)};
}

// ---------------------------------------------------------------------------

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of empty range");
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
  const double mu = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace flowforge::numkit
