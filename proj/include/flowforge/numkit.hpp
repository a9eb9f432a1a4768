#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace flowforge::numkit {

// Dense vector of doubles. The length is fixed at construction and every
// binary operation checks it.
class Vec64 {
 public:
  Vec64() = default;
  explicit Vec64(std::size_t n, double fill = 0.0) : v_(n, fill) {}
  Vec64(std::initializer_list<double> values) : v_(values) {}
  explicit Vec64(std::vector<double> values) : v_(std::move(values)) {}
  explicit Vec64(std::span<const double> values) : v_(values.begin(), values.end()) {}

  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::span<double> span() { return v_; }
  std::span<const double> span() const { return v_; }
  const std::vector<double>& values() const { return v_; }

  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  Vec64& operator+=(const Vec64& rhs);
  Vec64& operator-=(const Vec64& rhs);
  Vec64& operator*=(double s);

  // this += s * rhs
  Vec64& axpy(double s, const Vec64& rhs);

  friend bool operator==(const Vec64&, const Vec64&) = default;

 private:
  std::vector<double> v_;
};

Vec64 operator+(Vec64 lhs, const Vec64& rhs);
Vec64 operator-(Vec64 lhs, const Vec64& rhs);
Vec64 operator*(Vec64 lhs, double s);
Vec64 operator*(double s, Vec64 rhs);

double dot(const Vec64& a, const Vec64& b);
double squared_norm(const Vec64& a);
Vec64 concat(std::initializer_list<const Vec64*> parts);

// Throws ShapeError naming `what` when the lengths differ.
void require_same_size(std::size_t a, std::size_t b, const char* what);

// Row-major dense matrix.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<const double> span() const { return v_; }
  std::span<double> span() { return v_; }

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Counter-based random number generator. A draw is a pure function of
// (key, counter), so child streams split off by index are reproducible
// regardless of the order in which they are consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  std::size_t index(std::size_t n);

  // Independent child stream; depends only on this stream's key and `index`.
  Rng split(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}
  std::uint64_t key_;
  std::uint64_t counter_;
};

Vec64 randn(Rng& rng, std::size_t n);

// ---------------------------------------------------------------------------
// Fully connected network: tanh on every hidden layer, linear output head.
// Parameters are stored flat, layer by layer, as W (out x in, row-major)
// followed by b (out).
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;

  void validate() const;
  std::size_t param_count() const;
  // Layer widths including input and output.
  std::vector<std::size_t> widths() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Scaled-normal weights (std 1/sqrt(fan_in)), zero biases.
Vec64 mlp_init(const MlpSpec& spec, Rng& rng);

Vec64 mlp_forward(std::span<const double> params, const MlpSpec& spec, const Vec64& input);

struct MlpGrads {
  Vec64 param_grad;
  Vec64 input_grad;
};

// Gradients of dot(upstream_grad, mlp_forward(params, spec, input)).
MlpGrads mlp_backward(std::span<const double> params, const MlpSpec& spec, const Vec64& input,
                      const Vec64& upstream_grad);

// Same as mlp_backward but adds `scale` times the parameter gradient into
// `param_grad` and skips the input gradient.
void mlp_accumulate_param_grad(std::span<const double> params, const MlpSpec& spec,
                               const Vec64& input, const Vec64& upstream_grad, double scale,
                               Vec64& param_grad);

// ---------------------------------------------------------------------------
struct AdamState {
  Vec64 first_moment;
  Vec64 second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;

  static AdamState for_params(std::size_t n, double lr);
};

// Adam with bias correction, applied in place.
void adam_update(Vec64& params, const Vec64& grads, AdamState& state);

std::pair<Vec64, AdamState> adam_step(Vec64 params, const Vec64& grads, AdamState state);

// ---------------------------------------------------------------------------
double mean(std::span<const double> xs);
// Population standard deviation (divides by N).
double population_std(std::span<const double> xs);

inline constexpr double kStdFloor = 1e-8;

}  // namespace flowforge::numkit
