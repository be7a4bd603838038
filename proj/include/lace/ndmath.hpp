#pragma once

// Dense double-precision arrays, leaky-ReLU MLPs with exact reverse-mode
// gradients, and the Adam optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lace/errors.hpp"
#include "lace/rng.hpp"

namespace lace {

// Row-major array of doubles. For batches the leading extent is the batch.
class RealArray {
 public:
  RealArray() = default;

  explicit RealArray(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  RealArray(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw ArgumentError("RealArray: data length " + std::to_string(data_.size()) +
                          " does not match shape product " + std::to_string(count(shape_)));
    }
  }

  static RealArray vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return RealArray({n}, std::move(data));
  }

  static RealArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return RealArray({rows, cols}, std::move(data));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 element access.
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  // Row r of a rank-2 array.
  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const RealArray&, const RealArray&) = default;

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// ---------------------------------------------------------------------------
// MLP

inline constexpr double kLeakySlope = 0.01;

inline double leaky(double v) { return v > 0.0 ? v : kLeakySlope * v; }
inline double leaky_grad(double pre) { return pre > 0.0 ? 1.0 : kLeakySlope; }

// Affine layers with leaky-ReLU between them; the last layer is affine only.
// Layer l maps dims[l] -> dims[l+1] with weight shape {dims[l+1], dims[l]}.
class MlpParams {
 public:
  MlpParams() = default;

  explicit MlpParams(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    validate_dims(dims_);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      tensors_.emplace_back(std::vector<std::size_t>{dims_[l + 1], dims_[l]});
      tensors_.emplace_back(std::vector<std::size_t>{dims_[l + 1]});
    }
  }

  static void validate_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw ArgumentError("MLP needs at least 2 layer dims");
    for (std::size_t d : dims) {
      if (d == 0) throw ArgumentError("MLP layer dims must be positive");
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t num_layers() const noexcept { return dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

  RealArray& weight(std::size_t l) { return tensors_[2 * l]; }
  const RealArray& weight(std::size_t l) const { return tensors_[2 * l]; }
  RealArray& bias(std::size_t l) { return tensors_[2 * l + 1]; }
  const RealArray& bias(std::size_t l) const { return tensors_[2 * l + 1]; }

  // W0, b0, W1, b1, ...
  std::vector<RealArray>& tensors() noexcept { return tensors_; }
  const std::vector<RealArray>& tensors() const noexcept { return tensors_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<RealArray> tensors_;
};

// Kaiming-normal weights for leaky-ReLU, zero biases.
inline MlpParams mlp_init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  MlpParams p(dims);
  Rng rng(seed);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double fan_in = static_cast<double>(dims[l]);
    const double std_dev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
    for (double& w : p.weight(l).data()) w = std_dev * rng.normal();
  }
  return p;
}

// Single-sample forward pass that keeps the activations needed for backward.
// Reuse one tape per thread to avoid allocations in sampler inner loops.
class MlpTape {
 public:
  std::span<const double> forward(const MlpParams& p, std::span<const double> x) {
    if (x.size() != p.input_dim()) {
      throw ArgumentError("mlp forward: input width " + std::to_string(x.size()) +
                          " != " + std::to_string(p.input_dim()));
    }
    const std::size_t layers = p.num_layers();
    pre_.resize(layers);
    post_.resize(layers + 1);
    post_[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers; ++l) {
      const RealArray& w = p.weight(l);
      const RealArray& b = p.bias(l);
      const std::size_t out = w.extent(0), in = w.extent(1);
      auto& z = pre_[l];
      z.resize(out);
      const double* in_ptr = post_[l].data();
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = w.data().data() + o * in;
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += wr[i] * in_ptr[i];
        z[o] = s;
      }
      auto& a = post_[l + 1];
      if (l + 1 == layers) {
        a = z;
      } else {
        a.resize(out);
        for (std::size_t o = 0; o < out; ++o) a[o] = leaky(z[o]);
      }
    }
    return post_.back();
  }

  // Reverse pass for the last forward(). Writes d<cot, out>/dx into grad_input
  // and, when grads is non-null, accumulates parameter gradients into it.
  void backward(const MlpParams& p, std::span<const double> cotangent,
                std::span<double> grad_input, MlpParams* grads = nullptr) {
    const std::size_t layers = p.num_layers();
    if (cotangent.size() != p.output_dim()) {
      throw ArgumentError("mlp backward: cotangent width mismatch");
    }
    delta_.assign(cotangent.begin(), cotangent.end());
    for (std::size_t l = layers; l-- > 0;) {
      const RealArray& w = p.weight(l);
      const std::size_t out = w.extent(0), in = w.extent(1);
      if (l + 1 != layers) {
        for (std::size_t o = 0; o < out; ++o) delta_[o] *= leaky_grad(pre_[l][o]);
      }
      if (grads != nullptr) {
        double* gw = grads->weight(l).data().data();
        double* gb = grads->bias(l).data().data();
        const double* a = post_[l].data();
        for (std::size_t o = 0; o < out; ++o) {
          const double d = delta_[o];
          gb[o] += d;
          double* gwr = gw + o * in;
          for (std::size_t i = 0; i < in; ++i) gwr[i] += d * a[i];
        }
      }
      next_.assign(in, 0.0);
      const double* wd = w.data().data();
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta_[o];
        if (d == 0.0) continue;
        const double* wr = wd + o * in;
        for (std::size_t i = 0; i < in; ++i) next_[i] += wr[i] * d;
      }
      delta_.swap(next_);
    }
    if (grad_input.size() != delta_.size()) {
      throw ArgumentError("mlp backward: grad_input width mismatch");
    }
    std::copy(delta_.begin(), delta_.end(), grad_input.begin());
  }

 private:
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> post_;
  std::vector<double> delta_;
  std::vector<double> next_;
};

inline void check_batch(const MlpParams& p, const RealArray& x) {
  if (x.rank() != 2 || x.extent(1) != p.input_dim()) {
    throw ArgumentError("mlp: expected batch of width " + std::to_string(p.input_dim()));
  }
}

inline RealArray mlp_forward(const MlpParams& p, const RealArray& x) {
  check_batch(p, x);
  const std::size_t batch = x.extent(0);
  RealArray y({batch, p.output_dim()});
  MlpTape tape;
  for (std::size_t r = 0; r < batch; ++r) {
    auto out = tape.forward(p, x.row(r));
    std::copy(out.begin(), out.end(), y.row(r).begin());
  }
  return y;
}

struct MlpVjp {
  MlpParams grad_params;  // summed over the batch
  RealArray grad_input;   // per batch row
};

// Gradients of sum_r <cotangent[r], mlp_forward(p, x)[r]>.
inline MlpVjp mlp_vjp(const MlpParams& p, const RealArray& x, const RealArray& cotangent) {
  check_batch(p, x);
  const std::size_t batch = x.extent(0);
  if (cotangent.rank() != 2 || cotangent.extent(0) != batch ||
      cotangent.extent(1) != p.output_dim()) {
    throw ArgumentError("mlp_vjp: cotangent shape mismatch");
  }
  MlpVjp result{MlpParams(p.dims()), RealArray({batch, p.input_dim()})};
  MlpTape tape;
  for (std::size_t r = 0; r < batch; ++r) {
    tape.forward(p, x.row(r));
    tape.backward(p, cotangent.row(r), result.grad_input.row(r), &result.grad_params);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<RealArray> first;   // mirrors the parameter tensors
  std::vector<RealArray> second;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState adam_init(std::span<const RealArray> params, double learning_rate,
                           double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
  if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw ArgumentError("adam: hyperparameters out of range");
  }
  AdamState s;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const auto& t : params) {
    s.first.emplace_back(t.shape());
    s.second.emplace_back(t.shape());
  }
  return s;
}

// Bias-corrected Adam update, applied to params in place.
inline void adam_step(AdamState& s, std::span<RealArray> params, std::span<const RealArray> grads) {
  if (params.size() != grads.size() || params.size() != s.first.size()) {
    throw ArgumentError("adam_step: tensor count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape() || params[k].shape() != s.first[k].shape()) {
      throw ArgumentError("adam_step: shape mismatch at tensor " + std::to_string(k));
    }
    for (double g : grads[k].data()) {
      if (std::isnan(g)) throw NumericError("adam_step: NaN gradient in tensor " + std::to_string(k));
    }
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].data();
    auto m = s.first[k].data();
    auto v = s.second[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

}  // namespace lace
