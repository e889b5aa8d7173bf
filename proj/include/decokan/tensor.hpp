#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "decokan/common.hpp"

namespace decokan {

using Shape = std::vector<Dim>;

Dim shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One tape record. A tensor produced by a primitive op keeps references to
/// its inputs and a local adjoint rule; replaying the rules in reverse
/// topological order from a scalar loss accumulates gradients into every
/// reachable tensor with requires_grad set. backward() clears the records.
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated on first accumulation

  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> adjoint_rule;
  const char* op_name = "";

  Dim numel() const { return static_cast<Dim>(values.size()); }
  bool tracked() const { return requires_grad || static_cast<bool>(adjoint_rule); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with reverse-mode gradients over
/// the fixed op set below. Handles share storage; produced tensors are
/// treated as immutable, except parameter updates between forward passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Dim rank() const { return static_cast<Dim>(impl_->shape.size()); }
  Dim dim(Dim axis) const;
  Dim numel() const { return impl_->numel(); }

  std::span<const double> values() const { return impl_->values; }
  /// Mutable access for initialization and optimizer steps only.
  std::span<double> mutable_values() { return impl_->values; }

  double item() const;
  double at(std::initializer_list<Dim> idx) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Detached copy of the values (no graph history, no requires_grad).
  Tensor detach() const;

  detail::ImplPtr impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr impl_;
};

/// Accumulates d(loss)/d(param) into .grad for every requires_grad tensor
/// reachable from loss, then clears the tape records it visited.
/// loss must be a scalar produced through taped ops.
void backward(const Tensor& loss);

// ---- elementwise / broadcasting ----------------------------------------
// Binary ops broadcast right-aligned (dims equal or 1), numpy-style.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor silu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

// ---- contractions --------------------------------------------------------

/// Batched matrix product. a: (..., m, k), b: (..., k, n); batch dims must
/// match exactly or either operand may be rank-2 (broadcast over batches).
Tensor matmul(const Tensor& a, const Tensor& b);

/// y[..., o] = sum_i x[..., i] * w[o, i] (+ bias[o]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& w);

// ---- shape ops -------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<Dim>& axes);
/// Swaps the last two axes.
Tensor swap_last_two(const Tensor& x);

/// (C, L) -> (C, N, P): windows of length P at stride S. Requires L >= P and
/// (L - P) divisible by S only when exact=true; otherwise takes all windows
/// with start + P <= L.
Tensor gather_patches(const Tensor& x, Dim patch, Dim stride);

/// (C, L) -> (C, L + n): replicates the final column n times.
Tensor pad_tail_replicate(const Tensor& x, Dim n);

// ---- reductions ------------------------------------------------------

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// ---- normalization / dropout ----------------------------------------

/// Per-slice over the last axis: (x - mean) / sqrt(var + eps), population
/// variance. The mixer-internal normalization.
Tensor normalize_last(const Tensor& x, double eps);

/// Training mode: multiplies by a Bernoulli(1-p) mask scaled by 1/(1-p),
/// drawn from rng. Identity when training=false or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

// ---- init helpers (not taped) -----------------------------------------

/// Uniform in [lo, hi).
Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
               bool requires_grad = false);
/// Normal(0, sigma).
Tensor normal(Shape shape, double sigma, std::mt19937_64& rng,
              bool requires_grad = false);

namespace detail {

/// Creates a taped node when any input is tracked; modules use this to define
/// their own primitives (wavelet transforms, KAN layers). The rule reads
/// out.grad and accumulates into parents' grad.
Tensor make_node(Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs,
                 std::function<void(TensorImpl&)> rule, const char* name);

void check_finite(const std::vector<double>& values, const char* op);
void accumulate(TensorImpl& t, const std::vector<double>& delta);

}  // namespace detail

}  // namespace decokan
