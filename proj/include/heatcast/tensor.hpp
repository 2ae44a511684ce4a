#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "heatcast/common.hpp"

namespace heatcast::autograd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Copies share the underlying
// storage; the handle itself has value semantics. A tensor created with
// requires_grad, or produced from one, accumulates into `grad` when a tape
// is run backward.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t size() const { return d_->values.size(); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }

  std::vector<double>& vals() { return d_->values; }
  const std::vector<double>& vals() const { return d_->values; }

  // Gradient buffer; allocated (zero-filled) on first access.
  std::vector<double>& grad();
  const std::vector<double>* grad_if_allocated() const;
  void zero_grad();

  // Scalar convenience.
  double value() const;

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  Tensor detached_copy() const;

 private:
  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Ordered record of executed operations. Operations append a backward
// closure as they run, so entries are in topological order by construction;
// backward() replays them exactly once, in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  void run_backward();

 private:
  std::vector<std::function<void()>> entries_;
};

// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
// gradients (summation) into every requires_grad tensor that fed the graph.
void backward(Tape& tape, Tensor loss);

// ---- Tensor factories ------------------------------------------------------

Tensor zeros(Shape shape, bool requires_grad = false);
Tensor full(Shape shape, double v, bool requires_grad = false);
Tensor scalar(double v, bool requires_grad = false);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---- Differentiable operations ---------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor reshape(Tape& tape, const Tensor& a, Shape new_shape);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor relu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh_op(Tape& tape, const Tensor& a);
Tensor softmax(Tape& tape, const Tensor& a, std::size_t axis);
Tensor sum(Tape& tape, const Tensor& a);

// out = x * w + b with x:[m,k], w:[k,n], b:[n].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

// Cross-correlation (no kernel flip) with zero padding.
// input:[C_in,H,W], kernels:[C_out,C_in,kh,kw], bias:[C_out].
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);

// [C,H,W] -> [W, C*H]: each spatial column becomes one token embedding.
Tensor tokenize(Tape& tape, const Tensor& chw);

// softmax(q k^T / sqrt(d)) v with q:[T_q,d], k:[T_k,d], v:[T_k,d_v].
// When `weights_out` is given it receives a detached copy of the attention
// weights, row-major [T_q, T_k].
Tensor scaled_dot_product_attention(Tape& tape, const Tensor& query, const Tensor& key,
                                    const Tensor& value,
                                    std::vector<double>* weights_out = nullptr);

// Mean of squared differences over all elements; scalar output.
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target);

// ---- Optimizer --------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter first/second moment arrays plus the shared step counter.
class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamConfig cfg);

  // Bias-corrected update using each parameter's accumulated gradient.
  void step(std::vector<Tensor>& params);

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
  state.step(params);
}

std::size_t parameter_count(const std::vector<Tensor>& params);
void zero_grads(std::vector<Tensor>& params);

}  // namespace heatcast::autograd
