#include "heatcast/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace heatcast::autograd {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor() : d_(std::make_shared<Data>()) {
  d_->shape = {1};
  d_->values = {0.0};
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : d_(std::make_shared<Data>()) {
  validate_shape(shape);
  d_->values.assign(shape_numel(shape), fill);
  d_->shape = std::move(shape);
  d_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : d_(std::make_shared<Data>()) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  d_->shape = std::move(shape);
  d_->values = std::move(values);
  d_->requires_grad = requires_grad;
}

std::vector<double>& Tensor::grad() {
  if (d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

const std::vector<double>* Tensor::grad_if_allocated() const {
  if (d_->grad.size() != d_->values.size()) return nullptr;
  return &d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("Tensor::value requires a scalar, got " + shape_str(shape()));
  return d_->values[0];
}

Tensor Tensor::detached_copy() const {
  return Tensor(d_->shape, d_->values, false);
}

void Tape::run_backward() {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

void backward(Tape& tape, Tensor loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  }
  loss.grad()[0] += 1.0;
  tape.run_backward();
}

Tensor zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), 0.0, requires_grad); }

Tensor full(Shape shape, double v, bool requires_grad) {
  return Tensor(std::move(shape), v, requires_grad);
}

Tensor scalar(double v, bool requires_grad) { return Tensor({1}, v, requires_grad); }

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape), 0.0, true);
  for (double& v : t.vals()) v = rng.uniform(-limit, limit);
  return t;
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

bool any_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

// Elementwise op with a value-local derivative computed from (x, y).
template <class Fwd, class Dfn>
Tensor unary_elementwise(Tape& tape, const Tensor& a, Fwd fwd, Dfn dval) {
  Tensor out(a.shape(), 0.0, a.requires_grad());
  const auto& x = a.vals();
  auto& y = out.vals();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, dval]() mutable {
      const auto& g = oc.grad();
      const auto& x = ac.vals();
      const auto& y = oc.vals();
      auto& gx = ac.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dval(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape(), 0.0, any_grad(a, b));
  for (std::size_t i = 0; i < out.size(); ++i) out.vals()[i] = a.vals()[i] + b.vals()[i];
  if (out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape(), 0.0, any_grad(a, b));
  for (std::size_t i = 0; i < out.size(); ++i) out.vals()[i] = a.vals()[i] - b.vals()[i];
  if (out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape(), 0.0, any_grad(a, b));
  for (std::size_t i = 0; i < out.size(); ++i) out.vals()[i] = a.vals()[i] * b.vals()[i];
  if (out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        const auto& bv = bc.vals();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        const auto& av = ac.vals();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  return unary_elementwise(
      tape, a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 tensors, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n}, 0.0, any_grad(a, b));
  {
    const double* av = a.vals().data();
    const double* bv = b.vals().data();
    double* ov = out.vals().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
      }
    }
  }
  if (out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, m, k, n]() mutable {
      const double* g = oc.grad().data();
      if (ac.requires_grad()) {
        double* ga = ac.grad().data();
        const double* bv = bc.vals().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[p * n + j];
          }
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        const double* av = ac.vals().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose expects a rank-2 tensor, got " + shape_str(a.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m}, 0.0, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.vals()[j * m + i] = a.vals()[i * n + j];
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, m, n]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape new_shape) {
  validate_shape(new_shape);
  if (shape_numel(new_shape) != a.size()) {
    throw DimensionError("reshape from " + shape_str(a.shape()) + " to " +
                         shape_str(new_shape) + " changes element count");
  }
  Tensor out(std::move(new_shape), a.vals(), a.requires_grad());
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t count) {
  if (a.rank() != 2) {
    throw DimensionError("slice_rows expects a rank-2 tensor, got " + shape_str(a.shape()));
  }
  if (count == 0 || start + count > a.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_str(a.shape()));
  }
  const std::size_t n = a.dim(1);
  Tensor out({count, n}, 0.0, a.requires_grad());
  std::copy(a.vals().begin() + static_cast<std::ptrdiff_t>(start * n),
            a.vals().begin() + static_cast<std::ptrdiff_t>((start + count) * n),
            out.vals().begin());
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, start, n]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[start * n + i] += g[i];
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols requires at least one tensor");
  const std::size_t m = parts.front().dim(0);
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) {
      throw DimensionError("concat_cols row mismatch at " + shape_str(p.shape()));
    }
    total += p.dim(1);
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor out({m, total}, 0.0, needs_grad);
  std::size_t col = 0;
  for (const Tensor& p : parts) {
    const std::size_t n = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out.vals()[i * total + col + j] = p.vals()[i * n + j];
    col += n;
  }
  if (needs_grad) {
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    tape.record([pc, oc, m, total]() mutable {
      const auto& g = oc.grad();
      std::size_t col = 0;
      for (Tensor& p : pc) {
        const std::size_t n = p.dim(1);
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += g[i * total + col + j];
        }
        col += n;
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  // Subgradient at 0 is 0.
  return unary_elementwise(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary_elementwise(
      tape, a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(Tape& tape, const Tensor& a) {
  return unary_elementwise(
      tape, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(Tape& tape, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for " +
                         shape_str(a.shape()));
  }
  const std::size_t axis_n = a.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);

  Tensor out(a.shape(), 0.0, a.requires_grad());
  const auto& x = a.vals();
  auto& y = out.vals();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * axis_n * inner + in;
      double mx = x[base];
      for (std::size_t i = 1; i < axis_n; ++i) mx = std::max(mx, x[base + i * inner]);
      double denom = 0.0;
      for (std::size_t i = 0; i < axis_n; ++i) {
        const double e = std::exp(x[base + i * inner] - mx);
        y[base + i * inner] = e;
        denom += e;
      }
      for (std::size_t i = 0; i < axis_n; ++i) y[base + i * inner] /= denom;
    }
  }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, outer, inner, axis_n]() mutable {
      const auto& g = oc.grad();
      const auto& y = oc.vals();
      auto& ga = ac.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * axis_n * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < axis_n; ++i)
            dot += g[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < axis_n; ++i) {
            const std::size_t idx = base + i * inner;
            ga[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out({1}, 0.0, a.requires_grad());
  double s = 0.0;
  for (double v : a.vals()) s += v;
  out.vals()[0] = s;
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const double g = oc.grad()[0];
      auto& ga = ac.grad();
      for (double& v : ga) v += g;
    });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
    throw DimensionError("linear expects x:[m,k] w:[k,n] b:[n], got " + shape_str(x.shape()) +
                         ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()));
  }
  if (x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0)) {
    throw DimensionError("linear dimension mismatch: x " + shape_str(x.shape()) + " w " +
                         shape_str(w.shape()) + " b " + shape_str(b.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  Tensor out({m, n}, 0.0, x.requires_grad() || w.requires_grad() || b.requires_grad());
  {
    const double* xv = x.vals().data();
    const double* wv = w.vals().data();
    const double* bv = b.vals().data();
    double* ov = out.vals().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = bv[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double xip = xv[i * k + p];
        if (xip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += xip * wv[p * n + j];
      }
    }
  }
  if (out.requires_grad()) {
    Tensor xc = x, wc = w, bc = b, oc = out;
    tape.record([xc, wc, bc, oc, m, k, n]() mutable {
      const double* g = oc.grad().data();
      if (xc.requires_grad()) {
        double* gx = xc.grad().data();
        const double* wv = wc.vals().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) gx[i * k + p] += gij * wv[p * n + j];
          }
      }
      if (wc.requires_grad()) {
        double* gw = wc.grad().data();
        const double* xv = xc.vals().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double xip = xv[i * k + p];
            if (xip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gw[p * n + j] += xip * g[i * n + j];
          }
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  if (input.rank() != 3 || kernels.rank() != 4 || bias.rank() != 1) {
    throw DimensionError("conv2d expects input:[C,H,W] kernels:[Co,Ci,kh,kw] bias:[Co], got " +
                         shape_str(input.shape()) + ", " + shape_str(kernels.shape()) + ", " +
                         shape_str(bias.shape()));
  }
  if (stride == 0) throw ContractError("conv2d stride must be positive");
  const std::size_t ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t co = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != ci) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         " vs kernels " + shape_str(kernels.shape()));
  }
  if (bias.dim(0) != co) {
    throw DimensionError("conv2d bias size " + shape_str(bias.shape()) +
                         " does not match kernel count " + std::to_string(co));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d kernel " + shape_str(kernels.shape()) +
                         " larger than padded input " + shape_str(input.shape()) +
                         " with padding " + std::to_string(padding));
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;

  Tensor out({co, oh, ow}, 0.0,
             input.requires_grad() || kernels.requires_grad() || bias.requires_grad());
  {
    const double* in = input.vals().data();
    const double* kv = kernels.vals().data();
    const double* bv = bias.vals().data();
    double* ov = out.vals().data();
    for (std::size_t c = 0; c < co; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bv[c];
          for (std::size_t ic = 0; ic < ci; ++ic) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += in[(ic * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] *
                       kv[((c * ci + ic) * kh + ky) * kw + kx];
              }
            }
          }
          ov[(c * oh + y) * ow + x] = acc;
        }
      }
    }
  }
  if (out.requires_grad()) {
    Tensor inc = input, kc = kernels, bc = bias, oc = out;
    tape.record([inc, kc, bc, oc, ci, h, w, co, kh, kw, oh, ow, stride, padding]() mutable {
      const double* g = oc.grad().data();
      const bool need_in = inc.requires_grad();
      const bool need_k = kc.requires_grad();
      const bool need_b = bc.requires_grad();
      double* gin = need_in ? inc.grad().data() : nullptr;
      double* gk = need_k ? kc.grad().data() : nullptr;
      double* gb = need_b ? bc.grad().data() : nullptr;
      const double* in = inc.vals().data();
      const double* kv = kc.vals().data();
      for (std::size_t c = 0; c < co; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            const double go = g[(c * oh + y) * ow + x];
            if (go == 0.0) continue;
            if (need_b) gb[c] += go;
            if (!need_in && !need_k) continue;
            for (std::size_t ic = 0; ic < ci; ++ic) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t in_idx =
                      (ic * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                  const std::size_t k_idx = ((c * ci + ic) * kh + ky) * kw + kx;
                  if (need_in) gin[in_idx] += go * kv[k_idx];
                  if (need_k) gk[k_idx] += go * in[in_idx];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor tokenize(Tape& tape, const Tensor& chw) {
  if (chw.rank() != 3) {
    throw DimensionError("tokenize expects [C,H,W], got " + shape_str(chw.shape()));
  }
  const std::size_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({w, c * h}, 0.0, chw.requires_grad());
  for (std::size_t ic = 0; ic < c; ++ic)
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < w; ++ix)
        out.vals()[ix * (c * h) + ic * h + iy] = chw.vals()[(ic * h + iy) * w + ix];
  if (out.requires_grad()) {
    Tensor ac = chw, oc = out;
    tape.record([ac, oc, c, h, w]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t ic = 0; ic < c; ++ic)
        for (std::size_t iy = 0; iy < h; ++iy)
          for (std::size_t ix = 0; ix < w; ++ix)
            ga[(ic * h + iy) * w + ix] += g[ix * (c * h) + ic * h + iy];
    });
  }
  return out;
}

Tensor scaled_dot_product_attention(Tape& tape, const Tensor& query, const Tensor& key,
                                    const Tensor& value, std::vector<double>* weights_out) {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2) {
    throw DimensionError("attention expects rank-2 q/k/v, got " + shape_str(query.shape()) +
                         ", " + shape_str(key.shape()) + ", " + shape_str(value.shape()));
  }
  if (query.dim(1) != key.dim(1)) {
    throw DimensionError("attention feature dims differ: q " + shape_str(query.shape()) +
                         " vs k " + shape_str(key.shape()));
  }
  if (key.dim(0) != value.dim(0)) {
    throw DimensionError("attention token dims differ: k " + shape_str(key.shape()) +
                         " vs v " + shape_str(value.shape()));
  }
  const double d = static_cast<double>(query.dim(1));
  Tensor scores = matmul(tape, query, transpose(tape, key));
  Tensor scaled = scale(tape, scores, 1.0 / std::sqrt(d));
  Tensor weights = softmax(tape, scaled, 1);
  if (weights_out != nullptr) *weights_out = weights.vals();
  return matmul(tape, weights, value);
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  require_same_shape("mse_loss", pred, target);
  const std::size_t n = pred.size();
  Tensor out({1}, 0.0, any_grad(pred, target));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.vals()[i] - target.vals()[i];
    s += d * d;
  }
  out.vals()[0] = s / static_cast<double>(n);
  if (out.requires_grad()) {
    Tensor pc = pred, tc = target, oc = out;
    tape.record([pc, tc, oc, n]() mutable {
      const double g = oc.grad()[0];
      const double k = 2.0 * g / static_cast<double>(n);
      if (pc.requires_grad()) {
        auto& gp = pc.grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += k * (pc.vals()[i] - tc.vals()[i]);
      }
      if (tc.requires_grad()) {
        auto& gt = tc.grad();
        for (std::size_t i = 0; i < n; ++i) gt[i] -= k * (pc.vals()[i] - tc.vals()[i]);
      }
    });
  }
  return out;
}

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamState::step(std::vector<Tensor>& params) {
  if (params.size() != m_.size()) {
    throw ContractError("adam_step: parameter list size " + std::to_string(params.size()) +
                        " does not match optimizer state " + std::to_string(m_.size()));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    if (p.size() != m_[pi].size()) {
      throw ContractError("adam_step: parameter " + std::to_string(pi) + " has " +
                          std::to_string(p.size()) + " elements but moments have " +
                          std::to_string(m_[pi].size()));
    }
    const std::vector<double>* gp = p.grad_if_allocated();
    auto& m = m_[pi];
    auto& v = v_[pi];
    auto& vals = p.vals();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double g = gp ? (*gp)[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      vals[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

std::size_t parameter_count(const std::vector<Tensor>& params) {
  std::size_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

void zero_grads(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace heatcast::autograd
