#include "milab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "milab/error.hpp"
#include "milab/kernels.hpp"

namespace milab::ad {

namespace {

using kernels::Trans;

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) {
    throw Error("autodiff operands recorded on different tapes");
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_string(t.shape()));
  }
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " received a non-finite input");
    }
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return a.tape().record(
      Tensor(x.shape(), std::move(out)), {a},
      [deriv](const BackwardContext& ctx) {
        const Tensor& in = *ctx.inputs[0];
        auto& g = *ctx.in_grads[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += ctx.out_grad[i] * deriv(in[i], ctx.output[i]);
        }
      });
}

enum class Binary { kAdd, kSub, kMul };

Var binary(Var a, Var b, Binary kind, const char* name) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool same = x.shape() == y.shape();
  const bool x_scalar = x.numel() == 1;
  const bool y_scalar = y.numel() == 1;
  if (!same && !x_scalar && !y_scalar) {
    throw DimensionError(std::string(name) + ": incompatible shapes " +
                         shape_string(x.shape()) + " and " +
                         shape_string(y.shape()));
  }
  const Shape& shape = (same || y_scalar) ? x.shape() : y.shape();
  const std::size_t n = shape_numel(shape);
  auto xi = [&](std::size_t i) { return x_scalar && !same ? x[0] : x[i]; };
  auto yi = [&](std::size_t i) { return y_scalar && !same ? y[0] : y[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::kAdd: out[i] = xi(i) + yi(i); break;
      case Binary::kSub: out[i] = xi(i) - yi(i); break;
      case Binary::kMul: out[i] = xi(i) * yi(i); break;
    }
  }
  const bool bx = x_scalar && !same;
  const bool by = y_scalar && !same;
  return a.tape().record(
      Tensor(shape, std::move(out)), {a, b},
      [kind, bx, by](const BackwardContext& ctx) {
        const Tensor& x = *ctx.inputs[0];
        const Tensor& y = *ctx.inputs[1];
        const std::size_t n = ctx.out_grad.size();
        for (std::size_t i = 0; i < n; ++i) {
          const double g = ctx.out_grad[i];
          const double xv = bx ? x[0] : x[i];
          const double yv = by ? y[0] : y[i];
          double dx = g;
          double dy = kind == Binary::kSub ? -g : g;
          if (kind == Binary::kMul) {
            dx = g * yv;
            dy = g * xv;
          }
          if (ctx.in_grads[0]) (*ctx.in_grads[0])[bx ? 0 : i] += dx;
          if (ctx.in_grads[1]) (*ctx.in_grads[1])[by ? 0 : i] += dy;
        }
      });
}

}  // namespace

const Tensor& Var::value() const { return tape_->node(*this).value; }

bool Var::requires_grad() const { return tape_->node(*this).requires_grad; }

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("variable does not belong to this tape");
  }
  return nodes_[v.id_];
}

Var Tape::push_leaf(Tensor value, bool requires_grad, Tensor* watched) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.leaf = true;
  n.watched = watched;
  if (requires_grad) n.leaf_grad.assign(n.value.numel(), 0.0);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  return push_leaf(std::move(value), false, nullptr);
}

Var Tape::variable(Tensor value) {
  return push_leaf(std::move(value), true, nullptr);
}

Var Tape::watch(Tensor& source) { return push_leaf(source, true, &source); }

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw Error("op input recorded on another tape");
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw DimensionError("backward() needs a single-element loss, got " +
                         shape_string(root.value.shape()));
  }
  if (!root.requires_grad) return;

  std::vector<std::vector<double>> adjoint(loss.id_ + 1);
  adjoint[loss.id_].assign(1, 1.0);

  std::vector<const Tensor*> inputs;
  std::vector<std::vector<double>*> in_grads;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (adjoint[id].empty()) continue;
    if (n.leaf) {
      for (std::size_t i = 0; i < adjoint[id].size(); ++i) {
        n.leaf_grad[i] += adjoint[id][i];
      }
      if (n.watched) n.watched->accumulate_grad(adjoint[id]);
      continue;
    }
    inputs.clear();
    in_grads.clear();
    for (std::size_t in : n.inputs) {
      inputs.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (adjoint[in].empty()) adjoint[in].assign(nodes_[in].value.numel(), 0.0);
        in_grads.push_back(&adjoint[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.rule(BackwardContext{inputs, n.value, adjoint[id], in_grads});
    std::vector<double>().swap(adjoint[id]);
  }
}

const std::vector<double>& Tape::grad(Var leaf) const {
  const Node& n = node(leaf);
  if (!n.leaf || !n.requires_grad) {
    throw Error("grad() is only defined for differentiable leaves");
  }
  return n.leaf_grad;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) std::fill(n.leaf_grad.begin(), n.leaf_grad.end(), 0.0);
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(x, "matmul");
  require_rank2(y, "matmul");
  if (x.cols() != y.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " +
                         shape_string(x.shape()) + " and " +
                         shape_string(y.shape()));
  }
  const std::size_t m = x.rows();
  const std::size_t k = x.cols();
  const std::size_t p = y.cols();
  Tensor out = Tensor::zeros({m, p});
  kernels::gemm(Trans::kNo, Trans::kNo, m, p, k, x.data(), y.data(), out.data());
  return a.tape().record(std::move(out), {a, b},
                         [m, k, p](const BackwardContext& ctx) {
                           const Tensor& x = *ctx.inputs[0];
                           const Tensor& y = *ctx.inputs[1];
                           // dA += dC * B^T ; dB += A^T * dC
                           if (ctx.in_grads[0]) {
                             kernels::gemm(Trans::kNo, Trans::kYes, m, k, p,
                                           ctx.out_grad, y.data(),
                                           *ctx.in_grads[0]);
                           }
                           if (ctx.in_grads[1]) {
                             kernels::gemm(Trans::kYes, Trans::kNo, k, p, m,
                                           x.data(), ctx.out_grad,
                                           *ctx.in_grads[1]);
                           }
                         });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_rank2(x, "transpose");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  return a.tape().record(x.transposed(), {a},
                         [r, c](const BackwardContext& ctx) {
                           auto& g = *ctx.in_grads[0];
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               g[i * c + j] += ctx.out_grad[j * r + i];
                         });
}

Var add(Var a, Var b) { return binary(a, b, Binary::kAdd, "add"); }
Var sub(Var a, Var b) { return binary(a, b, Binary::kSub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, Binary::kMul, "mul"); }

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const Tensor& v = x.value();
  const Tensor& b = bias.value();
  require_rank2(v, "add_bias");
  const std::size_t n = v.rows();
  const std::size_t h = v.cols();
  if (b.numel() != h || (b.rank() == 2 && b.rows() != 1)) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) +
                         " does not match rows of " + shape_string(v.shape()));
  }
  Tensor out = v;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) out.at(i, j) += b[j];
  return x.tape().record(std::move(out), {x, bias},
                         [n, h](const BackwardContext& ctx) {
                           if (ctx.in_grads[0]) {
                             auto& g = *ctx.in_grads[0];
                             for (std::size_t i = 0; i < g.size(); ++i)
                               g[i] += ctx.out_grad[i];
                           }
                           if (ctx.in_grads[1]) {
                             auto& g = *ctx.in_grads[1];
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < h; ++j)
                                 g[j] += ctx.out_grad[i * h + j];
                           }
                         });
}

Var mul_rows(Var x, Var w) {
  require_same_tape(x, w);
  const Tensor& v = x.value();
  const Tensor& s = w.value();
  require_rank2(v, "mul_rows");
  const std::size_t n = v.rows();
  const std::size_t d = v.cols();
  if (s.numel() != n) {
    throw DimensionError("mul_rows: " + std::to_string(s.numel()) +
                         " weights for " + shape_string(v.shape()));
  }
  Tensor out = v;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) *= s[i];
  return x.tape().record(std::move(out), {x, w},
                         [n, d](const BackwardContext& ctx) {
                           const Tensor& v = *ctx.inputs[0];
                           const Tensor& s = *ctx.inputs[1];
                           for (std::size_t i = 0; i < n; ++i) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                               const double g = ctx.out_grad[i * d + j];
                               if (ctx.in_grads[0])
                                 (*ctx.in_grads[0])[i * d + j] += g * s[i];
                               acc += g * v[i * d + j];
                             }
                             if (ctx.in_grads[1]) (*ctx.in_grads[1])[i] += acc;
                           }
                         });
}

Var relu(Var a) {
  // Subgradient at exactly 0 is 0.
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& v = x.value();
  check_finite(v, "softmax");
  if (v.rank() > 2 || axis >= v.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " invalid for " + shape_string(v.shape()));
  }
  // Groups of `len` elements spaced `stride` apart.
  std::size_t groups, len, stride, group_step;
  if (v.rank() == 1) {
    groups = 1; len = v.numel(); stride = 1; group_step = 0;
  } else if (axis == 1) {
    groups = v.rows(); len = v.cols(); stride = 1; group_step = v.cols();
  } else {
    groups = v.cols(); len = v.rows(); stride = v.cols(); group_step = 1;
  }
  Tensor out = v;
  std::vector<double> buf(len);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * group_step;
    for (std::size_t i = 0; i < len; ++i) buf[i] = v[base + i * stride];
    const auto sm = softmax(buf);
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] = sm[i];
  }
  return x.tape().record(
      std::move(out), {x},
      [groups, len, stride, group_step](const BackwardContext& ctx) {
        auto& gin = *ctx.in_grads[0];
        const Tensor& y = ctx.output;
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t base = g * group_step;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t k = base + i * stride;
            dot += ctx.out_grad[k] * y[k];
          }
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t k = base + i * stride;
            gin[k] += y[k] * (ctx.out_grad[k] - dot);
          }
        }
      });
}

Var sum_axis(Var x, std::size_t axis) {
  const Tensor& v = x.value();
  if (v.rank() == 1) {
    if (axis != 0) {
      throw DimensionError("sum_axis: axis " + std::to_string(axis) +
                           " out of range for " + shape_string(v.shape()));
    }
    return sum(x);
  }
  if (v.rank() != 2 || axis > 1) {
    throw DimensionError("sum_axis: axis " + std::to_string(axis) +
                         " out of range for " + shape_string(v.shape()));
  }
  const std::size_t r = v.rows();
  const std::size_t c = v.cols();
  std::vector<double> out(axis == 0 ? c : r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += v.at(i, j);
  return x.tape().record(Tensor::vector(std::move(out)), {x},
                         [r, c, axis](const BackwardContext& ctx) {
                           auto& g = *ctx.in_grads[0];
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               g[i * c + j] += ctx.out_grad[axis == 0 ? j : i];
                         });
}

Var sum(Var x) {
  const Tensor& v = x.value();
  double total = 0.0;
  for (double e : v.data()) total += e;
  return x.tape().record(Tensor::scalar(total), {x},
                         [](const BackwardContext& ctx) {
                           for (double& g : *ctx.in_grads[0]) g += ctx.out_grad[0];
                         });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    auto& g = *ctx.in_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.out_grad[i];
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  check_finite(z, "cross_entropy");
  if (z.rank() == 2 && z.rows() != 1) {
    throw DimensionError("cross_entropy expects a logit vector, got " +
                         shape_string(z.shape()));
  }
  if (label >= z.numel()) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(z.numel()) +
                         " classes");
  }
  const double mx = *std::max_element(z.data().begin(), z.data().end());
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - mx);
  const double loss = -(z[label] - mx - std::log(total));
  return logits.tape().record(
      Tensor::scalar(loss), {logits}, [label](const BackwardContext& ctx) {
        const auto p = softmax(ctx.inputs[0]->data());
        auto& g = *ctx.in_grads[0];
        for (std::size_t i = 0; i < p.size(); ++i) {
          g[i] += ctx.out_grad[0] * (p[i] - (i == label ? 1.0 : 0.0));
        }
      });
}

GradCheckReport grad_check(const TapeFunction& fn,
                           std::span<const Tensor> inputs, double eps,
                           double tol) {
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : xs) vars.push_back(tape.constant(t));
    return fn(tape, vars).value()[0];
  };

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    tape.backward(fn(tape, vars));
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < probe[k].numel(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + eps;
      const double up = evaluate(probe);
      probe[k][i] = saved - eps;
      const double down = evaluate(probe);
      probe[k][i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    const double rel = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
    report.rel_error.push_back(rel);
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check(const std::function<Var(Var)>& fn, const Tensor& x,
                           double eps, double tol) {
  const Tensor inputs[] = {x};
  return grad_check(
      [&fn](Tape&, std::span<const Var> vars) { return fn(vars[0]); }, inputs,
      eps, tol);
}

}  // namespace milab::ad
