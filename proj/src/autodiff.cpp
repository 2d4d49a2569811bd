// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "basislens/error.hpp"
#include "linalg.hpp"

namespace basislens::ad {

namespace {

thread_local int g_no_grad_depth = 0;

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op_name(op)) + ": " + why + ", got " + shape_str(a));
}

// Returns the parent's grad buffer, allocating zeros on first use.
Tensor& grad_of(Node& n) {
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Var make_node(Op op, Tensor value, std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value = std::move(value);
  bool needs = false;
  if (g_no_grad_depth == 0) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

template <typename F>
Var unary(Op op, const Var& a, F&& fwd, std::function<void(Node&)> bwd) {
  Tensor out(a.shape());
  auto in = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
  return make_node(op, std::move(out), {a.node()}, std::move(bwd));
}

void require_same(Op op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scalar-mul";
    case Op::Matmul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Conv2d: return "conv2d";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sqrt: return "sqrt";
    case Op::Log: return "log";
    case Op::Clamp: return "clamp";
    case Op::Sum: return "sum";
    case Op::SumRows: return "sum-rows";
    case Op::Mean: return "mean";
    case Op::Stddev: return "stddev";
    case Op::Min: return "min";
    case Op::Broadcast: return "broadcast";
    case Op::Reshape: return "reshape";
    case Op::Slice: return "slice";
  }
  return "unknown";
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->op = Op::Leaf;
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

ConvGeometry conv_geometry(std::size_t in, std::size_t kernel, const Conv2dOptions& opt) {
  if (opt.stride != 1 && opt.stride != 2) {
    throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(opt.stride));
  }
  ConvGeometry g;
  if (opt.padding == Padding::Valid) {
    if (in < kernel) {
      throw ShapeError("conv2d: valid padding needs input >= kernel (" + std::to_string(in) + " < " +
                       std::to_string(kernel) + ")");
    }
    g.out = (in - kernel) / opt.stride + 1;
    g.pad_before = 0;
  } else {
    g.out = (in + opt.stride - 1) / opt.stride;
    const std::size_t needed = (g.out - 1) * opt.stride + kernel;
    const std::size_t pad_total = needed > in ? needed - in : 0;
    g.pad_before = pad_total / 2;
  }
  return g;
}

Var add(const Var& a, const Var& b) {
  require_same(Op::Add, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_node(Op::Add, std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = grad_of(p);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(Op::Sub, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_node(Op::Sub, std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = grad_of(p);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(Op::Mul, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_node(Op::Mul, std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same(Op::Div, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double d = b.value()[i];
    if (d == 0.0) throw DomainError("div: division by zero at element " + std::to_string(i));
    out[i] = a.value()[i] / d;
  }
  return make_node(Op::Div, std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i] * self.value[i] / pb.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary(Op::Scale, a, [factor](double x) { return factor * x; }, [factor](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_fail(Op::Matmul, a.shape(), b.shape());
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n}, 0.0);
  detail::gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return make_node(Op::Matmul, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* go = self.grad.data().data();
    if (pa.requires_grad) {
      // dA = dC * B^T
      detail::gemm_nt(go, pb.value.data().data(), grad_of(pa).data().data(), m, n, k);
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      detail::gemm_tn(pa.value.data().data(), go, grad_of(pb).data().data(), k, m, n);
    }
  });
}

Var transpose(const Var& a) {
  if (a.value().rank() != 2) shape_fail(Op::Transpose, a.shape(), "expected rank 2");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.value()[i * c + j];
  return make_node(Op::Transpose, std::move(out), {a.node()}, [r, c](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, const Conv2dOptions& opt) {
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 3) shape_fail(Op::Conv2d, xs, "input must be [C,H,W]");
  if (ws.size() != 4 || ws[2] != ws[3]) shape_fail(Op::Conv2d, ws, "weight must be [Cout,Cin,k,k]");
  if (ws[1] != xs[0]) shape_fail(Op::Conv2d, xs, ws);
  if (bias.shape() != Shape{ws[0]}) shape_fail(Op::Conv2d, bias.shape(), ws);

  const std::size_t cin = xs[0], h = xs[1], w = xs[2];
  const std::size_t cout = ws[0], k = ws[2];
  const auto gy = conv_geometry(h, k, opt);
  const auto gx = conv_geometry(w, k, opt);
  const std::size_t ho = gy.out, wo = gx.out, s = opt.stride;
  const std::size_t rows = cin * k * k, cols = ho * wo;

  // im2col: col[(c,ky,kx), (oy,ox)]
  auto col = std::make_shared<std::vector<double>>(rows * cols, 0.0);
  const double* x = input.value().data().data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = col->data() + ((c * k + ky) * k + kx) * cols;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(gy.pad_before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(gx.pad_before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[oy * wo + ox] = x[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }

  Tensor out({cout, ho, wo}, 0.0);
  double* o = out.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    const double b = bias.value()[co];
    for (std::size_t j = 0; j < cols; ++j) o[co * cols + j] = b;
  }
  detail::gemm_nn(weight.value().data().data(), col->data(), o, cout, rows, cols);

  return make_node(Op::Conv2d, std::move(out), {input.node(), weight.node(), bias.node()},
                   [=](Node& self) {
                     auto& px = *self.parents[0];
                     auto& pw = *self.parents[1];
                     auto& pb = *self.parents[2];
                     const double* go = self.grad.data().data();
                     if (pb.requires_grad) {
                       auto& gb = grad_of(pb);
                       for (std::size_t co = 0; co < cout; ++co) {
                         double acc = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) acc += go[co * cols + j];
                         gb[co] += acc;
                       }
                     }
                     if (pw.requires_grad) {
                       detail::gemm_nt(go, col->data(), grad_of(pw).data().data(), cout, cols, rows);
                     }
                     if (px.requires_grad) {
                       std::vector<double> dcol(rows * cols, 0.0);
                       detail::gemm_tn(pw.value.data().data(), go, dcol.data(), rows, cout, cols);
                       double* gx_data = grad_of(px).data().data();
                       for (std::size_t c = 0; c < cin; ++c) {
                         for (std::size_t ky = 0; ky < k; ++ky) {
                           for (std::size_t kx = 0; kx < k; ++kx) {
                             const double* src = dcol.data() + ((c * k + ky) * k + kx) * cols;
                             for (std::size_t oy = 0; oy < ho; ++oy) {
                               const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) -
                                                         static_cast<std::ptrdiff_t>(gy.pad_before);
                               if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                               for (std::size_t ox = 0; ox < wo; ++ox) {
                                 const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) -
                                                           static_cast<std::ptrdiff_t>(gx.pad_before);
                                 if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                 gx_data[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                                     src[oy * wo + ox];
                               }
                             }
                           }
                         }
                       }
                     }
                   });
}

Var relu(const Var& a) {
  return unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (p.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& a) {
  auto fwd = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary(Op::Sigmoid, a, fwd, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var sqrt(const Var& a) {
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.value()[i] < 0.0) {
      throw DomainError("sqrt: negative input " + std::to_string(a.value()[i]) + " at element " + std::to_string(i));
    }
  }
  return unary(Op::Sqrt, a, [](double x) { return std::sqrt(x); }, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double y = self.value[i];
      if (y > 0.0) g[i] += self.grad[i] * 0.5 / y;
    }
  });
}

Var log(const Var& a) {
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (!(a.value()[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(a.value()[i]) + " at element " +
                        std::to_string(i));
    }
  }
  return unary(Op::Log, a, [](double x) { return std::log(x); }, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / p.value[i];
  });
}

Var clamp(const Var& a, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lower bound exceeds upper bound");
  return unary(Op::Clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); }, [lo, hi](Node& self) {
    auto& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (p.value[i] >= lo && p.value[i] <= hi) g[i] += self.grad[i];
    }
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return make_node(Op::Sum, Tensor::scalar(acc), {a.node()}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

Var mean(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const double n = static_cast<double>(a.numel());
  return make_node(Op::Mean, Tensor::scalar(acc / n), {a.node()}, [n](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    const double go = self.grad[0] / n;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

Var stddev(const Var& a) {
  const auto x = a.value().data();
  const double n = static_cast<double>(x.size());
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= n;
  const double sd = std::sqrt(var);
  return make_node(Op::Stddev, Tensor::scalar(sd), {a.node()}, [mu, n](Node& self) {
    const double sdv = self.value[0];
    if (sdv == 0.0) return;
    auto& p = *self.parents[0];
    auto& g = grad_of(p);
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += go * (p.value[i] - mu) / (n * sdv);
  });
}

Var min(const Var& a) {
  const auto x = a.value().data();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] < x[arg]) arg = i;
  }
  return make_node(Op::Min, Tensor::scalar(x[arg]), {a.node()}, [arg](Node& self) {
    grad_of(*self.parents[0])[arg] += self.grad[0];
  });
}

Var sum_rows(const Var& a) {
  if (a.value().rank() != 2) shape_fail(Op::SumRows, a.shape(), "expected rank 2");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({1, c}, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.value()[i * c + j];
  return make_node(Op::SumRows, std::move(out), {a.node()}, [r, c](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j];
  });
}

Var broadcast(const Var& a, const Shape& shape) {
  const std::size_t n = shape_numel(shape);
  if (a.numel() == 1) {
    Tensor out(shape, a.value()[0]);
    return make_node(Op::Broadcast, std::move(out), {a.node()}, [](Node& self) {
      double acc = 0.0;
      for (double v : self.grad.data()) acc += v;
      grad_of(*self.parents[0])[0] += acc;
    });
  }
  const auto& as = a.shape();
  const bool row_vec = (as.size() == 1) || (as.size() == 2 && as[0] == 1);
  if (!row_vec || shape.size() != 2 || shape[1] != a.numel()) shape_fail(Op::Broadcast, as, shape);
  const std::size_t rows = shape[0], cols = shape[1];
  Tensor out(shape);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.value()[j];
  (void)n;
  return make_node(Op::Broadcast, std::move(out), {a.node()}, [rows, cols](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad[i * cols + j];
  });
}

Var reshape(const Var& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) shape_fail(Op::Reshape, a.shape(), shape);
  return make_node(Op::Reshape, a.value().reshaped(shape), {a.node()}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var slice(const Var& a, std::size_t begin, std::size_t end) {
  const auto& as = a.shape();
  if (begin >= end || end > as[0]) {
    shape_fail(Op::Slice, as, "bad row range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  }
  const std::size_t inner = a.numel() / as[0];
  Shape out_shape = as;
  out_shape[0] = end - begin;
  std::vector<double> data(a.value().vec().begin() + static_cast<std::ptrdiff_t>(begin * inner),
                           a.value().vec().begin() + static_cast<std::ptrdiff_t>(end * inner));
  return make_node(Op::Slice, Tensor(std::move(out_shape), std::move(data)), {a.node()},
                   [begin, inner](Node& self) {
                     auto& g = grad_of(*self.parents[0]);
                     for (std::size_t i = 0; i < self.grad.numel(); ++i) g[begin * inner + i] += self.grad[i];
                   });
}

Var add_scalar(const Var& a, double c) { return add(a, broadcast(Var::constant(Tensor::scalar(c)), a.shape())); }

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }

void backward(const Var& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion limits.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->op != Op::Leaf) n->grad = Tensor();
  }
  Node* r = root.node().get();
  auto& rg = grad_of(*r);
  rg[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

GradCheckResult grad_check(const GraphBuilder& builder, std::span<const Tensor> inputs, double epsilon,
                           double tolerance) {
  if (!(epsilon > 0.0)) throw DomainError("grad_check: epsilon must be positive");

  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Var::leaf(t, true));
  Var root = builder(leaves);
  backward(root);

  auto evaluate = [&](std::size_t which, std::size_t elem, double delta) {
    NoGradGuard guard;
    std::vector<Var> probe;
    probe.reserve(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      Tensor t = inputs[k];
      if (k == which) t[elem] += delta;
      probe.push_back(Var::constant(std::move(t)));
    }
    return builder(probe).item();
  };

  GradCheckResult result;
  result.passed = true;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = leaves[k].grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double numeric = (evaluate(k, i, epsilon) - evaluate(k, i, -epsilon)) / (2.0 * epsilon);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
    result.max_rel_error.push_back(worst);
    if (!(worst < tolerance)) result.passed = false;
  }
  return result;
}

}  // namespace basislens::ad
