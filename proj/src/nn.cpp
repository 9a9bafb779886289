// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dargan::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void RequireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": shape mismatch " +
                       ShapeString(a.shape()) + " vs " +
                       ShapeString(b.shape()));
}

void RequireRank(const Var& a, std::size_t r, const char* op) {
  if (a.value().rank() != r)
    throw InvalidInput(std::string(op) + ": expected rank " +
                       std::to_string(r) + ", got " + ShapeString(a.shape()));
}

template <typename F, typename D>
Var Unary(const Var& a, F f, D dfdx) {
  Tensor out(a.shape());
  const auto& x = a.value().data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x[i]);
  return MakeResult(std::move(out), {a}, [dfdx](Node& self) {
    double* gx = InGrad(self, 0);
    if (!gx) return;
    const auto& x = self.inputs[0]->value.data;
    const auto& y = self.value.data;
    for (std::size_t i = 0; i < x.size(); ++i)
      gx[i] += self.grad[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad |= in.requires_grad();
  if (node->requires_grad) {
    for (auto& in : inputs) node->inputs.push_back(in.ptr());
    node->backward = std::move(backward);
  }
  return Var(node);
}

// Gradient buffer of input i, or nullptr when it does not need one.
double* InGrad(Node& self, std::size_t i) {
  Node* in = self.inputs[i].get();
  if (!in || !in->requires_grad) return nullptr;
  in->EnsureGrad();
  return in->grad.data();
}

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), data(NumElements(shape), fill) {}

std::size_t NumElements(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * d; });
}

std::string ShapeString(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

double Var::item() const {
  if (value().numel() != 1) throw InvalidInput("item() on non-scalar");
  return value().data[0];
}

Var Constant(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  return Var(node);
}

Var Parameter(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  node->requires_grad = true;
  return Var(node);
}

void Backward(const Var& loss) {
  if (loss.value().numel() != 1) throw InvalidInput("backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->EnsureGrad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// --- convolution ------------------------------------------------------------

int ConvOutWidth(int width, int kernel, int stride, int pad) {
  return (width + 2 * pad - kernel) / stride + 1;
}

Var Conv2d(const Var& x, const Var& w, const Var& b, const ConvSpec& spec) {
  RequireRank(x, 4, "conv2d");
  RequireRank(w, 4, "conv2d");
  const int n_batch = x.shape()[0], cin = x.shape()[1], t_in = x.shape()[2],
            f_in = x.shape()[3];
  const int cout = w.shape()[0], kt = w.shape()[2], kf = w.shape()[3];
  if (w.shape()[1] != cin)
    throw InvalidInput("conv2d: input has " + std::to_string(cin) +
                       " channels, kernel expects " +
                       std::to_string(w.shape()[1]));
  if (b && b.value().numel() != static_cast<std::size_t>(cout))
    throw InvalidInput("conv2d: bias size mismatch");
  const int t_out = t_in + spec.pad_t_front + spec.pad_t_back - kt + 1;
  const int f_out = ConvOutWidth(f_in, kf, spec.stride_f, spec.pad_f);
  if (t_out <= 0 || f_out <= 0) throw InvalidInput("conv2d: input too small");

  const int k_rows = cin * kt * kf;
  const int cols_n = t_out * f_out;
  // Precomputed source index per (row, column); -1 marks padding.
  auto index = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(k_rows) * cols_n);
  for (int c = 0; c < cin; ++c)
    for (int a = 0; a < kt; ++a)
      for (int q = 0; q < kf; ++q) {
        const int r = (c * kt + a) * kf + q;
        int* row = index->data() + static_cast<std::size_t>(r) * cols_n;
        for (int t = 0; t < t_out; ++t) {
          const int ts = t - spec.pad_t_front + a;
          for (int fo = 0; fo < f_out; ++fo) {
            const int fs = fo * spec.stride_f - spec.pad_f + q;
            row[t * f_out + fo] = (ts >= 0 && ts < t_in && fs >= 0 && fs < f_in)
                                      ? (c * t_in + ts) * f_in + fs
                                      : -1;
          }
        }
      }

  const std::size_t in_stride = static_cast<std::size_t>(cin) * t_in * f_in;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * cols_n;
  Tensor out({n_batch, cout, t_out, f_out});
  auto cols = std::make_shared<Buffer>(
      static_cast<std::size_t>(n_batch) * k_rows * cols_n);
  CMapMat wm(w.value().data.data(), cout, k_rows);
  for (int n = 0; n < n_batch; ++n) {
    const double* xs = x.value().data.data() + n * in_stride;
    double* col = cols->data() + static_cast<std::size_t>(n) * k_rows * cols_n;
    for (std::size_t i = 0; i < index->size(); ++i) {
      const int s = (*index)[i];
      col[i] = s >= 0 ? xs[s] : 0.0;
    }
    MapMat om(out.data.data() + n * out_stride, cout, cols_n);
    om.noalias() = wm * CMapMat(col, k_rows, cols_n);
    if (b)
      for (int o = 0; o < cout; ++o) om.row(o).array() += b.value().data[o];
  }

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(b);
  const bool has_bias = static_cast<bool>(b);
  return MakeResult(
      std::move(out), inputs,
      [=](Node& self) {
        double* gx = InGrad(self, 0);
        double* gw = InGrad(self, 1);
        double* gb = has_bias ? InGrad(self, 2) : nullptr;
        const auto& wv = self.inputs[1]->value.data;
        CMapMat wm(wv.data(), cout, k_rows);
        RowMat gcol;
        for (int n = 0; n < n_batch; ++n) {
          CMapMat go(self.grad.data() + n * out_stride, cout, cols_n);
          const double* col =
              cols->data() + static_cast<std::size_t>(n) * k_rows * cols_n;
          if (gw) {
            MapMat gwm(gw, cout, k_rows);
            gwm.noalias() += go * CMapMat(col, k_rows, cols_n).transpose();
          }
          if (gb)
            for (int o = 0; o < cout; ++o) gb[o] += go.row(o).sum();
          if (gx) {
            gcol.noalias() = wm.transpose() * go;
            double* gxs = gx + n * in_stride;
            const double* gc = gcol.data();
            for (std::size_t i = 0; i < index->size(); ++i) {
              const int s = (*index)[i];
              if (s >= 0) gxs[s] += gc[i];
            }
          }
        }
      });
}

Var UpsampleFreq(const Var& x, int out_f) {
  RequireRank(x, 4, "upsample");
  const int outer = x.shape()[0] * x.shape()[1] * x.shape()[2];
  const int f_in = x.shape()[3];
  Tensor out({x.shape()[0], x.shape()[1], x.shape()[2], out_f});
  for (int r = 0; r < outer; ++r)
    for (int i = 0; i < f_in && 2 * i < out_f; ++i)
      out.data[static_cast<std::size_t>(r) * out_f + 2 * i] =
          x.value().data[static_cast<std::size_t>(r) * f_in + i];
  return MakeResult(std::move(out), {x}, [=](Node& self) {
    double* gx = InGrad(self, 0);
    if (!gx) return;
    for (int r = 0; r < outer; ++r)
      for (int i = 0; i < f_in && 2 * i < out_f; ++i)
        gx[static_cast<std::size_t>(r) * f_in + i] +=
            self.grad[static_cast<std::size_t>(r) * out_f + 2 * i];
  });
}

Var ResampleFreq(const Var& x, int out_f) {
  RequireRank(x, 4, "resample");
  const int outer = x.shape()[0] * x.shape()[1] * x.shape()[2];
  const int f_in = x.shape()[3];
  std::vector<int> src(out_f);
  for (int f = 0; f < out_f; ++f)
    src[f] = static_cast<int>(static_cast<long>(f) * f_in / out_f);
  Tensor out({x.shape()[0], x.shape()[1], x.shape()[2], out_f});
  for (int r = 0; r < outer; ++r)
    for (int f = 0; f < out_f; ++f)
      out.data[static_cast<std::size_t>(r) * out_f + f] =
          x.value().data[static_cast<std::size_t>(r) * f_in + src[f]];
  return MakeResult(std::move(out), {x}, [=](Node& self) {
    double* gx = InGrad(self, 0);
    if (!gx) return;
    for (int r = 0; r < outer; ++r)
      for (int f = 0; f < out_f; ++f)
        gx[static_cast<std::size_t>(r) * f_in + src[f]] +=
            self.grad[static_cast<std::size_t>(r) * out_f + f];
  });
}

Var ConcatChannels(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInput("concat: no inputs");
  const auto& s0 = xs[0].shape();
  int channels = 0;
  for (const auto& x : xs) {
    RequireRank(x, 4, "concat");
    if (x.shape()[0] != s0[0] || x.shape()[2] != s0[2] || x.shape()[3] != s0[3])
      throw InvalidInput("concat: incompatible shapes " +
                         ShapeString(x.shape()) + " vs " + ShapeString(s0));
    channels += x.shape()[1];
  }
  const int n_batch = s0[0];
  const std::size_t plane = static_cast<std::size_t>(s0[2]) * s0[3];
  Tensor out({n_batch, channels, s0[2], s0[3]});
  std::vector<int> offs;
  int off = 0;
  for (const auto& x : xs) {
    offs.push_back(off);
    const int c = x.shape()[1];
    for (int n = 0; n < n_batch; ++n)
      std::copy_n(x.value().data.data() + n * c * plane, c * plane,
                  out.data.data() + (n * channels + off) * plane);
    off += c;
  }
  std::vector<int> chans;
  for (const auto& x : xs) chans.push_back(x.shape()[1]);
  return MakeResult(std::move(out), xs, [=](Node& self) {
    for (std::size_t i = 0; i < chans.size(); ++i) {
      double* gx = InGrad(self, i);
      if (!gx) continue;
      const int c = chans[i];
      for (int n = 0; n < n_batch; ++n) {
        const double* src = self.grad.data() + (n * channels + offs[i]) * plane;
        double* dst = gx + n * c * plane;
        for (std::size_t k = 0; k < c * plane; ++k) dst[k] += src[k];
      }
    }
  });
}

Var SliceBatch(const Var& x, int n, int len) {
  RequireRank(x, 4, "slice_batch");
  const int c = x.shape()[1], t = x.shape()[2], f = x.shape()[3];
  if (n < 0 || n >= x.shape()[0] || len < 1 || len > t)
    throw InvalidInput("slice_batch: out of range");
  Tensor out({1, c, len, f});
  const std::size_t base = static_cast<std::size_t>(n) * c * t * f;
  for (int ch = 0; ch < c; ++ch)
    std::copy_n(x.value().data.data() + base + static_cast<std::size_t>(ch) * t * f,
                static_cast<std::size_t>(len) * f,
                out.data.data() + static_cast<std::size_t>(ch) * len * f);
  return MakeResult(std::move(out), {x}, [=](Node& self) {
    double* gx = InGrad(self, 0);
    if (!gx) return;
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < static_cast<std::size_t>(len) * f; ++k)
        gx[base + static_cast<std::size_t>(ch) * t * f + k] +=
            self.grad[static_cast<std::size_t>(ch) * len * f + k];
  });
}

Var PadTime(const Var& x, int out_t) {
  RequireRank(x, 4, "pad_time");
  const int n = x.shape()[0], c = x.shape()[1], t = x.shape()[2], f = x.shape()[3];
  if (out_t < t) throw InvalidInput("pad_time: target shorter than input");
  if (out_t == t) return x;
  Tensor out({n, c, out_t, f});
  const std::size_t plane_in = static_cast<std::size_t>(t) * f;
  const std::size_t plane_out = static_cast<std::size_t>(out_t) * f;
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
    std::copy_n(x.value().data.data() + p * plane_in, plane_in,
                out.data.data() + p * plane_out);
  return MakeResult(std::move(out), {x}, [=](Node& self) {
    double* gx = InGrad(self, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
      for (std::size_t k = 0; k < plane_in; ++k)
        gx[p * plane_in + k] += self.grad[p * plane_out + k];
  });
}

Var ToSequence(const Var& x) {
  RequireRank(x, 4, "to_sequence");
  if (x.shape()[0] != 1) throw InvalidInput("to_sequence: batch must be 1");
  const int c = x.shape()[1], t = x.shape()[2], f = x.shape()[3];
  Tensor out({t, c * f});
  for (int ch = 0; ch < c; ++ch)
    for (int tt = 0; tt < t; ++tt)
      for (int ff = 0; ff < f; ++ff)
        out.data[static_cast<std::size_t>(tt) * c * f + ch * f + ff] =
            x.value().data[(static_cast<std::size_t>(ch) * t + tt) * f + ff];
  return MakeResult(std::move(out), {x}, [=](Node& self) {
    double* gx = InGrad(self, 0);
    if (!gx) return;
    for (int ch = 0; ch < c; ++ch)
      for (int tt = 0; tt < t; ++tt)
        for (int ff = 0; ff < f; ++ff)
          gx[(static_cast<std::size_t>(ch) * t + tt) * f + ff] +=
              self.grad[static_cast<std::size_t>(tt) * c * f + ch * f + ff];
  });
}

// --- elementwise ------------------------------------------------------------

Var Add(const Var& a, const Var& b) {
  RequireSameShape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = a.value().data[i] + b.value().data[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = InGrad(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var Sub(const Var& a, const Var& b) {
  RequireSameShape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = a.value().data[i] - b.value().data[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    if (double* g = InGrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = InGrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Var Mul(const Var& a, const Var& b) {
  RequireSameShape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = a.value().data[i] * b.value().data[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value.data;
    const auto& bv = self.inputs[1]->value.data;
    if (double* g = InGrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = InGrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Var Scale(const Var& a, double s) {
  return Unary(a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Var AddScalar(const Var& a, double s) {
  return Unary(a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Var Square(const Var& a) {
  return Unary(a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var Elu(const Var& a) {
  return Unary(a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
               [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var Sigmoid(const Var& a) {
  return Unary(a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var Tanh(const Var& a) {
  return Unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var Softplus(const Var& a) {
  return Unary(a,
               [](double x) {
                 return x > 0.0 ? x + std::log1p(std::exp(-x))
                                : std::log1p(std::exp(x));
               },
               [](double x, double) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               });
}

Var Sum(const Var& a) {
  Tensor out({1});
  for (double v : a.value().data) out.data[0] += v;
  return MakeResult(std::move(out), {a}, [](Node& self) {
    if (double* g = InGrad(self, 0)) {
      const std::size_t n = self.inputs[0]->value.numel();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Var Mean(const Var& a) {
  const double n = static_cast<double>(a.value().numel());
  if (n == 0) throw InvalidInput("mean of empty tensor");
  return Scale(Sum(a), 1.0 / n);
}

// --- matrices ---------------------------------------------------------------

Var MatMul(const Var& a, const Var& b) {
  RequireRank(a, 2, "matmul");
  RequireRank(b, 2, "matmul");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw InvalidInput("matmul: inner dimension mismatch " +
                       ShapeString(a.shape()) + " x " + ShapeString(b.shape()));
  Tensor out({m, n});
  MapMat(out.data.data(), m, n).noalias() =
      CMapMat(a.value().data.data(), m, k) * CMapMat(b.value().data.data(), k, n);
  return MakeResult(std::move(out), {a, b}, [=](Node& self) {
    CMapMat g(self.grad.data(), m, n);
    if (double* ga = InGrad(self, 0))
      MapMat(ga, m, k).noalias() +=
          g * CMapMat(self.inputs[1]->value.data.data(), k, n).transpose();
    if (double* gb = InGrad(self, 1))
      MapMat(gb, k, n).noalias() +=
          CMapMat(self.inputs[0]->value.data.data(), m, k).transpose() * g;
  });
}

Var Linear(const Var& x, const Var& w, const Var& b) {
  RequireRank(x, 2, "linear");
  RequireRank(w, 2, "linear");
  const int m = x.shape()[0], in = x.shape()[1], out_n = w.shape()[1];
  if (w.shape()[0] != in) throw InvalidInput("linear: weight shape mismatch");
  if (b.value().numel() != static_cast<std::size_t>(out_n))
    throw InvalidInput("linear: bias shape mismatch");
  Tensor out({m, out_n});
  MapMat om(out.data.data(), m, out_n);
  om.noalias() = CMapMat(x.value().data.data(), m, in) *
                 CMapMat(w.value().data.data(), in, out_n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < out_n; ++c) om(r, c) += b.value().data[c];
  return MakeResult(std::move(out), {x, w, b}, [=](Node& self) {
    CMapMat g(self.grad.data(), m, out_n);
    if (double* gx = InGrad(self, 0))
      MapMat(gx, m, in).noalias() +=
          g * CMapMat(self.inputs[1]->value.data.data(), in, out_n).transpose();
    if (double* gw = InGrad(self, 1))
      MapMat(gw, in, out_n).noalias() +=
          CMapMat(self.inputs[0]->value.data.data(), m, in).transpose() * g;
    if (double* gb = InGrad(self, 2))
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < out_n; ++c) gb[c] += g(r, c);
  });
}

Var Row(const Var& a, int t) {
  RequireRank(a, 2, "row");
  const int n = a.shape()[1];
  if (t < 0 || t >= a.shape()[0]) throw InvalidInput("row: out of range");
  Tensor out({1, n});
  std::copy_n(a.value().data.data() + static_cast<std::size_t>(t) * n, n,
              out.data.data());
  return MakeResult(std::move(out), {a}, [=](Node& self) {
    if (double* g = InGrad(self, 0))
      for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(t) * n + i] += self.grad[i];
  });
}

Var SliceCols(const Var& a, int start, int len) {
  RequireRank(a, 2, "slice_cols");
  const int m = a.shape()[0], n = a.shape()[1];
  if (start < 0 || len < 1 || start + len > n)
    throw InvalidInput("slice_cols: out of range");
  Tensor out({m, len});
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < len; ++c)
      out.data[static_cast<std::size_t>(r) * len + c] =
          a.value().data[static_cast<std::size_t>(r) * n + start + c];
  return MakeResult(std::move(out), {a}, [=](Node& self) {
    if (double* g = InGrad(self, 0))
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < len; ++c)
          g[static_cast<std::size_t>(r) * n + start + c] +=
              self.grad[static_cast<std::size_t>(r) * len + c];
  });
}

Var StackRows(const std::vector<Var>& rows) {
  if (rows.empty()) throw InvalidInput("stack_rows: no inputs");
  const int n = rows[0].shape()[1];
  for (const auto& r : rows)
    if (r.shape() != Shape{1, n}) throw InvalidInput("stack_rows: shape mismatch");
  const int m = static_cast<int>(rows.size());
  Tensor out({m, n});
  for (int r = 0; r < m; ++r)
    std::copy_n(rows[r].value().data.data(), n,
                out.data.data() + static_cast<std::size_t>(r) * n);
  return MakeResult(std::move(out), rows, [=](Node& self) {
    for (int r = 0; r < m; ++r)
      if (double* g = InGrad(self, r))
        for (int i = 0; i < n; ++i) g[i] += self.grad[static_cast<std::size_t>(r) * n + i];
  });
}

Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  const int m = parts[0].shape()[0];
  int total = 0;
  std::vector<int> widths, offs;
  for (const auto& p : parts) {
    RequireRank(p, 2, "concat_cols");
    if (p.shape()[0] != m) throw InvalidInput("concat_cols: row mismatch");
    offs.push_back(total);
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out({m, total});
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (int r = 0; r < m; ++r)
      std::copy_n(parts[i].value().data.data() + static_cast<std::size_t>(r) * widths[i],
                  widths[i], out.data.data() + static_cast<std::size_t>(r) * total + offs[i]);
  return MakeResult(std::move(out), parts, [=](Node& self) {
    for (std::size_t i = 0; i < widths.size(); ++i)
      if (double* g = InGrad(self, i))
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < widths[i]; ++c)
            g[static_cast<std::size_t>(r) * widths[i] + c] +=
                self.grad[static_cast<std::size_t>(r) * total + offs[i] + c];
  });
}

Var SpectralNormalize(const Var& w, const Buffer& u, const Buffer& v) {
  const int rows = w.shape().at(0);
  const int cols = static_cast<int>(w.value().numel() / rows);
  if (u.size() != static_cast<std::size_t>(rows) ||
      v.size() != static_cast<std::size_t>(cols))
    throw InvalidInput("spectral_normalize: u/v size mismatch");
  CMapMat wm(w.value().data.data(), rows, cols);
  const Eigen::Map<const Eigen::VectorXd> uv(u.data(), rows), vv(v.data(), cols);
  const double raw_sigma = uv.dot(wm * vv);
  const bool floored = raw_sigma < kModulusFloor;
  const double sigma = floored ? kModulusFloor : raw_sigma;
  Tensor out(w.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = w.value().data[i] / sigma;
  return MakeResult(std::move(out), {w}, [=](Node& self) {
    double* gw = InGrad(self, 0);
    if (!gw) return;
    const auto& wv = self.inputs[0]->value.data;
    double inner = 0.0;
    for (std::size_t i = 0; i < wv.size(); ++i) inner += self.grad[i] * wv[i];
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        gw[i] += self.grad[i] / sigma;
        if (!floored) gw[i] -= inner / (sigma * sigma) * u[r] * v[c];
      }
  });
}

Var MeanAbsError(const Var& est, const Tensor& target) {
  if (est.shape() != target.shape)
    throw InvalidInput("mean_abs_error: estimate " + ShapeString(est.shape()) +
                       " vs target " + ShapeString(target.shape));
  if (target.numel() == 0) throw InvalidInput("mean_abs_error: empty input");
  const double n = static_cast<double>(target.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i)
    total += std::abs(est.value()[i] - target[i]);
  return MakeResult(Tensor({1}, total / n), {est}, [target, n](Node& self) {
    double* g = InGrad(self, 0);
    if (!g) return;
    const auto& e = self.inputs[0]->value.data;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double d = e[i] - target[i];
      g[i] += self.grad[0] * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / n;
    }
  });
}

Var MaskedL1(const Var& est, const Tensor& target,
             const std::vector<double>& mask) {
  RequireRank(est, 4, "masked_l1");
  if (est.shape() != target.shape)
    throw InvalidInput("masked_l1: estimate " + ShapeString(est.shape()) +
                       " vs target " + ShapeString(target.shape));
  const int n_batch = est.shape()[0], frames = est.shape()[2],
            bins = est.shape()[3];
  if (est.shape()[1] != 1) throw InvalidInput("masked_l1: expected one channel");
  if (mask.size() != static_cast<std::size_t>(n_batch) * frames)
    throw InvalidInput("masked_l1: mask size mismatch");
  double count = 0.0;
  for (double m : mask) count += m;
  if (count <= 0.0) throw InvalidInput("masked_l1: mask selects no frames");
  count *= bins;

  const auto& e = est.value().data;
  double total = 0.0;
  for (int r = 0; r < n_batch * frames; ++r) {
    if (mask[r] == 0.0) continue;
    for (int f = 0; f < bins; ++f) {
      const std::size_t i = static_cast<std::size_t>(r) * bins + f;
      total += std::abs(e[i] - target.data[i]);
    }
  }
  Tensor out({1}, total / count);
  auto tgt = std::make_shared<Tensor>(target);
  return MakeResult(std::move(out), {est}, [=](Node& self) {
    double* g = InGrad(self, 0);
    if (!g) return;
    const auto& e = self.inputs[0]->value.data;
    const double scale = self.grad[0] / count;
    for (int r = 0; r < n_batch * frames; ++r) {
      if (mask[r] == 0.0) continue;
      for (int f = 0; f < bins; ++f) {
        const std::size_t i = static_cast<std::size_t>(r) * bins + f;
        const double d = e[i] - tgt->data[i];
        g[i] += scale * ((d > 0.0) - (d < 0.0));
      }
    }
  });
}

// --- parameters -------------------------------------------------------------

Var ParamSet::Add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter " + name);
  index_[name] = params_.size();
  names_.push_back(name);
  params_.push_back(Parameter(std::move(init)));
  return params_.back();
}

Var ParamSet::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParamSet::NumScalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value().numel();
  return n;
}

void ParamSet::ZeroGrad() {
  for (auto& p : params_) {
    auto& g = p.mutable_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

void ParamSet::SetRequiresGrad(bool on) {
  for (auto& p : params_) p.node()->requires_grad = on;
}

bool ParamSet::AllFinite() const {
  for (const auto& p : params_)
    for (double v : p.value().data)
      if (!std::isfinite(v)) return false;
  return true;
}

Tensor KaimingUniform(const Shape& shape, int fan_in, Rng& rng, double gain) {
  Tensor t(shape);
  const double bound = gain * std::sqrt(6.0 / std::max(fan_in, 1));
  for (auto& v : t.data) v = rng.Uniform(-bound, bound);
  return t;
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(ParamSet& params, AdamOptions opts) : params_(params), opts_(opts) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::size_t n = params_.At(i).value().numel();
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::Step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var p = params_.At(i);
    const auto& g = p.grad();
    if (g.empty()) continue;
    auto& w = p.mutable_value().data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g[k];
      v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      w[k] -= opts_.lr * mh / (std::sqrt(vh) + opts_.eps);
    }
  }
}

std::map<std::string, Tensor> Adam::State() const {
  std::map<std::string, Tensor> s;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& name = params_.names()[i];
    const Shape& shape = params_.At(i).shape();
    Tensor m(shape), v(shape);
    m.data = m_[i];
    v.data = v_[i];
    s[name + "/m"] = std::move(m);
    s[name + "/v"] = std::move(v);
  }
  s["step"] = Tensor({1}, static_cast<double>(t_));
  s["lr"] = Tensor({1}, opts_.lr);
  return s;
}

void Adam::LoadState(const std::map<std::string, Tensor>& state) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& name = params_.names()[i];
    auto mi = state.find(name + "/m");
    auto vi = state.find(name + "/v");
    if (mi == state.end() || vi == state.end())
      throw FormatError("optimizer state missing entry for " + name);
    if (mi->second.numel() != m_[i].size() || vi->second.numel() != v_[i].size())
      throw FormatError("optimizer state shape mismatch for " + name);
    m_[i] = mi->second.data;
    v_[i] = vi->second.data;
  }
  if (auto it = state.find("step"); it != state.end())
    t_ = static_cast<long>(it->second.data.at(0));
  if (auto it = state.find("lr"); it != state.end()) opts_.lr = it->second.data.at(0);
}

}  // namespace dargan::nn
