// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Minimal reverse-mode autodiff over dense double tensors. Feature maps use
// the N x C x T x F layout (batch, channel, frame, frequency bin).

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dargan/common.hpp"

namespace dargan::nn {

using Shape = std::vector<int>;

// Aligned storage keeps Eigen's vectorized kernels on one code path regardless
// of where the heap places a buffer, so results are bit-reproducible.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);

  std::size_t numel() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

std::size_t NumElements(const Shape& s);
std::string ShapeString(const Shape& s);

struct Node {
  Tensor value;
  Buffer grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  void EnsureGrad() {
    if (grad.size() != value.numel()) grad.assign(value.numel(), 0.0);
  }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  const Buffer& grad() const { return node_->grad; }
  Buffer& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }
  double item() const;

 private:
  std::shared_ptr<Node> node_;
};

Var Constant(Tensor t);
Var Parameter(Tensor t);

/// Builds an op node. `backward` runs only if some input requires a gradient.
Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward);

/// Gradient buffer of input i, or nullptr when it does not need one.
double* InGrad(Node& self, std::size_t i);

/// Runs reverse accumulation from a scalar.
void Backward(const Var& loss);

// --- convolution ------------------------------------------------------------

struct ConvSpec {
  int stride_f = 1;
  int pad_t_front = 0;  // causal padding uses pad_t_front = KT - 1
  int pad_t_back = 0;
  int pad_f = 0;
};

/// x: [N,C,T,F], w: [O,C,KT,KF], b: [O] (or empty Var). Time stride is 1.
Var Conv2d(const Var& x, const Var& w, const Var& b, const ConvSpec& spec);

/// Output width of Conv2d along frequency.
int ConvOutWidth(int width, int kernel, int stride, int pad);

/// Zero-insertion upsampling along frequency: out[2i] = x[i], length out_f.
Var UpsampleFreq(const Var& x, int out_f);

/// Nearest-neighbour resampling along frequency to out_f bins.
Var ResampleFreq(const Var& x, int out_f);

Var ConcatChannels(const std::vector<Var>& xs);

/// [N,C,T,F] -> [1,C,len,F] slice of batch entry n, frames [0,len).
Var SliceBatch(const Var& x, int n, int len);

/// Zero-pads the frame axis at the end up to out_t frames.
Var PadTime(const Var& x, int out_t);

/// [1,C,T,F] -> [T, C*F].
Var ToSequence(const Var& x);

// --- elementwise ------------------------------------------------------------

Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double s);
Var AddScalar(const Var& a, double s);
Var Square(const Var& a);
Var Elu(const Var& a);
Var Sigmoid(const Var& a);
Var Tanh(const Var& a);
Var Softplus(const Var& a);

Var Sum(const Var& a);
Var Mean(const Var& a);

// --- matrices ---------------------------------------------------------------

/// a: [m,k], b: [k,n].
Var MatMul(const Var& a, const Var& b);
/// x: [m,in], w: [in,out], b: [out].
Var Linear(const Var& x, const Var& w, const Var& b);
/// Row t of a [m,n] matrix as [1,n].
Var Row(const Var& a, int t);
Var SliceCols(const Var& a, int start, int len);
Var StackRows(const std::vector<Var>& rows);
Var ConcatCols(const std::vector<Var>& parts);

/// Divides w by sigma = u^T W v with W = w viewed as [rows, numel/rows];
/// u and v are treated as constants. Sigma is floored at 1e-12.
Var SpectralNormalize(const Var& w, const Buffer& u, const Buffer& v);

/// Mean of |est - target| over all entries; target is constant.
Var MeanAbsError(const Var& est, const Tensor& target);

/// Sum over entries with mask[n, t] == 1 of |est - target|, divided by the
/// number of such entries. est/target: [N,1,T,F] (target constant), mask: N*T.
Var MaskedL1(const Var& est, const Tensor& target,
             const std::vector<double>& mask);

// --- parameter store --------------------------------------------------------

/// Ordered name -> parameter map; names are layer paths such as
/// "gen/nrm/enc0/w".
class ParamSet {
 public:
  Var Add(const std::string& name, Tensor init);
  Var Get(const std::string& name) const;
  Var At(std::size_t i) const { return params_.at(i); }
  bool Has(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t NumScalars() const;

  void ZeroGrad();
  void SetRequiresGrad(bool on);
  bool AllFinite() const;

  /// Extra non-trainable state persisted with the parameters (e.g. spectral
  /// norm power-iteration vectors).
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

 private:
  std::vector<std::string> names_;
  std::vector<Var> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Tensor> buffers_;
};

/// Uniform Kaiming-style fan-in initialisation: U(-b, b), b = sqrt(6/fan_in)
/// scaled by `gain`.
Tensor KaimingUniform(const Shape& shape, int fan_in, Rng& rng,
                      double gain = 1.0);

// --- optimisation -----------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamSet& params, AdamOptions opts);

  void Step();
  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  long steps() const { return t_; }

  /// Moment buffers keyed "<param>/m", "<param>/v", plus "step".
  std::map<std::string, Tensor> State() const;
  void LoadState(const std::map<std::string, Tensor>& state);

 private:
  ParamSet& params_;
  AdamOptions opts_;
  long t_ = 0;
  std::vector<Buffer> m_, v_;
};

}  // namespace dargan::nn
