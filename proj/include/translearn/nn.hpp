#pragma once
// Minimal differentiable-layer substrate.
//
// Design notes:
//  * Every forward call writes its intermediate state into a caller-owned
//    LayerCtx, so one network can be run several times inside a single
//    objective (a generator is applied to real, cycled and identity inputs;
//    the similarity network embeds four different batches) and each run can
//    be backpropagated independently.
//  * backward(ctx, gy, accum_param_grads) always returns the gradient with
//    respect to the layer input; parameter gradients are accumulated only
//    when requested.  That flag is how the alternating optimization freezes
//    networks that merely relay gradients (e.g. a frozen classifier guiding
//    a generator).
//  * All math is double precision and sequential, so results are
//    deterministic given the Rng streams.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "translearn/rng.hpp"
#include "translearn/tensor.hpp"

namespace translearn {

enum class ParamKind { conv_weight, linear_weight, bias, norm_weight, norm_bias };

struct Param {
  std::string name;
  ParamKind kind;
  Tensor value;
  Tensor grad;

  Param(std::string n, ParamKind k, Tensor v)
      : name(std::move(n)), kind(k), value(std::move(v)),
        grad(Tensor::zeros(value.shape())) {}
};

// Per-forward-call saved state consumed by backward().
struct LayerCtx {
  std::vector<Tensor> saved;
  std::vector<std::vector<int>> shapes;
  std::vector<std::int64_t> idx;   // e.g. pooling argmax indices
  std::vector<LayerCtx> children;  // for composite layers
  bool train = false;
};

struct FwdOpts {
  bool train = false;
  Rng* rng = nullptr;  // required only by stochastic layers in train mode
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) = 0;
  virtual Tensor backward(const LayerCtx& ctx, const Tensor& gy,
                          bool accum_param_grads) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
  // Non-trainable persistent state (e.g. running statistics).
  virtual void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {}
};

// ---- concrete layers --------------------------------------------------------

class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int padding,
         bool use_bias = true);
  std::string kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  void collect_params(std::vector<Param*>& out) override;

  int in_ch_, out_ch_, k_, stride_, pad_;
  bool use_bias_;
  Param weight_;
  std::unique_ptr<Param> bias_;
};

class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int padding,
                  int output_padding, bool use_bias = true);
  std::string kind() const override { return "convtranspose2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  void collect_params(std::vector<Param*>& out) override;

  int in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
  bool use_bias_;
  Param weight_;  // [in_ch, out_ch, k, k]
  std::unique_ptr<Param> bias_;
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, bool use_bias = true);
  std::string kind() const override { return "linear"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  void collect_params(std::vector<Param*>& out) override;

  int in_f_, out_f_;
  bool use_bias_;
  Param weight_;  // [out, in]
  std::unique_ptr<Param> bias_;
};

class ReLU : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  double slope_;
};

class Tanh : public Layer {
 public:
  std::string kind() const override { return "tanh"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
};

class Sigmoid : public Layer {
 public:
  std::string kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
};

// 2x2 stride-2 max pooling.  A trailing row/column that does not fill a
// complete window still produces an output (the window is clipped), so odd
// toy resolutions remain usable; at even resolutions this is the classic
// floor-mode pooling.
class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel = 2, int stride = 2) : k_(kernel), stride_(stride) {}
  std::string kind() const override { return "maxpool2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  int k_, stride_;
};

class InstanceNorm2d : public Layer {
 public:
  explicit InstanceNorm2d(int channels, double eps = 1e-5)
      : channels_(channels), eps_(eps) {}
  std::string kind() const override { return "instancenorm2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  int channels_;
  double eps_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);
  std::string kind() const override { return "batchnorm2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) override;

  // When frozen the layer always normalizes with its running statistics,
  // never updates them, and never accumulates gradients for its affine
  // parameters.  Used when a pretrained feature learner must keep its
  // normalization behaviour fixed.
  bool frozen = false;

  int channels_;
  double eps_, momentum_;
  Param weight_, bias_;
  Tensor running_mean_, running_var_;
};

class Dropout : public Layer {
 public:
  explicit Dropout(double p) : p_(p) {}
  std::string kind() const override { return "dropout"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  double p_;
};

class ReflectionPad2d : public Layer {
 public:
  explicit ReflectionPad2d(int pad) : pad_(pad) {}
  std::string kind() const override { return "reflectionpad2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  int pad_;
};

class Flatten : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
};

class GlobalAvgPool2d : public Layer {
 public:
  std::string kind() const override { return "globalavgpool2d"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
};

// Row-wise L2 normalization of a [B, D] matrix.
class L2Normalize : public Layer {
 public:
  std::string kind() const override { return "l2normalize"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
};

// pad-conv-norm-relu-pad-conv-norm with an additive skip connection.
class ResidualBlock : public Layer {
 public:
  explicit ResidualBlock(int channels);
  std::string kind() const override { return "residualblock"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) override;
  std::vector<std::unique_ptr<Layer>> body_;
};

// Bottleneck residual unit (1x1 reduce, 3x3, 1x1 expand, optional projection
// shortcut), with batch normalization after every convolution.
class Bottleneck : public Layer {
 public:
  Bottleneck(int in_ch, int mid_ch, int out_ch, int stride);
  std::string kind() const override { return "bottleneck"; }
  Tensor forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) override;
  Tensor backward(const LayerCtx& ctx, const Tensor& gy, bool accum) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) override;
  void set_frozen(bool f);
  std::vector<std::unique_ptr<Layer>> main_;      // conv/bn/relu chain
  std::vector<std::unique_ptr<Layer>> shortcut_;  // empty = identity
};

// ---- network container ------------------------------------------------------

using Trace = std::vector<LayerCtx>;

class Network {
 public:
  Network() = default;
  explicit Network(std::string name) : name_(std::move(name)) {}

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  Layer* layer(int i) { return layers_[static_cast<std::size_t>(i)].get(); }
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  Tensor forward(const Tensor& x, Trace* trace, const FwdOpts& opts = {}) const;
  // Returns gradient w.r.t. the network input.
  Tensor backward(const Trace& trace, Tensor gy, bool accum_param_grads) const;

  std::vector<Param*> params() const;
  std::vector<std::pair<std::string, Tensor*>> buffers() const;
  void zero_grad() const;
  std::int64_t num_params() const;
  // Digest over parameter values in registration order, then buffers.
  std::uint64_t state_hash() const;
  // Gaussian init for conv/linear weights, zeros for biases, identity for
  // normalization affine parameters.
  void init_weights(Rng& rng, double conv_std = 0.02) const;
  // Set every batch-norm layer's frozen flag.
  void set_bn_frozen(bool frozen) const;

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace translearn
