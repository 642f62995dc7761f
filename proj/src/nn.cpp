#include "translearn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace translearn {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

int conv_out(int in, int k, int stride, int pad) {
  int num = in + 2 * pad - k;
  require(num >= 0, "conv: kernel larger than padded input");
  return num / stride + 1;
}

// Smallest output index whose receptive field start (o*stride - pad + kk)
// is >= 0.
inline int lo_index(int pad, int kk, int stride) {
  int lo = pad - kk;
  if (lo <= 0) return 0;
  return (lo + stride - 1) / stride;
}

// Largest output index whose receptive field start is <= limit-1.  Returns
// -1 when this kernel tap never lands inside the input (possible on
// degenerate small maps, where truncating division of the negative numerator
// would otherwise wrongly admit index 0 and step outside the row).
inline int hi_index(int limit, int pad, int kk, int stride, int out_limit) {
  const int num = limit - 1 + pad - kk;
  if (num < 0) return -1;
  return std::min(num / stride, out_limit - 1);
}

}  // namespace

// ---- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int padding,
               bool use_bias)
    : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(padding),
      use_bias_(use_bias),
      weight_("weight", ParamKind::conv_weight,
              Tensor::zeros({out_ch, in_ch, kernel, kernel})) {
  if (use_bias_)
    bias_ = std::make_unique<Param>("bias", ParamKind::bias,
                                    Tensor::zeros({out_ch}));
}

Tensor Conv2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 4 && x.dim(1) == in_ch_,
          "conv2d: input shape " + x.shape_str() + " does not match in_ch=" +
              std::to_string(in_ch_));
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Ho = conv_out(H, k_, stride_, pad_);
  const int Wo = conv_out(W, k_, stride_, pad_);
  Tensor y({N, out_ch_, Ho, Wo});

  const double* wd = weight_.value.data();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < out_ch_; ++co) {
      double b = use_bias_ ? bias_->value[co] : 0.0;
      double* ybase = y.data() + ((static_cast<std::size_t>(n) * out_ch_ + co) *
                                  Ho) * Wo;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
        ybase[i] = b;
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xbase =
            x.data() + ((static_cast<std::size_t>(n) * in_ch_ + ci) * H) * W;
        const double* wk =
            wd + ((static_cast<std::size_t>(co) * in_ch_ + ci) * k_) * k_;
        for (int kh = 0; kh < k_; ++kh) {
          for (int kw = 0; kw < k_; ++kw) {
            const double w = wk[kh * k_ + kw];
            if (w == 0.0) continue;
            const int oh_lo = lo_index(pad_, kh, stride_);
            const int oh_hi = hi_index(H, pad_, kh, stride_, Ho);
            const int ow_lo = lo_index(pad_, kw, stride_);
            const int ow_hi = hi_index(W, pad_, kw, stride_, Wo);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const int ih = oh * stride_ - pad_ + kh;
              const double* xrow = xbase + static_cast<std::size_t>(ih) * W;
              double* yrow = ybase + static_cast<std::size_t>(oh) * Wo;
              int iw = ow_lo * stride_ - pad_ + kw;
              for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride_)
                yrow[ow] += w * xrow[iw];
            }
          }
        }
      }
    }
  }
  ctx.saved = {x};
  return y;
}

Tensor Conv2d::backward(const LayerCtx& ctx, const Tensor& gy, bool accum) {
  const Tensor& x = ctx.saved[0];
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  Tensor gx(x.shape());

  const double* wd = weight_.value.data();
  double* gwd = weight_.grad.data();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < out_ch_; ++co) {
      const double* gybase =
          gy.data() + ((static_cast<std::size_t>(n) * out_ch_ + co) * Ho) * Wo;
      if (accum && use_bias_) {
        double s = 0.0;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
          s += gybase[i];
        bias_->grad[co] += s;
      }
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xbase =
            x.data() + ((static_cast<std::size_t>(n) * in_ch_ + ci) * H) * W;
        double* gxbase =
            gx.data() + ((static_cast<std::size_t>(n) * in_ch_ + ci) * H) * W;
        const double* wk =
            wd + ((static_cast<std::size_t>(co) * in_ch_ + ci) * k_) * k_;
        double* gwk =
            gwd + ((static_cast<std::size_t>(co) * in_ch_ + ci) * k_) * k_;
        for (int kh = 0; kh < k_; ++kh) {
          for (int kw = 0; kw < k_; ++kw) {
            const double w = wk[kh * k_ + kw];
            const int oh_lo = lo_index(pad_, kh, stride_);
            const int oh_hi = hi_index(H, pad_, kh, stride_, Ho);
            const int ow_lo = lo_index(pad_, kw, stride_);
            const int ow_hi = hi_index(W, pad_, kw, stride_, Wo);
            double wacc = 0.0;
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const int ih = oh * stride_ - pad_ + kh;
              const double* xrow = xbase + static_cast<std::size_t>(ih) * W;
              double* gxrow = gxbase + static_cast<std::size_t>(ih) * W;
              const double* gyrow = gybase + static_cast<std::size_t>(oh) * Wo;
              int iw = ow_lo * stride_ - pad_ + kw;
              for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride_) {
                gxrow[iw] += w * gyrow[ow];
                wacc += xrow[iw] * gyrow[ow];
              }
            }
            if (accum) gwk[kh * k_ + kw] += wacc;
          }
        }
      }
    }
  }
  return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (use_bias_) out.push_back(bias_.get());
}

// ---- ConvTranspose2d --------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride,
                                 int padding, int output_padding, bool use_bias)
    : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(padding),
      out_pad_(output_padding), use_bias_(use_bias),
      weight_("weight", ParamKind::conv_weight,
              Tensor::zeros({in_ch, out_ch, kernel, kernel})) {
  require(output_padding < stride, "convtranspose2d: output_padding >= stride");
  if (use_bias_)
    bias_ = std::make_unique<Param>("bias", ParamKind::bias,
                                    Tensor::zeros({out_ch}));
}

Tensor ConvTranspose2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 4 && x.dim(1) == in_ch_,
          "convtranspose2d: bad input shape " + x.shape_str());
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Ho = (H - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
  const int Wo = (W - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
  require(Ho > 0 && Wo > 0, "convtranspose2d: empty output");
  Tensor y({N, out_ch_, Ho, Wo});

  const double* wd = weight_.value.data();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < out_ch_; ++co) {
      double b = use_bias_ ? bias_->value[co] : 0.0;
      double* ybase =
          y.data() + ((static_cast<std::size_t>(n) * out_ch_ + co) * Ho) * Wo;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
        ybase[i] = b;
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xbase =
            x.data() + ((static_cast<std::size_t>(n) * in_ch_ + ci) * H) * W;
        const double* wk =
            wd + ((static_cast<std::size_t>(ci) * out_ch_ + co) * k_) * k_;
        for (int kh = 0; kh < k_; ++kh) {
          for (int kw = 0; kw < k_; ++kw) {
            const double w = wk[kh * k_ + kw];
            if (w == 0.0) continue;
            // Output position oh = ih*stride - pad + kh.
            for (int ih = 0; ih < H; ++ih) {
              const int oh = ih * stride_ - pad_ + kh;
              if (oh < 0 || oh >= Ho) continue;
              const double* xrow = xbase + static_cast<std::size_t>(ih) * W;
              double* yrow = ybase + static_cast<std::size_t>(oh) * Wo;
              for (int iw = 0; iw < W; ++iw) {
                const int ow = iw * stride_ - pad_ + kw;
                if (ow < 0 || ow >= Wo) continue;
                yrow[ow] += w * xrow[iw];
              }
            }
          }
        }
      }
    }
  }
  ctx.saved = {x};
  ctx.shapes = {{Ho, Wo}};
  return y;
}

Tensor ConvTranspose2d::backward(const LayerCtx& ctx, const Tensor& gy,
                                 bool accum) {
  const Tensor& x = ctx.saved[0];
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  Tensor gx(x.shape());

  const double* wd = weight_.value.data();
  double* gwd = weight_.grad.data();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < out_ch_; ++co) {
      const double* gybase =
          gy.data() + ((static_cast<std::size_t>(n) * out_ch_ + co) * Ho) * Wo;
      if (accum && use_bias_) {
        double s = 0.0;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i)
          s += gybase[i];
        bias_->grad[co] += s;
      }
      for (int ci = 0; ci < in_ch_; ++ci) {
        const double* xbase =
            x.data() + ((static_cast<std::size_t>(n) * in_ch_ + ci) * H) * W;
        double* gxbase =
            gx.data() + ((static_cast<std::size_t>(n) * in_ch_ + ci) * H) * W;
        const double* wk =
            wd + ((static_cast<std::size_t>(ci) * out_ch_ + co) * k_) * k_;
        double* gwk =
            gwd + ((static_cast<std::size_t>(ci) * out_ch_ + co) * k_) * k_;
        for (int kh = 0; kh < k_; ++kh) {
          for (int kw = 0; kw < k_; ++kw) {
            const double w = wk[kh * k_ + kw];
            double wacc = 0.0;
            for (int ih = 0; ih < H; ++ih) {
              const int oh = ih * stride_ - pad_ + kh;
              if (oh < 0 || oh >= Ho) continue;
              const double* xrow = xbase + static_cast<std::size_t>(ih) * W;
              double* gxrow = gxbase + static_cast<std::size_t>(ih) * W;
              const double* gyrow = gybase + static_cast<std::size_t>(oh) * Wo;
              for (int iw = 0; iw < W; ++iw) {
                const int ow = iw * stride_ - pad_ + kw;
                if (ow < 0 || ow >= Wo) continue;
                gxrow[iw] += w * gyrow[ow];
                wacc += xrow[iw] * gyrow[ow];
              }
            }
            if (accum) gwk[kh * k_ + kw] += wacc;
          }
        }
      }
    }
  }
  return gx;
}

void ConvTranspose2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (use_bias_) out.push_back(bias_.get());
}

// ---- Linear -----------------------------------------------------------------

Linear::Linear(int in_features, int out_features, bool use_bias)
    : in_f_(in_features), out_f_(out_features), use_bias_(use_bias),
      weight_("weight", ParamKind::linear_weight,
              Tensor::zeros({out_features, in_features})) {
  if (use_bias_)
    bias_ = std::make_unique<Param>("bias", ParamKind::bias,
                                    Tensor::zeros({out_features}));
}

Tensor Linear::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 2 && x.dim(1) == in_f_,
          "linear: input shape " + x.shape_str() + " does not match in=" +
              std::to_string(in_f_));
  const int B = x.dim(0);
  Tensor y({B, out_f_});
  const double* wd = weight_.value.data();
  for (int b = 0; b < B; ++b) {
    const double* xr = x.data() + static_cast<std::size_t>(b) * in_f_;
    double* yr = y.data() + static_cast<std::size_t>(b) * out_f_;
    for (int o = 0; o < out_f_; ++o) {
      const double* wr = wd + static_cast<std::size_t>(o) * in_f_;
      double acc = use_bias_ ? bias_->value[o] : 0.0;
      for (int i = 0; i < in_f_; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  ctx.saved = {x};
  return y;
}

Tensor Linear::backward(const LayerCtx& ctx, const Tensor& gy, bool accum) {
  const Tensor& x = ctx.saved[0];
  const int B = x.dim(0);
  Tensor gx({B, in_f_});
  const double* wd = weight_.value.data();
  double* gwd = weight_.grad.data();
  for (int b = 0; b < B; ++b) {
    const double* xr = x.data() + static_cast<std::size_t>(b) * in_f_;
    const double* gyr = gy.data() + static_cast<std::size_t>(b) * out_f_;
    double* gxr = gx.data() + static_cast<std::size_t>(b) * in_f_;
    for (int o = 0; o < out_f_; ++o) {
      const double g = gyr[o];
      if (accum && use_bias_) bias_->grad[o] += g;
      const double* wr = wd + static_cast<std::size_t>(o) * in_f_;
      double* gwr = gwd + static_cast<std::size_t>(o) * in_f_;
      for (int i = 0; i < in_f_; ++i) gxr[i] += g * wr[i];
      if (accum)
        for (int i = 0; i < in_f_; ++i) gwr[i] += g * xr[i];
    }
  }
  return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (use_bias_) out.push_back(bias_.get());
}

// ---- activations ------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  ctx.saved = {x};
  return y;
}

Tensor ReLU::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const Tensor& x = ctx.saved[0];
  Tensor gx(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
  return gx;
}

Tensor LeakyReLU::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    y[i] = x[i] > 0.0 ? x[i] : slope_ * x[i];
  ctx.saved = {x};
  return y;
}

Tensor LeakyReLU::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const Tensor& x = ctx.saved[0];
  Tensor gx(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    gx[i] = x[i] > 0.0 ? gy[i] : slope_ * gy[i];
  return gx;
}

Tensor Tanh::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  ctx.saved = {y};
  return y;
}

Tensor Tanh::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const Tensor& y = ctx.saved[0];
  Tensor gx(y.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * (1.0 - y[i] * y[i]);
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  ctx.saved = {y};
  return y;
}

Tensor Sigmoid::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const Tensor& y = ctx.saved[0];
  Tensor gx(y.shape());
  for (std::int64_t i = 0; i < y.size(); ++i)
    gx[i] = gy[i] * y[i] * (1.0 - y[i]);
  return gx;
}

// ---- MaxPool2d --------------------------------------------------------------

Tensor MaxPool2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 4, "maxpool2d: expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H + stride_ - 1) / stride_;
  const int Wo = (W + stride_ - 1) / stride_;
  Tensor y({N, C, Ho, Wo});
  ctx.idx.assign(static_cast<std::size_t>(y.size()), 0);
  ctx.shapes = {x.shape()};

  std::int64_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xb =
          x.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      for (int oh = 0; oh < Ho; ++oh) {
        const int h0 = oh * stride_;
        const int h1 = std::min(h0 + k_, H);
        for (int ow = 0; ow < Wo; ++ow, ++oi) {
          const int w0 = ow * stride_;
          const int w1 = std::min(w0 + k_, W);
          double best = xb[static_cast<std::size_t>(h0) * W + w0];
          std::int64_t besti = static_cast<std::int64_t>(h0) * W + w0;
          for (int h = h0; h < h1; ++h)
            for (int w = w0; w < w1; ++w) {
              const std::int64_t ii = static_cast<std::int64_t>(h) * W + w;
              if (xb[ii] > best) {
                best = xb[ii];
                besti = ii;
              }
            }
          y[oi] = best;
          ctx.idx[static_cast<std::size_t>(oi)] =
              ((static_cast<std::int64_t>(n) * C + c) * H) * W + besti;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  Tensor gx(ctx.shapes[0]);
  for (std::int64_t i = 0; i < gy.size(); ++i)
    gx[ctx.idx[static_cast<std::size_t>(i)]] += gy[i];
  return gx;
}

// ---- InstanceNorm2d ---------------------------------------------------------

Tensor InstanceNorm2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 4 && x.dim(1) == channels_, "instancenorm2d: bad input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t M = static_cast<std::int64_t>(H) * W;
  require(M > 0, "instancenorm2d: empty spatial extent");
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({N, C});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xb = x.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      double mean = 0.0;
      for (std::int64_t i = 0; i < M; ++i) mean += xb[i];
      mean /= static_cast<double>(M);
      double var = 0.0;
      for (std::int64_t i = 0; i < M; ++i) {
        const double d = xb[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(M);
      const double is = 1.0 / std::sqrt(var + eps_);
      inv_std.at2(n, c) = is;
      double* yb = y.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      double* hb = xhat.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      for (std::int64_t i = 0; i < M; ++i) {
        const double h = (xb[i] - mean) * is;
        hb[i] = h;
        yb[i] = h;
      }
    }
  }
  ctx.saved = {std::move(xhat), std::move(inv_std)};
  return y;
}

Tensor InstanceNorm2d::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const Tensor& xhat = ctx.saved[0];
  const Tensor& inv_std = ctx.saved[1];
  const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
  const std::int64_t M = static_cast<std::int64_t>(H) * W;
  Tensor gx(gy.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const std::size_t base = ((static_cast<std::size_t>(n) * C + c) * H) * W;
      const double* g = gy.data() + base;
      const double* h = xhat.data() + base;
      double* o = gx.data() + base;
      double gsum = 0.0, ghsum = 0.0;
      for (std::int64_t i = 0; i < M; ++i) {
        gsum += g[i];
        ghsum += g[i] * h[i];
      }
      const double is = inv_std.at2(n, c);
      const double gmean = gsum / static_cast<double>(M);
      const double ghmean = ghsum / static_cast<double>(M);
      for (std::int64_t i = 0; i < M; ++i)
        o[i] = is * (g[i] - gmean - h[i] * ghmean);
    }
  }
  return gx;
}

// ---- BatchNorm2d ------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum),
      weight_("weight", ParamKind::norm_weight, Tensor::full({channels}, 1.0)),
      bias_("bias", ParamKind::norm_bias, Tensor::zeros({channels})),
      running_mean_(Tensor::zeros({channels})),
      running_var_(Tensor::full({channels}, 1.0)) {}

Tensor BatchNorm2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) {
  require(x.ndim() == 4 && x.dim(1) == channels_, "batchnorm2d: bad input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t M = static_cast<std::int64_t>(N) * H * W;
  const bool use_batch_stats = opts.train && !frozen;
  ctx.train = use_batch_stats;

  Tensor y(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({C});

  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (use_batch_stats) {
      require(M > 1, "batchnorm2d: batch statistics need more than one value");
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* xb =
            x.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i)
          s += xb[i];
      }
      mean = s / static_cast<double>(M);
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* xb =
            x.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
          const double d = xb[i] - mean;
          v += d * d;
        }
      }
      var = v / static_cast<double>(M);
      const double unbiased = v / static_cast<double>(M - 1);
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double is = 1.0 / std::sqrt(var + eps_);
    inv_std[c] = is;
    const double g = weight_.value[c], b = bias_.value[c];
    for (int n = 0; n < N; ++n) {
      const std::size_t base = ((static_cast<std::size_t>(n) * C + c) * H) * W;
      const double* xb = x.data() + base;
      double* yb = y.data() + base;
      double* hb = xhat.data() + base;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
        const double hx = (xb[i] - mean) * is;
        hb[i] = hx;
        yb[i] = g * hx + b;
      }
    }
  }
  ctx.saved = {std::move(xhat), std::move(inv_std)};
  return y;
}

Tensor BatchNorm2d::backward(const LayerCtx& ctx, const Tensor& gy, bool accum) {
  const Tensor& xhat = ctx.saved[0];
  const Tensor& inv_std = ctx.saved[1];
  const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
  const std::int64_t M = static_cast<std::int64_t>(N) * H * W;
  Tensor gx(gy.shape());
  const bool accum_affine = accum && !frozen;

  for (int c = 0; c < C; ++c) {
    double gsum = 0.0, ghsum = 0.0;
    for (int n = 0; n < N; ++n) {
      const std::size_t base = ((static_cast<std::size_t>(n) * C + c) * H) * W;
      const double* g = gy.data() + base;
      const double* h = xhat.data() + base;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
        gsum += g[i];
        ghsum += g[i] * h[i];
      }
    }
    if (accum_affine) {
      weight_.grad[c] += ghsum;
      bias_.grad[c] += gsum;
    }
    const double gam = weight_.value[c];
    const double is = inv_std[c];
    if (ctx.train) {
      const double gmean = gsum / static_cast<double>(M);
      const double ghmean = ghsum / static_cast<double>(M);
      for (int n = 0; n < N; ++n) {
        const std::size_t base = ((static_cast<std::size_t>(n) * C + c) * H) * W;
        const double* g = gy.data() + base;
        const double* h = xhat.data() + base;
        double* o = gx.data() + base;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i)
          o[i] = gam * is * (g[i] - gmean - h[i] * ghmean);
      }
    } else {
      for (int n = 0; n < N; ++n) {
        const std::size_t base = ((static_cast<std::size_t>(n) * C + c) * H) * W;
        const double* g = gy.data() + base;
        double* o = gx.data() + base;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i)
          o[i] = gam * is * g[i];
      }
    }
  }
  return gx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void BatchNorm2d::collect_buffers(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back("running_mean", &running_mean_);
  out.emplace_back("running_var", &running_var_);
}

// ---- Dropout ----------------------------------------------------------------

Tensor Dropout::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) {
  ctx.train = opts.train && p_ > 0.0;
  if (!ctx.train) return x;
  require(opts.rng != nullptr, "dropout: train-mode forward requires an rng");
  const double keep = 1.0 - p_;
  Tensor mask(x.shape());
  Tensor y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double m = opts.rng->uniform() < keep ? 1.0 / keep : 0.0;
    mask[i] = m;
    y[i] = x[i] * m;
  }
  ctx.saved = {std::move(mask)};
  return y;
}

Tensor Dropout::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  if (!ctx.train) return gy;
  const Tensor& mask = ctx.saved[0];
  Tensor gx(gy.shape());
  for (std::int64_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * mask[i];
  return gx;
}

// ---- ReflectionPad2d --------------------------------------------------------

namespace {
inline int reflect_index(int i, int n) {
  // Mirror without repeating the border sample; valid for pad <= n-1.
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}
}  // namespace

Tensor ReflectionPad2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 4, "reflectionpad2d: expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(pad_ <= H - 1 && pad_ <= W - 1,
          "reflectionpad2d: pad too large for input " + x.shape_str());
  const int Ho = H + 2 * pad_, Wo = W + 2 * pad_;
  Tensor y({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* xb =
          x.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      double* yb = y.data() + ((static_cast<std::size_t>(n) * C + c) * Ho) * Wo;
      for (int oh = 0; oh < Ho; ++oh) {
        const int ih = reflect_index(oh - pad_, H);
        for (int ow = 0; ow < Wo; ++ow) {
          const int iw = reflect_index(ow - pad_, W);
          yb[static_cast<std::size_t>(oh) * Wo + ow] =
              xb[static_cast<std::size_t>(ih) * W + iw];
        }
      }
    }
  ctx.shapes = {x.shape()};
  return y;
}

Tensor ReflectionPad2d::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const auto& ishape = ctx.shapes[0];
  const int N = ishape[0], C = ishape[1], H = ishape[2], W = ishape[3];
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  Tensor gx(ishape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double* gb = gx.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      const double* gb_y =
          gy.data() + ((static_cast<std::size_t>(n) * C + c) * Ho) * Wo;
      for (int oh = 0; oh < Ho; ++oh) {
        const int ih = reflect_index(oh - pad_, H);
        for (int ow = 0; ow < Wo; ++ow) {
          const int iw = reflect_index(ow - pad_, W);
          gb[static_cast<std::size_t>(ih) * W + iw] +=
              gb_y[static_cast<std::size_t>(oh) * Wo + ow];
        }
      }
    }
  return gx;
}

// ---- Flatten / GlobalAvgPool2d / L2Normalize -------------------------------

Tensor Flatten::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  ctx.shapes = {x.shape()};
  std::int64_t rest = x.size() / std::max(1, x.dim(0));
  return x.reshaped({x.dim(0), static_cast<int>(rest)});
}

Tensor Flatten::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  return gy.reshaped(ctx.shapes[0]);
}

Tensor GlobalAvgPool2d::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 4, "globalavgpool2d: expected 4-d input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t M = static_cast<std::int64_t>(H) * W;
  Tensor y({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* xb =
          x.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      double s = 0.0;
      for (std::int64_t i = 0; i < M; ++i) s += xb[i];
      y.at2(n, c) = s / static_cast<double>(M);
    }
  ctx.shapes = {x.shape()};
  return y;
}

Tensor GlobalAvgPool2d::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const auto& ishape = ctx.shapes[0];
  const int N = ishape[0], C = ishape[1], H = ishape[2], W = ishape[3];
  const std::int64_t M = static_cast<std::int64_t>(H) * W;
  Tensor gx(ishape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double g = gy.at2(n, c) / static_cast<double>(M);
      double* gb = gx.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      for (std::int64_t i = 0; i < M; ++i) gb[i] = g;
    }
  return gx;
}

Tensor L2Normalize::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts&) {
  require(x.ndim() == 2, "l2normalize: expected [B, D] input");
  const int B = x.dim(0), D = x.dim(1);
  Tensor y(x.shape());
  Tensor norms({B});
  for (int b = 0; b < B; ++b) {
    const double* xr = x.data() + static_cast<std::size_t>(b) * D;
    double s = 0.0;
    for (int i = 0; i < D; ++i) s += xr[i] * xr[i];
    const double n = std::max(std::sqrt(s), 1e-12);
    norms[b] = n;
    double* yr = y.data() + static_cast<std::size_t>(b) * D;
    for (int i = 0; i < D; ++i) yr[i] = xr[i] / n;
  }
  ctx.saved = {y, std::move(norms)};
  return y;
}

Tensor L2Normalize::backward(const LayerCtx& ctx, const Tensor& gy, bool) {
  const Tensor& y = ctx.saved[0];
  const Tensor& norms = ctx.saved[1];
  const int B = y.dim(0), D = y.dim(1);
  Tensor gx(y.shape());
  for (int b = 0; b < B; ++b) {
    const double* yr = y.data() + static_cast<std::size_t>(b) * D;
    const double* gr = gy.data() + static_cast<std::size_t>(b) * D;
    double* or_ = gx.data() + static_cast<std::size_t>(b) * D;
    double dot = 0.0;
    for (int i = 0; i < D; ++i) dot += yr[i] * gr[i];
    const double inv = 1.0 / norms[b];
    for (int i = 0; i < D; ++i) or_[i] = (gr[i] - yr[i] * dot) * inv;
  }
  return gx;
}

// ---- ResidualBlock ----------------------------------------------------------

ResidualBlock::ResidualBlock(int channels) {
  body_.push_back(std::make_unique<ReflectionPad2d>(1));
  body_.push_back(std::make_unique<Conv2d>(channels, channels, 3, 1, 0));
  body_.push_back(std::make_unique<InstanceNorm2d>(channels));
  body_.push_back(std::make_unique<ReLU>());
  body_.push_back(std::make_unique<ReflectionPad2d>(1));
  body_.push_back(std::make_unique<Conv2d>(channels, channels, 3, 1, 0));
  body_.push_back(std::make_unique<InstanceNorm2d>(channels));
}

Tensor ResidualBlock::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) {
  ctx.children.assign(body_.size(), LayerCtx{});
  Tensor h = x;
  for (std::size_t i = 0; i < body_.size(); ++i)
    h = body_[i]->forward(h, ctx.children[i], opts);
  require(h.size() == x.size(), "residualblock: branch changed element count");
  h.add_(x);
  return h;
}

Tensor ResidualBlock::backward(const LayerCtx& ctx, const Tensor& gy, bool accum) {
  Tensor g = gy;
  for (std::size_t i = body_.size(); i-- > 0;)
    g = body_[i]->backward(ctx.children[i], g, accum);
  g.add_(gy);
  return g;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) {
  for (auto& l : body_) l->collect_params(out);
}

void ResidualBlock::collect_buffers(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& l : body_) l->collect_buffers(out);
}

// ---- Bottleneck -------------------------------------------------------------

Bottleneck::Bottleneck(int in_ch, int mid_ch, int out_ch, int stride) {
  main_.push_back(std::make_unique<Conv2d>(in_ch, mid_ch, 1, 1, 0, false));
  main_.push_back(std::make_unique<BatchNorm2d>(mid_ch));
  main_.push_back(std::make_unique<ReLU>());
  main_.push_back(std::make_unique<Conv2d>(mid_ch, mid_ch, 3, stride, 1, false));
  main_.push_back(std::make_unique<BatchNorm2d>(mid_ch));
  main_.push_back(std::make_unique<ReLU>());
  main_.push_back(std::make_unique<Conv2d>(mid_ch, out_ch, 1, 1, 0, false));
  main_.push_back(std::make_unique<BatchNorm2d>(out_ch));
  if (stride != 1 || in_ch != out_ch) {
    shortcut_.push_back(std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, false));
    shortcut_.push_back(std::make_unique<BatchNorm2d>(out_ch));
  }
}

Tensor Bottleneck::forward(const Tensor& x, LayerCtx& ctx, const FwdOpts& opts) {
  ctx.children.assign(main_.size() + shortcut_.size() , LayerCtx{});
  Tensor h = x;
  for (std::size_t i = 0; i < main_.size(); ++i)
    h = main_[i]->forward(h, ctx.children[i], opts);
  Tensor s = x;
  for (std::size_t i = 0; i < shortcut_.size(); ++i)
    s = shortcut_[i]->forward(s, ctx.children[main_.size() + i], opts);
  require(h.size() == s.size(), "bottleneck: branch shape mismatch");
  h.add_(s);
  // Final ReLU applied in place; remember the pre-activation sign via output.
  Tensor y(h.shape());
  for (std::int64_t i = 0; i < h.size(); ++i) y[i] = h[i] > 0.0 ? h[i] : 0.0;
  ctx.saved = {h};
  return y;
}

Tensor Bottleneck::backward(const LayerCtx& ctx, const Tensor& gy, bool accum) {
  const Tensor& pre = ctx.saved[0];
  Tensor g(pre.shape());
  for (std::int64_t i = 0; i < pre.size(); ++i)
    g[i] = pre[i] > 0.0 ? gy[i] : 0.0;

  Tensor gmain = g;
  for (std::size_t i = main_.size(); i-- > 0;)
    gmain = main_[i]->backward(ctx.children[i], gmain, accum);

  if (shortcut_.empty()) {
    gmain.add_(g);
    return gmain;
  }
  Tensor gshort = g;
  for (std::size_t i = shortcut_.size(); i-- > 0;)
    gshort = shortcut_[i]->backward(ctx.children[main_.size() + i], gshort, accum);
  gmain.add_(gshort);
  return gmain;
}

void Bottleneck::collect_params(std::vector<Param*>& out) {
  for (auto& l : main_) l->collect_params(out);
  for (auto& l : shortcut_) l->collect_params(out);
}

void Bottleneck::collect_buffers(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& l : main_) l->collect_buffers(out);
  for (auto& l : shortcut_) l->collect_buffers(out);
}

void Bottleneck::set_frozen(bool f) {
  for (auto& l : main_)
    if (auto* bn = dynamic_cast<BatchNorm2d*>(l.get())) bn->frozen = f;
  for (auto& l : shortcut_)
    if (auto* bn = dynamic_cast<BatchNorm2d*>(l.get())) bn->frozen = f;
}

// ---- Network ----------------------------------------------------------------

Tensor Network::forward(const Tensor& x, Trace* trace, const FwdOpts& opts) const {
  Trace scratch;
  Trace& tr = trace ? *trace : scratch;
  tr.assign(layers_.size(), LayerCtx{});
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    h = layers_[i]->forward(h, tr[i], opts);
  return h;
}

Tensor Network::backward(const Trace& trace, Tensor gy,
                         bool accum_param_grads) const {
  if (trace.size() != layers_.size())
    throw std::runtime_error("network '" + name_ + "': trace/layer mismatch");
  for (std::size_t i = layers_.size(); i-- > 0;)
    gy = layers_[i]->backward(trace[i], gy, accum_param_grads);
  return gy;
}

std::vector<Param*> Network::params() const {
  std::vector<Param*> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::buffers() const {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& l : layers_) l->collect_buffers(out);
  return out;
}

void Network::zero_grad() const {
  for (Param* p : params()) p->grad.fill(0.0);
}

std::int64_t Network::num_params() const {
  std::int64_t n = 0;
  for (Param* p : params()) n += p->value.size();
  return n;
}

std::uint64_t Network::state_hash() const {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (Param* p : params()) h = p->value.content_hash(h);
  for (auto& [name, t] : buffers()) h = t->content_hash(h);
  return h;
}

void Network::init_weights(Rng& rng, double conv_std) const {
  for (Param* p : params()) {
    switch (p->kind) {
      case ParamKind::conv_weight:
      case ParamKind::linear_weight:
        for (std::int64_t i = 0; i < p->value.size(); ++i)
          p->value[i] = rng.normal(0.0, conv_std);
        break;
      case ParamKind::bias:
        p->value.fill(0.0);
        break;
      case ParamKind::norm_weight:
        p->value.fill(1.0);
        break;
      case ParamKind::norm_bias:
        p->value.fill(0.0);
        break;
    }
    p->grad.fill(0.0);
  }
}

void Network::set_bn_frozen(bool frozen) const {
  for (auto& l : layers_) {
    if (auto* bn = dynamic_cast<BatchNorm2d*>(l.get())) bn->frozen = frozen;
    if (auto* bk = dynamic_cast<Bottleneck*>(l.get())) bk->set_frozen(frozen);
  }
}

}  // namespace translearn
