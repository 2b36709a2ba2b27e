#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "headpose/tensor.hpp"

namespace headpose {

/// Deterministic init stream: raw mt19937 draws scaled by hand so the value
/// sequence depends only on the seed, never on the standard library's
/// distribution implementations.
class InitRng {
 public:
  explicit InitRng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_()) * (1.0 / 4294967296.0); }

  /// Uniform in [-bound, +bound).
  double symmetric(double bound) { return (2.0 * uniform() - 1.0) * bound; }

 private:
  std::mt19937 gen_;
};

template <typename S>
struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::vector<S>* value = nullptr;
  std::vector<S>* grad = nullptr;  // null for buffers (running statistics)
  bool trainable = true;
};

template <typename S>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual TensorT<S> forward(const TensorT<S>& input, bool training) = 0;
  virtual TensorT<S> backward(const TensorT<S>& grad_output) = 0;
  virtual void init(InitRng&) {}
  virtual void collect_params(const std::string&, std::vector<ParamRef<S>>&) {}
};

namespace detail {
inline int conv_out_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}
}  // namespace detail

// ---------------------------------------------------------------------------

template <typename S>
class Conv2dT final : public LayerT<S> {
 public:
  Conv2dT(int in_channels, int out_channels, int kernel, int stride,
          int padding)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride),
        pad_(padding) {
    weight.assign(static_cast<size_t>(out_) * in_ * k_ * k_, S(0));
    bias.assign(static_cast<size_t>(out_), S(0));
    weight_grad.assign(weight.size(), S(0));
    bias_grad.assign(bias.size(), S(0));
  }

  void init(InitRng& rng) override {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_) * k_ * k_);
    for (S& w : weight) w = static_cast<S>(rng.symmetric(bound));
    std::fill(bias.begin(), bias.end(), S(0));
  }

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (x.dim(1) != in_) {
      raise(Errc::shape_mismatch, "conv expects " + std::to_string(in_) +
                                      " input channels, got " + x.shape_string());
    }
    const int oh = detail::conv_out_extent(h, k_, stride_, pad_);
    const int ow = detail::conv_out_extent(w, k_, stride_, pad_);
    TensorT<S> y({n, out_, oh, ow});
    const size_t x_img = static_cast<size_t>(in_) * h * w;
    const size_t y_img = static_cast<size_t>(out_) * oh * ow;
    for (int ni = 0; ni < n; ++ni) {
      const S* xb = x.data.data() + ni * x_img;
      S* yb = y.data.data() + ni * y_img;
      for (int oc = 0; oc < out_; ++oc) {
        S* yplane = yb + static_cast<size_t>(oc) * oh * ow;
        const S b = bias[static_cast<size_t>(oc)];
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            yplane[oy * ow + ox] = b;
          }
        }
        // Columns whose kernel footprint is fully inside run without bounds
        // checks; only the padded edges clamp the kx range.
        const int ox_interior_lo =
            std::min(ow, (pad_ + stride_ - 1) / stride_);
        const int ox_interior_hi =
            std::max(ox_interior_lo,
                     std::min(ow, (w - k_ + pad_) / stride_ + 1));
        for (int ic = 0; ic < in_; ++ic) {
          const S* xplane = xb + static_cast<size_t>(ic) * h * w;
          const S* wk = weight.data() +
                        (static_cast<size_t>(oc) * in_ + ic) * k_ * k_;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy0 = oy * stride_ - pad_;
            S* yrow = yplane + static_cast<size_t>(oy) * ow;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              const S* xrow = xplane + static_cast<size_t>(iy) * w;
              const S* wrow = wk + static_cast<size_t>(ky) * k_;
              for (int ox = 0; ox < ox_interior_lo; ++ox) {
                const int ix0 = ox * stride_ - pad_;
                S acc = 0;
                const int kx_lo = std::max(0, -ix0);
                const int kx_hi = std::min(k_, w - ix0);
                for (int kx = kx_lo; kx < kx_hi; ++kx) {
                  acc += wrow[kx] * xrow[ix0 + kx];
                }
                yrow[ox] += acc;
              }
              for (int ox = ox_interior_lo; ox < ox_interior_hi; ++ox) {
                const S* xk = xrow + ox * stride_ - pad_;
                S acc = 0;
                for (int kx = 0; kx < k_; ++kx) {
                  acc += wrow[kx] * xk[kx];
                }
                yrow[ox] += acc;
              }
              for (int ox = ox_interior_hi; ox < ow; ++ox) {
                const int ix0 = ox * stride_ - pad_;
                S acc = 0;
                const int kx_lo = std::max(0, -ix0);
                const int kx_hi = std::min(k_, w - ix0);
                for (int kx = kx_lo; kx < kx_hi; ++kx) {
                  acc += wrow[kx] * xrow[ix0 + kx];
                }
                yrow[ox] += acc;
              }
            }
          }
        }
      }
    }
    if (training) cached_input_ = x;
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    const TensorT<S>& x = cached_input_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = dy.dim(2), ow = dy.dim(3);
    TensorT<S> dx(x.shape);
    const size_t x_img = static_cast<size_t>(in_) * h * w;
    const size_t y_img = static_cast<size_t>(out_) * oh * ow;
    const int ox_interior_lo = std::min(ow, (pad_ + stride_ - 1) / stride_);
    const int ox_interior_hi =
        std::max(ox_interior_lo, std::min(ow, (w - k_ + pad_) / stride_ + 1));
    for (int ni = 0; ni < n; ++ni) {
      const S* xb = x.data.data() + ni * x_img;
      const S* dyb = dy.data.data() + ni * y_img;
      S* dxb = dx.data.data() + ni * x_img;
      for (int oc = 0; oc < out_; ++oc) {
        const S* dyplane = dyb + static_cast<size_t>(oc) * oh * ow;
        S db = 0;
        for (int i = 0; i < oh * ow; ++i) db += dyplane[i];
        bias_grad[static_cast<size_t>(oc)] += db;
        for (int ic = 0; ic < in_; ++ic) {
          const S* xplane = xb + static_cast<size_t>(ic) * h * w;
          S* dxplane = dxb + static_cast<size_t>(ic) * h * w;
          const size_t wbase = (static_cast<size_t>(oc) * in_ + ic) * k_ * k_;
          const S* wk = weight.data() + wbase;
          S* dwk = weight_grad.data() + wbase;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy0 = oy * stride_ - pad_;
            const S* dyrow = dyplane + static_cast<size_t>(oy) * ow;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              const S* xrow = xplane + static_cast<size_t>(iy) * w;
              S* dxrow = dxplane + static_cast<size_t>(iy) * w;
              const S* wrow = wk + static_cast<size_t>(ky) * k_;
              S* dwrow = dwk + static_cast<size_t>(ky) * k_;
              auto edge = [&](int ox_begin, int ox_end) {
                for (int ox = ox_begin; ox < ox_end; ++ox) {
                  const S g = dyrow[ox];
                  if (g == S(0)) continue;
                  const int ix0 = ox * stride_ - pad_;
                  const int kx_lo = std::max(0, -ix0);
                  const int kx_hi = std::min(k_, w - ix0);
                  for (int kx = kx_lo; kx < kx_hi; ++kx) {
                    dwrow[kx] += g * xrow[ix0 + kx];
                    dxrow[ix0 + kx] += g * wrow[kx];
                  }
                }
              };
              edge(0, ox_interior_lo);
              for (int ox = ox_interior_lo; ox < ox_interior_hi; ++ox) {
                const S g = dyrow[ox];
                if (g == S(0)) continue;
                const int ix0 = ox * stride_ - pad_;
                const S* xk = xrow + ix0;
                S* dxk = dxrow + ix0;
                for (int kx = 0; kx < k_; ++kx) {
                  dwrow[kx] += g * xk[kx];
                  dxk[kx] += g * wrow[kx];
                }
              }
              edge(ox_interior_hi, ow);
            }
          }
        }
      }
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<S>>& out) override {
    out.push_back({prefix + ".weight", {out_, in_, k_, k_}, &weight,
                   &weight_grad, true});
    out.push_back({prefix + ".bias", {out_}, &bias, &bias_grad, true});
  }

  std::vector<S> weight, bias, weight_grad, bias_grad;

 private:
  int in_, out_, k_, stride_, pad_;
  TensorT<S> cached_input_;
};

// ---------------------------------------------------------------------------

template <typename S>
class ReLUT final : public LayerT<S> {
 public:
  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    TensorT<S> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
      y.data[i] = x.data[i] > S(0) ? x.data[i] : S(0);
    }
    if (training) cached_output_ = y;
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> dx(dy.shape);
    for (size_t i = 0; i < dy.data.size(); ++i) {
      dx.data[i] = cached_output_.data[i] > S(0) ? dy.data[i] : S(0);
    }
    return dx;
  }

 private:
  TensorT<S> cached_output_;
};

// ---------------------------------------------------------------------------

template <typename S>
class MaxPool2dT final : public LayerT<S> {
 public:
  MaxPool2dT(int kernel, int stride, int padding = 0)
      : k_(kernel), stride_(stride), pad_(padding) {}

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = detail::conv_out_extent(h, k_, stride_, pad_);
    const int ow = detail::conv_out_extent(w, k_, stride_, pad_);
    TensorT<S> y({n, c, oh, ow});
    // Inference forwards must not touch member state (frozen models are
    // shared across threads); argmax is only needed for backward.
    if (training) {
      argmax_.assign(y.data.size(), 0);
      input_shape_ = x.shape;
    }
    size_t oi = 0;
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const S* plane = x.data.data() +
                         (static_cast<size_t>(ni) * c + ci) * h * w;
        const size_t plane_base = (static_cast<size_t>(ni) * c + ci) *
                                  static_cast<size_t>(h) * w;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox, ++oi) {
            const int iy0 = oy * stride_ - pad_;
            const int ix0 = ox * stride_ - pad_;
            S best = std::numeric_limits<S>::lowest();
            int best_idx = -1;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                const S v = plane[iy * w + ix];
                if (v > best) {
                  best = v;
                  best_idx = iy * w + ix;
                }
              }
            }
            y.data[oi] = best;
            if (training) {
              argmax_[oi] = plane_base + static_cast<size_t>(best_idx);
            }
          }
        }
      }
    }
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> dx(input_shape_);
    for (size_t i = 0; i < dy.data.size(); ++i) {
      dx.data[argmax_[i]] += dy.data[i];
    }
    return dx;
  }

 private:
  int k_, stride_, pad_;
  std::vector<size_t> argmax_;
  std::vector<int> input_shape_;
};

// ---------------------------------------------------------------------------

/// Non-overlapping mean pooling (kernel == stride, no padding); used as a
/// cheap downsampling stem in the toy backbone.
template <typename S>
class AvgPool2dT final : public LayerT<S> {
 public:
  explicit AvgPool2dT(int kernel) : k_(kernel) {}

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / k_, ow = w / k_;
    if (training) input_shape_ = x.shape;
    TensorT<S> y({n, c, oh, ow});
    const S inv = S(1) / static_cast<S>(k_ * k_);
    size_t oi = 0;
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const S* plane = x.data.data() +
                         (static_cast<size_t>(ni) * c + ci) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox, ++oi) {
            S acc = 0;
            for (int ky = 0; ky < k_; ++ky) {
              const S* row = plane + (oy * k_ + ky) * w + ox * k_;
              for (int kx = 0; kx < k_; ++kx) acc += row[kx];
            }
            y.data[oi] = acc * inv;
          }
        }
      }
    }
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> dx(input_shape_);
    const int n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const int oh = h / k_, ow = w / k_;
    const S inv = S(1) / static_cast<S>(k_ * k_);
    size_t oi = 0;
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        S* plane = dx.data.data() + (static_cast<size_t>(ni) * c + ci) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox, ++oi) {
            const S g = dy.data[oi] * inv;
            for (int ky = 0; ky < k_; ++ky) {
              S* row = plane + (oy * k_ + ky) * w + ox * k_;
              for (int kx = 0; kx < k_; ++kx) row[kx] += g;
            }
          }
        }
      }
    }
    return dx;
  }

 private:
  int k_;
  std::vector<int> input_shape_;
};

// ---------------------------------------------------------------------------

/// [N, C, H, W] -> [N, C], mean over the spatial extent.
template <typename S>
class GlobalAvgPoolT final : public LayerT<S> {
 public:
  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (training) input_shape_ = x.shape;
    TensorT<S> y({n, c});
    const S inv = S(1) / static_cast<S>(h * w);
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const S* plane = x.data.data() +
                         (static_cast<size_t>(ni) * c + ci) * h * w;
        S acc = 0;
        for (int i = 0; i < h * w; ++i) acc += plane[i];
        y.data[static_cast<size_t>(ni) * c + ci] = acc * inv;
      }
    }
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> dx(input_shape_);
    const int n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const S inv = S(1) / static_cast<S>(h * w);
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const S g = dy.data[static_cast<size_t>(ni) * c + ci] * inv;
        S* plane = dx.data.data() + (static_cast<size_t>(ni) * c + ci) * h * w;
        for (int i = 0; i < h * w; ++i) plane[i] = g;
      }
    }
    return dx;
  }

 private:
  std::vector<int> input_shape_;
};

// ---------------------------------------------------------------------------

template <typename S>
class LinearT final : public LayerT<S> {
 public:
  LinearT(int in_features, int out_features)
      : in_(in_features), out_(out_features) {
    weight.assign(static_cast<size_t>(out_) * in_, S(0));
    bias.assign(static_cast<size_t>(out_), S(0));
    weight_grad.assign(weight.size(), S(0));
    bias_grad.assign(bias.size(), S(0));
  }

  void init(InitRng& rng) override {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (S& w : weight) w = static_cast<S>(rng.symmetric(bound));
    std::fill(bias.begin(), bias.end(), S(0));
  }

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    if (x.shape.size() != 2 || x.dim(1) != in_) {
      raise(Errc::shape_mismatch, "linear expects [N, " + std::to_string(in_) +
                                      "], got " + x.shape_string());
    }
    const int n = x.dim(0);
    TensorT<S> y({n, out_});
    for (int ni = 0; ni < n; ++ni) {
      const S* xr = x.data.data() + static_cast<size_t>(ni) * in_;
      S* yr = y.data.data() + static_cast<size_t>(ni) * out_;
      for (int o = 0; o < out_; ++o) {
        const S* wr = weight.data() + static_cast<size_t>(o) * in_;
        S acc = bias[static_cast<size_t>(o)];
        for (int i = 0; i < in_; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
    if (training) cached_input_ = x;
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    const TensorT<S>& x = cached_input_;
    const int n = x.dim(0);
    TensorT<S> dx(x.shape);
    for (int ni = 0; ni < n; ++ni) {
      const S* xr = x.data.data() + static_cast<size_t>(ni) * in_;
      const S* dyr = dy.data.data() + static_cast<size_t>(ni) * out_;
      S* dxr = dx.data.data() + static_cast<size_t>(ni) * in_;
      for (int o = 0; o < out_; ++o) {
        const S g = dyr[o];
        if (g == S(0)) continue;
        const S* wr = weight.data() + static_cast<size_t>(o) * in_;
        S* dwr = weight_grad.data() + static_cast<size_t>(o) * in_;
        bias_grad[static_cast<size_t>(o)] += g;
        for (int i = 0; i < in_; ++i) {
          dxr[i] += g * wr[i];
          dwr[i] += g * xr[i];
        }
      }
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<S>>& out) override {
    out.push_back({prefix + ".weight", {out_, in_}, &weight, &weight_grad, true});
    out.push_back({prefix + ".bias", {out_}, &bias, &bias_grad, true});
  }

  std::vector<S> weight, bias, weight_grad, bias_grad;

 private:
  int in_, out_;
  TensorT<S> cached_input_;
};

// ---------------------------------------------------------------------------

template <typename S>
class BatchNorm2dT final : public LayerT<S> {
 public:
  explicit BatchNorm2dT(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum) {
    gamma.assign(static_cast<size_t>(c_), S(1));
    beta.assign(static_cast<size_t>(c_), S(0));
    gamma_grad.assign(gamma.size(), S(0));
    beta_grad.assign(beta.size(), S(0));
    running_mean.assign(static_cast<size_t>(c_), S(0));
    running_var.assign(static_cast<size_t>(c_), S(1));
  }

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t m = static_cast<int64_t>(n) * h * w;
    TensorT<S> y(x.shape);
    if (training) {
      xhat_ = TensorT<S>(x.shape);
      inv_std_.assign(static_cast<size_t>(c_), S(0));
    }
    for (int ci = 0; ci < c_; ++ci) {
      S mean, inv_std;
      if (training) {
        double sum = 0.0;
        for_each_channel(x, ci, [&](S v, size_t) { sum += v; });
        mean = static_cast<S>(sum / static_cast<double>(m));
        double var_sum = 0.0;
        for_each_channel(x, ci, [&](S v, size_t) {
          const double d = static_cast<double>(v - mean);
          var_sum += d * d;
        });
        const double var = var_sum / static_cast<double>(m);
        inv_std = static_cast<S>(1.0 / std::sqrt(var + eps_));
        inv_std_[static_cast<size_t>(ci)] = inv_std;
        const double unbiased =
            m > 1 ? var_sum / static_cast<double>(m - 1) : var;
        running_mean[static_cast<size_t>(ci)] = static_cast<S>(
            (1.0 - momentum_) * running_mean[static_cast<size_t>(ci)] +
            momentum_ * mean);
        running_var[static_cast<size_t>(ci)] = static_cast<S>(
            (1.0 - momentum_) * running_var[static_cast<size_t>(ci)] +
            momentum_ * unbiased);
      } else {
        mean = running_mean[static_cast<size_t>(ci)];
        inv_std = static_cast<S>(
            1.0 / std::sqrt(static_cast<double>(running_var[static_cast<size_t>(ci)]) + eps_));
      }
      const S g = gamma[static_cast<size_t>(ci)];
      const S b = beta[static_cast<size_t>(ci)];
      for_each_channel(x, ci, [&](S v, size_t idx) {
        const S norm = (v - mean) * inv_std;
        if (training) xhat_.data[idx] = norm;
        y.data[idx] = g * norm + b;
      });
    }
    return y;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> dx(dy.shape);
    const int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const double m = static_cast<double>(static_cast<int64_t>(n) * h * w);
    for (int ci = 0; ci < c_; ++ci) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for_each_channel(dy, ci, [&](S v, size_t idx) {
        sum_dy += v;
        sum_dy_xhat += static_cast<double>(v) * xhat_.data[idx];
      });
      gamma_grad[static_cast<size_t>(ci)] += static_cast<S>(sum_dy_xhat);
      beta_grad[static_cast<size_t>(ci)] += static_cast<S>(sum_dy);
      const double scale = static_cast<double>(gamma[static_cast<size_t>(ci)]) *
                           inv_std_[static_cast<size_t>(ci)];
      const double mean_dy = sum_dy / m;
      const double mean_dy_xhat = sum_dy_xhat / m;
      for_each_channel(dy, ci, [&](S v, size_t idx) {
        dx.data[idx] = static_cast<S>(
            scale * (static_cast<double>(v) - mean_dy -
                     xhat_.data[idx] * mean_dy_xhat));
      });
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<S>>& out) override {
    out.push_back({prefix + ".gamma", {c_}, &gamma, &gamma_grad, true});
    out.push_back({prefix + ".beta", {c_}, &beta, &beta_grad, true});
    out.push_back({prefix + ".running_mean", {c_}, &running_mean, nullptr, false});
    out.push_back({prefix + ".running_var", {c_}, &running_var, nullptr, false});
  }

  std::vector<S> gamma, beta, gamma_grad, beta_grad;
  std::vector<S> running_mean, running_var;

 private:
  template <typename F>
  void for_each_channel(const TensorT<S>& t, int channel, F&& fn) const {
    const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
      size_t base = (static_cast<size_t>(ni) * c + channel) * plane;
      for (size_t i = 0; i < plane; ++i) fn(t.data[base + i], base + i);
    }
  }

  int c_;
  double eps_, momentum_;
  TensorT<S> xhat_;
  std::vector<S> inv_std_;
};

// ---------------------------------------------------------------------------

template <typename S>
class SequentialT final : public LayerT<S> {
 public:
  void add(const std::string& name, std::unique_ptr<LayerT<S>> layer) {
    names_.push_back(name);
    layers_.push_back(std::move(layer));
  }

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    TensorT<S> cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, training);
    return cur;
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      cur = (*it)->backward(cur);
    }
    return cur;
  }

  void init(InitRng& rng) override {
    for (auto& layer : layers_) layer->init(rng);
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<S>>& out) override {
    for (size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->collect_params(prefix + "." + names_[i], out);
    }
  }

  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<LayerT<S>>> layers_;
};

// ---------------------------------------------------------------------------

/// Standard bottleneck residual block: 1x1 -> 3x3 (strided) -> 1x1, each with
/// batch norm, plus an optional projection shortcut.
template <typename S>
class BottleneckT final : public LayerT<S> {
 public:
  BottleneckT(int in_channels, int mid_channels, int out_channels, int stride)
      : conv1_(in_channels, mid_channels, 1, 1, 0), bn1_(mid_channels),
        conv2_(mid_channels, mid_channels, 3, stride, 1), bn2_(mid_channels),
        conv3_(mid_channels, out_channels, 1, 1, 0), bn3_(out_channels) {
    if (stride != 1 || in_channels != out_channels) {
      proj_.emplace(in_channels, out_channels, 1, stride, 0);
      proj_bn_.emplace(out_channels);
    }
  }

  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    TensorT<S> main = relu1_.forward(bn1_.forward(conv1_.forward(x, training), training), training);
    main = relu2_.forward(bn2_.forward(conv2_.forward(main, training), training), training);
    main = bn3_.forward(conv3_.forward(main, training), training);
    TensorT<S> shortcut =
        proj_ ? proj_bn_->forward(proj_->forward(x, training), training) : x;
    for (size_t i = 0; i < main.data.size(); ++i) main.data[i] += shortcut.data[i];
    return relu_out_.forward(main, training);
  }

  TensorT<S> backward(const TensorT<S>& dy) override {
    TensorT<S> d_sum = relu_out_.backward(dy);
    TensorT<S> dx_main = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(relu2_.backward(
            conv3_.backward(bn3_.backward(d_sum))))))));
    TensorT<S> dx_short =
        proj_ ? proj_->backward(proj_bn_->backward(d_sum)) : d_sum;
    for (size_t i = 0; i < dx_main.data.size(); ++i) {
      dx_main.data[i] += dx_short.data[i];
    }
    return dx_main;
  }

  void init(InitRng& rng) override {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (proj_) proj_->init(rng);
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<S>>& out) override {
    conv1_.collect_params(prefix + ".conv1", out);
    bn1_.collect_params(prefix + ".bn1", out);
    conv2_.collect_params(prefix + ".conv2", out);
    bn2_.collect_params(prefix + ".bn2", out);
    conv3_.collect_params(prefix + ".conv3", out);
    bn3_.collect_params(prefix + ".bn3", out);
    if (proj_) {
      proj_->collect_params(prefix + ".downsample.conv", out);
      proj_bn_->collect_params(prefix + ".downsample.bn", out);
    }
  }

 private:
  Conv2dT<S> conv1_;
  BatchNorm2dT<S> bn1_;
  Conv2dT<S> conv2_;
  BatchNorm2dT<S> bn2_;
  Conv2dT<S> conv3_;
  BatchNorm2dT<S> bn3_;
  std::optional<Conv2dT<S>> proj_;
  std::optional<BatchNorm2dT<S>> proj_bn_;
  ReLUT<S> relu1_, relu2_, relu_out_;
};

}  // namespace headpose
