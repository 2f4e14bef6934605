#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/random.hpp"

// Minimal single-image convolutional building blocks with hand-written
// backward passes. Tensors are C x H x W; batch size is always one.
namespace wise::nn {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

template <typename S>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  Buffer<S> value;
};

// Named parameter tensors; gradients live in a parallel structure so that
// forward passes never write to the store.
template <typename S>
class ParamStore {
 public:
  int add(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    tensors_.push_back({std::move(name), std::move(shape), Buffer<S>(n)});
    return static_cast<int>(tensors_.size()) - 1;
  }

  std::vector<ParamTensor<S>>& tensors() { return tensors_; }
  const std::vector<ParamTensor<S>>& tensors() const { return tensors_; }
  ParamTensor<S>& operator[](int i) { return tensors_[i]; }
  const ParamTensor<S>& operator[](int i) const { return tensors_[i]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.value.size();
    return n;
  }

  std::vector<Buffer<S>> zeros_like() const {
    std::vector<Buffer<S>> g;
    g.reserve(tensors_.size());
    for (const auto& t : tensors_) g.emplace_back(t.value.size(), S(0));
    return g;
  }

 private:
  std::vector<ParamTensor<S>> tensors_;
};

template <typename S>
using Gradients = std::vector<Buffer<S>>;

template <typename S>
struct ConvCache {
  RowMat<S> col;     // im2col of the input (kernel > 1 or strided)
  Tensor3<S> input;  // raw input (1x1 stride-1 convs only)
  int in_h = 0, in_w = 0;
};

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<S>& store, const std::string& name, int in, int out,
         int kernel, int stride)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(kernel / 2) {
    w_ = store.add(name + ".weight", {out, in, kernel, kernel});
    b_ = store.add(name + ".bias", {out});
  }

  int out_channels() const { return out_; }
  int weight_index() const { return w_; }
  int bias_index() const { return b_; }

  void init_he(ParamStore<S>& store, Rng& rng, double gain = 1.0) const {
    const double std = gain * std::sqrt(2.0 / double(in_ * k_ * k_));
    for (auto& v : store[w_].value) v = static_cast<S>(std * rng.normal());
    for (auto& v : store[b_].value) v = S(0);
  }

  int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }

  Tensor3<S> forward(const ParamStore<S>& store, const Tensor3<S>& x,
                     ConvCache<S>* cache) const {
    if (x.channels() != in_)
      throw ShapeError("conv: expected " + std::to_string(in_) +
                       " input channels, got " + std::to_string(x.channels()));
    const int ho = out_size(x.height()), wo = out_size(x.width());
    const int K = in_ * k_ * k_;
    const int N = ho * wo;
    Tensor3<S> y(out_, ho, wo);
    ConstMatMap<S> W(store[w_].value.data(), out_, K);
    MatMap<S> Y(y.data(), out_, N);
    if (pointwise()) {
      ConstMatMap<S> X(x.data(), in_, N);
      Y.noalias() = W * X;
      if (cache) {
        cache->input = x;
        cache->in_h = x.height();
        cache->in_w = x.width();
      }
    } else {
      RowMat<S> col(K, N);
      im2col(x, col, ho, wo);
      Y.noalias() = W * col;
      if (cache) {
        cache->col = std::move(col);
        cache->in_h = x.height();
        cache->in_w = x.width();
      }
    }
    const auto& b = store[b_].value;
    for (int o = 0; o < out_; ++o) Y.row(o).array() += b[o];
    return y;
  }

  // Accumulates parameter gradients into grads and returns d(loss)/d(input).
  Tensor3<S> backward(const ParamStore<S>& store, const Tensor3<S>& dy,
                      const ConvCache<S>& cache, Gradients<S>& grads) const {
    const int ho = dy.height(), wo = dy.width();
    const int K = in_ * k_ * k_;
    const int N = ho * wo;
    ConstMatMap<S> dY(dy.data(), out_, N);
    ConstMatMap<S> W(store[w_].value.data(), out_, K);
    MatMap<S> dW(grads[w_].data(), out_, K);
    auto& db = grads[b_];
    for (int o = 0; o < out_; ++o) db[o] += dY.row(o).sum();
    const int hi = cache.in_h, wi = cache.in_w;
    Tensor3<S> dx(in_, hi, wi);
    if (pointwise()) {
      ConstMatMap<S> X(cache.input.data(), in_, N);
      dW.noalias() += dY * X.transpose();
      MatMap<S> dX(dx.data(), in_, N);
      dX.noalias() = W.transpose() * dY;
    } else {
      dW.noalias() += dY * cache.col.transpose();
      RowMat<S> dcol = W.transpose() * dY;
      col2im(dcol, dx, ho, wo);
    }
    return dx;
  }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1; }

  void im2col(const Tensor3<S>& x, RowMat<S>& col, int ho, int wo) const {
    const int H = x.height(), W = x.width();
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          S* row = col.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * ho * wo;
          const S* src = x.channel(c);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            S* dst = row + oy * wo;
            if (iy < 0 || iy >= H) {
              std::fill(dst, dst + wo, S(0));
              continue;
            }
            const S* line = src + static_cast<std::size_t>(iy) * W;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              dst[ox] = (ix >= 0 && ix < W) ? line[ix] : S(0);
            }
          }
        }
  }

  void col2im(const RowMat<S>& col, Tensor3<S>& dx, int ho, int wo) const {
    const int H = dx.height(), W = dx.width();
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const S* row = col.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * ho * wo;
          S* dst = dx.channel(c);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= H) continue;
            S* line = dst + static_cast<std::size_t>(iy) * W;
            const S* src = row + oy * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < W) line[ix] += src[ox];
            }
          }
        }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  int w_ = -1, b_ = -1;
};

template <typename S>
void relu_inplace(Tensor3<S>& x) {
  for (auto& v : x.values()) v = v > S(0) ? v : S(0);
}

// Gradient through a ReLU given its output.
template <typename S>
void relu_backward_inplace(Tensor3<S>& grad, const Tensor3<S>& out) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(out.values()[i] > S(0))) grad.values()[i] = S(0);
}

template <typename S>
void add_inplace(Tensor3<S>& a, const Tensor3<S>& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += b.values()[i];
}

namespace detail {
// Bilinear x2 taps (half-pixel centers, edge clamped): output index o reads
// input i0 with weight w0 and i1 with weight 1 - w0.
struct Tap {
  int i0, i1;
  double w0;
};
inline std::vector<Tap> upsample_taps(int in) {
  std::vector<Tap> taps(2 * in);
  for (int o = 0; o < 2 * in; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double frac = src - i0;
    taps[o] = {i0, i1, 1.0 - frac};
  }
  return taps;
}
}  // namespace detail

template <typename S>
Tensor3<S> upsample2x(const Tensor3<S>& x) {
  const int H = x.height(), W = x.width();
  const auto ty = detail::upsample_taps(H), tx = detail::upsample_taps(W);
  Tensor3<S> y(x.channels(), 2 * H, 2 * W);
  for (int c = 0; c < x.channels(); ++c)
    for (int oy = 0; oy < 2 * H; ++oy) {
      const auto& a = ty[oy];
      for (int ox = 0; ox < 2 * W; ++ox) {
        const auto& b = tx[ox];
        const S wy0 = S(a.w0), wy1 = S(1.0 - a.w0);
        const S wx0 = S(b.w0), wx1 = S(1.0 - b.w0);
        y(c, oy, ox) = wy0 * (wx0 * x(c, a.i0, b.i0) + wx1 * x(c, a.i0, b.i1)) +
                       wy1 * (wx0 * x(c, a.i1, b.i0) + wx1 * x(c, a.i1, b.i1));
      }
    }
  return y;
}

template <typename S>
Tensor3<S> upsample2x_backward(const Tensor3<S>& dy) {
  const int H = dy.height() / 2, W = dy.width() / 2;
  const auto ty = detail::upsample_taps(H), tx = detail::upsample_taps(W);
  Tensor3<S> dx(dy.channels(), H, W);
  for (int c = 0; c < dy.channels(); ++c)
    for (int oy = 0; oy < 2 * H; ++oy) {
      const auto& a = ty[oy];
      for (int ox = 0; ox < 2 * W; ++ox) {
        const auto& b = tx[ox];
        const S g = dy(c, oy, ox);
        const S wy0 = S(a.w0), wy1 = S(1.0 - a.w0);
        const S wx0 = S(b.w0), wx1 = S(1.0 - b.w0);
        dx(c, a.i0, b.i0) += g * wy0 * wx0;
        dx(c, a.i0, b.i1) += g * wy0 * wx1;
        dx(c, a.i1, b.i0) += g * wy1 * wx0;
        dx(c, a.i1, b.i1) += g * wy1 * wx1;
      }
    }
  return dx;
}

// Per-pixel softmax over channels.
template <typename S>
Tensor3<S> softmax_channels(const Tensor3<S>& logits) {
  Tensor3<S> p(logits.channels(), logits.height(), logits.width());
  const std::size_t plane = logits.plane();
  const int C = logits.channels();
  for (std::size_t i = 0; i < plane; ++i) {
    S mx = logits.data()[i];
    for (int c = 1; c < C; ++c) mx = std::max(mx, logits.data()[c * plane + i]);
    S sum = 0;
    for (int c = 0; c < C; ++c) {
      const S e = std::exp(logits.data()[c * plane + i] - mx);
      p.data()[c * plane + i] = e;
      sum += e;
    }
    for (int c = 0; c < C; ++c) p.data()[c * plane + i] /= sum;
  }
  return p;
}

// d(loss)/d(logits) from d(loss)/d(probabilities).
template <typename S>
Tensor3<S> softmax_backward(const Tensor3<S>& probs, const Tensor3<S>& dprobs) {
  Tensor3<S> dl(probs.channels(), probs.height(), probs.width());
  const std::size_t plane = probs.plane();
  const int C = probs.channels();
  for (std::size_t i = 0; i < plane; ++i) {
    S dot = 0;
    for (int c = 0; c < C; ++c)
      dot += probs.data()[c * plane + i] * dprobs.data()[c * plane + i];
    for (int c = 0; c < C; ++c)
      dl.data()[c * plane + i] =
          probs.data()[c * plane + i] * (dprobs.data()[c * plane + i] - dot);
  }
  return dl;
}

}  // namespace wise::nn
