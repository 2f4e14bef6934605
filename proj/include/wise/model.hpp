#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/nn.hpp"
#include "wise/random.hpp"

namespace wise {

struct NetworkConfig {
  int num_classes = 3;
  int embedding_dim = 16;
  // Residual encoder stage widths (stage strides 1/2/2 after a stride-2 stem).
  std::array<int, 3> stage_widths{16, 32, 64};
  int decoder_width = 32;
  // Append normalized (row, col) coordinate planes to the RGB input. Off by
  // default: with them the embedding head learns a position field and
  // groups by proximity instead of appearance.
  bool coord_channels = false;
  std::uint64_t init_seed = 0;

  static constexpr int kStride = 8;

  void validate() const {
    if (embedding_dim < 2) throw ConfigError("network: embedding_dim must be >= 2");
    if (num_classes < 1) throw ConfigError("network: num_classes must be >= 1");
    for (int w : stage_widths)
      if (w < 1) throw ConfigError("network: stage widths must be positive");
    if (decoder_width < 1) throw ConfigError("network: decoder_width must be positive");
  }
  bool operator==(const NetworkConfig&) const = default;
};

template <typename S>
struct NetworkOutput {
  ClassScoreMap<S> scores;       // (C+1) x H x W, softmax over channels
  EmbeddingMap<S> embeddings;    // d x H x W
};

// Shared residual encoder with two independent FCN8-style decoders: one
// ends in C+1 softmax channels (localization), the other in d linear
// channels (embedding).
template <typename S>
class Network {
  struct Block {
    nn::Conv2d<S> conv1, conv2, shortcut;
    bool projection = false;
  };
  struct Head {
    nn::Conv2d<S> lat3, lat2, mix2, lat1, mix1, out;
  };

 public:
  struct BlockCache {
    nn::ConvCache<S> c1, c2, sc;
    Tensor3<S> h, out;
  };
  struct HeadCache {
    nn::ConvCache<S> lat3, lat2, mix2, lat1, mix1, out;
    Tensor3<S> u, u2, v, v2;
  };
  struct Cache {
    nn::ConvCache<S> stem;
    Tensor3<S> a0;
    std::array<BlockCache, 3> blocks;
    std::array<HeadCache, 2> heads;
    Tensor3<S> scores;
    int height = 0, width = 0;
  };

  explicit Network(const NetworkConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int in = 3 + (cfg_.coord_channels ? 2 : 0);
    const auto& w = cfg_.stage_widths;
    stem_ = nn::Conv2d<S>(params_, "backbone.stem", in, w[0], 3, 2);
    int prev = w[0];
    for (int s = 0; s < 3; ++s) {
      const int stride = s == 0 ? 1 : 2;
      const std::string name = "backbone.stage" + std::to_string(s + 1);
      Block& b = blocks_[s];
      b.conv1 = nn::Conv2d<S>(params_, name + ".conv1", prev, w[s], 3, stride);
      b.conv2 = nn::Conv2d<S>(params_, name + ".conv2", w[s], w[s], 3, 1);
      b.projection = stride != 1 || prev != w[s];
      if (b.projection)
        b.shortcut = nn::Conv2d<S>(params_, name + ".shortcut", prev, w[s], 1, stride);
      prev = w[s];
    }
    const int D = cfg_.decoder_width;
    const std::array<int, 2> outs{cfg_.num_classes + 1, cfg_.embedding_dim};
    const std::array<const char*, 2> names{"lnet", "enet"};
    for (int h = 0; h < 2; ++h) {
      const std::string n = names[h];
      Head& hd = heads_[h];
      hd.lat3 = nn::Conv2d<S>(params_, n + ".lat3", w[2], D, 1, 1);
      hd.lat2 = nn::Conv2d<S>(params_, n + ".lat2", w[1], D, 1, 1);
      hd.mix2 = nn::Conv2d<S>(params_, n + ".mix2", D, D, 3, 1);
      hd.lat1 = nn::Conv2d<S>(params_, n + ".lat1", w[0], D, 1, 1);
      hd.mix1 = nn::Conv2d<S>(params_, n + ".mix1", D, D, 3, 1);
      hd.out = nn::Conv2d<S>(params_, n + ".out", D, outs[h], 1, 1);
    }
    initialize(cfg_.init_seed);
  }

  const NetworkConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return params_; }
  const nn::ParamStore<S>& params() const { return params_; }
  nn::Gradients<S> zero_gradients() const { return params_.zeros_like(); }

  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    stem_.init_he(params_, rng);
    for (auto& b : blocks_) {
      b.conv1.init_he(params_, rng);
      b.conv2.init_he(params_, rng, 0.5);
      if (b.projection) b.shortcut.init_he(params_, rng, 0.5);
    }
    for (auto& h : heads_) {
      h.lat3.init_he(params_, rng);
      h.lat2.init_he(params_, rng);
      h.mix2.init_he(params_, rng);
      h.lat1.init_he(params_, rng);
      h.mix1.init_he(params_, rng);
      h.out.init_he(params_, rng, 0.5);
    }
  }

  NetworkOutput<S> forward(const Image& image, Cache* cache = nullptr) const {
    const int H = image.height(), W = image.width();
    if (image.channels() != 3) throw ShapeError("forward: expected 3 channels");
    if (H <= 0 || W <= 0 || H % NetworkConfig::kStride || W % NetworkConfig::kStride)
      throw ShapeError("forward: image " + std::to_string(H) + "x" +
                       std::to_string(W) + " not divisible by stride " +
                       std::to_string(NetworkConfig::kStride));
    Tensor3<S> x = make_input(image);
    Cache local;
    Cache& c = cache ? *cache : local;
    c.height = H;
    c.width = W;

    c.a0 = stem_.forward(params_, x, &c.stem);
    nn::relu_inplace(c.a0);
    const Tensor3<S>* prev = &c.a0;
    for (int s = 0; s < 3; ++s) {
      const Block& b = blocks_[s];
      BlockCache& bc = c.blocks[s];
      bc.h = b.conv1.forward(params_, *prev, &bc.c1);
      nn::relu_inplace(bc.h);
      bc.out = b.conv2.forward(params_, bc.h, &bc.c2);
      if (b.projection)
        nn::add_inplace(bc.out, b.shortcut.forward(params_, *prev, &bc.sc));
      else
        nn::add_inplace(bc.out, *prev);
      nn::relu_inplace(bc.out);
      prev = &bc.out;
    }

    NetworkOutput<S> out;
    std::array<Tensor3<S>, 2> raw;
    for (int h = 0; h < 2; ++h) raw[h] = head_forward(heads_[h], c, c.heads[h]);
    out.scores = nn::softmax_channels(raw[0]);
    out.embeddings = std::move(raw[1]);
    if (cache) c.scores = out.scores;
    return out;
  }

  // Backpropagates gradients w.r.t. the score probabilities and the
  // embeddings; accumulates parameter gradients into grads.
  void backward(const Cache& c, const Tensor3<S>& d_scores,
                const Tensor3<S>& d_embeddings, nn::Gradients<S>& grads) const {
    const auto& w = cfg_.stage_widths;
    std::array<Tensor3<S>, 3> d_stage{
        Tensor3<S>(w[0], c.height / 2, c.width / 2),
        Tensor3<S>(w[1], c.height / 4, c.width / 4),
        Tensor3<S>(w[2], c.height / 8, c.width / 8)};
    const Tensor3<S> d_logits = nn::softmax_backward(c.scores, d_scores);
    head_backward(heads_[0], c.heads[0], d_logits, d_stage, grads);
    head_backward(heads_[1], c.heads[1], d_embeddings, d_stage, grads);

    Tensor3<S> d = std::move(d_stage[2]);
    for (int s = 2; s >= 0; --s) {
      const Block& b = blocks_[s];
      const BlockCache& bc = c.blocks[s];
      nn::relu_backward_inplace(d, bc.out);
      Tensor3<S> dh = b.conv2.backward(params_, d, bc.c2, grads);
      nn::relu_backward_inplace(dh, bc.h);
      Tensor3<S> dprev = b.conv1.backward(params_, dh, bc.c1, grads);
      if (b.projection)
        nn::add_inplace(dprev, b.shortcut.backward(params_, d, bc.sc, grads));
      else
        nn::add_inplace(dprev, d);
      if (s > 0) {
        nn::add_inplace(dprev, d_stage[s - 1]);
      }
      d = std::move(dprev);
    }
    // d now holds the gradient w.r.t. the stem output (stage-1 skip
    // gradient was folded in at s == 1).
    nn::relu_backward_inplace(d, c.a0);
    stem_.backward(params_, d, c.stem, grads);
  }

 private:
  Tensor3<S> make_input(const Image& image) const {
    const int H = image.height(), W = image.width();
    const int C = 3 + (cfg_.coord_channels ? 2 : 0);
    Tensor3<S> x(C, H, W);
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < H; ++r)
        for (int col = 0; col < W; ++col) x(ch, r, col) = static_cast<S>(image(ch, r, col));
    if (cfg_.coord_channels)
      for (int r = 0; r < H; ++r)
        for (int col = 0; col < W; ++col) {
          x(3, r, col) = static_cast<S>((2.0 * r + 1.0) / H - 1.0);
          x(4, r, col) = static_cast<S>((2.0 * col + 1.0) / W - 1.0);
        }
    return x;
  }

  Tensor3<S> head_forward(const Head& hd, const Cache& c, HeadCache& hc) const {
    const Tensor3<S>& s1 = c.blocks[0].out;
    const Tensor3<S>& s2 = c.blocks[1].out;
    const Tensor3<S>& s3 = c.blocks[2].out;
    Tensor3<S> u = nn::upsample2x(hd.lat3.forward(params_, s3, &hc.lat3));
    nn::add_inplace(u, hd.lat2.forward(params_, s2, &hc.lat2));
    nn::relu_inplace(u);
    hc.u = u;
    hc.u2 = hd.mix2.forward(params_, hc.u, &hc.mix2);
    nn::relu_inplace(hc.u2);
    Tensor3<S> v = nn::upsample2x(hc.u2);
    nn::add_inplace(v, hd.lat1.forward(params_, s1, &hc.lat1));
    nn::relu_inplace(v);
    hc.v = v;
    hc.v2 = hd.mix1.forward(params_, hc.v, &hc.mix1);
    nn::relu_inplace(hc.v2);
    return nn::upsample2x(hd.out.forward(params_, hc.v2, &hc.out));
  }

  void head_backward(const Head& hd, const HeadCache& hc,
                     const Tensor3<S>& d_full, std::array<Tensor3<S>, 3>& d_stage,
                     nn::Gradients<S>& grads) const {
    Tensor3<S> d = nn::upsample2x_backward(d_full);
    d = hd.out.backward(params_, d, hc.out, grads);
    nn::relu_backward_inplace(d, hc.v2);
    d = hd.mix1.backward(params_, d, hc.mix1, grads);
    nn::relu_backward_inplace(d, hc.v);
    nn::add_inplace(d_stage[0], hd.lat1.backward(params_, d, hc.lat1, grads));
    d = nn::upsample2x_backward(d);
    nn::relu_backward_inplace(d, hc.u2);
    d = hd.mix2.backward(params_, d, hc.mix2, grads);
    nn::relu_backward_inplace(d, hc.u);
    nn::add_inplace(d_stage[1], hd.lat2.backward(params_, d, hc.lat2, grads));
    d = nn::upsample2x_backward(d);
    nn::add_inplace(d_stage[2], hd.lat3.backward(params_, d, hc.lat3, grads));
  }

  NetworkConfig cfg_;
  nn::ParamStore<S> params_;
  nn::Conv2d<S> stem_;
  std::array<Block, 3> blocks_;
  std::array<Head, 2> heads_;
};

}  // namespace wise
