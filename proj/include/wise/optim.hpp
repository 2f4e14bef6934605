#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wise/core.hpp"
#include "wise/model.hpp"

namespace wise {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // L2 penalty folded into the gradient

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("optimizer: betas must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be > 0");
    if (weight_decay < 0.0) throw ConfigError("optimizer: negative weight_decay");
  }
};

template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(const AdamConfig& cfg, const nn::ParamStore<S>& params) : cfg_(cfg) {
    cfg_.validate();
    m_ = params.zeros_like();
    v_ = params.zeros_like();
  }

  void step(nn::ParamStore<S>& params, const nn::Gradients<S>& grads) {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double step = cfg_.lr * std::sqrt(c2) / c1;
    const double eps_hat = cfg_.eps * std::sqrt(c2);
    for (std::size_t k = 0; k < grads.size(); ++k) {
      auto& w = params[static_cast<int>(k)].value;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = static_cast<double>(grads[k][i]) + cfg_.weight_decay * w[i];
        m[i] = static_cast<S>(b1 * m[i] + (1.0 - b1) * g);
        v[i] = static_cast<S>(b2 * v[i] + (1.0 - b2) * g * g);
        w[i] -= static_cast<S>(step * m[i] / (std::sqrt(static_cast<double>(v[i])) + eps_hat));
      }
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }
  std::vector<Buffer<S>>& first_moment() { return m_; }
  std::vector<Buffer<S>>& second_moment() { return v_; }
  const std::vector<Buffer<S>>& first_moment() const { return m_; }
  const std::vector<Buffer<S>>& second_moment() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Buffer<S>> m_, v_;
  std::int64_t t_ = 0;
};

// ---- Checkpoints -----------------------------------------------------------
//
// Layout: 8-byte magic "WISECKPT", uint32 format version, uint64 header
// length, UTF-8 JSON header, then float32 payload: parameters, Adam first
// moments, Adam second moments, each in header tensor order. Integers are
// little-endian.

inline constexpr char kCheckpointMagic[8] = {'W', 'I', 'S', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const NetworkConfig& c) {
  return {{"num_classes", c.num_classes},
          {"embedding_dim", c.embedding_dim},
          {"stage_widths", c.stage_widths},
          {"decoder_width", c.decoder_width},
          {"coord_channels", c.coord_channels},
          {"init_seed", c.init_seed}};
}

inline NetworkConfig network_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.num_classes = j.at("num_classes");
  c.embedding_dim = j.at("embedding_dim");
  c.stage_widths = j.at("stage_widths").get<std::array<int, 3>>();
  c.decoder_width = j.at("decoder_width");
  c.coord_channels = j.at("coord_channels");
  c.init_seed = j.at("init_seed");
  return c;
}

struct Checkpoint {
  NetworkConfig network;
  AdamConfig adam;
  std::int64_t iteration = 0;
  std::int64_t adam_steps = 0;
  double best_ap50 = -1.0;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<Buffer<float>> params, m, v;
};

inline Checkpoint make_checkpoint(const Network<float>& net, const Adam<float>& opt,
                                  std::int64_t iteration, double best_ap50) {
  Checkpoint ck;
  ck.network = net.config();
  ck.adam = opt.config();
  ck.iteration = iteration;
  ck.adam_steps = opt.steps();
  ck.best_ap50 = best_ap50;
  for (const auto& t : net.params().tensors()) {
    ck.names.push_back(t.name);
    ck.shapes.push_back(t.shape);
    ck.params.push_back(t.value);
  }
  ck.m = opt.first_moment();
  ck.v = opt.second_moment();
  return ck;
}

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw FormatError(path + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < ck.names.size(); ++i)
    tensors.push_back({{"name", ck.names[i]}, {"shape", ck.shapes[i]}});
  const nlohmann::json header = {
      {"network", to_json(ck.network)},
      {"optimizer",
       {{"lr", ck.adam.lr},
        {"beta1", ck.adam.beta1},
        {"beta2", ck.adam.beta2},
        {"eps", ck.adam.eps},
        {"weight_decay", ck.adam.weight_decay},
        {"steps", ck.adam_steps}}},
      {"iteration", ck.iteration},
      {"best_ap50", ck.best_ap50},
      {"extra", ck.extra},
      {"tensors", tensors}};
  const std::string text = header.dump();

  // Write to a sibling temp file and rename, so an interrupted save never
  // leaves a truncated checkpoint behind.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    detail::write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* block : {&ck.params, &ck.m, &ck.v})
      for (const auto& t : *block)
        for (float f : t) detail::write_pod<float>(out, f);
    if (!out) throw IngestionError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IngestionError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("missing checkpoint: " + p);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError(p + ": not a checkpoint file");
  const auto version = detail::read_pod<std::uint32_t>(in, p);
  if (version != kCheckpointVersion)
    throw FormatError(p + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = detail::read_pod<std::uint64_t>(in, p);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw FormatError(p + ": truncated header");
  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(text);
    ck.network = network_from_json(h.at("network"));
    const auto& o = h.at("optimizer");
    ck.adam = {o.at("lr"), o.at("beta1"), o.at("beta2"), o.at("eps"), o.at("weight_decay")};
    ck.adam_steps = o.at("steps");
    ck.iteration = h.at("iteration");
    ck.best_ap50 = h.at("best_ap50");
    ck.extra = h.value("extra", nlohmann::json::object());
    for (const auto& t : h.at("tensors")) {
      ck.names.push_back(t.at("name"));
      ck.shapes.push_back(t.at("shape").get<std::vector<int>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p + ": bad header: " + e.what());
  }
  for (auto* block : {&ck.params, &ck.m, &ck.v})
    for (const auto& shape : ck.shapes) {
      std::size_t n = 1;
      for (int d : shape) n *= static_cast<std::size_t>(d);
      Buffer<float> t(n);
      for (auto& f : t) f = detail::read_pod<float>(in, p);
      block->push_back(std::move(t));
    }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(p + ": trailing bytes after payload");
  return ck;
}

// Restores network weights (and, if given, optimizer state) from a
// checkpoint. Tensor names and shapes must match the network exactly.
inline void restore(const Checkpoint& ck, Network<float>& net, Adam<float>* opt = nullptr) {
  auto& tensors = net.params().tensors();
  if (tensors.size() != ck.names.size())
    throw FormatError("checkpoint has " + std::to_string(ck.names.size()) +
                      " tensors, network expects " + std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != ck.names[i] || tensors[i].shape != ck.shapes[i])
      throw FormatError("checkpoint tensor mismatch at " + tensors[i].name);
    tensors[i].value = ck.params[i];
  }
  if (opt) {
    *opt = Adam<float>(ck.adam, net.params());
    opt->first_moment() = ck.m;
    opt->second_moment() = ck.v;
    opt->set_steps(ck.adam_steps);
  }
}

}  // namespace wise
