#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/model.hpp"
#include "wise/optim.hpp"
#include "wise/proposals.hpp"
#include "wise/scene.hpp"

namespace wise {

// Everything a run needs. The number of classes is not configurable here:
// training reads it from the dataset manifest.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string dataset_dir;
  std::string out_dir = "run";

  // make-dataset
  int n_train = 500;
  int n_val = 100;
  GeneratorConfig generator;
  ProposalConfig proposals;

  // model + training
  NetworkConfig network;
  AdamConfig adam;
  double lambda = 0.1;
  int iterations = 20000;
  int batch_size = 1;
  int val_every = 1000;
  int checkpoint_every = 1000;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (batch_size != 1) throw ConfigError("only batch_size = 1 is supported");
    if (val_every < 0 || checkpoint_every < 0)
      throw ConfigError("val_every and checkpoint_every must be >= 0");
    if (n_train < 0 || n_val < 0) throw ConfigError("scene counts must be >= 0");
    adam.validate();
    network.validate();
    generator.validate();
    proposals.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("invalid value for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define WISE_INT_KEY(NAME, FIELD)                                                  \
  ConfigKey {                                                                      \
    NAME, [](RunConfig& c, const std::string& v) {                                 \
      c.FIELD = parse_number<decltype(c.FIELD)>(NAME, v);                          \
    },                                                                             \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                 \
  }
#define WISE_REAL_KEY(NAME, FIELD)                                                 \
  ConfigKey {                                                                      \
    NAME, [](RunConfig& c, const std::string& v) {                                 \
      c.FIELD = parse_number<double>(NAME, v);                                     \
    },                                                                             \
        [](const RunConfig& c) { return format_double(c.FIELD); }                  \
  }
#define WISE_BOOL_KEY(NAME, FIELD)                                                 \
  ConfigKey {                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); }, \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); } \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      WISE_INT_KEY("seed", seed),
      ConfigKey{"dataset_dir", [](RunConfig& c, const std::string& v) { c.dataset_dir = v; },
                [](const RunConfig& c) { return c.dataset_dir; }},
      ConfigKey{"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                [](const RunConfig& c) { return c.out_dir; }},
      WISE_INT_KEY("dataset.n_train", n_train),
      WISE_INT_KEY("dataset.n_val", n_val),
      WISE_INT_KEY("generator.height", generator.height),
      WISE_INT_KEY("generator.width", generator.width),
      WISE_INT_KEY("generator.num_classes", generator.num_classes),
      WISE_INT_KEY("generator.min_objects", generator.min_objects),
      WISE_INT_KEY("generator.max_objects", generator.max_objects),
      WISE_INT_KEY("generator.min_radius", generator.min_radius),
      WISE_INT_KEY("generator.max_radius", generator.max_radius),
      WISE_INT_KEY("generator.min_gap", generator.min_gap),
      WISE_REAL_KEY("generator.noise_sigma", generator.noise_sigma),
      WISE_REAL_KEY("generator.texture_amplitude", generator.texture_amplitude),
      WISE_REAL_KEY("generator.hue_jitter", generator.hue_jitter),
      WISE_BOOL_KEY("generator.occlusion", generator.occlusion),
      WISE_INT_KEY("proposals.per_object", proposals.proposals_per_object),
      WISE_REAL_KEY("proposals.min_iou", proposals.min_iou),
      WISE_REAL_KEY("proposals.max_iou", proposals.max_iou),
      WISE_INT_KEY("proposals.distractors", proposals.distractors),
      WISE_REAL_KEY("proposals.objectness_noise", proposals.objectness_noise),
      WISE_BOOL_KEY("proposals.jitter", proposals.jitter),
      WISE_INT_KEY("network.embedding_dim", network.embedding_dim),
      ConfigKey{"network.stage_widths",
                [](RunConfig& c, const std::string& v) {
                  std::stringstream ss(v);
                  std::string item;
                  std::vector<int> w;
                  while (std::getline(ss, item, ','))
                    w.push_back(parse_number<int>("network.stage_widths", trim(item)));
                  if (w.size() != 3)
                    throw ConfigError("network.stage_widths needs three comma-separated values");
                  c.network.stage_widths = {w[0], w[1], w[2]};
                },
                [](const RunConfig& c) {
                  const auto& w = c.network.stage_widths;
                  return std::to_string(w[0]) + "," + std::to_string(w[1]) + "," +
                         std::to_string(w[2]);
                }},
      WISE_INT_KEY("network.decoder_width", network.decoder_width),
      WISE_BOOL_KEY("network.coord_channels", network.coord_channels),
      WISE_REAL_KEY("train.lambda", lambda),
      WISE_REAL_KEY("train.lr", adam.lr),
      WISE_REAL_KEY("train.weight_decay", adam.weight_decay),
      WISE_REAL_KEY("train.beta1", adam.beta1),
      WISE_REAL_KEY("train.beta2", adam.beta2),
      WISE_REAL_KEY("train.eps", adam.eps),
      WISE_INT_KEY("train.iterations", iterations),
      WISE_INT_KEY("train.batch_size", batch_size),
      WISE_INT_KEY("train.val_every", val_every),
      WISE_INT_KEY("train.checkpoint_every", checkpoint_every),
  };
  return keys;
}

#undef WISE_INT_KEY
#undef WISE_REAL_KEY
#undef WISE_BOOL_KEY

}  // namespace detail

// Applies one key/value pair; unknown keys are an error.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

// Parses `key = value` lines; '#' starts a comment. Keys may appear once.
inline void parse_config_text(RunConfig& cfg, const std::string& text,
                              const std::string& source = "<config>") {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, int> seen;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      throw ConfigError(where + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(it->second) + ")");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  parse_config_text(cfg, ss.str(), path.string());
  return cfg;
}

// Full resolved configuration, one key per line, re-parsable.
inline std::string config_echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace wise
