#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wise/config.hpp"
#include "wise/dataset.hpp"
#include "wise/eval.hpp"
#include "wise/inference.hpp"
#include "wise/optim.hpp"
#include "wise/png_io.hpp"
#include "wise/rle.hpp"
#include "wise/train.hpp"

// Implementations behind the `wise` command-line subcommands.
namespace wise {

// ---- Prediction dumps ------------------------------------------------------

inline nlohmann::json prediction_to_json(const InstanceSet& set, const std::string& mode,
                                         int height, int width) {
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& p : set.instances)
    inst.push_back({{"class_id", p.class_id},
                    {"score", p.score},
                    {"seed", {{"row", p.seed.row}, {"col", p.seed.col}}},
                    {"mask", to_json(encode_rle(p.mask))}});
  return {{"image_id", set.image_id}, {"mode", mode},           {"height", height},
          {"width", width},           {"fallbacks", set.fallbacks}, {"instances", inst}};
}

struct PredictionDump {
  std::string mode;
  InstanceSet set;
};

inline PredictionDump prediction_from_json(const nlohmann::json& j, const std::string& source) {
  PredictionDump d;
  try {
    d.mode = j.at("mode");
    d.set.image_id = j.at("image_id");
    d.set.fallbacks = j.value("fallbacks", 0);
    const int H = j.at("height"), W = j.at("width");
    for (const auto& ij : j.at("instances")) {
      PredictedInstance p;
      p.class_id = ij.at("class_id");
      p.score = ij.at("score");
      p.seed = {ij.at("seed").at("row").get<int>(), ij.at("seed").at("col").get<int>()};
      p.mask = decode_rle(rle_from_json(ij.at("mask")));
      if (p.mask.height() != H || p.mask.width() != W)
        throw FormatError("mask shape differs from image shape");
      d.set.instances.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": " + e.what());
  } catch (const Error& e) {
    throw FormatError(source + ": " + e.what());
  }
  return d;
}

// ---- Overlays --------------------------------------------------------------

// Saturated colour for instance i; never gray, so instance pixels can be
// told apart from the grayscale backdrop.
inline std::array<std::uint8_t, 3> instance_color(std::size_t i) {
  const double hue = std::fmod(0.618033988749895 * static_cast<double>(i), 1.0);
  const auto rgb = detail::hsv_to_rgb(hue, 0.9, 0.95);
  return {static_cast<std::uint8_t>(std::lround(rgb[0] * 255.0)),
          static_cast<std::uint8_t>(std::lround(rgb[1] * 255.0)),
          static_cast<std::uint8_t>(std::lround(rgb[2] * 255.0))};
}

// Side-by-side panel: the input with seed crosses on the left; on the
// right, instance masks in solid colours over a grayscale copy.
// Later instances paint over earlier ones where masks overlap.
inline Rgb8 render_overlay(const Image& image, const InstanceSet& set) {
  const int H = image.height(), W = image.width();
  const Rgb8 src = to_rgb8(image);
  Rgb8 out{H, 2 * W, std::vector<std::uint8_t>(static_cast<std::size_t>(H) * 2 * W * 3)};
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const std::uint8_t* s = src.at(r, c);
      std::copy(s, s + 3, out.at(r, c));
      const auto gray = static_cast<std::uint8_t>(
          std::lround(0.299 * s[0] + 0.587 * s[1] + 0.114 * s[2]));
      std::uint8_t* d = out.at(r, W + c);
      d[0] = d[1] = d[2] = gray;
    }
  for (std::size_t i = 0; i < set.instances.size(); ++i) {
    const auto color = instance_color(i);
    const auto& m = set.instances[i].mask;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        if (m(r, c)) std::copy(color.begin(), color.end(), out.at(r, W + c));
    const Pixel s = set.instances[i].seed;
    for (int k = -2; k <= 2; ++k)
      for (const Pixel q : {Pixel{s.row + k, s.col}, Pixel{s.row, s.col + k}})
        if (q.row >= 0 && q.col >= 0 && q.row < H && q.col < W)
          std::copy(color.begin(), color.end(), out.at(q.row, q.col));
  }
  return out;
}

// ---- Subcommands -----------------------------------------------------------

inline Dataset cmd_make_dataset(const RunConfig& cfg) {
  cfg.generator.validate();
  cfg.proposals.validate();
  const Dataset ds =
      make_dataset(cfg.seed, cfg.n_train, cfg.n_val, cfg.generator, cfg.proposals);
  save_dataset(ds, cfg.out_dir);
  return ds;
}

inline TrainResult cmd_train(const RunConfig& cfg, bool resume = false) {
  if (cfg.dataset_dir.empty()) throw ConfigError("train: no dataset given");
  const Dataset ds = load_dataset(cfg.dataset_dir);
  TrainOptions opts;
  opts.resume = resume;
  return train(cfg, ds, opts);
}

struct PredictRequest {
  std::string checkpoint;
  std::string dataset_dir;
  std::string split = "val";
  std::vector<PredictMode> modes;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool overlays = true;
};

// Writes predictions/<mode>/<id>.json and overlays/<mode>/<id>.png.
// Returns the number of dumps written.
inline std::size_t cmd_predict(const PredictRequest& req) {
  namespace fs = std::filesystem;
  if (req.modes.empty()) throw ConfigError("predict: no mode given");
  const Checkpoint ck = load_checkpoint(req.checkpoint);
  const Dataset ds = load_dataset(req.dataset_dir);
  if (ck.network.num_classes != ds.generator.num_classes)
    throw ConfigError("predict: checkpoint has " + std::to_string(ck.network.num_classes) +
                      " classes, dataset has " + std::to_string(ds.generator.num_classes));
  Network<float> net(ck.network);
  restore(ck, net);
  const auto entries = ds.split(req.split);

  std::size_t written = 0;
  for (PredictMode mode : req.modes) {
    std::error_code ec;
    fs::create_directories(fs::path(req.out_dir) / "predictions" / mode_name(mode), ec);
    if (req.overlays)
      fs::create_directories(fs::path(req.out_dir) / "overlays" / mode_name(mode), ec);
    if (ec) throw IngestionError("cannot create output directories under " + req.out_dir);
  }
  for (const DatasetEntry* e : entries) {
    const auto out = net.forward(e->scene.image);
    for (PredictMode mode : req.modes) {
      const std::string name = mode_name(mode);
      InstanceSet s = predict_from_outputs(out.scores, out.embeddings, e->proposals, mode,
                                           &e->scene,
                                           predict_options(req.seed, e->scene.scene_id));
      s.image_id = e->scene.scene_id;
      const fs::path base(req.out_dir);
      write_text(base / "predictions" / name / (s.image_id + ".json"),
                 prediction_to_json(s, name, e->scene.height(), e->scene.width()).dump() +
                     "\n");
      if (req.overlays)
        write_png((base / "overlays" / name / (s.image_id + ".png")).string(),
                  render_overlay(e->scene.image, s));
      ++written;
    }
  }
  return written;
}

struct EvaluateRequest {
  std::string predictions_dir;
  std::string dataset_dir;
  std::string split = "val";
  std::string out_dir;
};

struct EvaluateResult {
  std::map<std::string, EvalReport> reports;  // by mode
  nlohmann::json json;
  std::string table;
};

namespace detail {

inline std::vector<std::filesystem::path> json_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Evaluates prediction dumps against the ground truth of one split.
// `predictions_dir` is either a directory of dumps for one mode or a
// directory of per-mode subdirectories. Writes report.json to out_dir.
inline EvaluateResult cmd_evaluate(const EvaluateRequest& req) {
  namespace fs = std::filesystem;
  const fs::path root(req.predictions_dir);
  if (!fs::is_directory(root))
    throw IngestionError("predictions directory not found: " + root.string());
  std::vector<fs::path> groups;
  if (!detail::json_files(root).empty()) {
    groups.push_back(root);
  } else {
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) groups.push_back(e.path());
    std::sort(groups.begin(), groups.end());
  }

  const Dataset ds = load_dataset(req.dataset_dir);
  std::map<std::string, const DatasetEntry*> by_id;
  for (const DatasetEntry* e : ds.split(req.split)) by_id[e->scene.scene_id] = e;

  EvaluateResult res;
  for (const auto& dir : groups) {
    std::map<std::string, PredictionDump> dumps;
    std::string mode;
    for (const auto& f : detail::json_files(dir)) {
      PredictionDump d = prediction_from_json(read_json(f), f.string());
      if (!mode.empty() && d.mode != mode)
        throw FormatError(f.string() + ": mode '" + d.mode + "' mixed with '" + mode + "'");
      mode = d.mode;
      const std::string id = d.set.image_id;
      if (!dumps.emplace(id, std::move(d)).second)
        throw FormatError(f.string() + ": duplicate image id " + id);
    }
    if (mode.empty()) mode = dir.filename().string();

    std::vector<std::string> missing, unknown;
    for (const auto& [id, e] : by_id)
      if (!dumps.count(id)) missing.push_back(id);
    for (const auto& [id, d] : dumps)
      if (!by_id.count(id)) unknown.push_back(id);
    if (!missing.empty() || !unknown.empty()) {
      std::string msg = "image ids do not match split '" + req.split + "' in " + dir.string();
      auto list = [](const std::vector<std::string>& ids) {
        std::string s;
        for (const auto& id : ids) s += (s.empty() ? "" : ",") + id;
        return s;
      };
      if (!missing.empty()) msg += "; missing: " + list(missing);
      if (!unknown.empty()) msg += "; unknown: " + list(unknown);
      throw IngestionError(msg);
    }

    std::vector<ImageEval> images;
    for (const auto& [id, e] : by_id) {
      const auto& inst = dumps.at(id).set.instances;
      for (const auto& p : inst)
        if (p.mask.height() != e->scene.height() || p.mask.width() != e->scene.width())
          throw FormatError("prediction for " + id + " has the wrong image size");
      images.push_back({id, inst, e->scene.instances});
    }
    if (res.reports.count(mode)) throw FormatError("mode '" + mode + "' evaluated twice");
    res.reports[mode] = evaluate(std::move(images));
  }

  nlohmann::json modes = nlohmann::json::object();
  res.table = format_table_header() + "\n";
  for (const auto& [mode, rep] : res.reports) {
    modes[mode] = to_json(rep);
    res.table += format_table_row(mode, rep) + "\n";
  }
  res.json = {{"split", req.split}, {"modes", modes}};
  if (!req.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(req.out_dir, ec);
    write_text(fs::path(req.out_dir) / "report.json", res.json.dump(2) + "\n");
  }
  return res;
}

}  // namespace wise
