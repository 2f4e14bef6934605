#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wise/png_io.hpp"
#include "wise/proposals.hpp"
#include "wise/rle.hpp"
#include "wise/scene.hpp"

namespace wise {

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetEntry {
  SceneSample scene;
  ProposalSet proposals;
  std::string split = "train";
  bool operator==(const DatasetEntry&) const = default;
};

struct Dataset {
  GeneratorConfig generator;
  ProposalConfig proposal;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> split(const std::string& name) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

// ---- JSON conversions ------------------------------------------------------

inline nlohmann::json to_json(const RleMask& rle) {
  return {{"height", rle.height}, {"width", rle.width}, {"runs", rle.runs}};
}

inline RleMask rle_from_json(const nlohmann::json& j) {
  RleMask rle;
  rle.height = j.at("height").get<int>();
  rle.width = j.at("width").get<int>();
  rle.runs = j.at("runs").get<std::vector<std::int64_t>>();
  return rle;
}

inline nlohmann::json to_json(const GeneratorConfig& g) {
  return {{"height", g.height},
          {"width", g.width},
          {"num_classes", g.num_classes},
          {"min_objects", g.min_objects},
          {"max_objects", g.max_objects},
          {"min_radius", g.min_radius},
          {"max_radius", g.max_radius},
          {"min_gap", g.min_gap},
          {"noise_sigma", g.noise_sigma},
          {"texture_amplitude", g.texture_amplitude},
          {"hue_jitter", g.hue_jitter},
          {"occlusion", g.occlusion}};
}

inline GeneratorConfig generator_from_json(const nlohmann::json& j) {
  GeneratorConfig g;
  g.height = j.at("height");
  g.width = j.at("width");
  g.num_classes = j.at("num_classes");
  g.min_objects = j.at("min_objects");
  g.max_objects = j.at("max_objects");
  g.min_radius = j.at("min_radius");
  g.max_radius = j.at("max_radius");
  g.min_gap = j.at("min_gap");
  g.noise_sigma = j.at("noise_sigma");
  g.texture_amplitude = j.at("texture_amplitude");
  g.hue_jitter = j.at("hue_jitter");
  g.occlusion = j.at("occlusion");
  return g;
}

inline nlohmann::json to_json(const ProposalConfig& p) {
  return {{"proposals_per_object", p.proposals_per_object},
          {"min_iou", p.min_iou},
          {"max_iou", p.max_iou},
          {"distractors", p.distractors},
          {"objectness_noise", p.objectness_noise},
          {"jitter", p.jitter}};
}

inline ProposalConfig proposal_from_json(const nlohmann::json& j) {
  ProposalConfig p;
  p.proposals_per_object = j.at("proposals_per_object");
  p.min_iou = j.at("min_iou");
  p.max_iou = j.at("max_iou");
  p.distractors = j.at("distractors");
  p.objectness_noise = j.at("objectness_noise");
  p.jitter = j.at("jitter");
  return p;
}

inline nlohmann::json annotations_to_json(const SceneSample& s) {
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& i : s.instances)
    inst.push_back({{"class_id", i.class_id}, {"mask", to_json(encode_rle(i.mask))}});
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : s.points)
    pts.push_back({{"row", p.row}, {"col", p.col}, {"class_id", p.class_id}});
  return {{"scene_id", s.scene_id},
          {"height", s.height()},
          {"width", s.width()},
          {"instances", inst},
          {"points", pts}};
}

inline nlohmann::json proposals_to_json(const std::string& scene_id,
                                        const ProposalSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : set.proposals)
    arr.push_back({{"objectness", p.objectness}, {"mask", to_json(encode_rle(p.mask))}});
  return {{"scene_id", scene_id}, {"proposals", arr}};
}

// ---- Files -------------------------------------------------------------------

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << text;
  if (!out) throw IngestionError("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("missing file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "annotations", "proposals"}) {
    fs::create_directories(dir / sub, ec);
    if (ec)
      throw IngestionError("cannot create " + (dir / sub).string() + ": " +
                           ec.message());
  }
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& e : ds.entries) {
    const auto& id = e.scene.scene_id;
    write_png((dir / "images" / (id + ".png")).string(), to_rgb8(e.scene.image));
    write_text(dir / "annotations" / (id + ".json"),
               annotations_to_json(e.scene).dump());
    write_text(dir / "proposals" / (id + ".json"),
               proposals_to_json(id, e.proposals).dump());
    scenes.push_back({{"id", id}, {"split", e.split}});
  }
  nlohmann::json manifest = {
      {"schema_version", kDatasetSchemaVersion},
      {"seed", ds.seed},
      {"config", {{"generator", to_json(ds.generator)},
                  {"proposals", to_json(ds.proposal)}}},
      {"scenes", scenes}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Loads one scene's files. Any failure names the offending file.
inline DatasetEntry load_entry(const std::filesystem::path& dir,
                               const std::string& id,
                               const std::string& split) {
  DatasetEntry e;
  e.split = split;
  e.scene.scene_id = id;
  const auto img_path = dir / "images" / (id + ".png");
  e.scene.image = from_rgb8(read_png(img_path.string()));

  const auto ann_path = dir / "annotations" / (id + ".json");
  const auto ann = read_json(ann_path);
  try {
    for (const auto& ij : ann.at("instances")) {
      Instance inst;
      inst.class_id = ij.at("class_id");
      inst.mask = decode_rle(rle_from_json(ij.at("mask")));
      e.scene.instances.push_back(std::move(inst));
    }
    for (const auto& pj : ann.at("points"))
      e.scene.points.push_back(
          {pj.at("row").get<int>(), pj.at("col").get<int>(),
           pj.at("class_id").get<int>()});
  } catch (const Error& err) {
    throw FormatError(ann_path.string() + ": " + err.what());
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(ann_path.string() + ": " + err.what());
  }

  const auto prop_path = dir / "proposals" / (id + ".json");
  const auto pj = read_json(prop_path);
  try {
    for (const auto& p : pj.at("proposals"))
      e.proposals.proposals.push_back(
          {decode_rle(rle_from_json(p.at("mask"))), p.at("objectness").get<double>()});
  } catch (const Error& err) {
    throw FormatError(prop_path.string() + ": " + err.what());
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(prop_path.string() + ": " + err.what());
  }
  return e;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto manifest = read_json(manifest_path);
  Dataset ds;
  try {
    const int version = manifest.at("schema_version");
    if (version != kDatasetSchemaVersion)
      throw IngestionError(manifest_path.string() + ": schema version " +
                           std::to_string(version) + " (expected " +
                           std::to_string(kDatasetSchemaVersion) + ")");
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.generator = generator_from_json(manifest.at("config").at("generator"));
    ds.proposal = proposal_from_json(manifest.at("config").at("proposals"));
  } catch (const nlohmann::json::exception& err) {
    throw IngestionError(manifest_path.string() + ": " + err.what());
  }
  for (const auto& s : manifest.at("scenes"))
    ds.entries.push_back(load_entry(dir, s.at("id").get<std::string>(),
                                    s.at("split").get<std::string>()));
  return ds;
}

// Builds a dataset deterministically from a seed: scene i of the corpus
// uses seeds derived from (seed, i) so scenes are independent.
inline Dataset make_dataset(std::uint64_t seed, int n_train, int n_val,
                            const GeneratorConfig& gen,
                            const ProposalConfig& prop) {
  gen.validate();
  prop.validate();
  if (n_train < 0 || n_val < 0) throw ConfigError("negative scene count");
  Dataset ds{gen, prop, seed, {}};
  const int total = n_train + n_val;
  for (int i = 0; i < total; ++i) {
    DatasetEntry e;
    e.scene = generate_scene(derive_seed(seed, 1, i), gen, scene_name(i));
    e.proposals = synthesize_proposals(e.scene, derive_seed(seed, 2, i), prop);
    e.split = i < n_train ? "train" : "val";
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

}  // namespace wise
