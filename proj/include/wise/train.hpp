#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wise/config.hpp"
#include "wise/dataset.hpp"
#include "wise/enet.hpp"
#include "wise/eval.hpp"
#include "wise/inference.hpp"
#include "wise/lnet.hpp"
#include "wise/model.hpp"
#include "wise/optim.hpp"

namespace wise {

// Random streams derived from the run seed. Each iteration and each
// predicted scene owns an independent generator, which makes a resumed run
// reproduce the uninterrupted one without storing generator state.
enum SeedStream : std::uint64_t {
  kStreamScenes = 1,
  kStreamProposals = 2,
  kStreamIteration = 3,
  kStreamInit = 5,
  kStreamPredict = 6,
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline PredictOptions predict_options(std::uint64_t seed, const std::string& scene_id) {
  return {derive_seed(seed, kStreamPredict, fnv1a(scene_id))};
}

struct StepLosses {
  double location = 0.0;   // L_L
  double embedding = 0.0;  // L_E
  double joint = 0.0;      // L_W
  std::size_t pairs = 0;
};

// Gradient of the joint objective for one scene; parameters untouched.
inline StepLosses joint_gradient(const Network<float>& net, const DatasetEntry& entry,
                                 double lambda, Rng& rng, nn::Gradients<float>& grads) {
  typename Network<float>::Cache cache;
  const auto out = net.forward(entry.scene.image, &cache);
  const auto loc = location_loss(out.scores, entry.scene.points);
  const auto assignment = sample_pseudo_masks(entry.scene.points, entry.proposals,
                                              entry.scene.height(), entry.scene.width(), rng);
  const auto pairs = build_pairs(entry.scene.points, assignment, rng);
  const auto emb = embedding_loss(out.embeddings, pairs);

  StepLosses s;
  s.location = loc.total();
  s.embedding = emb.value;
  s.joint = wise_loss(s.location, s.embedding, lambda);
  s.pairs = pairs.pairs.size();
  if (!std::isfinite(s.joint)) return s;

  Tensor3<float> d_scores = loc.gradient;
  for (auto& v : d_scores.values()) v *= static_cast<float>(lambda);
  Tensor3<float> d_emb = emb.gradient;
  for (auto& v : d_emb.values()) v *= static_cast<float>(1.0 - lambda);
  for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
  net.backward(cache, d_scores, d_emb, grads);
  return s;
}

// Predicts every entry in one mode.
inline std::vector<InstanceSet> predict_entries(const Network<float>& net,
                                                const std::vector<const DatasetEntry*>& entries,
                                                PredictMode mode, std::uint64_t seed) {
  std::vector<InstanceSet> out;
  out.reserve(entries.size());
  for (const DatasetEntry* e : entries) {
    InstanceSet s = predict(net, e->scene.image, e->proposals, mode, &e->scene,
                            predict_options(seed, e->scene.scene_id));
    s.image_id = e->scene.scene_id;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<ImageEval> pair_with_ground_truth(
    const std::vector<const DatasetEntry*>& entries, const std::vector<InstanceSet>& preds) {
  std::vector<ImageEval> images;
  for (std::size_t i = 0; i < entries.size(); ++i)
    images.push_back({entries[i]->scene.scene_id, preds[i].instances,
                      entries[i]->scene.instances});
  return images;
}

// Fraction of scenes where the number of L-Net blobs equals the number of
// ground-truth objects.
inline double count_accuracy(const Network<float>& net,
                             const std::vector<const DatasetEntry*>& entries) {
  if (entries.empty()) return 0.0;
  int hits = 0;
  for (const DatasetEntry* e : entries) {
    const auto out = net.forward(e->scene.image);
    hits += extract_blobs(out.scores).count() ==
            static_cast<int>(e->scene.instances.size());
  }
  return double(hits) / entries.size();
}

struct TrainOptions {
  bool resume = false;
  // Called after each completed iteration (1-based) with its losses.
  std::function<void(int, const StepLosses&)> on_step;
};

struct TrainResult {
  int iterations = 0;
  double best_ap50 = -1.0;
  StepLosses last;
};

namespace detail {

inline void truncate_log(const std::filesystem::path& path, int keep) {
  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    std::string line;
    while (static_cast<int>(lines.size()) < keep && std::getline(in, line))
      lines.push_back(line);
  }
  if (static_cast<int>(lines.size()) != keep)
    throw IngestionError(path.string() + ": log has fewer lines than the checkpoint iteration");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

inline void write_nan_snapshot(const std::filesystem::path& path, int iteration,
                               const DatasetEntry& entry, const StepLosses& s) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : entry.scene.points)
    points.push_back({{"row", p.row}, {"col", p.col}, {"class_id", p.class_id}});
  auto num = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(std::to_string(v));
  };
  const nlohmann::json j = {{"iteration", iteration},
                            {"scene_id", entry.scene.scene_id},
                            {"l_l", num(s.location)},
                            {"l_e", num(s.embedding)},
                            {"l_w", num(s.joint)},
                            {"pairs", s.pairs},
                            {"points", points},
                            {"num_proposals", entry.proposals.size()}};
  write_text(path, j.dump(2) + "\n");
}

}  // namespace detail

// Trains on the "train" split with batch size one, validating on "val".
// Writes checkpoints/{last,best}.ckpt, train_log.jsonl and config.txt under
// cfg.out_dir.
inline TrainResult train(const RunConfig& cfg_in, const Dataset& ds,
                         const TrainOptions& opts = {}) {
  namespace fs = std::filesystem;
  RunConfig cfg = cfg_in;
  cfg.network.num_classes = ds.generator.num_classes;
  cfg.network.init_seed = derive_seed(cfg.seed, kStreamInit);
  cfg.validate();

  const auto train_set = ds.split("train");
  const auto val_set = ds.split("val");
  if (train_set.empty()) throw ConfigError("dataset has no training scenes");

  const fs::path out(cfg.out_dir);
  const fs::path ckpt_dir = out / "checkpoints";
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  if (ec) throw IngestionError("cannot create " + ckpt_dir.string() + ": " + ec.message());
  write_text(out / "config.txt", config_echo(cfg));

  Network<float> net(cfg.network);
  Adam<float> opt(cfg.adam, net.params());
  TrainResult res;
  int start = 0;
  const fs::path log_path = out / "train_log.jsonl";
  if (opts.resume && fs::exists(ckpt_dir / "last.ckpt")) {
    const Checkpoint ck = load_checkpoint(ckpt_dir / "last.ckpt");
    if (!(ck.network == cfg.network))
      throw ConfigError("checkpoint network configuration differs from the run");
    restore(ck, net, &opt);
    start = static_cast<int>(ck.iteration);
    res.best_ap50 = ck.best_ap50;
    detail::truncate_log(log_path, start);
  } else {
    std::ofstream(log_path, std::ios::trunc);
  }
  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) throw IngestionError("cannot write " + log_path.string());

  auto save = [&](const fs::path& path, int iteration) {
    Checkpoint ck = make_checkpoint(net, opt, iteration, res.best_ap50);
    ck.extra = {{"seed", cfg.seed}, {"lambda", cfg.lambda}};
    save_checkpoint(ck, path);
  };

  auto grads = net.zero_gradients();
  const auto t0 = std::chrono::steady_clock::now();
  for (int it = start; it < cfg.iterations; ++it) {
    Rng rng(derive_seed(cfg.seed, kStreamIteration, static_cast<std::uint64_t>(it)));
    const DatasetEntry& entry =
        *train_set[rng.uniform_int(0, static_cast<int>(train_set.size()) - 1)];
    const StepLosses s = joint_gradient(net, entry, cfg.lambda, rng, grads);
    if (!std::isfinite(s.joint)) {
      const fs::path snap = out / "nan_snapshot.json";
      detail::write_nan_snapshot(snap, it + 1, entry, s);
      throw NumericError("non-finite loss at iteration " + std::to_string(it + 1) +
                         " on " + entry.scene.scene_id + "; snapshot in " + snap.string());
    }
    opt.step(net.params(), grads);
    res.last = s;
    const int done = it + 1;

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json line = {{"iter", done},        {"scene_id", entry.scene.scene_id},
                           {"l_l", s.location},   {"l_e", s.embedding},
                           {"l_w", s.joint},      {"elapsed_s", elapsed}};

    const bool last_iter = done == cfg.iterations;
    if (cfg.val_every > 0 && !val_set.empty() && (done % cfg.val_every == 0 || last_iter)) {
      const auto preds = predict_entries(net, val_set, PredictMode::kWiseRefined, cfg.seed);
      const auto images = pair_with_ground_truth(val_set, preds);
      std::size_t n_gt = 0;
      for (const auto& im : images) n_gt += im.gts.size();
      if (n_gt > 0) {
        const EvalReport rep = evaluate(images);
        nlohmann::json v = to_json(rep);
        v["count_accuracy"] = count_accuracy(net, val_set);
        line["val"] = v;
        if (rep.ap.at(0.5) > res.best_ap50) {
          res.best_ap50 = rep.ap.at(0.5);
          save(ckpt_dir / "best.ckpt", done);
        }
      }
    }
    log << line.dump() << '\n';
    log.flush();
    if ((cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || last_iter)
      save(ckpt_dir / "last.ckpt", done);
    if (opts.on_step) opts.on_step(done, s);
    res.iterations = done;
  }
  if (start >= cfg.iterations) res.iterations = start;
  return res;
}

}  // namespace wise
