// wise: command-line front end for dataset generation, training,
// prediction and evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wise/commands.hpp"

namespace {

int fail(const std::string& category, const std::string& msg) {
  std::string line = msg;
  for (char& c : line)
    if (c == '\n') c = ' ';
  std::fprintf(stderr, "wise: error: %s: %s\n", category.c_str(), line.c_str());
  return category == "usage" ? 2 : 1;
}

wise::RunConfig base_config(const std::string& path) {
  return path.empty() ? wise::RunConfig{} : wise::load_config(path);
}

std::vector<std::string> mode_choices() {
  std::vector<std::string> names{"all"};
  for (auto m : wise::kAllModes) names.push_back(wise::mode_name(m));
  return names;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-supervised instance segmentation: synthetic data, training, "
               "prediction and evaluation."};
  app.require_subcommand(1);

  std::string config_path, out;
  std::optional<std::uint64_t> seed;

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "Generate a synthetic scene dataset");
  std::optional<int> n_train, n_val;
  mk->add_option("--config", config_path, "key = value configuration file");
  mk->add_option("--seed", seed, "Dataset seed");
  mk->add_option("--out", out, "Output dataset directory")->required();
  mk->add_option("--n-train", n_train, "Number of training scenes");
  mk->add_option("--n-val", n_val, "Number of validation scenes");

  // train
  auto* tr = app.add_subcommand("train", "Train the network on a dataset");
  std::string dataset;
  std::optional<int> iterations;
  bool resume = false;
  tr->add_option("--config", config_path, "key = value configuration file");
  tr->add_option("--seed", seed, "Run seed");
  tr->add_option("--out", out, "Run directory (checkpoints, logs)");
  tr->add_option("--dataset", dataset, "Dataset directory");
  tr->add_option("--iterations", iterations, "Number of iterations");
  tr->add_flag("--resume", resume, "Continue from <out>/checkpoints/last.ckpt");

  // predict
  auto* pr = app.add_subcommand("predict", "Write prediction dumps and overlays");
  wise::PredictRequest preq;
  std::vector<std::string> modes;
  bool no_overlays = false;
  pr->add_option("--config", config_path, "key = value configuration file");
  pr->add_option("--checkpoint", preq.checkpoint, "Checkpoint file")->required();
  pr->add_option("--dataset", preq.dataset_dir, "Dataset directory");
  pr->add_option("--mode", modes, "Prediction mode(s), or 'all'")
      ->required()
      ->check(CLI::IsMember(mode_choices()));
  pr->add_option("--split", preq.split, "Dataset split")->capture_default_str();
  pr->add_option("--seed", seed, "Seed for background-seed clustering");
  pr->add_option("--out", out, "Output directory")->required();
  pr->add_flag("--no-overlays", no_overlays, "Skip overlay rendering");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score prediction dumps against ground truth");
  wise::EvaluateRequest ereq;
  ev->add_option("--config", config_path, "key = value configuration file");
  ev->add_option("--predictions", ereq.predictions_dir, "Prediction directory")->required();
  ev->add_option("--dataset", ereq.dataset_dir, "Dataset directory");
  ev->add_option("--split", ereq.split, "Dataset split")->capture_default_str();
  ev->add_option("--out", out, "Directory for report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    wise::RunConfig cfg = base_config(config_path);
    if (seed) cfg.seed = *seed;

    if (*mk) {
      cfg.out_dir = out;
      if (n_train) cfg.n_train = *n_train;
      if (n_val) cfg.n_val = *n_val;
      const auto ds = wise::cmd_make_dataset(cfg);
      std::printf("wrote %zu scenes to %s\n", ds.entries.size(), out.c_str());
    } else if (*tr) {
      if (!out.empty()) cfg.out_dir = out;
      if (!dataset.empty()) cfg.dataset_dir = dataset;
      if (iterations) cfg.iterations = *iterations;
      const auto res = wise::cmd_train(cfg, resume);
      std::printf("trained %d iterations; best val AP50 %.4f; last L_W %.5f\n",
                  res.iterations, res.best_ap50, res.last.joint);
    } else if (*pr) {
      preq.out_dir = out;
      preq.seed = cfg.seed;
      preq.overlays = !no_overlays;
      if (preq.dataset_dir.empty()) preq.dataset_dir = cfg.dataset_dir;
      if (preq.dataset_dir.empty()) throw wise::ConfigError("predict: no dataset given");
      for (const auto& m : modes) {
        if (m == "all") {
          preq.modes.assign(wise::kAllModes.begin(), wise::kAllModes.end());
          break;
        }
        preq.modes.push_back(wise::parse_mode(m));
      }
      const auto n = wise::cmd_predict(preq);
      std::printf("wrote %zu prediction dumps to %s\n", n, out.c_str());
    } else if (*ev) {
      ereq.out_dir = out;
      if (ereq.dataset_dir.empty()) ereq.dataset_dir = cfg.dataset_dir;
      if (ereq.dataset_dir.empty()) throw wise::ConfigError("evaluate: no dataset given");
      const auto res = wise::cmd_evaluate(ereq);
      std::fputs(res.table.c_str(), stdout);
    }
  } catch (const wise::Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
