// Command-line harness: dataset generation, training, evaluation, margin
// sweeps, loss ablations and single-image prediction.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "headpose/checkpoint.hpp"
#include "headpose/config.hpp"
#include "headpose/dataset.hpp"
#include "headpose/eval.hpp"
#include "headpose/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace headpose;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig config = args.config_path.empty()
                         ? RunConfig{}
                         : RunConfig::from_file(args.config_path);
  for (const std::string& assignment : args.overrides) {
    config.apply_override(assignment);
  }
  return config;
}

Dataset load_filtered(const DatasetManifest& manifest) {
  const Dataset raw = load_dataset(manifest);
  auto [kept, dropped] = filter_evaluable(raw, manifest.filter_range_deg);
  if (dropped > 0) {
    std::fprintf(stderr, "note: dropped %zu sample(s) outside +-%.0f deg\n",
                 dropped, manifest.filter_range_deg);
  }
  return std::move(kept);
}

std::vector<double> parse_k_list(const std::string& text) {
  std::vector<double> ks;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    const double k = std::stod(item, &used);
    if (used != item.size()) {
      raise(Errc::invalid_parameter, "bad K value '" + item + "'");
    }
    ks.push_back(k);
  }
  if (ks.empty()) {
    raise(Errc::invalid_parameter, "empty K list");
  }
  return ks;
}

int cmd_synth_data(int n, uint64_t seed, int image_side,
                   const std::string& out) {
  const SyntheticDataset dataset = make_synthetic_dataset(n, seed, image_side);
  save_synthetic_dataset(out, dataset);
  std::printf("wrote %zu samples to %s\n", dataset.samples.size(), out.c_str());
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& resume_from) {
  const RunConfig config = resolve_config(args);
  const fs::path run_dir = args.out_dir;
  fs::create_directories(run_dir);
  config.save(run_dir / "config_snapshot.json");

  const Dataset train_data = load_filtered(config.train_manifest());
  const TrainConfig train_config = config.train_config();
  const BackboneSpec spec = config.backbone_spec();

  TrainResult result;
  if (resume_from.empty()) {
    Model model = build_model<float>(spec, train_config.seed);
    result = train(model, train_data, train_config, run_dir);
  } else {
    result = resume(resume_from, train_data, train_config, run_dir, &spec);
  }
  std::printf("trained %d epochs, %zu steps; checkpoint %s\n",
              train_config.epochs, result.history.steps.size(),
              result.final_checkpoint.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path) {
  const RunConfig config = resolve_config(args);
  const fs::path out_dir = args.out_dir;
  fs::create_directories(out_dir);
  config.save(out_dir / "config_snapshot.json");

  const Dataset raw = load_dataset(config.eval_manifest());
  Model model = model_from_checkpoint(read_checkpoint(checkpoint_path));
  const EvalReport report = evaluate(model, raw, config.k, config.eval_options());

  write_report_json(out_dir / "report.json", report);
  write_bucket_csv(out_dir / "buckets.csv", report);
  write_histogram_csv(out_dir / "histogram.csv", report);
  std::fputs(format_report_text(report).c_str(), stdout);
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& k_list, bool ablate) {
  RunConfig config = resolve_config(args);
  if (!k_list.empty()) config.sweep_ks = k_list;
  if (config.sweep_ks.empty()) {
    raise(Errc::invalid_config,
          "no margin list: pass --k or set sweep_ks in the config");
  }
  const fs::path out_dir = args.out_dir;
  fs::create_directories(out_dir);
  config.save(out_dir / "config_snapshot.json");
  const std::vector<double> ks = parse_k_list(config.sweep_ks);

  const Dataset train_data = load_filtered(config.train_manifest());
  const Dataset eval_data = load_dataset(config.eval_manifest());
  const ExperimentConfig experiment = config.experiment_config();

  const SweepResult result =
      ablate ? ablate_loss(experiment, train_data, eval_data, ks, out_dir)
             : sweep_k(experiment, train_data, eval_data, ks, out_dir);
  write_sweep_csv(out_dir / (ablate ? "ablation.csv" : "sweep.csv"), result);
  std::fputs(format_sweep_text(result).c_str(), stdout);
  return 0;
}

int cmd_predict(const std::string& image_path, const std::string& box_text,
                double k, const std::string& checkpoint_path) {
  double l = 0, t = 0, w = 0, h = 0;
  if (std::sscanf(box_text.c_str(), "%lf,%lf,%lf,%lf", &l, &t, &w, &h) != 4) {
    raise(Errc::invalid_parameter,
          "--box expects \"left,top,width,height\", got '" + box_text + "'");
  }
  Model model = model_from_checkpoint(read_checkpoint(checkpoint_path));
  const Image image = read_image(image_path);
  const BoundingBox box = squarify_box(l, t, w, h);
  const CropRegion region = expand_margin(box, k);
  const Image patch = crop_pad_resize(image, region, kInputSide);

  Tensor input({1, 3, kInputSide, kInputSide});
  const auto& mean = model.spec().channel_mean;
  const auto& std_ = model.spec().channel_std;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < kInputSide; ++y) {
      for (int x = 0; x < kInputSide; ++x) {
        input.data[(static_cast<size_t>(c) * kInputSide + y) * kInputSide + x] =
            static_cast<float>(
                (patch.at(x, y, c) - mean[static_cast<size_t>(c)]) /
                std_[static_cast<size_t>(c)]);
      }
    }
  }
  PredictionBatchT<float> pred = model.forward(input, false);
  const HeadPose pose = decode_prediction(pred.at(0));
  std::printf("yaw %.3f\npitch %.3f\nroll %.3f\n", pose.yaw, pose.pitch,
              pose.roll);
  return 0;
}

int cmd_report(const std::string& input_path) {
  const EvalReport report = read_report_json(input_path);
  std::fputs(format_report_text(report).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Head pose estimation harness: margin-adjusted crops, "
               "combined regression+classification loss, train/eval/sweep"};
  app.require_subcommand(1);

  // synth-data
  int synth_n = 64;
  uint64_t synth_seed = 1;
  int synth_side = 224;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-data",
                                   "Generate the synthetic pose dataset");
  synth->add_option("--n", synth_n, "Sample count")->required();
  synth->add_option("--seed", synth_seed, "Generation seed");
  synth->add_option("--image-side", synth_side, "Image side in pixels");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto add_common = [](CLI::App* cmd, CommonArgs& args, bool out_required) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--override", args.overrides,
                    "key=value override (repeatable)");
    auto* out = cmd->add_option("--out", args.out_dir, "Run directory");
    if (out_required) out->required();
  };

  // train
  CommonArgs train_args;
  std::string train_resume;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train_args, true);
  train_cmd->add_option("--resume", train_resume,
                        "Continue from this checkpoint");

  // eval
  CommonArgs eval_args;
  std::string eval_checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, eval_args, true);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required();

  // sweep-k
  CommonArgs sweep_args;
  std::string sweep_ks;
  auto* sweep_cmd =
      app.add_subcommand("sweep-k", "Train+evaluate across margin values");
  add_common(sweep_cmd, sweep_args, true);
  sweep_cmd->add_option("--k", sweep_ks, "Comma-separated K list (or config sweep_ks)");

  // ablate-loss
  CommonArgs ablate_args;
  std::string ablate_ks;
  auto* ablate_cmd = app.add_subcommand(
      "ablate-loss", "Paired combined vs regression-only runs per K");
  add_common(ablate_cmd, ablate_args, true);
  ablate_cmd->add_option("--k", ablate_ks, "Comma-separated K list (or config sweep_ks)");

  // predict
  std::string predict_image, predict_box, predict_checkpoint;
  double predict_k = 0.5;
  auto* predict_cmd =
      app.add_subcommand("predict", "Predict pose for one image");
  predict_cmd->add_option("--image", predict_image, "Image file")->required();
  predict_cmd->add_option("--box", predict_box, "Face box left,top,width,height")
      ->required();
  predict_cmd->add_option("--k", predict_k, "Margin ratio K");
  predict_cmd->add_option("--checkpoint", predict_checkpoint, "Checkpoint file")
      ->required();

  // report
  std::string report_input;
  auto* report_cmd =
      app.add_subcommand("report", "Pretty-print a report.json");
  report_cmd->add_option("--input", report_input, "report.json path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth_data(synth_n, synth_seed, synth_side, synth_out);
    }
    if (train_cmd->parsed()) return cmd_train(train_args, train_resume);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_checkpoint);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, sweep_ks, false);
    if (ablate_cmd->parsed()) return cmd_sweep(ablate_args, ablate_ks, true);
    if (predict_cmd->parsed()) {
      return cmd_predict(predict_image, predict_box, predict_k,
                         predict_checkpoint);
    }
    if (report_cmd->parsed()) return cmd_report(report_input);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
