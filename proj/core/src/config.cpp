#include "headpose/config.hpp"

#include <charconv>
#include <fstream>

#include <json.hpp>

namespace headpose {

using nlohmann::json;

namespace {

double parse_double(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    raise(Errc::invalid_config, "override " + key + ": '" + text +
                                    "' is not a number");
  }
}

int64_t parse_int(const std::string& key, const std::string& text) {
  int64_t v = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    raise(Errc::invalid_config, "override " + key + ": '" + text +
                                    "' is not an integer");
  }
  return v;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(Errc::invalid_config, std::string("config: ") + e.what());
  }
  if (!j.is_object()) {
    raise(Errc::invalid_config, "config must be a JSON object");
  }
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "adapter") cfg.adapter = value.get<std::string>();
      else if (key == "train_data") cfg.train_data = value.get<std::string>();
      else if (key == "eval_data") cfg.eval_data = value.get<std::string>();
      else if (key == "box_source") cfg.box_source = value.get<std::string>();
      else if (key == "filter_range") cfg.filter_range = value.get<double>();
      else if (key == "backbone") cfg.backbone = value.get<std::string>();
      else if (key == "feature_dim") cfg.feature_dim = value.get<int>();
      else if (key == "pretrained_weights") cfg.pretrained_weights = value.get<std::string>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "batch_size") cfg.batch_size = value.get<int>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "momentum") cfg.momentum = value.get<double>();
      else if (key == "k") cfg.k = value.get<double>();
      else if (key == "loss_mode") cfg.loss_mode = value.get<std::string>();
      else if (key == "temperature") cfg.temperature = value.get<double>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "n_bins") cfg.n_bins = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<uint64_t>();
      else if (key == "checkpoint_interval") cfg.checkpoint_interval = value.get<int>();
      else if (key == "bucket_width") cfg.bucket_width = value.get<double>();
      else if (key == "histogram_bin_width") cfg.histogram_bin_width = value.get<double>();
      else if (key == "sweep_ks") cfg.sweep_ks = value.get<std::string>();
      else raise(Errc::invalid_config, "unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      raise(Errc::invalid_config, "config key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::io_failure, path.string() + ": cannot open config");
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void RunConfig::apply_override(const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    raise(Errc::invalid_config,
          "override must look like key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  if (key == "adapter") adapter = value;
  else if (key == "train_data") train_data = value;
  else if (key == "eval_data") eval_data = value;
  else if (key == "box_source") box_source = value;
  else if (key == "filter_range") filter_range = parse_double(key, value);
  else if (key == "backbone") backbone = value;
  else if (key == "feature_dim") feature_dim = static_cast<int>(parse_int(key, value));
  else if (key == "pretrained_weights") pretrained_weights = value;
  else if (key == "epochs") epochs = static_cast<int>(parse_int(key, value));
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "momentum") momentum = parse_double(key, value);
  else if (key == "k") k = parse_double(key, value);
  else if (key == "loss_mode") loss_mode = value;
  else if (key == "temperature") temperature = parse_double(key, value);
  else if (key == "alpha") alpha = parse_double(key, value);
  else if (key == "n_bins") n_bins = static_cast<int>(parse_int(key, value));
  else if (key == "seed") seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "checkpoint_interval") checkpoint_interval = static_cast<int>(parse_int(key, value));
  else if (key == "bucket_width") bucket_width = parse_double(key, value);
  else if (key == "histogram_bin_width") histogram_bin_width = parse_double(key, value);
  else if (key == "sweep_ks") sweep_ks = value;
  else raise(Errc::invalid_config, "unknown config key '" + key + "'");
}

std::string RunConfig::to_json_text() const {
  const json j{{"adapter", adapter},
               {"train_data", train_data},
               {"eval_data", eval_data},
               {"box_source", box_source},
               {"filter_range", filter_range},
               {"backbone", backbone},
               {"feature_dim", feature_dim},
               {"pretrained_weights", pretrained_weights},
               {"epochs", epochs},
               {"batch_size", batch_size},
               {"learning_rate", learning_rate},
               {"momentum", momentum},
               {"k", k},
               {"loss_mode", loss_mode},
               {"temperature", temperature},
               {"alpha", alpha},
               {"n_bins", n_bins},
               {"seed", seed},
               {"checkpoint_interval", checkpoint_interval},
               {"bucket_width", bucket_width},
               {"histogram_bin_width", histogram_bin_width},
               {"sweep_ks", sweep_ks}};
  return j.dump(2) + "\n";
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, path.string() + ": cannot write config snapshot");
  }
  out << to_json_text();
}

BackboneSpec RunConfig::backbone_spec() const {
  BackboneSpec spec;
  spec.kind = backbone_kind_from_name(backbone);
  if (spec.kind == BackboneKind::kReference50) {
    spec = BackboneSpec::reference(pretrained_weights);
  } else {
    spec = BackboneSpec::toy(feature_dim);
    spec.pretrained_weights = pretrained_weights;
  }
  spec.validate();
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.momentum = momentum;
  cfg.margin_k = k;
  cfg.loss.temperature = temperature;
  cfg.loss.alpha = alpha;
  cfg.loss.n_bins = n_bins;
  cfg.loss_mode = loss_mode_from_name(loss_mode);
  cfg.seed = seed;
  cfg.checkpoint_interval = checkpoint_interval;
  cfg.validate();
  return cfg;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions options;
  options.bucket_width_deg = bucket_width;
  options.histogram_bin_width_deg = histogram_bin_width;
  options.filter_range_deg = filter_range;
  return options;
}

DatasetManifest RunConfig::train_manifest() const {
  DatasetManifest manifest;
  manifest.root = train_data;
  manifest.adapter = adapter_kind_from_name(adapter);
  manifest.box_source = box_source_from_name(box_source);
  manifest.filter_range_deg = filter_range;
  return manifest;
}

DatasetManifest RunConfig::eval_manifest() const {
  DatasetManifest manifest = train_manifest();
  if (!eval_data.empty()) manifest.root = eval_data;
  return manifest;
}

ExperimentConfig RunConfig::experiment_config() const {
  return ExperimentConfig{backbone_spec(), train_config(), eval_options()};
}

}  // namespace headpose
