#include "headpose/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace headpose {

namespace {

constexpr char kMagic[8] = {'H', 'P', 'C', 'K', 'P', 'T', '1', '\n'};

using nlohmann::json;

json spec_to_json(const BackboneSpec& spec) {
  return json{{"kind", backbone_kind_name(spec.kind)},
              {"feature_dim", spec.feature_dim},
              {"pretrained_weights", spec.pretrained_weights},
              {"channel_mean", spec.channel_mean},
              {"channel_std", spec.channel_std}};
}

BackboneSpec spec_from_json(const json& j) {
  BackboneSpec spec;
  spec.kind = backbone_kind_from_name(j.at("kind").get<std::string>());
  spec.feature_dim = j.at("feature_dim").get<int>();
  spec.pretrained_weights = j.value("pretrained_weights", std::string{});
  if (j.contains("channel_mean")) {
    auto mean = j.at("channel_mean").get<std::vector<double>>();
    auto std_ = j.at("channel_std").get<std::vector<double>>();
    std::copy(mean.begin(), mean.end(), spec.channel_mean.begin());
    std::copy(std_.begin(), std_.end(), spec.channel_std.begin());
  }
  return spec;
}

struct ArchiveHeader {
  json meta;
  std::vector<NamedArray> arrays;  // values empty until payload read
};

ArchiveHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    raise(Errc::load_failure, path.string() + ": not a checkpoint archive");
  }
  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) {
    raise(Errc::load_failure, path.string() + ": truncated header");
  }
  ArchiveHeader header;
  try {
    header.meta = json::parse(header_text);
  } catch (const json::exception& e) {
    raise(Errc::load_failure, path.string() + ": bad header: " + e.what());
  }
  for (const auto& entry : header.meta.at("arrays")) {
    NamedArray array;
    array.name = entry.at("name").get<std::string>();
    array.shape = entry.at("shape").get<std::vector<int>>();
    array.values.resize(entry.at("count").get<size_t>());
    header.arrays.push_back(std::move(array));
  }
  return header;
}

void read_payload(std::ifstream& in, const std::filesystem::path& path,
                  std::vector<NamedArray>& arrays) {
  for (NamedArray& array : arrays) {
    in.read(reinterpret_cast<char*>(array.values.data()),
            static_cast<std::streamsize>(array.values.size() * sizeof(float)));
  }
  if (!in) {
    raise(Errc::load_failure, path.string() + ": truncated payload");
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json arrays = json::array();
  for (const NamedArray& array : ckpt.arrays) {
    arrays.push_back(json{{"name", array.name},
                          {"shape", array.shape},
                          {"count", array.values.size()}});
  }
  const json meta{{"format_version", 1},
                  {"spec", spec_to_json(ckpt.spec)},
                  {"seed", ckpt.seed},
                  {"epoch", ckpt.epoch},
                  {"arrays", arrays}};
  const std::string header = meta.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      raise(Errc::io_failure, tmp.string() + ": cannot open for writing");
    }
    out.write(kMagic, 8);
    const uint64_t header_len = header.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const NamedArray& array : ckpt.arrays) {
      out.write(reinterpret_cast<const char*>(array.values.data()),
                static_cast<std::streamsize>(array.values.size() * sizeof(float)));
    }
    if (!out) {
      raise(Errc::io_failure, tmp.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    raise(Errc::load_failure, path.string() + ": cannot open");
  }
  ArchiveHeader header = read_header(in, path);
  read_payload(in, path, header.arrays);

  Checkpoint ckpt;
  ckpt.spec = spec_from_json(header.meta.at("spec"));
  ckpt.seed = header.meta.at("seed").get<uint64_t>();
  ckpt.epoch = header.meta.at("epoch").get<int>();
  ckpt.arrays = std::move(header.arrays);
  return ckpt;
}

std::vector<NamedArray> read_array_archive(const std::filesystem::path& path) {
  return read_checkpoint(path).arrays;
}

Checkpoint snapshot_model(Model& model, int epoch,
                          std::vector<NamedArray> extra_arrays) {
  Checkpoint ckpt;
  ckpt.spec = model.spec();
  ckpt.seed = model.seed();
  ckpt.epoch = epoch;
  for (const auto& p : model.parameters()) {
    ckpt.arrays.push_back(NamedArray{p.name, p.shape, *p.value});
  }
  for (NamedArray& extra : extra_arrays) {
    ckpt.arrays.push_back(std::move(extra));
  }
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  BackboneSpec spec = ckpt.spec;
  spec.pretrained_weights.clear();  // parameters come from the archive
  Model model(spec, ckpt.seed);
  auto params = model.parameters();
  size_t restored = 0;
  for (const NamedArray& array : ckpt.arrays) {
    if (array.name.rfind("optimizer.", 0) == 0) continue;
    bool found = false;
    for (auto& p : params) {
      if (p.name != array.name) continue;
      if (p.shape != array.shape || p.value->size() != array.values.size()) {
        raise(Errc::incompatible_checkpoint,
              "array '" + array.name + "' has mismatched shape");
      }
      *p.value = array.values;
      found = true;
      ++restored;
      break;
    }
    if (!found) {
      raise(Errc::incompatible_checkpoint,
            "array '" + array.name + "' does not exist in the rebuilt model");
    }
  }
  if (restored != params.size()) {
    raise(Errc::incompatible_checkpoint,
          "checkpoint restores " + std::to_string(restored) + " of " +
              std::to_string(params.size()) + " model arrays");
  }
  return model;
}

}  // namespace headpose
