#include "bvllm/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bvllm/bvtk.hpp"
#include "bvllm/error.hpp"

namespace bvllm {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t { kSelectorStream = 101, kSamplerStream = 102, kProjectorStream = 103 };

Tensor random_bank(std::size_t rows, std::size_t d, Rng& rng) {
  Tensor t = Tensor::zeros(rows, d);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (double& v : t.data()) v = normal(rng);
  return t;
}

ModelParams make(const PipelineConfig& cfg, std::uint64_t seed, bool zero_nets) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  Rng sel = make_rng(seed, kSelectorStream);
  Rng spa = make_rng(seed, kSamplerStream);
  Rng proj = make_rng(seed, kProjectorStream);
  ModelParams p;
  p.selector.queries.embeddings = random_bank(cfg.frames_to_select, d, sel);
  p.selector.net = zero_nets ? AttentionStack::zeros(d, cfg.layers, cfg.heads)
                             : AttentionStack::random(d, cfg.layers, cfg.heads, sel);
  p.sampler.queries.embeddings = random_bank(cfg.tokens_per_frame, d, spa);
  p.sampler.net = zero_nets ? AttentionStack::zeros(d, cfg.layers, cfg.heads)
                            : AttentionStack::random(d, cfg.layers, cfg.heads, spa);
  if (cfg.spatial_positions) {
    p.sampler.positions.row_table = random_bank(cfg.spatial_grid_rows, d, spa);
    p.sampler.positions.col_table = random_bank(cfg.spatial_grid_cols, d, spa);
  }
  p.visual = Projection::random(d, cfg.llm_dim, proj);
  p.text = Projection::random(d, cfg.llm_dim, proj);
  return p;
}

}  // namespace

ModelParams ModelParams::init(const PipelineConfig& cfg, std::uint64_t seed) {
  return make(cfg, seed, false);
}

ModelParams ModelParams::zero_networks(const PipelineConfig& cfg, std::uint64_t seed) {
  return make(cfg, seed, true);
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

void ModelParams::validate(const PipelineConfig& cfg) const {
  ModelParams reference = zero_networks(cfg, 0);
  std::map<std::string, Shape> expected;
  reference.visit([&](const std::string& name, Tensor& t) { expected[name] = t.shape(); });
  std::size_t seen = 0;
  const_cast<ModelParams*>(this)->visit([&](const std::string& name, Tensor& t) {
    auto it = expected.find(name);
    if (it == expected.end()) throw ConfigError("unexpected parameter " + name);
    if (t.shape() != it->second) {
      throw ConfigError("parameter " + name + " has shape " + shape_string(t.shape()) +
                        ", expected " + shape_string(it->second));
    }
    if (!t.all_finite()) throw ConfigError("parameter " + name + " has non-finite entries");
    ++seen;
  });
  if (seen != expected.size()) throw ConfigError("model is missing parameters");
  selector.net.validate();
  sampler.net.validate();
}

void save_checkpoint(const std::filesystem::path& dir, ModelParams& params, const PipelineConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["format"] = "bvllm-checkpoint";
  manifest["version"] = 1;
  manifest["dim"] = cfg.dim;
  manifest["llm_dim"] = cfg.llm_dim;
  manifest["layers"] = cfg.layers;
  manifest["heads"] = cfg.heads;
  manifest["frames_to_select"] = cfg.frames_to_select;
  manifest["tokens_per_frame"] = cfg.tokens_per_frame;
  manifest["spatial_positions"] = cfg.spatial_positions;
  json tensors = json::object();
  params.visit([&](const std::string& name, Tensor& t) {
    const std::string file = name + ".bvtk";
    bvtk::save(dir / file, t);
    tensors[name] = file;
  });
  manifest["tensors"] = tensors;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::filesystem::path& dir, const PipelineConfig& cfg) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open checkpoint manifest " + manifest_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json manifest;
  try {
    manifest = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "bvllm-checkpoint" || manifest.value("version", 0) != 1) {
    throw FormatError(manifest_path.string() + ": not a version 1 bvllm checkpoint");
  }
  auto check = [&](const char* key, std::size_t want) {
    if (!manifest.contains(key) || manifest[key].get<std::size_t>() != want) {
      throw ConfigError("checkpoint " + std::string(key) + " does not match the config (expected " +
                        std::to_string(want) + ")");
    }
  };
  check("dim", cfg.dim);
  check("llm_dim", cfg.llm_dim);
  check("layers", cfg.layers);
  check("heads", cfg.heads);
  check("frames_to_select", cfg.frames_to_select);
  check("tokens_per_frame", cfg.tokens_per_frame);
  if (!manifest.contains("tensors") || !manifest["tensors"].is_object()) {
    throw FormatError(manifest_path.string() + ": missing tensor table");
  }
  const json& tensors = manifest["tensors"];

  ModelParams params = ModelParams::zero_networks(cfg, 0);
  std::size_t used = 0;
  params.visit([&](const std::string& name, Tensor& t) {
    if (!tensors.contains(name)) throw ConfigError("checkpoint is missing tensor " + name);
    Tensor loaded = bvtk::load(dir / tensors[name].get<std::string>());
    if (loaded.shape() != t.shape()) {
      throw ConfigError("checkpoint tensor " + name + " has shape " + shape_string(loaded.shape()) +
                        ", expected " + shape_string(t.shape()));
    }
    t = std::move(loaded);
    ++used;
  });
  if (used != tensors.size()) {
    throw ConfigError("checkpoint lists " + std::to_string(tensors.size()) +
                      " tensors but the model has " + std::to_string(used));
  }
  params.validate(cfg);
  return params;
}

}  // namespace bvllm
