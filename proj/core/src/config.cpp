#include "bvllm/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bvllm/error.hpp"

namespace bvllm {

using nlohmann::json;

void PipelineConfig::validate() const {
  if (frames_to_select < 1) throw ConfigError("frames_to_select (L*) must be at least 1");
  if (tokens_per_frame < 1) throw ConfigError("tokens_per_frame (R) must be at least 1");
  if (theta < frames_to_select) {
    throw ConfigError("theta (" + std::to_string(theta) + ") must be at least frames_to_select (" +
                      std::to_string(frames_to_select) + ")");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (dim == 0 || llm_dim == 0) throw ConfigError("dim and llm_dim must be positive");
  if (layers < 1) throw ConfigError("layers must be at least 1");
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("dim (" + std::to_string(dim) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (spatial_positions && (spatial_grid_rows == 0 || spatial_grid_cols == 0)) {
    throw ConfigError("spatial position grid must be non-empty");
  }
}

std::string PipelineConfig::to_json() const {
  json j;
  j["frames_to_select"] = frames_to_select;
  j["tokens_per_frame"] = tokens_per_frame;
  j["theta"] = theta;
  j["tau"] = tau;
  j["gamma"] = gamma;
  j["mode"] = std::string(to_string(mode));
  j["seed"] = seed;
  j["dim"] = dim;
  j["llm_dim"] = llm_dim;
  j["layers"] = layers;
  j["heads"] = heads;
  j["scale_logits"] = scale_logits;
  j["temporal_positions"] = temporal_positions;
  j["spatial_positions"] = spatial_positions;
  j["spatial_grid_rows"] = spatial_grid_rows;
  j["spatial_grid_cols"] = spatial_grid_cols;
  return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "frames_to_select") c.frames_to_select = value.get<std::size_t>();
      else if (key == "tokens_per_frame") c.tokens_per_frame = value.get<std::size_t>();
      else if (key == "theta") c.theta = value.get<std::size_t>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "mode") c.mode = parse_selection_mode(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "dim") c.dim = value.get<std::size_t>();
      else if (key == "llm_dim") c.llm_dim = value.get<std::size_t>();
      else if (key == "layers") c.layers = value.get<std::size_t>();
      else if (key == "heads") c.heads = value.get<std::size_t>();
      else if (key == "scale_logits") c.scale_logits = value.get<bool>();
      else if (key == "temporal_positions") c.temporal_positions = value.get<bool>();
      else if (key == "spatial_positions") c.spatial_positions = value.get<bool>();
      else if (key == "spatial_grid_rows") c.spatial_grid_rows = value.get<std::size_t>();
      else if (key == "spatial_grid_cols") c.spatial_grid_cols = value.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json();
}

}  // namespace bvllm
