#include "bvllm/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bvllm/bvtk.hpp"
#include "bvllm/config.hpp"
#include "bvllm/error.hpp"
#include "bvllm/gradcheck.hpp"
#include "bvllm/model.hpp"
#include "bvllm/pipeline.hpp"
#include "bvllm/sweep.hpp"
#include "bvllm/synth.hpp"
#include "bvllm/train.hpp"

namespace bvllm::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// A single BVTK file of shape L x (M+1) x d with the [CLS] token first, or a
// directory holding cls.bvtk (L x d) and body.bvtk (L x M x d).
VideoTokens load_video(const fs::path& path) {
  VideoTokens video;
  if (fs::is_directory(path)) {
    video.cls = bvtk::load(path / "cls.bvtk");
    video.body = bvtk::load(path / "body.bvtk");
  } else {
    const Tensor t = bvtk::load(path);
    if (t.rank() != 3 || t.shape()[1] < 2) {
      throw DimensionError("video '" + path.string() + "' must have shape L x (M+1) x d with M >= 1");
    }
    const std::size_t L = t.shape()[0], M = t.shape()[1] - 1, d = t.shape()[2];
    video = VideoTokens::from_stacked(t.reshaped({L, (M + 1) * d}), M);
  }
  video.validate();
  return video;
}

TextContext load_text(const fs::path& path) {
  TextContext text{bvtk::load(path)};
  if (text.tokens.rank() != 2) throw DimensionError("text '" + path.string() + "' must be N x d");
  text.validate();
  return text;
}

Tensor video_file_tensor(const VideoTokens& video) {
  const std::size_t L = video.frames(), M = video.tokens_per_frame(), d = video.dim();
  return video.stacked().reshaped({L, M + 1, d});
}

std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (item.empty() || pos != item.size() || item.front() == '-') {
      throw ConfigError(flag + ": '" + text + "' is not a comma-separated list of frame indices");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Command-line overrides of PipelineConfig fields. Each default shown in
// --help comes from a default-constructed PipelineConfig.
struct ConfigFlags {
  PipelineConfig values;
  std::string mode = std::string(to_string(PipelineConfig{}.mode));
  std::vector<std::pair<CLI::Option*, std::function<void(PipelineConfig&)>>> options;

  void add(CLI::App* app) {
    options.emplace_back(app->add_option("--frames-to-select", values.frames_to_select, "Selection perspectives L*")
                             ->capture_default_str(),
                         [this](PipelineConfig& c) { c.frames_to_select = values.frames_to_select; });
    options.emplace_back(app->add_option("--tokens-per-frame", values.tokens_per_frame, "Spatial tokens R per frame")
                             ->capture_default_str(),
                         [this](PipelineConfig& c) { c.tokens_per_frame = values.tokens_per_frame; });
    options.emplace_back(app->add_option("--theta", values.theta, "Visual token budget")->capture_default_str(),
                         [this](PipelineConfig& c) { c.theta = values.theta; });
    options.emplace_back(app->add_option("--tau", values.tau, "Gumbel-Softmax temperature")->capture_default_str(),
                         [this](PipelineConfig& c) { c.tau = values.tau; });
    options.emplace_back(app->add_option("--gamma", values.gamma, "Duplicate-frame cosine threshold")
                             ->capture_default_str(),
                         [this](PipelineConfig& c) { c.gamma = values.gamma; });
    options.emplace_back(app->add_option("--mode", mode, "Selection mode: soft, hard or deterministic")
                             ->capture_default_str(),
                         [this](PipelineConfig& c) { c.mode = parse_selection_mode(mode); });
    options.emplace_back(app->add_option("--seed", values.seed, "Gumbel noise and initialization seed")
                             ->capture_default_str(),
                         [this](PipelineConfig& c) { c.seed = values.seed; });
  }

  void apply(PipelineConfig& cfg) const {
    for (const auto& [opt, set] : options)
      if (opt->count() > 0) set(cfg);
    cfg.validate();
  }
};

int cmd_run(const std::string& video_path, const std::string& text_path, const std::string& config_path,
            const std::string& checkpoint, const std::string& out_path, const std::string& trace_path,
            bool timings, const ConfigFlags& flags, std::ostream& out) {
  PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
  flags.apply(cfg);
  const VideoTokens video = load_video(video_path);
  const TextContext text = load_text(text_path);
  if (config_path.empty()) cfg.dim = video.dim();
  cfg.validate();
  const ModelParams params = checkpoint.empty() ? ModelParams::init(cfg, cfg.seed) : load_checkpoint(checkpoint, cfg);
  const PipelineOutput result = run(video, text, params, cfg);
  if (!out_path.empty()) bvtk::save(out_path, result.sequence);
  const std::string trace = result.trace.to_json(timings);
  if (!trace_path.empty()) {
    write_text(trace_path, trace);
  }
  const StageCounts& c = result.trace.counts;
  out << "selected " << result.trace.selected_frames.size() << " perspectives, " << result.trace.duplicate_groups.size()
      << " distinct frames, " << c.final << " visual tokens (theta " << cfg.theta << "), sequence "
      << result.sequence.rows() << " x " << result.sequence.cols() << "\n";
  return kExitOk;
}

int cmd_synth(SynthSpec spec, const std::string& planted, std::size_t planted_count, const std::string& out_dir,
              std::ostream& out) {
  spec.planted = parse_index_list(planted, "--planted");
  if (spec.planted.empty()) spec.planted = random_planted(spec.frames, std::min(planted_count, spec.frames), spec.seed);
  const SynthInstance inst = synth_generate(spec);
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());

  bvtk::save(dir / "video.bvtk", video_file_tensor(inst.video));
  bvtk::save(dir / "text.bvtk", inst.text.tokens);
  nlohmann::json labels;
  labels["planted"] = inst.planted;
  labels["seed"] = spec.seed;
  labels["frames"] = spec.frames;
  labels["tokens"] = spec.tokens;
  labels["dim"] = spec.dim;
  labels["noise"] = spec.noise;
  labels["text_tokens"] = spec.text_tokens;
  write_text(dir / "labels.json", labels.dump(2) + "\n");
  PipelineConfig cfg;
  cfg.dim = spec.dim;
  cfg.seed = spec.seed;
  cfg.save(dir / "config.json");

  out << "wrote " << spec.frames << " frames x " << spec.tokens << " tokens x " << spec.dim << " to "
      << dir.string() << " (planted";
  for (std::size_t p : inst.planted) out << ' ' << p;
  out << ")\n";
  return kExitOk;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

std::string format_error(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

int cmd_grad_check(const std::string& module, std::uint64_t seed, std::ostream& out) {
  std::vector<GradCheckResult> results;
  if (module == "selector" || module == "all") results.push_back(check_selector(seed));
  if (module == "sampler" || module == "all") results.push_back(check_sampler(seed));
  if (module == "merger" || module == "all") results.push_back(check_merger(seed));
  if (module == "pipeline" || module == "all") results.push_back(check_pipeline(seed));

  bool ok = true;
  for (const GradCheckResult& r : results) {
    for (const GradGroupResult& g : r.groups) {
      out << std::left << std::setw(10) << r.module << std::setw(48) << g.name << std::right << std::setw(6) << g.size
          << "  max_rel " << format_error(g.max_rel_error) << "  max_abs " << format_error(g.max_abs_error)
          << (g.max_rel_error < kGradCheckTolerance ? "" : "  FAIL") << "\n";
    }
    out << r.module << ": max relative error " << format_error(r.max_rel_error()) << " ("
        << (r.passed() ? "ok" : "above tolerance") << ")\n";
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitValidation;
}

int cmd_train(const TrainOptions& options, const ConfigFlags& flags, const std::string& report_path,
              const std::string& save_dir, std::ostream& out) {
  PipelineConfig cfg;
  cfg.dim = options.task.dim;
  flags.apply(cfg);
  ModelParams params = ModelParams::init(cfg, options.seed);
  const TrainReport report = train_toy(params.selector, cfg, options);
  if (!report_path.empty()) write_text(report_path, report.to_json());
  if (!save_dir.empty()) save_checkpoint(save_dir, params, cfg);
  char line[128];
  std::snprintf(line, sizeof line, "steps %zu  final loss %.6f  hard-selection accuracy %.4f\n", options.steps,
                report.final_loss, report.final_accuracy);
  out << line;
  return kExitOk;
}

int cmd_sweep(SweepOptions options, const std::string& grid, const std::string& report_path, std::ostream& out) {
  options.grid = SweepGrid::parse(grid);
  const SweepReport report = sweep(options);
  if (!report_path.empty()) write_text(report_path, report.to_json());
  out << report.to_table();
  return kExitOk;
}

int cmd_stats(const std::string& trace_path, std::ostream& out) {
  const PipelineTrace t = PipelineTrace::from_json(read_text(trace_path));
  const StageCounts& c = t.counts;
  const std::size_t uniform = t.perspectives * t.tokens_per_frame;
  out << "frames " << t.frames << ", tokens per frame " << t.tokens_per_frame << ", perspectives "
      << t.perspectives << ", spatial tokens " << t.spatial_tokens << ", theta " << t.theta << "\n";
  out << "input tokens        " << c.input << "\n";
  out << "pre-merge tokens    " << c.selected << "\n";
  out << "after merge         " << c.merged << "\n";
  out << "after sampling      " << c.sampled << "\n";
  out << "after budget        " << c.final << "\n";
  out << "halving rounds      " << t.halving_rounds << "\n";
  char line[160];
  const double ratio = c.final > 0 ? static_cast<double>(uniform) / static_cast<double>(c.final) : 0.0;
  std::snprintf(line, sizeof line, "uniform sampling %zu frames x %zu tokens = %zu; budgeted %zu (%.2fx fewer)\n",
                t.perspectives, t.tokens_per_frame, uniform, c.final, ratio);
  out << line;
  return kExitOk;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budget-aware video token pipeline: frame selection, merging and spatial sampling", "bvllm"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "bvllm 0.1.0");

  const PipelineConfig defaults;

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline on one video");
  std::string video_path, text_path, config_path, checkpoint, out_path, trace_path;
  bool timings = false;
  run_cmd->add_option("--video", video_path, "BVTK L x (M+1) x d file, or directory with cls.bvtk and body.bvtk")
      ->required();
  run_cmd->add_option("--text", text_path, "BVTK N x d text embeddings")->required();
  run_cmd->add_option("--config", config_path, "PipelineConfig JSON (flags below override it)");
  run_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory; random init from --seed when absent");
  run_cmd->add_option("--out", out_path, "Output BVTK for the final sequence");
  run_cmd->add_option("--trace", trace_path, "Output JSON trace");
  run_cmd->add_flag("--timings", timings, "Include wall-clock stage timings in the trace");
  ConfigFlags run_flags;
  run_flags.add(run_cmd);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic planted-frame video");
  SynthSpec synth_spec;
  std::string planted, out_dir;
  std::size_t planted_count = 4;
  synth_cmd->add_option("--seed", synth_spec.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--frames", synth_spec.frames, "Frames L")->capture_default_str();
  synth_cmd->add_option("--tokens", synth_spec.tokens, "Body tokens M per frame")->capture_default_str();
  synth_cmd->add_option("--dim", synth_spec.dim, "Embedding width d")->capture_default_str();
  synth_cmd->add_option("--planted", planted, "Comma-separated 0-based planted frames");
  synth_cmd->add_option("--planted-count", planted_count, "Random planted frames when --planted is absent")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth_spec.noise, "Per-token noise scale")->capture_default_str();
  synth_cmd->add_option("--text-tokens", synth_spec.text_tokens, "Text rows N")->capture_default_str();
  synth_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare analytic gradients with central differences");
  std::string module = "all";
  std::uint64_t grad_seed = defaults.seed;
  grad_cmd->add_option("--module", module, "Module to check")
      ->check(CLI::IsMember({"selector", "sampler", "merger", "pipeline", "all"}))
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad_seed, "Seed of the check instances")->capture_default_str();

  // train-toy
  auto* train_cmd = app.add_subcommand("train-toy", "Train the frame selector on the planted-frame task");
  TrainOptions train;
  std::string report_path, save_dir;
  train_cmd->add_option("--steps", train.steps, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", train.batch, "Instances per step")->capture_default_str();
  train_cmd->add_option("--eval-every", train.eval_every, "Steps between evaluations")->capture_default_str();
  train_cmd->add_option("--report", report_path, "Output JSON training curve");
  train_cmd->add_option("--save", save_dir, "Write the trained parameters as a checkpoint directory");
  ConfigFlags train_flags;
  train_flags.add(train_cmd);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a grid of frames-to-select x tokens-per-frame");
  SweepOptions sweep_options;
  std::string grid = "4,8,16x4,8,16,32";
  std::string sweep_report;
  sweep_cmd->add_option("--grid", grid, "L* list x R list")->capture_default_str();
  sweep_cmd->add_option("--report", sweep_report, "Output JSON table");
  sweep_cmd->add_option("--steps", sweep_options.train_steps, "Selector training steps per L*")->capture_default_str();
  sweep_cmd->add_option("--theta", sweep_options.theta, "Visual token budget")->capture_default_str();
  sweep_cmd->add_option("--eval-size", sweep_options.eval_size, "Evaluation videos")->capture_default_str();
  sweep_cmd->add_option("--seed", sweep_options.seed, "Seed")->capture_default_str();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Summarize stage token counts of a trace");
  std::string stats_trace;
  stats_cmd->add_option("--trace", stats_trace, "Trace JSON written by run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "bvllm: " << one_line(e.what()) << "\n";
    return kExitValidation;
  }

  try {
    if (run_cmd->parsed()) {
      return cmd_run(video_path, text_path, config_path, checkpoint, out_path, trace_path, timings, run_flags, out);
    }
    if (synth_cmd->parsed()) return cmd_synth(synth_spec, planted, planted_count, out_dir, out);
    if (grad_cmd->parsed()) return cmd_grad_check(module, grad_seed, out);
    if (train_cmd->parsed()) {
      train.seed = train_flags.values.seed;
      return cmd_train(train, train_flags, report_path, save_dir, out);
    }
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_options, grid, sweep_report, out);
    if (stats_cmd->parsed()) return cmd_stats(stats_trace, out);
  } catch (const IoError& e) {
    err << "bvllm: " << one_line(e.what()) << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "bvllm: " << one_line(e.what()) << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace bvllm::cli
