#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "bvllm/bvtk.hpp"
#include "bvllm/cli.hpp"
#include "bvllm/pipeline.hpp"

namespace bvllm {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "bvllm");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("bvllm_cli_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(Cli, HelpShowsConfigDefaults) {
  for (const char* verb : {"run", "train-toy"}) {
    const Result r = invoke({verb, "--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--frames-to-select UINT [8]", "--tokens-per-frame UINT [8]", "--theta UINT [2048]",
                             "--tau FLOAT [0.5]", "--gamma FLOAT [0.9]", "--mode TEXT [soft]", "--seed UINT [0]"})
      EXPECT_NE(r.out.find(flag), std::string::npos) << verb << " missing " << flag;
  }
  for (const char* verb : {"synth", "grad-check", "sweep", "stats"}) EXPECT_EQ(invoke({verb, "--help"}).code, 0);
}

TEST_F(Cli, UsageErrorsExitOneWithOneLine) {
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{}, {"frobnicate"}, {"run", "--video", "x"}, {"stats", "--trace", "t", "--bogus"},
        {"grad-check", "--module", "everything"}, {"run", "--video", "v", "--text", "t", "--theta", "many"}}) {
    const Result r = invoke(args);
    EXPECT_EQ(r.code, cli::kExitValidation);
    EXPECT_EQ(r.err.rfind("bvllm: ", 0), 0u) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  }
}

TEST_F(Cli, MissingInputFileExitsTwo) {
  const Result r = invoke({"run", "--video", path("nope.bvtk"), "--text", path("nope.bvtk")});
  EXPECT_EQ(r.code, cli::kExitIo);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_EQ(invoke({"stats", "--trace", path("absent.json")}).code, cli::kExitIo);
}

TEST_F(Cli, MalformedInputsExitOne) {
  std::ofstream(path("junk.bvtk")) << "not a tensor";
  EXPECT_EQ(invoke({"run", "--video", path("junk.bvtk"), "--text", path("junk.bvtk")}).code, cli::kExitValidation);
  std::ofstream(path("trace.json")) << "{\"frames\": }";
  EXPECT_EQ(invoke({"stats", "--trace", path("trace.json")}).code, cli::kExitValidation);
}

TEST_F(Cli, SynthThenRunHonoursTheBudget) {
  ASSERT_EQ(invoke({"synth", "--seed", "7", "--frames", "20", "--tokens", "16", "--planted", "3,9", "--out-dir",
                    path("data")})
                .code,
            0);
  for (const char* f : {"video.bvtk", "text.bvtk", "labels.json", "config.json"}) EXPECT_TRUE(fs::exists(dir_ / "data" / f));
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "data" / "labels.json"))["planted"],
            (std::vector<std::size_t>{3, 9}));

  const Result r = invoke({"run", "--video", path("data/video.bvtk"), "--text", path("data/text.bvtk"), "--config",
                           path("data/config.json"), "--theta", "24", "--tokens-per-frame", "6", "--mode", "hard",
                           "--out", path("seq.bvtk"), "--trace", path("trace.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const PipelineTrace t = PipelineTrace::from_json(slurp(dir_ / "trace.json"));
  EXPECT_EQ(t.theta, 24u);
  EXPECT_EQ(t.spatial_tokens, 6u);
  EXPECT_LE(t.counts.final, 24u);
  const Tensor seq = bvtk::load(dir_ / "seq.bvtk");
  EXPECT_EQ(seq.rows(), t.sequence_rows);
  EXPECT_NE(r.out.find("visual tokens (theta 24)"), std::string::npos);
}

TEST_F(Cli, RunAcceptsSplitVideoDirectory) {
  ASSERT_EQ(invoke({"synth", "--frames", "6", "--tokens", "4", "--dim", "8", "--out-dir", path("data")}).code, 0);
  const Tensor v = bvtk::load(dir_ / "data" / "video.bvtk");
  const std::size_t L = v.shape()[0], M = v.shape()[1] - 1, d = v.shape()[2];
  const VideoTokens video = VideoTokens::from_stacked(v.reshaped({L, (M + 1) * d}), M);
  fs::create_directories(dir_ / "split");
  bvtk::save(dir_ / "split" / "cls.bvtk", video.cls);
  bvtk::save(dir_ / "split" / "body.bvtk", video.body);
  const std::vector<std::string> common{"--text", path("data/text.bvtk"), "--frames-to-select", "2",
                                        "--tokens-per-frame", "2", "--theta", "4"};
  auto with = [&](const std::string& video_path, const std::string& trace) {
    std::vector<std::string> a{"run", "--video", video_path, "--trace", trace};
    a.insert(a.end(), common.begin(), common.end());
    return invoke(a);
  };
  ASSERT_EQ(with(path("data/video.bvtk"), path("a.json")).code, 0);
  ASSERT_EQ(with(path("split"), path("b.json")).code, 0);
  EXPECT_EQ(slurp(dir_ / "a.json"), slurp(dir_ / "b.json"));
}

TEST_F(Cli, TimingsOnlyWhenRequested) {
  ASSERT_EQ(invoke({"synth", "--frames", "6", "--tokens", "4", "--dim", "8", "--out-dir", path("d")}).code, 0);
  const std::vector<std::string> base{"run", "--video", path("d/video.bvtk"), "--text", path("d/text.bvtk"),
                                      "--tokens-per-frame", "4"};
  auto a = base;
  a.insert(a.end(), {"--trace", path("plain.json")});
  auto b = base;
  b.insert(b.end(), {"--trace", path("timed.json"), "--timings"});
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  EXPECT_FALSE(nlohmann::json::parse(slurp(dir_ / "plain.json")).contains("timings_ms"));
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "timed.json")).contains("timings_ms"));
}

TEST_F(Cli, StatsReportsPreMergeTokens) {
  ASSERT_EQ(invoke({"synth", "--frames", "40", "--tokens", "256", "--dim", "16", "--out-dir", path("d")}).code, 0);
  ASSERT_EQ(invoke({"run", "--video", path("d/video.bvtk"), "--text", path("d/text.bvtk"), "--frames-to-select", "32",
                    "--trace", path("t.json")})
                .code,
            0);
  const Result r = invoke({"stats", "--trace", path("t.json")});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("pre-merge tokens    8192"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("uniform sampling 32 frames x 256 tokens = 8192"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainToySavesALoadableCheckpoint) {
  const Result r = invoke({"train-toy", "--steps", "3", "--eval-every", "1", "--frames-to-select", "4", "--report",
                           path("report.json"), "--save", path("ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("steps 3  final loss ", 0), 0u) << r.out;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "report.json"))["curve"].size(), 4u);
  ASSERT_EQ(invoke({"synth", "--frames", "10", "--tokens", "8", "--out-dir", path("d")}).code, 0);
  EXPECT_EQ(invoke({"run", "--video", path("d/video.bvtk"), "--text", path("d/text.bvtk"), "--checkpoint",
                    path("ckpt"), "--frames-to-select", "4"})
                .code,
            0);
  EXPECT_EQ(invoke({"run", "--video", path("d/video.bvtk"), "--text", path("d/text.bvtk"), "--checkpoint",
                    path("ckpt"), "--frames-to-select", "5"})
                .code,
            cli::kExitValidation);
}

TEST_F(Cli, GradCheckSingleModuleExitsZero) {
  const Result r = invoke({"grad-check", "--module", "merger"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("merger: max relative error"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, SweepWritesReport) {
  const Result r = invoke({"sweep", "--grid", "2x2,4", "--steps", "2", "--eval-size", "2", "--report",
                           path("sweep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "sweep.json"))["rows"].size(), 2u);
  EXPECT_EQ(invoke({"sweep", "--grid", "2;4"}).code, cli::kExitValidation);
}

TEST_F(Cli, InvalidPlantedListIsRejected) {
  EXPECT_EQ(invoke({"synth", "--planted", "1,x", "--out-dir", path("d")}).code, cli::kExitValidation);
  EXPECT_EQ(invoke({"synth", "--frames", "4", "--planted", "7", "--out-dir", path("d")}).code, cli::kExitValidation);
}

}  // namespace
}  // namespace bvllm
