#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "priorformer/cli.hpp"
#include "priorformer/errors.hpp"
#include "priorformer/model.hpp"
#include "test_util.hpp"

using namespace priorformer;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "priorformer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string golden(const std::string& name) {
  std::ifstream in(fs::path(PRIORFORMER_GOLDEN_DIR) / name);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class CliWorkspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("priorformer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

constexpr const char* kSmallSpec = "videos = 12\nframes = 3\ntokens = 2\nc_feat = 4\nc_cont = 3\nc_dist = 3\n";
constexpr const char* kSmallRun =
    "layers = 1\nheads = 2\nd_model = 4\nd_ff = 8\ntokens = 2\nc_feat = 4\nc_cont = 3\nc_dist = 3\n"
    "gru_hidden = 2\nepochs = 2\nlr = 1e-3\nbatch_size = 4\n";

}  // namespace

TEST(CliHelp, MatchesGoldenFiles) {
  EXPECT_EQ(run({"--help"}).out, golden("help.txt"));
  for (const char* sub : {"synth", "train", "predict", "eval", "gradcheck"}) {
    const Result r = run({sub, "--help"});
    EXPECT_EQ(r.code, cli::kOk);
    EXPECT_EQ(r.out, golden(std::string("help_") + sub + ".txt")) << sub;
  }
}

TEST(CliUsage, BadInvocationsExitWithUsageCode) {
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"bogus"}).code, cli::kUsage);
  EXPECT_EQ(run({"predict", "--params", "x"}).code, cli::kUsage);
  EXPECT_EQ(run({"eval", "--params", "x", "--data", "y", "--ablate", "gru"}).code, cli::kUsage);
}

TEST(CliConfig, ParsesKnownKeys) {
  const auto rc = cli::parse_run_config("# comment\nlayers = 3\nheads=4 # trailing\nuse_gru = false\noptimizer = sgd\n");
  EXPECT_EQ(rc.model.encoder.layers, 3u);
  EXPECT_EQ(rc.model.encoder.heads, 4u);
  EXPECT_FALSE(rc.model.ablation.use_gru);
  EXPECT_EQ(rc.train.optimizer, OptimizerKind::kSgd);
}

TEST(CliConfig, RejectsBadInput) {
  EXPECT_THROW(cli::parse_run_config("colour = red\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("layers = 2\nlayers = 3\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("layers = two\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("layers\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("d_model = 10\nheads = 4\n"), ConfigError);
  EXPECT_THROW(cli::parse_synth_spec("sigma = -1\n"), ConfigError);
  EXPECT_EQ(cli::parse_synth_spec("videos = 7\n").videos, 7u);
}

TEST(CliGradcheck, DefaultTinyConfigPasses) {
  const Result r = run({"gradcheck", "--seed", "1"});
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_NE(r.out.find("max_rel_error\t"), std::string::npos);
}

TEST_F(CliWorkspace, SynthTrainPredictEval) {
  write_text(path("spec.txt"), kSmallSpec);
  write_text(path("run.cfg"), kSmallRun);
  ASSERT_EQ(run({"synth", "--spec", path("spec.txt"), "--out-dir", path("data")}).code, cli::kOk);

  const Result tr = run({"train", "--data", path("data"), "--config", path("run.cfg"), "--out", path("m.pfmp")});
  ASSERT_EQ(tr.code, cli::kOk) << tr.err;
  EXPECT_EQ(tr.out.rfind("epoch\ttrain_l1\tval_plcc\tval_srcc\n", 0), 0u);

  const Result pr = run({"predict", "--params", path("m.pfmp"), "--video", path("data/synth_00000.pfvf")});
  ASSERT_EQ(pr.code, cli::kOk) << pr.err;
  std::istringstream lines(pr.out);
  std::string line;
  std::vector<std::string> seen;
  while (std::getline(lines, line)) seen.push_back(line.substr(0, line.find('\t')));
  EXPECT_EQ(seen, (std::vector<std::string>{"q", "q", "q", "Q"}));

  const StoredModel model = load_params(path("m.pfmp"));
  const double q = predict_video(read_feature_file(path("data/synth_00000.pfvf")), model.params, model.config).score;
  EXPECT_NEAR(std::stod(pr.out.substr(pr.out.find("Q\t") + 2)), q, 1e-9);

  const Result ev = run({"eval", "--params", path("m.pfmp"), "--data", path("data"), "--ablate", "ct", "--ablate", "dt"});
  ASSERT_EQ(ev.code, cli::kOk) << ev.err;
  EXPECT_NE(ev.out.find("srcc\t"), std::string::npos);
  EXPECT_NE(ev.out.find("\tw.o. CT+DT\n"), std::string::npos);
}

TEST_F(CliWorkspace, ErrorsMapToDistinctExitCodes) {
  write_text(path("bad.cfg"), "bogus = 1\n");
  write_text(path("spec.txt"), kSmallSpec);
  ASSERT_EQ(run({"synth", "--spec", path("spec.txt"), "--out-dir", path("data")}).code, cli::kOk);
  const std::string video = path("data/synth_00001.pfvf");

  EXPECT_EQ(run({"predict", "--params", path("missing.pfmp"), "--video", video}).code, cli::kIo);
  EXPECT_EQ(run({"train", "--data", path("data"), "--config", path("bad.cfg"), "--out", path("m")}).code,
            cli::kConfig);
  EXPECT_EQ(run({"predict", "--params", video, "--video", video}).code, cli::kFormat);

  // A model whose widths do not match the data.
  const ModelConfig other = priorformer::testing::tiny_config();
  save_params(init_model(other, 0), other, path("other.pfmp"));
  EXPECT_EQ(run({"predict", "--params", path("other.pfmp"), "--video", video}).code, cli::kConfig);

  // Unlabelled video in an eval directory.
  fs::create_directories(path("unlabelled"));
  FeatureSequence v = read_feature_file(video);
  v.mos.reset();
  write_feature_file(v, path("unlabelled/a.pfvf"));
  write_text(path("run.cfg"), kSmallRun);
  ASSERT_EQ(run({"train", "--data", path("data"), "--config", path("run.cfg"), "--out", path("m.pfmp")}).code,
            cli::kOk);
  EXPECT_EQ(run({"eval", "--params", path("m.pfmp"), "--data", path("unlabelled")}).code, cli::kContract);

  // Two copies of one video: constant predictions leave the correlation undefined.
  fs::create_directories(path("twins"));
  fs::copy_file(video, path("twins/a.pfvf"));
  fs::copy_file(video, path("twins/b.pfvf"));
  EXPECT_EQ(run({"eval", "--params", path("m.pfmp"), "--data", path("twins")}).code, cli::kNumeric);
}
