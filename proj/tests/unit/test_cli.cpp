#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "pnc/pipelines.hpp"
#include "test_paths.hpp"

namespace fs = std::filesystem;
using pnc::cli::run_cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string s(const fs::path& p) { return p.string(); }

// Tiny end-to-end run inside `work` with relative paths, so the recorded
// configs match between directories. Returns the first non-zero exit code.
int tiny_pipeline(const fs::path& work, const std::string& seed) {
  const fs::path dir = ".";
  const auto old = fs::current_path();
  fs::current_path(work);
  const std::vector<std::vector<std::string>> steps{
      {"lego", "gen", "--classes", "3", "--digits", "2", "--train", "8", "--test", "4", "--seed", seed, "--out",
       s(dir / "ds")},
      {"lego", "scenes", "--data", s(dir / "ds"), "--n", "6", "--seed", seed, "--canvas", "112", "--out", s(dir / "sc")},
      {"train", "--data", s(dir / "ds"), "--epochs", "1", "--channels", "4,4,8,8", "--kernel", "3", "--seed", seed,
       "--out", s(dir / "m.tnsr")},
      {"dict", "build", "--data", s(dir / "ds"), "--model", s(dir / "m.tnsr"), "--out", s(dir / "d.tnsr")},
      {"count", "train", "--scenes", s(dir / "sc"), "--model", s(dir / "m.tnsr"), "--seed", seed, "--out",
       s(dir / "s.tnsr")},
      {"run", "p2c", "--scenes", s(dir / "sc"), "--model", s(dir / "m.tnsr"), "--dict", s(dir / "d.tnsr"), "--out",
       s(dir / "p.jsonl")},
      {"run", "c2p", "--scenes", s(dir / "sc"), "--model", s(dir / "m.tnsr"), "--svm", s(dir / "s.tnsr"), "--seed",
       seed, "--out", s(dir / "c.jsonl")},
      {"eval", "--results", s(dir / "c.jsonl") + "," + s(dir / "p.jsonl"), "--annotations", s(dir / "sc"), "--out",
       s(dir / "report.csv")},
  };
  for (const auto& step : steps) {
    std::vector<std::string> args{"pnc"};
    args.insert(args.end(), step.begin(), step.end());
    if (const int rc = run_cli(args); rc != 0) {
      fs::current_path(old);
      return rc;
    }
  }
  fs::current_path(old);
  return 0;
}

}  // namespace

TEST(Config, Parsing) {
  const auto c = pnc::cli::parse_config("# comment\n--seed = 4\nlr_decay=0.5  # trailing\n\n");
  EXPECT_EQ(c.at("seed"), "4");
  EXPECT_EQ(c.at("lr-decay"), "0.5");
  EXPECT_EQ(c.size(), 2u);
  EXPECT_THROW(pnc::cli::parse_config("seed=1\nseed=2\n"), std::invalid_argument);
  EXPECT_THROW(pnc::cli::parse_config("justakey\n"), std::invalid_argument);
}

TEST(Cli, VersionAndUsageErrors) {
  EXPECT_EQ(run_cli({"pnc", "--version"}), 0);
  EXPECT_EQ(run_cli({"pnc"}), 2);
  EXPECT_EQ(run_cli({"pnc", "lego", "gen"}), 2);  // --out is required
  EXPECT_EQ(run_cli({"pnc", "train", "--data", "x", "--out", "y", "--lr", "-1"}), 2);
  EXPECT_EQ(run_cli({"pnc", "lego", "gen", "--out", "z", "--noise", "2"}), 2);
}

TEST(Cli, MissingDataIsExit3) {
  const auto dir = pnc_test::scratch_dir("cli_missing");
  EXPECT_EQ(run_cli({"pnc", "train", "--data", s(dir / "nothere"), "--out", s(dir / "m.tnsr")}), 3);
  EXPECT_EQ(run_cli({"pnc", "eval", "--results", s(dir / "none.jsonl"), "--annotations", s(dir), "--out",
                     s(dir / "r.csv")}),
            3);
}

TEST(Cli, ConfigFileAndOverride) {
  const auto dir = pnc_test::scratch_dir("cli_config");
  {
    std::ofstream(dir / "gen.cfg") << "classes = 2\ndigits=1\ntrain=3\ntest=1\nseed=5\n";
  }
  ASSERT_EQ(run_cli({"pnc", "--config", s(dir / "gen.cfg"), "lego", "gen", "--out", s(dir / "a"), "--train", "2"}), 0);
  const auto manifest = slurp(dir / "a" / "manifest.json");
  EXPECT_NE(manifest.find("\"classes\":\"2\""), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("\"train\":\"2\""), std::string::npos) << manifest;  // flag wins
  EXPECT_NE(manifest.find("\"seed\":\"5\""), std::string::npos) << manifest;

  {
    std::ofstream(dir / "bad.cfg") << "classes=2\nno-such-option=1\n";
  }
  EXPECT_EQ(run_cli({"pnc", "--config", s(dir / "bad.cfg"), "lego", "gen", "--out", s(dir / "b")}), 2);
  {
    std::ofstream(dir / "dup.cfg") << "classes=2\nclasses=3\n";
  }
  EXPECT_EQ(run_cli({"pnc", "--config", s(dir / "dup.cfg"), "lego", "gen", "--out", s(dir / "c")}), 2);
}

TEST(Cli, TinyPipelineIsDeterministic) {
  const auto a = pnc_test::scratch_dir("cli_det_a");
  const auto b = pnc_test::scratch_dir("cli_det_b");
  ASSERT_EQ(tiny_pipeline(a, "3"), 0);
  ASSERT_EQ(tiny_pipeline(b, "3"), 0);
  for (const char* f : {"m.tnsr", "d.tnsr", "s.tnsr", "p.jsonl", "c.jsonl", "report.csv", "report.count.csv",
                        "sc/scenes.tnsr", "sc/annotations.jsonl", "ds/train.tnsr"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto results = pnc::load_results(a / "p.jsonl");
  EXPECT_EQ(results.size(), 6u);
  EXPECT_EQ(slurp(a / "report.csv").rfind("Overlap,Methods,1,2,3\n", 0), 0u);
  EXPECT_EQ(slurp(a / "report.count.csv").rfind("Methods,0,1,2,3,4+,mean(%)\n", 0), 0u);
}

TEST(Cli, RatiosGiveOneBlockEach) {
  const auto dir = pnc_test::scratch_dir("cli_ratios");
  ASSERT_EQ(tiny_pipeline(dir, "4"), 0);
  ASSERT_EQ(run_cli({"pnc", "eval", "--results", s(dir / "p.jsonl"), "--annotations", s(dir / "sc"), "--ratios",
                     "0.5,0.7", "--out", s(dir / "r2.csv")}),
            0);
  const auto text = slurp(dir / "r2.csv");
  EXPECT_NE(text.find("\n0.5,p2c,"), std::string::npos) << text;
  EXPECT_NE(text.find("\n0.7,p2c,"), std::string::npos) << text;
  EXPECT_EQ(text.find("\n0.8,"), std::string::npos) << text;
  ASSERT_EQ(run_cli({"pnc", "render", "--scenes", s(dir / "sc"), "--results", s(dir / "p.jsonl"), "--out",
                     s(dir / "png")}),
            0);
  EXPECT_TRUE(fs::exists(dir / "png" / "scene_000000.png"));
}
