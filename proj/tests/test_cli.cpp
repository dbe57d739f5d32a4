#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gnn_esr/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gnn-esr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = gnn_esr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// report.txt without its run-specific header.
std::string report_body(const fs::path& dir) {
  const std::string text = slurp(dir / "report.txt");
  return text.substr(text.find("dataset = "));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    root_ = fs::temp_directory_path() / ("gnn_esr_cli_" + std::to_string(rd()));
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string path(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

}  // namespace

TEST_F(CliTest, UnknownTaskIsUsageError) {
  Outcome o = invoke({"train", "--task", "nosuch"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("Usage"), std::string::npos);
}

TEST_F(CliTest, BadFlagsAreUsageErrors) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"train", "--task", "hlld", "--model", "cnn"}).code, 2);
  EXPECT_EQ(invoke({"train", "--task", "hlld", "--lambda", "1.5"}).code, 2);
  EXPECT_EQ(invoke({"train", "--task", "hlld", "--epochs", "x"}).code, 2);
  EXPECT_EQ(invoke({"train", "--task", "hlld", "--no-such-flag"}).code, 2);
  EXPECT_EQ(invoke({"train"}).code, 2);
  EXPECT_EQ(invoke({"train", "--task", "hlld", "--dataset-dir", path("x")}).code, 2);
  EXPECT_EQ(invoke({"generate", "--task", "hlld"}).code, 2);
}

TEST_F(CliTest, MissingInputIsFailure) {
  Outcome o = invoke({"inspect", "--dataset-dir", path("absent")});
  EXPECT_EQ(o.code, 1);
  EXPECT_FALSE(o.err.empty());
  EXPECT_EQ(invoke({"train", "--dataset-dir", path("absent"), "--out", path("run")}).code, 1);
  EXPECT_EQ(invoke({"embed", "--dataset-dir", path("absent"), "--out", path("emb")}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  Outcome o = invoke({"--help"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("reproduce"), std::string::npos);
}

TEST_F(CliTest, GenerateInspectEmbed) {
  ASSERT_EQ(invoke({"generate", "--task", "mdc", "--size", "10", "--out", path("data")}).code, 0);
  for (const char* f : {"A", "graph_indicator", "graph_labels", "node_labels"})
    EXPECT_TRUE(fs::exists(root_ / "data" / (std::string("mdc_") + f + ".txt"))) << f;
  Outcome o = invoke({"inspect", "--dataset-dir", path("data")});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("graphs: 10"), std::string::npos);
  EXPECT_NE(o.out.find("disconnected graphs: 0"), std::string::npos);
  EXPECT_EQ(invoke({"embed", "--dataset-dir", path("data"), "--out", path("emb")}).code, 0);
  EXPECT_TRUE(fs::exists(root_ / "emb" / "graph_9.emb"));
}

TEST_F(CliTest, TrainWritesIdenticalReportsForIdenticalRuns) {
  std::vector<std::string> common{"train", "--task", "twothree", "--size", "12", "--folds", "2", "--epochs", "2"};
  auto a = common, b = common;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b"), "--jobs", "2"});
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  EXPECT_EQ(report_body(root_ / "a"), report_body(root_ / "b"));
  EXPECT_EQ(slurp(root_ / "a" / "results.csv"), slurp(root_ / "b" / "results.csv"));
  EXPECT_EQ(slurp(root_ / "a" / "config.txt"), slurp(root_ / "b" / "config.txt"));
  EXPECT_NE(slurp(root_ / "a" / "report.txt").find("# finished: "), std::string::npos);
}

TEST_F(CliTest, TrainOnCorpusDirectory) {
  ASSERT_EQ(invoke({"generate", "--task", "nlc", "--size", "12", "--out", path("nlc")}).code, 0);
  Outcome o = invoke({"train", "--dataset-dir", path("nlc"), "--model", "gnn", "--folds", "2", "--epochs", "1",
                      "--out", path("run")});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(slurp(root_ / "run" / "results.csv").find("nlc,gnn,none"), std::string::npos);
}
