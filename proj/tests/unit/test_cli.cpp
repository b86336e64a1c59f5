// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "raft/analysis.hpp"
#include "raft/checkpoint.hpp"
#include "raft/rational.hpp"

namespace raft {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(RAFT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("raft_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("fit --m notanumber"), 2);
  EXPECT_EQ(run("finetune --mode sideways"), 2);
}

TEST_F(CliTest, FitWritesCoefficientsAndErrors) {
  ASSERT_EQ(run("fit --target gelu --m 5 --n 4 --out " + path("gelu.txt")), 0);
  const auto c = load_coefficients(path("gelu.txt"));
  EXPECT_EQ(c.m(), 5);
  EXPECT_EQ(c.n(), 4);
  const auto errors = slurp(path("gelu.txt.errors.csv"));
  EXPECT_EQ(errors.rfind("x,target,fit,abs_error\n", 0), 0u);
}

TEST_F(CliTest, StudyWritesTable) {
  ASSERT_EQ(run("study --targets relu --grid 200 --out " + dir_.string()), 0);
  const auto csv = slurp(dir_ / "study.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(CliTest, GradcheckPasses) { EXPECT_EQ(run("gradcheck --instances 2"), 0); }

TEST_F(CliTest, PretrainExportPlotAuditFinetune) {
  const std::string pre = path("pre");
  ASSERT_EQ(run("pretrain --seed 2 --layers 1 --hidden 16 --heads 2 --steps 6 --batch-size 4 --out " + pre), 0);
  for (const char* f : {"log.csv", "final.ckpt", "best.ckpt", "run_config.json", "curves.csv"})
    EXPECT_TRUE(fs::exists(fs::path(pre) / f)) << f;
  EXPECT_NO_THROW(load_checkpoint(pre + "/final.ckpt"));

  const std::string ex = path("export");
  ASSERT_EQ(run("export --checkpoint " + pre + "/final.ckpt --samples 11 --out " + ex), 0);
  const auto curves = parse_curves_csv(slurp(fs::path(ex) / "curves.csv"));
  EXPECT_EQ(curves.size(), 2u * 11u);
  EXPECT_TRUE(fs::exists(fs::path(ex) / "near_zero.csv"));

  ASSERT_EQ(run("plot " + ex + "/curves.csv --labels pretrained --reference gelu --out " + ex), 0);
  EXPECT_NE(slurp(fs::path(ex) / "curves.svg").find("</svg>"), std::string::npos);

  EXPECT_EQ(run("audit --checkpoint " + pre + "/final.ckpt --mode raf-only"), 0);

  const std::string ft = path("ft");
  ASSERT_EQ(run("finetune --checkpoint " + pre + "/final.ckpt --mode raf-only --epochs 1 --batch-size 16 --out " + ft),
            0);
  EXPECT_TRUE(fs::exists(fs::path(ft) / "best.ckpt"));
  EXPECT_TRUE(fs::exists(fs::path(ft) / "log.csv"));
  EXPECT_EQ(run("export --checkpoint " + path("missing.ckpt")), 2);
}

TEST_F(CliTest, CorruptCheckpointFailsCleanly) {
  std::ofstream(path("bad.ckpt")) << "RAFTCKPT garbage";
  EXPECT_EQ(run("export --checkpoint " + path("bad.ckpt") + " --out " + dir_.string()), 1);
}

}  // namespace
}  // namespace raft
