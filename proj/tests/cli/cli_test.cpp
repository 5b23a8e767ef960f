#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hkt/data/listops.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(HKT_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return std::size_t(std::count(s.begin(), s.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("hkt_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    setenv("HKT_OUTPUT_ROOT", root_.c_str(), 1);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
  const std::string small_ =
      "--set data.n_train=24 --set data.n_val=8 --set data.n_test=8 --set data.seq_len=24 "
      "--set data.max_depth=2 --set model.max_seq_len=24 --set model.d_model=16 "
      "--set model.n_heads=2 --set model.n_layers=1";
};

}  // namespace

TEST_F(Cli, GenerateDataCountsChecksumsAndLabels) {
  ASSERT_EQ(run("generate-data --seed 3 --out a " + small_).code, 0);
  ASSERT_EQ(run("generate-data --seed 3 --out b " + small_).code, 0);
  EXPECT_EQ(lines(root_ / "a" / "train.tsv"), 24u);
  EXPECT_EQ(lines(root_ / "a" / "val.tsv"), 8u);
  EXPECT_EQ(lines(root_ / "a" / "test.tsv"), 8u);
  for (const char* f : {"train.tsv", "val.tsv", "test.tsv", "meta.json"})
    EXPECT_EQ(slurp(root_ / "a" / f), slurp(root_ / "b" / f)) << f;
  const auto stored = hkt::data::read_splits(root_ / "a");
  for (std::size_t i : {0, 5, 11, 17, 23})
    EXPECT_EQ(hkt::data::evaluate_listops(stored.splits.train.sequences[i]),
              stored.splits.train.labels[i]);
  EXPECT_EQ(run("generate-data --seed 3 --out a " + small_).code, 3);
  EXPECT_EQ(run("generate-data --seed 3 --force --out a " + small_).code, 0);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("nonsense").code, 2);
  EXPECT_EQ(run("verify --bogus").code, 2);
  EXPECT_EQ(run("verify --suite nope").code, 2);
  EXPECT_EQ(run("train --set model.unknown=1").code, 2);
  EXPECT_EQ(run("eval --checkpoint /nonexistent").code, 2);
}

TEST_F(Cli, VerifyOpsAndCausalRefusal) {
  const auto ops = run("verify --suite ops");
  EXPECT_EQ(ops.code, 0);
  EXPECT_NE(ops.out.find("1.3125"), std::string::npos);
  const auto refuse = run("verify --suite causal --set model.causal=false");
  EXPECT_EQ(refuse.code, 2);
  EXPECT_NE(refuse.out.find("causal"), std::string::npos);
}

TEST_F(Cli, TrainEvalAnalyzeReportDeterministic) {
  ASSERT_EQ(run("generate-data --seed 1 " + small_).code, 0);
  const std::string tr = "train --seed 2 --set train.epochs=3 --set train.warmup_epochs=1 "
                         "--set train.batch_size=8 " + small_;
  ASSERT_EQ(run(tr + " --out r1").code, 0);
  ASSERT_EQ(run(tr + " --out r2").code, 0);
  EXPECT_EQ(slurp(root_ / "r1" / "metrics.csv"), slurp(root_ / "r2" / "metrics.csv"));
  EXPECT_EQ(lines(root_ / "r1" / "metrics.csv"), 4u);
  EXPECT_EQ(slurp(root_ / "r1" / "best.ckpt"), slurp(root_ / "r2" / "best.ckpt"));

  const auto ev = run("eval --checkpoint " + (root_ / "r1" / "best.ckpt").string() + " --split val");
  EXPECT_EQ(ev.code, 0);
  EXPECT_NE(ev.out.find("accuracy"), std::string::npos);

  const auto an = run("analyze --checkpoint " + (root_ / "r1" / "best.ckpt").string() +
                      " --probes 4 --gram-samples 6 --pca-dims 3 --out an");
  EXPECT_EQ(an.code, 0) << an.out;
  for (const char* f : {"decomposition.csv", "ratio_table.csv", "psd.csv", "info.csv", "gram.csv",
                        "analysis.jsonl"})
    EXPECT_TRUE(fs::exists(root_ / "an" / f)) << f;

  const auto rep = run("report --in .");
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(slurp(root_ / "report.csv").find("r1,"), std::string::npos);
}

TEST_F(Cli, AnalyzeTiedKeysHasNoDirectionalEnergy) {
  ASSERT_EQ(run("generate-data --seed 1 " + small_).code, 0);
  ASSERT_EQ(run("analyze --tie-keys --pca-dims 3 --probes 3 --gram-samples 4 --out tied " + small_).code, 0);
  std::istringstream csv(slurp(root_ / "tied" / "decomposition.csv"));
  std::string header, line;
  std::getline(csv, header);
  // locate the energy column
  std::size_t col = 0, pos = 0;
  for (std::string h; std::getline(std::istringstream(header.substr(pos)), h, ',');) {
    if (h == "energy") break;
    pos += h.size() + 1;
    ++col;
  }
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= col; ++i) std::getline(ss, cell, ',');
    EXPECT_EQ(std::stod(cell), 0.0) << line;
    ++rows;
  }
  EXPECT_GT(rows, 0u);
}

TEST_F(Cli, ReportDecayFit) {
  const auto r = run("report --decay 1=60,2=70,3=75,4=77.5");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("delta 0.5"), std::string::npos) << r.out;
}

TEST_F(Cli, BenchWritesCsv) {
  const auto r = run("bench --grid 16,32 --batch 1 --batches 20 --warmup 3 --out b.csv "
                     "--set model.d_model=16 --set model.n_heads=2");
  EXPECT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(root_ / "b.csv");
  EXPECT_NE(csv.find("hkt,32,3,"), std::string::npos);
  EXPECT_NE(csv.find("mha,32,1,"), std::string::npos);
  EXPECT_NE(csv.find(",1.3125,1.3125"), std::string::npos);
}
