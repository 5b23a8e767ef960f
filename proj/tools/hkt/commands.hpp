#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hkt::cli {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kIo = 3 };

struct Common {
  std::string config;              // YAML file, optional
  std::vector<std::string> set;    // section.key=value overrides
  std::optional<std::uint64_t> seed;
};

struct GenerateArgs {
  Common common;
  std::string out = "data/listops";
  bool force = false;
};

struct TrainArgs {
  Common common;
  std::string data = "data/listops";
  std::string out = "runs/train";
  std::string ablation = "full";
};

struct EvalArgs {
  std::string checkpoint;
  std::string data = "data/listops";
  std::string split = "test";
};

struct AnalyzeArgs {
  std::string checkpoint;  // empty: fresh model from the config
  Common common;
  std::string data = "data/listops";
  std::string out = "runs/analysis";
  std::size_t probes = 16;
  std::size_t gram_samples = 20;
  double eps0 = 0.5;
  std::size_t pca_dims = 10;
  bool tie_keys = false;
};

struct VerifyArgs {
  Common common;
  std::string suite = "all";
  std::string out;
};

struct BenchArgs {
  Common common;
  std::string grid = "128,256";
  std::string model = "both";
  std::size_t batch = 4;
  std::size_t batches = 20;
  std::size_t warmup = 3;
  std::string out = "runs/bench.csv";
};

struct SweepArgs {
  Common common;
  std::string data = "data/listops";
  std::string out = "runs/sweep";
  std::string ablations = "full,no_hierarchy,beta_fixed0,beta_fixed1,alpha_uniform,div_off,mono_off";
  std::string levels = "1,2,3,4";
  std::string strides = "2,3";
};

struct ReportArgs {
  std::string in;
  std::string out;
  std::string decay;  // "1=49.9,2=55.7,..."
};

int generate_data(const GenerateArgs& a);
int train_model(const TrainArgs& a);
int eval_model(const EvalArgs& a);
int analyze(const AnalyzeArgs& a);
int verify(const VerifyArgs& a);
int bench(const BenchArgs& a);
int sweep(const SweepArgs& a);
int report(const ReportArgs& a);

}  // namespace hkt::cli
