#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hkt/data/dataset.hpp"
#include "hkt/model/hkt.hpp"

namespace hkt::train {

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double peak_lr = 1e-3;
  std::size_t warmup_epochs = 2;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double div_factor = 25.0;
  double final_div = 1e4;
  std::uint64_t seed = 0;
  // Samples used for the per-epoch simplex check.
  std::size_t invariant_probes = 4;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  std::string canonical() const;
  bool operator==(const TrainConfig&) const = default;
};

// no_hierarchy, beta_fixed0, beta_fixed1, alpha_uniform, div_off, mono_off,
// or "full" for no change. Throws ConfigError on unknown names.
model::ModelConfig apply_ablation(model::ModelConfig c, const std::string& name);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;              // at the last step of the epoch
  double max_grad_norm = 0.0;   // before clipping
  double lambda_deviation = 0;  // max |sum - 1| or negative entry
  double alpha_deviation = 0;
};

struct RunRecord {
  model::ModelConfig model;
  TrainConfig train;
  std::vector<EpochMetrics> epochs;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  double test_acc = 0.0;  // of the best-val parameters
  double ms_per_batch = 0.0;  // median
  std::string content_hash;

  bool simplex_ok(double tol = 1e-12) const;
};

struct Splits {
  const data::Dataset* train = nullptr;
  const data::Dataset* val = nullptr;
  const data::Dataset* test = nullptr;  // optional
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const model::HktModel& model, const data::Dataset& d);

// Throws ConfigError when tokens, labels or lengths do not fit the model.
void check_compatible(const model::ModelConfig& c, const data::Dataset& d);

// Max deviation of lambda and alpha from the probability simplex over a few
// traced forwards.
std::pair<double, double> simplex_deviation(const model::HktModel& model, const data::Dataset& d,
                                            std::size_t probes);

// Leaves `model` holding the best-val parameters. With out_dir set, writes
// metrics.csv (appended per epoch), best.ckpt and summary.json.
// A non-finite loss throws NumericError naming the last LR and grad norm.
RunRecord train(model::HktModel& model, const Splits& data, const TrainConfig& cfg,
                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
std::string summary_json(const RunRecord& r);

// SHA-256 over the library sources (fixed at build time) and both configs.
std::string content_hash(const model::ModelConfig& m, const TrainConfig& t);

}  // namespace hkt::train
