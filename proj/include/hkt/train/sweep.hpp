#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hkt/train/trainer.hpp"

namespace hkt::train {

struct SweepSpec {
  std::vector<std::string> ablations = {"full",        "no_hierarchy",  "beta_fixed0",
                                        "beta_fixed1", "alpha_uniform", "div_off",
                                        "mono_off"};
  std::vector<std::size_t> levels = {1, 2, 3, 4};
  std::vector<std::size_t> strides = {2, 3};
};

struct SweepRow {
  std::string kind;  // "ablation" or "grid"
  std::string name;
  model::ModelConfig model;
  double overhead = 0.0;  // measured score-entry ratio at the model's T
  std::optional<RunRecord> run;
  std::string error;  // set when the run failed
};

// One run per ablation and per (L, s). Every run starts from the same seed.
// A failing run is recorded and the sweep continues. With out_dir, each run
// writes into out_dir/<name>/.
std::vector<SweepRow> ablation_sweep(const model::ModelConfig& base, const TrainConfig& cfg,
                                     const Splits& data, const SweepSpec& spec,
                                     const std::optional<std::filesystem::path>& out_dir =
                                         std::nullopt);

// name,levels,stride,beta,alpha,div,mono,overhead,best_val_acc,test_acc,status
std::string ablation_table_csv(const std::vector<SweepRow>& rows);
// levels,stride,overhead,best_val_acc,test_acc,status
std::string grid_table_csv(const std::vector<SweepRow>& rows);

}  // namespace hkt::train
