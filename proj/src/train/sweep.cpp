#include "hkt/train/sweep.hpp"

#include <cstdio>
#include <fstream>

#include "hkt/error.hpp"
#include "hkt/verify/ops_count.hpp"

namespace hkt::train {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void run_row(SweepRow& row, const TrainConfig& cfg, const Splits& data,
             const std::optional<std::filesystem::path>& out_dir) {
  try {
    row.model.validate();
    row.overhead = verify::count_ops(row.model, row.model.max_seq_len, cfg.seed).ratio_measured;
    model::HktModel m(row.model, cfg.seed);
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / row.name;
    row.run = train(m, data, cfg, dir);
  } catch (const Error& e) {
    row.error = e.what();
  }
}

}  // namespace

std::vector<SweepRow> ablation_sweep(const model::ModelConfig& base, const TrainConfig& cfg,
                                     const Splits& data, const SweepSpec& spec,
                                     const std::optional<std::filesystem::path>& out_dir) {
  std::vector<SweepRow> rows;
  for (const auto& a : spec.ablations) {
    SweepRow row;
    row.kind = "ablation";
    row.name = a;
    try {
      row.model = apply_ablation(base, a);
    } catch (const Error& e) {
      row.model = base;
      row.error = e.what();
      rows.push_back(row);
      continue;
    }
    run_row(row, cfg, data, out_dir);
    rows.push_back(std::move(row));
  }
  for (std::size_t s : spec.strides)
    for (std::size_t L : spec.levels) {
      SweepRow row;
      row.kind = "grid";
      row.name = "L" + std::to_string(L) + "_s" + std::to_string(s);
      row.model = base;
      row.model.n_levels = L;
      row.model.stride = s;
      run_row(row, cfg, data, out_dir);
      rows.push_back(std::move(row));
    }
  return rows;
}

std::string ablation_table_csv(const std::vector<SweepRow>& rows) {
  std::string out = "name,levels,stride,beta,alpha,div,mono,overhead,best_val_acc,test_acc,status\n";
  for (const auto& r : rows) {
    if (r.kind != "ablation") continue;
    out += r.name + "," + std::to_string(r.model.n_levels) + "," + std::to_string(r.model.stride) +
           "," + model::to_string(r.model.beta_mode) + "," + model::to_string(r.model.alpha_mode) +
           "," + (r.model.div_loss ? "on" : "off") + "," + (r.model.mono_loss ? "on" : "off") +
           "," + fmt(r.overhead) + ",";
    if (r.run) out += fmt(r.run->best_val_acc) + "," + fmt(r.run->test_acc) + ",ok\n";
    else out += ",,failed\n";
  }
  return out;
}

std::string grid_table_csv(const std::vector<SweepRow>& rows) {
  std::string out = "levels,stride,overhead,best_val_acc,test_acc,status\n";
  for (const auto& r : rows) {
    if (r.kind != "grid") continue;
    out += std::to_string(r.model.n_levels) + "," + std::to_string(r.model.stride) + "," +
           fmt(r.overhead) + ",";
    if (r.run) out += fmt(r.run->best_val_acc) + "," + fmt(r.run->test_acc) + ",ok\n";
    else out += ",,failed\n";
  }
  return out;
}

}  // namespace hkt::train
