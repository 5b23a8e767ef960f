// Prints one PASS/FAIL line per acceptance criterion. Exit status is nonzero
// only when a criterion fails that was not listed with --allow-fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hkt/analysis/decompose.hpp"
#include "hkt/analysis/gram.hpp"
#include "hkt/analysis/info.hpp"
#include "hkt/data/listops.hpp"
#include "hkt/num/linalg.hpp"
#include "hkt/train/trainer.hpp"
#include "hkt/verify/causal.hpp"
#include "hkt/verify/gradcheck.hpp"
#include "hkt/verify/ops_count.hpp"
#include "hkt/verify/reduction.hpp"

using namespace hkt;
namespace fs = std::filesystem;
using grad::Tensor;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

model::ModelConfig desk() { return model::ModelConfig{}; }

Verdict overhead() {
  const auto t0 = std::chrono::steady_clock::now();
  const double expected[] = {1.0, 1.25, 1.3125, 1.328125};
  bool ok = true;
  std::string d;
  for (std::size_t L = 1; L <= 4; ++L) {
    auto c = desk();
    c.n_levels = L;
    const auto r = verify::count_ops(c, 128);
    ok = ok && r.exact_grid && r.ratio_measured == expected[L - 1] &&
         r.ratio_theory == expected[L - 1];
    d += "L=" + std::to_string(L) + ":" + fmt(r.ratio_measured, "%.10g") + " ";
  }
  // Off the grid the floor lengths undercut the geometric series.
  auto c = desk();
  const auto off = verify::count_ops(c, 130);
  d += "(T=130 floor: " + fmt(off.ratio_measured, "%.10g") + " vs " +
       fmt(off.ratio_theory, "%.10g") + ") ";
  const double t = seconds_since(t0);
  d += fmt(t, "%.2f") + "s";
  return {ok && off.ratio_measured <= off.ratio_theory && t < 1.0, d};
}

Verdict leakage() {
  const auto t0 = std::chrono::steady_clock::now();
  auto c = desk();
  c.causal = true;
  const model::HktModel m(c, 7);
  const auto r = verify::measure_leakage(m, 32, 50, 7);
  const auto s = verify::measure_leakage(m, 32, 3, 7, true);
  const double t = seconds_since(t0);
  return {r.max_leakage <= 1e-12 && s.max_leakage > 1e-3 && t < 120.0,
          "max leakage " + fmt(r.max_leakage, "%.3e") + ", sabotaged " +
              fmt(s.max_leakage, "%.3e") + ", " + fmt(t, "%.1f") + "s"};
}

Verdict reduction() {
  const auto t0 = std::chrono::steady_clock::now();
  auto c = desk();
  c.max_seq_len = 32;
  double worst = 0.0;
  bool ok = true;
  for (const auto& rc : verify::reduction_suite(c, 11, 10, 1e-9)) {
    worst = std::max(worst, rc.max_abs_diff);
    ok = ok && rc.passed;
  }
  const double t = seconds_since(t0);
  return {ok && t < 60.0, "8 cases x 10 draws, max |diff| " + fmt(worst, "%.3e") + ", " +
                              fmt(t, "%.1f") + "s"};
}

Verdict gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double prim = 0.0;
  std::string worst_prim;
  for (const auto& p : verify::primitive_suite(3))
    if (p.max_rel_error >= prim) {
      prim = p.max_rel_error;
      worst_prim = p.name;
    }
  const auto full = verify::model_gradient_check(desk(), 5, 3);
  auto causal = desk();
  causal.causal = true;
  causal.div_loss = true;
  causal.mono_loss = true;
  const auto full_c = verify::model_gradient_check(causal, 6, 2);
  const double t = seconds_since(t0);
  const double worst = std::max({prim, full.max_rel_error, full_c.max_rel_error});
  return {worst < 1e-4 && t < 300.0,
          "primitives " + fmt(prim, "%.2e") + " (" + worst_prim + "), desk model " +
              fmt(full.max_rel_error, "%.2e") + " over " + std::to_string(full.coordinates) +
              " coords, causal+reg " + fmt(full_c.max_rel_error, "%.2e") + ", " + fmt(t, "%.1f") + "s"};
}

std::vector<std::vector<int>> random_tokens(std::size_t n, std::size_t T, std::size_t vocab,
                                            std::uint64_t seed) {
  num::Prng rng(seed);
  std::vector<std::vector<int>> out(n, std::vector<int>(T));
  for (auto& s : out)
    for (auto& t : s) t = int(rng.below(vocab));
  return out;
}

Verdict decomposition() {
  auto c = desk();
  c.max_seq_len = 32;
  const auto probes = random_tokens(4, 32, c.vocab_size, 1);
  const model::HktModel m(c, 2);
  const auto rep = analysis::decompose_scores(m, probes);
  double dev = 0.0;
  std::size_t exact = 0, entries = 0;
  for (const auto& r : rep.rows) {
    dev = std::max({dev, r.max_sym_dev, r.max_anti_dev});
    exact += r.exact_entries;
    entries += r.entries;
  }
  model::HktModel tied(c, 2);
  for (std::size_t layer = 0; layer < c.n_layers; ++layer)
    for (std::size_t l = 0; l < c.n_levels; ++l)
      tied.params().at(model::level_key(layer, l, "wk")) =
          tied.params().at(model::level_key(layer, l, "wq"));
  const auto trep = analysis::decompose_scores(tied, probes);
  bool zero_energy = true, tied_bitwise = true;
  for (const auto& r : trep.rows) {
    zero_energy = zero_energy && r.energy == 0.0 && r.energy_from_ma == 0.0;
    tied_bitwise = tied_bitwise && r.exact_split;
  }
  // Comparable magnitudes: same-sign entries within a factor of two.
  num::Prng rng(9);
  Tensor g = Tensor::matrix(40, 40);
  for (auto& v : g.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * 0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 40; ++j) g(i, j) = (1.0 + rng.uniform()) * ((i + j) % 2 ? 1.0 : -1.0);
  const auto sp = analysis::split_bilinear(g);
  bool comparable_bitwise = true;
  for (std::size_t i = 0; i < g.size(); ++i)
    comparable_bitwise = comparable_bitwise && sp.ms[i] + sp.ma[i] == g[i];
  return {dev <= 1e-9 && zero_energy && tied_bitwise && comparable_bitwise,
          "identity dev " + fmt(dev, "%.2e") + ", tied energy " + (zero_energy ? "0" : "nonzero") +
              ", bitwise split tied " + (tied_bitwise ? "yes" : "no") + ", comparable " +
              (comparable_bitwise ? "yes" : "no") + ", random weights exact " +
              std::to_string(exact) + "/" + std::to_string(entries) + " entries"};
}

Verdict gram() {
  const auto c = desk();
  const model::HktModel m(c, 4);
  const auto r = analysis::gram_factorisation(m, random_tokens(20, 128, c.vocab_size, 5));
  const bool psd = r.min_eig >= -1e-9 * r.frobenius;
  return {psd && r.linear_rank <= r.rank_bound,
          "N=" + std::to_string(r.n) + ", min eig " + fmt(r.min_eig, "%.3e") + ", ||K||_F " +
              fmt(r.frobenius, "%.3e") + ", rank " + std::to_string(r.linear_rank) + " <= " +
              std::to_string(r.rank_bound)};
}

Verdict statistics() {
  bool ok = true;
  double kmin = 1e9, kmax = -1e9;
  for (std::uint64_t s = 0; s < 10; ++s) {
    num::Prng rng(100 + s);
    Tensor x = Tensor::matrix(2000, 5);
    for (auto& v : x.data()) v = rng.normal();
    const double kappa = num::mardia_classical(x) / 35.0;
    kmin = std::min(kmin, kappa);
    kmax = std::max(kmax, kappa);
  }
  ok = ok && kmin >= 0.85 && kmax <= 1.15;

  // y = w.z + e with var(w.z) = var(e) = 1: population R^2 = 0.5.
  num::Prng rng(77);
  const std::size_t n = 5000, p = 5;
  Tensor z = Tensor::matrix(n, p);
  for (auto& v : z.data()) v = rng.normal();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += z(i, j) / std::sqrt(double(p));
    y[i] = s + rng.normal();
  }
  const double r2 = num::ridge_r2(z, y);
  const double bound = analysis::gaussian_bound(r2);
  ok = ok && std::abs(r2 - 0.5) <= 0.05 && bound >= 0.30 && bound <= 0.40;
  return {ok, "kappa in [" + fmt(kmin, "%.4f") + ", " + fmt(kmax, "%.4f") + "], rho^2 " +
                  fmt(r2, "%.4f") + ", Gaussian bound " + fmt(bound, "%.4f") + " (0.5 log 2 = " +
                  fmt(0.5 * std::log(2.0), "%.4f") + ")"};
}

struct TrainedRuns {
  std::vector<model::HktModel> hier, flat;
  std::vector<train::RunRecord> hier_rec, flat_rec;
};

Verdict hierarchy_gain(TrainedRuns& out, bool quick, std::string& log) {
  const auto t0 = std::chrono::steady_clock::now();
  data::ListOpsSpec spec;
  if (quick) {
    spec.n_train = 200;
    spec.n_val = 100;
    spec.n_test = 100;
  }
  const auto splits = data::generate_listops(spec);
  auto c = desk();
  c.d_model = 32;
  train::TrainConfig t;
  t.epochs = quick ? 3 : 5;
  t.warmup_epochs = 1;
  t.peak_lr = 2e-3;
  double hier = 0.0, flat = 0.0;
  bool simplex = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    t.seed = seed;
    for (bool h : {true, false}) {
      auto mc = h ? c : train::apply_ablation(c, "no_hierarchy");
      model::HktModel m(mc, seed);
      const auto rec = train::train(m, {&splits.train, &splits.val, &splits.test}, t);
      simplex = simplex && rec.simplex_ok(1e-12) && rec.epochs.size() == t.epochs;
      log += "    seed " + std::to_string(seed) + (h ? " L=3" : " L=1") + ": best val " +
             fmt(rec.best_val_acc, "%.4f") + " (epoch " + std::to_string(rec.best_epoch) +
             "), final val " + fmt(rec.epochs.back().val_acc, "%.4f") + "\n";
      (h ? hier : flat) += rec.best_val_acc / 3.0;
      (h ? out.hier : out.flat).push_back(std::move(m));
      (h ? out.hier_rec : out.flat_rec).push_back(rec);
    }
  }
  const double gain = 100.0 * (hier - flat);
  const double tsec = seconds_since(t0);
  return {gain >= 2.0 && simplex && tsec < 1800.0,
          "mean val L=3 " + fmt(100 * hier, "%.2f") + "% vs L=1 " + fmt(100 * flat, "%.2f") +
              "%, gain " + fmt(gain, "%+.2f") + "pp, simplex invariants " +
              (simplex ? "hold" : "violated") + ", " + fmt(tsec / 60.0, "%.1f") + " min"};
}

Verdict psd_failure(const TrainedRuns& runs) {
  if (runs.hier.empty()) return {false, "needs the trained models of criterion 8"};
  bool ok = true;
  std::string d;
  auto audit = [&](const model::HktModel& m, const std::string& name) {
    double sum = 0.0, lo = 1.0, hi = 0.0;
    const auto rows = analysis::psd_audit(m);
    for (const auto& r : rows) {
      sum += r.spectrum.fraction_negative;
      lo = std::min(lo, r.spectrum.fraction_negative);
      hi = std::max(hi, r.spectrum.fraction_negative);
    }
    const double mean = sum / double(rows.size());
    ok = ok && mean >= 0.2 && mean <= 0.8;
    d += name + " " + fmt(mean, "%.3f") + " [" + fmt(lo, "%.2f") + "," + fmt(hi, "%.2f") + "] ";
  };
  for (std::size_t i = 0; i < runs.hier.size(); ++i) audit(runs.hier[i], "L3s" + std::to_string(i));
  for (std::size_t i = 0; i < runs.flat.size(); ++i) audit(runs.flat[i], "L1s" + std::to_string(i));
  return {ok, "mean negative fraction per run: " + d};
}

Verdict decay() {
  const auto fit = analysis::decay_calibration({{1, 49.9}, {2, 55.7}, {3, 55.3}, {4, 57.7}});
  // Side diagnostic: log-linear fit to consecutive gains 5.8, 4.4, 2.4, 2.0.
  const double g[] = {5.8, 4.4, 2.4, 2.0};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < 4; ++i) {
    sx += i;
    sy += std::log(g[i]);
    sxx += double(i) * i;
    sxy += i * std::log(g[i]);
  }
  const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
  const double delta_gains = 1.0 - std::exp(slope);
  return {fit.delta >= 0.2 && fit.delta <= 0.5,
          "delta " + fmt(fit.delta, "%.4f") + " (eps_inf " + fmt(fit.eps_inf, "%.4f") +
              ", monotone " + (fit.monotone ? "yes" : "no") + "); gains-only fit " +
              fmt(delta_gains, "%.3f")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int sh(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Verdict determinism(const std::string& cli, const fs::path& scratch) {
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const std::string env = "HKT_OUTPUT_ROOT=" + scratch.string() + " " + cli;
  const std::string data_flags =
      " --seed 5 --set data.n_train=64 --set data.n_val=32 --set data.n_test=32";
  bool ok = sh(env + " generate-data --out d1" + data_flags) == 0 &&
            sh(env + " generate-data --out d2" + data_flags) == 0;
  for (const char* f : {"train.tsv", "val.tsv", "test.tsv", "meta.json"})
    ok = ok && slurp(scratch / "d1" / f) == slurp(scratch / "d2" / f) &&
         !slurp(scratch / "d1" / f).empty();
  const std::string tr = env + " train --data d1 --seed 3 --set model.d_model=16 --set model.n_heads=2"
                               " --set train.epochs=3 --set train.warmup_epochs=1 --set train.batch_size=16";
  ok = ok && sh(tr + " --out r1") == 0 && sh(tr + " --out r2") == 0;
  const std::string m1 = slurp(scratch / "r1" / "metrics.csv");
  ok = ok && !m1.empty() && m1 == slurp(scratch / "r2" / "metrics.csv") &&
       slurp(scratch / "r1" / "best.ckpt") == slurp(scratch / "r2" / "best.ckpt");
  const std::string sw = env + " sweep --data d1 --seed 3 --set model.d_model=16 --set model.n_heads=2"
                               " --set model.n_layers=1 --set train.epochs=2 --set train.warmup_epochs=1"
                               " --ablations full,no_hierarchy --levels 1,2 --strides 2";
  ok = ok && sh(sw + " --out s1") == 0 && sh(sw + " --out s2") == 0 &&
       slurp(scratch / "s1" / "grid.csv") == slurp(scratch / "s2" / "grid.csv") &&
       slurp(scratch / "s1" / "ablation.csv") == slurp(scratch / "s2" / "ablation.csv") &&
       slurp(scratch / "s1" / "full" / "metrics.csv") == slurp(scratch / "s2" / "full" / "metrics.csv");
  fs::remove_all(scratch);
  return {ok, "generate-data, train and sweep rerun: data, metrics CSVs, checkpoints and tables " +
                  std::string(ok ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only, allow;
  bool quick = false;
  std::string cli = HKT_CLI;
  app.add_option("--only", only, "comma-separated criteria to run");
  app.add_option("--allow-fail", allow, "criteria whose failure does not fail the run");
  app.add_flag("--quick", quick, "small training budget for criterion 8 (not the acceptance setting)");
  app.add_option("--cli", cli, "path of the hkt binary");
  CLI11_PARSE(app, argc, argv);

  auto parse_set = [](const std::string& s) {
    std::set<int> out;
    std::stringstream in(s);
    for (std::string x; std::getline(in, x, ',');)
      if (!x.empty()) out.insert(std::stoi(x));
    return out;
  };
  const std::set<int> selected = parse_set(only), allowed = parse_set(allow);
  auto wanted = [&](int n) { return selected.empty() || selected.count(n); };

  TrainedRuns runs;
  std::string train_log;
  const fs::path scratch = fs::temp_directory_path() / ("hkt_acceptance_" + std::to_string(::getpid()));
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, overhead},
      {2, leakage},
      {3, reduction},
      {4, gradients},
      {5, decomposition},
      {6, gram},
      {7, statistics},
      {8, [&] { return hierarchy_gain(runs, quick, train_log); }},
      {9, [&] { return psd_failure(runs); }},
      {10, decay},
      {11, [&] { return determinism(cli, scratch); }},
  };
  const char* names[] = {"",
                         "overhead exactness",
                         "causal leakage",
                         "reduction oracles",
                         "gradient soundness",
                         "decomposition identities",
                         "Gram/PSD",
                         "statistics calibration",
                         "desk-scale hierarchy gain",
                         "PSD-failure replication",
                         "decay calibration",
                         "determinism"};
  int unexpected = 0, failed = 0;
  for (const auto& [n, fn] : criteria) {
    if (!wanted(n) && !(n == 8 && wanted(9))) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!wanted(n)) continue;
    std::cout << "criterion " << n << " (" << names[n] << "): " << (v.pass ? "PASS" : "FAIL")
              << " | " << v.detail << "\n";
    if (n == 8 && !train_log.empty()) std::cout << train_log;
    std::cout.flush();
    if (!v.pass) {
      ++failed;
      if (!allowed.count(n)) ++unexpected;
    }
  }
  std::cout << failed << " criterion(s) failed";
  if (failed) std::cout << ", " << unexpected << " not allowed to fail";
  std::cout << "\n";
  return unexpected ? 1 : 0;
}
