#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "config_file.hpp"
#include "hkt/analysis/decompose.hpp"
#include "hkt/analysis/gram.hpp"
#include "hkt/analysis/info.hpp"
#include "hkt/analysis/report.hpp"
#include "hkt/data/listops.hpp"
#include "hkt/error.hpp"
#include "hkt/train/sweep.hpp"
#include "hkt/verify/causal.hpp"
#include "hkt/verify/gradcheck.hpp"
#include "hkt/verify/ops_count.hpp"
#include "hkt/verify/reduction.hpp"
#include "hkt/verify/witness.hpp"

namespace hkt::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ConfigFile load(const Common& c) {
  ConfigFile cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  for (const auto& s : c.set) apply_override(cfg, s);
  return cfg;
}

Resolved resolve_common(const Common& c) {
  Resolved r = resolve(load(c));
  if (c.seed) {
    r.train.seed = *c.seed;
    r.data.seed = *c.seed;
  }
  return r;
}

const data::Dataset& pick_split(const data::ListOpsSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (train, val, test)");
}

std::vector<std::vector<int>> first_sequences(const data::Dataset& d, std::size_t n) {
  const std::size_t k = std::min(n, d.size());
  return {d.sequences.begin(), d.sequences.begin() + std::ptrdiff_t(k)};
}

// Table printing: one header row, aligned columns.
void print_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (w.size() <= i) w.push_back(0);
      w[i] = std::max(w[i], r[i].size());
    }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i];
      if (i + 1 < r.size()) line += std::string(w[i] - r[i].size() + 2, ' ');
    }
    std::cout << line << "\n";
  }
}

}  // namespace

int generate_data(const GenerateArgs& a) {
  const Resolved r = resolve_common(a.common);
  const fs::path out = output_path(a.out);
  const auto splits = data::generate_listops(r.data);
  data::write_splits(out, r.data, splits, a.force);
  std::cout << "wrote " << out.string() << "\n";
  print_table({{"split", "samples", "sha256"},
               {"train", std::to_string(splits.train.size()), data::checksum(splits.train)},
               {"val", std::to_string(splits.val.size()), data::checksum(splits.val)},
               {"test", std::to_string(splits.test.size()), data::checksum(splits.test)}});
  return kOk;
}

int train_model(const TrainArgs& a) {
  Resolved r = resolve_common(a.common);
  const auto stored = data::read_splits(output_path(a.data));
  const model::ModelConfig mc = train::apply_ablation(r.model, a.ablation);
  mc.validate();
  model::HktModel m(mc, r.train.seed);
  const fs::path out = output_path(a.out);
  const auto& s = stored.splits;
  const auto rec = train::train(m, {&s.train, &s.val, &s.test}, r.train, out);
  std::vector<std::vector<std::string>> rows = {
      {"epoch", "train_loss", "train_acc", "val_acc", "lr", "grad_norm"}};
  for (const auto& e : rec.epochs)
    rows.push_back({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.train_acc), fmt(e.val_acc),
                    fmt(e.lr), fmt(e.max_grad_norm)});
  print_table(rows);
  std::cout << "best val " << fmt(rec.best_val_acc) << " at epoch " << rec.best_epoch
            << ", test " << fmt(rec.test_acc) << ", " << fmt(rec.ms_per_batch) << " ms/batch\n"
            << "outputs in " << out.string() << "\n";
  return kOk;
}

int eval_model(const EvalArgs& a) {
  const auto m = model::HktModel::load(a.checkpoint);
  const auto stored = data::read_splits(output_path(a.data));
  const auto& d = pick_split(stored.splits, a.split);
  train::check_compatible(m.config(), d);
  const auto r = train::evaluate(m, d);
  nlohmann::ordered_json j;
  j["format"] = "hkt-eval-v1";
  j["split"] = a.split;
  j["samples"] = d.size();
  j["loss"] = r.loss;
  j["accuracy"] = r.accuracy;
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int analyze(const AnalyzeArgs& a) {
  const Resolved r = resolve_common(a.common);
  model::HktModel m = a.checkpoint.empty() ? model::HktModel(r.model, r.train.seed)
                                           : model::HktModel::load(a.checkpoint);
  if (a.tie_keys) {
    const auto& c = m.config();
    for (std::size_t layer = 0; layer < c.n_layers; ++layer)
      for (std::size_t l = 0; l < c.n_levels; ++l)
        m.params().at(model::level_key(layer, l, "wk")) =
            m.params().at(model::level_key(layer, l, "wq"));
  }
  const auto stored = data::read_splits(output_path(a.data));
  const auto& val = stored.splits.val;
  train::check_compatible(m.config(), val);
  const auto probes = first_sequences(val, a.probes);
  if (probes.empty()) throw InputError("validation split is empty");

  const auto dec = analysis::decompose_scores(m, probes);
  const auto psd = analysis::psd_audit(m);
  analysis::InfoOptions io;
  io.eps0 = a.eps0;
  io.pca_dims = a.pca_dims;
  const auto info = analysis::info_bounds(m, val, io);
  const auto gram = analysis::gram_factorisation(m, first_sequences(val, a.gram_samples));

  const fs::path out = output_path(a.out);
  fs::create_directories(out);
  analysis::write_text(out / "decomposition.csv", analysis::decomposition_csv(dec));
  analysis::write_text(out / "ratio_table.csv", analysis::ratio_table_csv(dec));
  analysis::write_text(out / "psd.csv", analysis::psd_csv(psd));
  analysis::write_text(out / "info.csv", analysis::info_csv(info));
  analysis::write_text(out / "gram.csv", analysis::gram_csv(gram));
  analysis::write_text(out / "analysis.jsonl",
                       analysis::decomposition_jsonl(dec) + analysis::psd_jsonl(psd) +
                           analysis::info_jsonl(info) + analysis::gram_jsonl(gram));

  std::cout << "mean ||Ms||/||Ma|| by level\n" << analysis::ratio_table_csv(dec);
  double max_energy = 0.0, frac = 0.0;
  for (const auto& row : dec.rows) max_energy = std::max(max_energy, row.energy);
  for (const auto& p : psd) frac += p.spectrum.fraction_negative / double(psd.size());
  std::cout << "max directional energy " << fmt(max_energy) << "\n"
            << "mean negative-eigenvalue fraction " << fmt(frac) << "\n"
            << "K_hier min eigenvalue " << fmt(gram.min_eig) << " (||K||_F "
            << fmt(gram.frobenius) << "), linear rank " << gram.linear_rank << " <= "
            << gram.rank_bound << "\n"
            << "outputs in " << out.string() << "\n";
  return kOk;
}

int verify(const VerifyArgs& a) {
  ConfigFile cf = load(a.common);
  // Without a config file the desk model is checked in causal mode.
  if (a.common.config.empty() && !cf.model.count("causal")) cf.model["causal"] = "true";
  Resolved r = resolve(cf);
  const std::uint64_t seed = a.common.seed.value_or(0);
  r.model.validate();

  std::vector<std::string> suites;
  if (a.suite == "all") suites = {"ops", "causal", "reduction", "gradients"};
  else if (a.suite == "ops" || a.suite == "causal" || a.suite == "reduction" ||
           a.suite == "gradients" || a.suite == "witness")
    suites = {a.suite};
  else throw ConfigError("unknown suite '" + a.suite + "'");

  nlohmann::ordered_json report = {{"format", "hkt-verify-v1"}, {"seed", seed}};
  std::vector<std::string> failures;
  std::vector<std::vector<std::string>> rows = {{"suite", "case", "value", "limit", "result"}};
  auto record = [&](const std::string& suite, const std::string& name, double value,
                    const std::string& limit, bool ok) {
    rows.push_back({suite, name, fmt(value, "%.10g"), limit, ok ? "PASS" : "FAIL"});
    report["cases"].push_back({{"suite", suite}, {"case", name}, {"value", value},
                               {"limit", limit}, {"pass", ok}});
    if (!ok) failures.push_back(suite + "/" + name + " = " + fmt(value, "%.17g") + " (limit " + limit + ")");
  };

  for (const auto& s : suites) {
    if (s == "ops") {
      for (std::size_t L = 1; L <= 4; ++L) {
        model::ModelConfig c = r.model;
        c.n_levels = L;
        c.stride = 2;
        const auto oc = verify::count_ops(c, c.max_seq_len, seed);
        const bool ok = oc.exact_grid ? oc.ratio_measured == oc.ratio_theory
                                      : oc.ratio_measured <= oc.ratio_theory;
        record("ops", "ratio_L" + std::to_string(L) + "_s2_T" + std::to_string(oc.T),
               oc.ratio_measured, (oc.exact_grid ? "== " : "<= ") + fmt(oc.ratio_theory, "%.10g"), ok);
      }
    } else if (s == "causal") {
      if (!r.model.causal) throw ConfigError("causal suite needs model.causal=true");
      model::ModelConfig c = r.model;
      c.max_seq_len = std::max<std::size_t>(c.max_seq_len, 32);
      const model::HktModel m(c, seed);
      const auto leak = verify::measure_leakage(m, 32, 50, seed);
      record("causal", "leakage_T32_50_trials", leak.max_leakage, "<= 1e-12", leak.max_leakage <= 1e-12);
      const auto sab = verify::measure_leakage(m, 32, 5, seed, true);
      record("causal", "sabotaged_mask", sab.max_leakage, "> 1e-3", sab.max_leakage > 1e-3);
      model::ModelConfig flat = c;
      flat.n_levels = 1;
      flat.beta_mode = model::BetaMode::fixed1;
      const auto fl = verify::measure_leakage(model::HktModel(flat, seed), 8, 5, seed);
      record("causal", "flat_attention_T8", fl.max_leakage, "<= 1e-12", fl.max_leakage <= 1e-12);
      const auto eps = verify::epsilon_causality(m);
      rows.push_back({"causal", "epsilon_bound(C=" + fmt(eps.c_phi) + ")", fmt(eps.bound), "-", "info"});
      report["epsilon"] = {{"c_phi", eps.c_phi}, {"bound", std::isfinite(eps.bound) ? nlohmann::json(eps.bound) : nlohmann::json()}};
    } else if (s == "reduction") {
      model::ModelConfig c = r.model;
      c.max_seq_len = std::min<std::size_t>(c.max_seq_len, 32);
      for (const auto& rc : verify::reduction_suite(c, seed, 10, 1e-9))
        record("reduction", rc.name, rc.max_abs_diff, "<= 1e-9", rc.passed);
    } else if (s == "gradients") {
      for (const auto& p : verify::primitive_suite(seed))
        record("gradients", p.name, p.max_rel_error, "< 1e-4", p.max_rel_error < 1e-4);
      const auto g = verify::model_gradient_check(r.model, seed, 3);
      record("gradients", "model(" + g.worst_param + ", " + std::to_string(g.coordinates) + " coords)",
             g.max_rel_error, "< 1e-4", g.max_rel_error < 1e-4);
    } else if (s == "witness") {
      verify::WitnessOptions wo;
      wo.seed = seed;
      const auto w = verify::witness_separation(wo);
      for (const auto& mr : w.models)
        rows.push_back({"witness", mr.name + " mse (" + std::to_string(mr.parameters) + " params)",
                        fmt(mr.mean_mse), "-", "info"});
      record("witness", "baseline_over_hkt_mse", w.ratio, ">= 5", w.passed);
    }
  }
  print_table(rows);
  report["passed"] = failures.empty();
  if (!a.out.empty()) analysis::write_text(output_path(a.out), report.dump(2) + "\n");
  if (!failures.empty()) {
    std::cerr << failures.size() << " failing case(s):\n";
    for (const auto& f : failures) std::cerr << "  " << f << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

int bench(const BenchArgs& a) {
  const Resolved r = resolve_common(a.common);
  std::vector<std::string> kinds;
  if (a.model == "both") kinds = {"hkt", "mha"};
  else if (a.model == "hkt" || a.model == "mha") kinds = {a.model};
  else throw ConfigError("--model must be hkt, mha or both");
  if (a.batches < 20) throw ConfigError("--batches must be >= 20");
  const std::uint64_t seed = r.train.seed;

  std::string csv = "model,T,levels,ms_per_batch,score_entries,flat_entries,ratio_measured,ratio_theory\n";
  std::vector<std::vector<std::string>> rows = {
      {"model", "T", "ms/batch", "score ratio", "theory", "wall ratio"}};
  for (std::size_t T : parse_size_list(a.grid)) {
    double hkt_ms = 0.0;
    for (const auto& k : kinds) {
      model::ModelConfig c = r.model;
      c.max_seq_len = T;
      if (k == "mha") {
        c.n_levels = 1;
        c.beta_mode = model::BetaMode::fixed1;
      }
      c.validate();
      const model::HktModel m(c, seed);
      num::Prng rng(seed);
      std::vector<std::vector<int>> batch(a.batch, std::vector<int>(T));
      for (auto& s : batch)
        for (auto& t : s) t = int(rng.below(c.vocab_size));
      std::vector<double> times;
      for (std::size_t i = 0; i < a.warmup + a.batches; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        for (const auto& s : batch) m.predict_logits(s);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (i >= a.warmup) times.push_back(ms);
      }
      std::nth_element(times.begin(), times.begin() + std::ptrdiff_t(times.size() / 2), times.end());
      const double med = times[times.size() / 2];
      const auto oc = verify::count_ops(c, T, seed);
      if (k == "hkt") hkt_ms = med;
      csv += k + "," + std::to_string(T) + "," + std::to_string(c.n_levels) + "," + fmt(med, "%.6f") +
             "," + std::to_string(oc.score_entries) + "," + std::to_string(oc.flat_entries) + "," +
             fmt(oc.ratio_measured, "%.17g") + "," + fmt(oc.ratio_theory, "%.17g") + "\n";
      rows.push_back({k, std::to_string(T), fmt(med), fmt(oc.ratio_measured, "%.10g"),
                      fmt(oc.ratio_theory, "%.10g"),
                      k == "mha" && hkt_ms > 0.0 ? fmt(hkt_ms / med) : "-"});
    }
  }
  print_table(rows);
  const fs::path out = output_path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  analysis::write_text(out, csv);
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

int sweep(const SweepArgs& a) {
  const Resolved r = resolve_common(a.common);
  const auto stored = data::read_splits(output_path(a.data));
  train::SweepSpec spec;
  spec.ablations = split_list(a.ablations);
  spec.levels = parse_size_list(a.levels);
  spec.strides = parse_size_list(a.strides);
  const fs::path out = output_path(a.out);
  const auto& s = stored.splits;
  const auto rows = train::ablation_sweep(r.model, r.train, {&s.train, &s.val, &s.test}, spec, out);
  const std::string abl = train::ablation_table_csv(rows), grid = train::grid_table_csv(rows);
  analysis::write_text(out / "ablation.csv", abl);
  analysis::write_text(out / "grid.csv", grid);
  std::cout << abl << "\n" << grid;
  for (const auto& row : rows)
    if (!row.error.empty()) std::cerr << "run " << row.name << " failed: " << row.error << "\n";
  return kOk;
}

int report(const ReportArgs& a) {
  if (a.in.empty() && a.decay.empty()) throw ConfigError("report needs --in and/or --decay");
  if (!a.decay.empty()) {
    std::map<std::size_t, double> acc;
    for (const auto& item : split_list(a.decay)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("decay entry '" + item + "' is not L=acc");
      acc[parse_size_list(item.substr(0, eq)).at(0)] = std::stod(item.substr(eq + 1));
    }
    const auto fit = analysis::decay_calibration(acc);
    std::cout << "delta " << fmt(fit.delta) << ", eps_inf " << fmt(fit.eps_inf) << ", amplitude "
              << fmt(fit.amplitude) << ", rss " << fmt(fit.rss)
              << (fit.monotone ? "" : ", errors not monotone") << "\n";
  }
  if (a.in.empty()) return kOk;

  const fs::path in = output_path(a.in);
  if (!fs::is_directory(in)) throw IoError("'" + in.string() + "' is not a directory");
  std::vector<fs::path> summaries;
  for (const auto& e : fs::recursive_directory_iterator(in))
    if (e.path().filename() == "summary.json") summaries.push_back(e.path());
  std::sort(summaries.begin(), summaries.end());
  std::string csv = "run,levels,stride,beta,alpha,epochs,best_val_acc,test_acc,simplex_ok\n";
  std::vector<std::vector<std::string>> rows = {
      {"run", "L", "s", "beta", "alpha", "best val", "test", "ms/batch"}};
  for (const auto& p : summaries) {
    std::ifstream f(p);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError("bad summary '" + p.string() + "': " + e.what());
    }
    if (j.value("format", "") != "hkt-run-v1")
      throw InputError("unknown summary format in '" + p.string() + "'");
    const std::string run = fs::relative(p.parent_path(), in).string();
    const auto& mc = j["model"];
    csv += run + "," + mc["n_levels"].get<std::string>() + "," + mc["stride"].get<std::string>() +
           "," + mc["beta_mode"].get<std::string>() + "," + mc["alpha_mode"].get<std::string>() +
           "," + std::to_string(j["epochs"].get<std::size_t>()) + "," +
           fmt(j["best_val_acc"].get<double>(), "%.17g") + "," +
           fmt(j["test_acc"].get<double>(), "%.17g") + "," + (j["simplex_ok"].get<bool>() ? "true" : "false") + "\n";
    rows.push_back({run, mc["n_levels"].get<std::string>(), mc["stride"].get<std::string>(),
                    mc["beta_mode"].get<std::string>(), mc["alpha_mode"].get<std::string>(),
                    fmt(j["best_val_acc"].get<double>()), fmt(j["test_acc"].get<double>()),
                    fmt(j["ms_per_batch"].get<double>())});
  }
  print_table(rows);
  const fs::path out = a.out.empty() ? in / "report.csv" : output_path(a.out);
  analysis::write_text(out, csv);
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

}  // namespace hkt::cli
