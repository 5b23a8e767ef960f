#include "hkt/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "hkt/error.hpp"
#include "hkt/train/optim.hpp"

#ifndef HKT_SOURCE_HASH
#define HKT_SOURCE_HASH "unknown"
#endif

namespace hkt::train {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& k, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-')
    throw ConfigError("train config: '" + k + "' expects a non-negative integer, got '" + v + "'");
  return std::size_t(x);
}

double parse_double(const std::string& k, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty())
    throw ConfigError("train config: '" + k + "' expects a number, got '" + v + "'");
  return x;
}

void append(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

int argmax(const Tensor& row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return int(best);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (epochs == 0) fail("epochs must be positive");
  if (warmup_epochs >= epochs) fail("warmup_epochs must be < epochs");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (!(peak_lr > 0.0)) fail("peak_lr must be > 0");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (div_factor < 1.0 || final_div < 1.0) fail("div_factor and final_div must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"batch_size", std::to_string(batch_size)},
      {"clip_norm", fmt(clip_norm)},
      {"div_factor", fmt(div_factor)},
      {"epochs", std::to_string(epochs)},
      {"final_div", fmt(final_div)},
      {"invariant_probes", std::to_string(invariant_probes)},
      {"peak_lr", fmt(peak_lr)},
      {"seed", std::to_string(seed)},
      {"warmup_epochs", std::to_string(warmup_epochs)},
      {"weight_decay", fmt(weight_decay)},
  };
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "batch_size") c.batch_size = parse_size(k, v);
    else if (k == "clip_norm") c.clip_norm = parse_double(k, v);
    else if (k == "div_factor") c.div_factor = parse_double(k, v);
    else if (k == "epochs") c.epochs = parse_size(k, v);
    else if (k == "final_div") c.final_div = parse_double(k, v);
    else if (k == "invariant_probes") c.invariant_probes = parse_size(k, v);
    else if (k == "peak_lr") c.peak_lr = parse_double(k, v);
    else if (k == "seed") c.seed = parse_size(k, v);
    else if (k == "warmup_epochs") c.warmup_epochs = parse_size(k, v);
    else if (k == "weight_decay") c.weight_decay = parse_double(k, v);
    else throw ConfigError("unknown train config key '" + k + "'");
  }
  return c;
}

std::string TrainConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

model::ModelConfig apply_ablation(model::ModelConfig c, const std::string& name) {
  if (name == "full") return c;
  if (name == "no_hierarchy") c.n_levels = 1;
  else if (name == "beta_fixed0") c.beta_mode = model::BetaMode::fixed0;
  else if (name == "beta_fixed1") c.beta_mode = model::BetaMode::fixed1;
  else if (name == "alpha_uniform") c.alpha_mode = model::AlphaMode::uniform;
  else if (name == "div_off") c.div_loss = false;
  else if (name == "mono_off") c.mono_loss = false;
  else throw ConfigError("unknown ablation '" + name + "'");
  return c;
}

bool RunRecord::simplex_ok(double tol) const {
  for (const auto& e : epochs)
    if (!(e.lambda_deviation <= tol) || !(e.alpha_deviation <= tol)) return false;
  return true;
}

void check_compatible(const model::ModelConfig& c, const data::Dataset& d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.sequences[i].size() > c.max_seq_len)
      throw ConfigError("sample " + std::to_string(i) + " has length " +
                        std::to_string(d.sequences[i].size()) + " > max_seq_len " +
                        std::to_string(c.max_seq_len));
    for (int t : d.sequences[i])
      if (t < 0 || std::size_t(t) >= c.vocab_size)
        throw ConfigError("sample " + std::to_string(i) + " has token " + std::to_string(t) +
                          " outside vocab_size " + std::to_string(c.vocab_size));
    if (d.labels[i] < 0 || std::size_t(d.labels[i]) >= c.n_classes)
      throw ConfigError("sample " + std::to_string(i) + " has label " +
                        std::to_string(d.labels[i]) + " outside n_classes " +
                        std::to_string(c.n_classes));
  }
}

EvalResult evaluate(const model::HktModel& m, const data::Dataset& d) {
  EvalResult r;
  if (d.size() == 0) return r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto logits = m.predict_logits(d.sequences[i]);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    r.loss += mx + std::log(z) - logits[std::size_t(d.labels[i])];
    const int pred = int(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == d.labels[i]) ++correct;
  }
  r.loss /= double(d.size());
  r.accuracy = double(correct) / double(d.size());
  return r;
}

std::pair<double, double> simplex_deviation(const model::HktModel& m, const data::Dataset& d,
                                            std::size_t probes) {
  double dl = 0.0, da = 0.0;
  auto row_dev = [](const double* v, std::size_t n) {
    double s = 0.0, dev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += v[j];
      if (v[j] < 0.0) dev = std::max(dev, -v[j]);
    }
    return std::max(dev, std::abs(s - 1.0));
  };
  for (std::size_t i = 0; i < std::min(probes, d.size()); ++i) {
    model::Trace trace;
    model::ForwardOptions opts;
    opts.trace = &trace;
    m.predict_logits(d.sequences[i], opts);
    for (const auto& lt : trace.layers) {
      dl = std::max(dl, row_dev(lt.lambda.data(), lt.lambda.size()));
      for (std::size_t r = 0; r < lt.alpha.rows(); ++r)
        da = std::max(da, row_dev(&lt.alpha.data()[r * lt.alpha.cols()], lt.alpha.cols()));
    }
  }
  return {dl, da};
}

std::string content_hash(const model::ModelConfig& m, const TrainConfig& t) {
  return data::sha256_hex(std::string(HKT_SOURCE_HASH) + "\n" + m.canonical() + t.canonical());
}

std::string metrics_csv_header() {
  return "epoch,train_loss,train_acc,val_acc,lr,max_grad_norm,lambda_deviation,alpha_deviation\n";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + fmt(m.train_loss) + "," + fmt(m.train_acc) + "," +
         fmt(m.val_acc) + "," + fmt(m.lr) + "," + fmt(m.max_grad_norm) + "," +
         fmt(m.lambda_deviation) + "," + fmt(m.alpha_deviation) + "\n";
}

std::string summary_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["format"] = "hkt-run-v1";
  j["content_hash"] = r.content_hash;
  j["seed"] = r.train.seed;
  j["model"] = r.model.to_map();
  j["train"] = r.train.to_map();
  j["epochs"] = r.epochs.size();
  j["best_val_acc"] = r.best_val_acc;
  j["best_epoch"] = r.best_epoch;
  j["test_acc"] = r.test_acc;
  j["ms_per_batch"] = r.ms_per_batch;
  j["simplex_ok"] = r.simplex_ok();
  return j.dump(2) + "\n";
}

RunRecord train(model::HktModel& m, const Splits& data, const TrainConfig& cfg,
                const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  if (!data.train || !data.val) throw ConfigError("training needs train and val splits");
  const auto& mc = m.config();
  check_compatible(mc, *data.train);
  check_compatible(mc, *data.val);
  if (data.test) check_compatible(mc, *data.test);
  const data::Dataset& tr = *data.train;
  if (tr.size() == 0) throw ConfigError("empty training set");

  RunRecord rec;
  rec.model = mc;
  rec.train = cfg;
  rec.content_hash = content_hash(mc, cfg);

  std::filesystem::path csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    csv = *out_dir / "metrics.csv";
    std::ofstream(csv, std::ios::binary | std::ios::trunc) << metrics_csv_header();
  }

  const std::size_t per_epoch = (tr.size() + cfg.batch_size - 1) / cfg.batch_size;
  const OneCycle sched(cfg.peak_lr, per_epoch * cfg.epochs, per_epoch * cfg.warmup_epochs,
                       cfg.div_factor, cfg.final_div);
  AdamW opt(m.params(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  const num::Prng root(cfg.seed);
  num::Prng shuffle = root.split(1), drop = root.split(2);

  model::ParamStore best = m.params();
  double best_val = -1.0;
  std::vector<double> batch_ms;
  std::size_t step = 0;
  double lr = sched.lr(0), last_norm = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (const auto& batch : data::batches(tr.size(), cfg.batch_size, shuffle)) {
      const auto t0 = std::chrono::steady_clock::now();
      lr = sched.lr(step);
      std::vector<Tensor> grads;
      for (std::size_t i = 0; i < m.params().size(); ++i)
        grads.emplace_back(m.params().value(i).shape(), 0.0);
      for (std::size_t idx : batch) {
        grad::Graph g;
        model::Bound p(g, m.params(), true);
        model::ForwardOptions opts;
        opts.training = true;
        opts.rng = &drop;
        double lv = 0.0;
        try {
          const auto r = model::encoder_forward(p, mc, tr.sequences[idx], opts);
          const int label = tr.labels[idx];
          grad::Var loss = grad::cross_entropy_logits(r.logits, std::span<const int>(&label, 1));
          if (r.regularizer.valid()) loss = grad::add(loss, r.regularizer);
          lv = loss.value().item();
          if (!std::isfinite(lv)) throw NumericError("loss is " + fmt(lv));
          if (argmax(r.logits.value()) == label) ++correct;
          g.backward(loss);
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + " (lr " + fmt(lr) + ", last grad norm " +
                             fmt(last_norm) + "): " + e.what());
        }
        loss_sum += lv;
        for (std::size_t i = 0; i < grads.size(); ++i) {
          const Tensor& gi = p.var(i).grad();
          for (std::size_t j = 0; j < gi.size(); ++j) grads[i][j] += gi[j];
        }
      }
      const double inv = 1.0 / double(batch.size());
      for (auto& gt : grads)
        for (double& v : gt.data()) v *= inv;
      last_norm = clip_global_norm(grads, cfg.clip_norm);
      if (!std::isfinite(last_norm))
        throw NumericError("non-finite gradient norm at step " + std::to_string(step) + " (lr " +
                           fmt(lr) + ")");
      em.max_grad_norm = std::max(em.max_grad_norm, last_norm);
      opt.step(m.params(), grads, lr);
      ++step;
      batch_ms.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    em.lr = lr;
    em.train_loss = loss_sum / double(tr.size());
    em.train_acc = double(correct) / double(tr.size());
    em.val_acc = evaluate(m, *data.val).accuracy;
    std::tie(em.lambda_deviation, em.alpha_deviation) =
        simplex_deviation(m, *data.val, cfg.invariant_probes);
    rec.epochs.push_back(em);
    if (out_dir) append(csv, metrics_csv_row(em));
    if (em.val_acc > best_val) {
      best_val = em.val_acc;
      best = m.params();
      rec.best_epoch = epoch;
      if (out_dir) m.save(*out_dir / "best.ckpt");
    }
  }
  rec.best_val_acc = best_val;
  m.params() = best;
  if (data.test) rec.test_acc = evaluate(m, *data.test).accuracy;
  if (!batch_ms.empty()) {
    // skip the first batch as warmup
    std::vector<double> t(batch_ms.begin() + (batch_ms.size() > 1 ? 1 : 0), batch_ms.end());
    std::nth_element(t.begin(), t.begin() + std::ptrdiff_t(t.size() / 2), t.end());
    rec.ms_per_batch = t[t.size() / 2];
  }
  if (out_dir) {
    std::ofstream out(*out_dir / "summary.json", std::ios::binary | std::ios::trunc);
    out << summary_json(rec);
    if (!out) throw IoError("cannot write summary to " + out_dir->string());
  }
  return rec;
}

}  // namespace hkt::train
