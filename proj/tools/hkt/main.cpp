#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "hkt/error.hpp"

using namespace hkt::cli;

namespace {

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "YAML file with model/train/data sections")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.set, "override, section.key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "seed for data, initialisation and training");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical kernel transformer toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "write ListOps train/val/test splits");
  add_common(g, gen.common);
  g->add_option("--out", gen.out, "output directory");
  g->add_flag("--force", gen.force, "overwrite existing splits");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train one model");
  add_common(t, tr.common);
  t->add_option("--data", tr.data, "directory from generate-data");
  t->add_option("--out", tr.out, "run directory");
  t->add_option("--ablation", tr.ablation,
                "full, no_hierarchy, beta_fixed0, beta_fixed1, alpha_uniform, div_off, mono_off");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "accuracy of a checkpoint on one split");
  e->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data);
  e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "score decomposition, PSD audit, information and Gram reports");
  add_common(z, an.common);
  z->add_option("--checkpoint", an.checkpoint, "trained model; omitted means fresh weights")
      ->check(CLI::ExistingFile);
  z->add_option("--data", an.data);
  z->add_option("--out", an.out);
  z->add_option("--probes", an.probes, "validation sequences used as probes");
  z->add_option("--gram-samples", an.gram_samples);
  z->add_option("--eps0", an.eps0, "error of the flat model for the level-weight formula");
  z->add_option("--pca-dims", an.pca_dims, "feature dimensions for the information bounds");
  z->add_flag("--tie-keys", an.tie_keys, "copy W_Q into W_K before analysing");

  VerifyArgs ve;
  auto* v = app.add_subcommand("verify", "run verification certificates");
  add_common(v, ve.common);
  v->add_option("--suite", ve.suite)
      ->check(CLI::IsMember({"all", "causal", "reduction", "ops", "gradients", "witness"}));
  v->add_option("--out", ve.out, "JSON report path");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "wall-clock and score-op counts per sequence length");
  add_common(b, be.common);
  b->add_option("--grid", be.grid, "comma-separated T values");
  b->add_option("--model", be.model)->check(CLI::IsMember({"hkt", "mha", "both"}));
  b->add_option("--batch", be.batch);
  b->add_option("--batches", be.batches, "timed batches (>= 20)");
  b->add_option("--warmup", be.warmup);
  b->add_option("--out", be.out, "CSV path");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "ablation runs and the (L, s) grid");
  add_common(s, sw.common);
  s->add_option("--data", sw.data);
  s->add_option("--out", sw.out);
  s->add_option("--ablations", sw.ablations);
  s->add_option("--levels", sw.levels);
  s->add_option("--strides", sw.strides);

  ReportArgs re;
  auto* r = app.add_subcommand("report", "collect run summaries; fit the depth decay");
  r->add_option("--in", re.in, "directory searched for summary.json");
  r->add_option("--out", re.out, "CSV path (default <in>/report.csv)");
  r->add_option("--decay", re.decay, "accuracy per level count, e.g. 1=49.9,2=55.7,3=55.3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsage;
  }

  try {
    if (*g) return generate_data(gen);
    if (*t) return train_model(tr);
    if (*e) return eval_model(ev);
    if (*z) return analyze(an);
    if (*v) return verify(ve);
    if (*b) return bench(be);
    if (*s) return sweep(sw);
    if (*r) return report(re);
  } catch (const hkt::IoError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kIo;
  } catch (const hkt::ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const hkt::ParseError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const hkt::InputError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kVerifyFailed;
  }
  return kUsage;
}
