// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

// raft: command-line front end for fitting, training and analysing
// rational activations.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "raft/analysis.hpp"
#include "raft/checkpoint.hpp"
#include "raft/errors.hpp"
#include "raft/fitting.hpp"
#include "raft/gradcheck.hpp"
#include "raft/rational.hpp"
#include "raft/run_config.hpp"
#include "raft/training.hpp"

namespace fs = std::filesystem;
using namespace raft;

namespace {

struct Common {
  std::optional<uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Base random seed (overrides the config)");
  cmd->add_option("--config", c.config, "JSON run config")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, out_help);
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) rc.seed = *c.seed;
  return rc;
}

fs::path out_dir(const Common& c, const char* fallback) {
  fs::path p = c.out.empty() ? fs::path(fallback) : fs::path(c.out);
  fs::create_directories(p);
  return p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int env_threads() {
  const char* v = std::getenv("RAFT_NUM_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string target = "gelu";
  int m = 5, n = 4, grid = 1000;
  double lo = -3.0, hi = 3.0;
};

int run_fit(const Common& c, const FitArgs& a) {
  FitSpec spec;
  spec.target = parse_fit_target(a.target);
  spec.m = a.m;
  spec.n = a.n;
  spec.lo = a.lo;
  spec.hi = a.hi;
  spec.grid_points = a.grid;
  const FitResult r = fit_rational(spec);
  const std::string path = c.out.empty() ? "coefficients.txt" : c.out;
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_coefficients(path, r.coeffs);
  write_file(path + ".errors.csv", fit_error_csv(spec, r.coeffs));
  std::printf("target=%s m=%d n=%d max_abs_error=%.6e rms_error=%.6e converged=%d\n", a.target.c_str(), a.m, a.n,
              r.max_abs_error, r.rms_error, r.converged ? 1 : 0);
  std::printf("coefficients: %s\nerror report: %s.errors.csv\n", path.c_str(), path.c_str());
  return 0;
}

struct StudyArgs {
  std::vector<std::string> targets{"gelu"};
  int grid = 1000;
  double lo = -3.0, hi = 3.0;
};

int run_study(const Common& c, const StudyArgs& a) {
  std::vector<FitSpec> specs;
  for (const auto& t : a.targets) {
    FitSpec s;
    s.target = parse_fit_target(t);
    s.lo = a.lo;
    s.hi = a.hi;
    s.grid_points = a.grid;
    specs.push_back(s);
  }
  const auto rows = degree_study(specs, env_threads());
  const std::string csv = degree_study_csv(rows);
  const auto dir = out_dir(c, ".");
  write_file(dir / "study.csv", csv);
  std::cout << csv;
  return 0;
}

// ---------------------------------------------------------------------------

struct ModelOverrides {
  std::optional<int> layers, hidden, heads;
  std::optional<std::string> activation, init;
  std::optional<bool> fixed_raf;

  void apply(RunConfig& rc) const {
    if (layers) rc.model.layers = *layers;
    if (hidden) rc.model.hidden = *hidden;
    if (heads) rc.model.heads = *heads;
    if (activation) rc.model.activation = *activation;
    if (init) rc.model.init = *init;
    if (fixed_raf) rc.model.trainable_raf = !*fixed_raf;
  }
};

void add_model_overrides(CLI::App* cmd, ModelOverrides& o) {
  cmd->add_option("--layers", o.layers, "Encoder layers");
  cmd->add_option("--hidden", o.hidden, "Hidden size (FFN is 4x unless set in the config)");
  cmd->add_option("--heads", o.heads, "Attention heads");
  cmd->add_option("--activation", o.activation, "rational | gelu | relu");
  cmd->add_option("--init", o.init, "Rational init: gelu | identity | <coefficient file>");
}

struct PretrainArgs {
  ModelOverrides model;
  std::optional<int64_t> steps;
  std::optional<int> batch_size;
  std::optional<double> lr_theta, lr_raf;
  std::optional<std::string> corpus;
};

int run_pretrain(const Common& c, const PretrainArgs& a) {
  RunConfig rc = resolve(c);
  a.model.apply(rc);
  if (a.steps) rc.schedule.total_steps = *a.steps;
  if (a.batch_size) rc.schedule.batch_size = *a.batch_size;
  if (a.lr_theta) rc.schedule.lr_theta = *a.lr_theta;
  if (a.lr_raf) rc.schedule.lr_raf = *a.lr_raf;
  if (a.corpus) rc.data.corpus = *a.corpus;

  const std::string text = rc.data.corpus.empty()
                               ? synthetic_corpus(derive_seed(rc.seed, "corpus"), rc.data.synthetic_bytes)
                               : read_file(rc.data.corpus);
  const Vocab vocab = Vocab::build(text, rc.data.tokenizer, rc.data.vocab_size);
  const MlmCorpus corpus = build_mlm_corpus(text, vocab, rc.data.seq_len, rc.data.validation_fraction);
  const TransformerConfig cfg = make_transformer_config(rc, static_cast<int>(vocab.size()));

  const auto dir = out_dir(c, "pretrain-out");
  write_file(dir / "run_config.json", to_json(rc));
  PretrainOptions opts;
  opts.seed = rc.seed;
  opts.eval_every = rc.pretrain.eval_every;
  opts.log_every = rc.pretrain.log_every;
  opts.validation_batches = rc.pretrain.validation_batches;
  opts.out_dir = dir.string();
  try {
    const auto r = pretrain(corpus, vocab, cfg, rc.schedule, opts);
    std::printf("validation loss: initial %.6f final %.6f best %.6f (ppl %.4f)\n", r.initial_validation_loss,
                r.final_validation_loss, r.best_validation_loss, std::exp(r.best_validation_loss));
    if (!r.final_model.raf_names().empty())
      write_file(dir / "curves.csv", curves_csv(export_curves(r.final_model, -3.0, 3.0, 200)));
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "raft pretrain: %s (partial log in %s)\n", e.what(), (dir / "log.csv").c_str());
    return 1;
  }
  std::printf("outputs in %s\n", dir.c_str());
  return 0;
}

struct FinetuneArgs {
  ModelOverrides model;
  std::string checkpoint;
  std::optional<std::string> mode, task;
  std::optional<int> epochs, patience, batch_size;
  std::optional<double> lr_theta, lr_raf;
};

int run_finetune(const Common& c, const FinetuneArgs& a) {
  RunConfig rc = resolve(c);
  a.model.apply(rc);
  if (a.mode) rc.finetune.mode = parse_tuning_mode(*a.mode);
  if (a.task) rc.data.task = *a.task;
  if (a.epochs) rc.finetune.epochs = *a.epochs;
  if (a.patience) rc.finetune.patience = *a.patience;
  if (a.batch_size) rc.finetune.schedule.batch_size = *a.batch_size;
  if (a.lr_theta) rc.finetune.schedule.lr_theta = *a.lr_theta;
  if (a.lr_raf) rc.finetune.schedule.lr_raf = *a.lr_raf;

  const TaskDataset data = rc.data.task.empty()
                               ? synthetic_classification(derive_seed(rc.seed, "task"), rc.data.synthetic_examples)
                               : load_task_data(rc.data.task);
  std::optional<Checkpoint> ck;
  if (!a.checkpoint.empty()) ck = load_checkpoint(a.checkpoint);
  Vocab vocab;
  if (ck) {
    vocab = ck->vocab;
  } else {
    std::string all;
    for (size_t i = 0; i < data.size(); ++i) {
      all += data.text_a[i] + "\n";
      if (data.paired) all += data.text_b[i] + "\n";
    }
    vocab = Vocab::build(all, rc.data.tokenizer, rc.data.vocab_size);
  }
  Model model = ck ? std::move(ck->model)
                   : Model(make_transformer_config(rc, static_cast<int>(vocab.size())), derive_seed(rc.seed, "init"));

  const DataSplit split = subsample(data.size(), rc.data.size_cap, rc.seed, rc.data.train_fraction);
  const auto dir = out_dir(c, "finetune-out");
  write_file(dir / "run_config.json", to_json(rc));
  write_indices((dir / "train.idx").string(), split.train);
  write_indices((dir / "dev.idx").string(), split.dev);
  write_indices((dir / "test.idx").string(), split.test);

  FinetuneOptions opts;
  opts.seed = rc.seed;
  opts.epochs = rc.finetune.epochs;
  opts.patience = rc.finetune.patience;
  opts.seq_len = std::min<size_t>(rc.data.seq_len, static_cast<size_t>(model.config().max_seq_len));
  opts.out_dir = dir.string();
  try {
    const auto r = finetune(std::move(model), vocab, data, split, rc.finetune.mode, rc.finetune.schedule, opts);
    for (size_t e = 0; e < r.dev_accuracy.size(); ++e) std::printf("epoch %zu dev_accuracy %.4f\n", e + 1, r.dev_accuracy[e]);
    std::printf("best dev accuracy %.4f at epoch %d (mode %s)\n", r.best_dev_accuracy, r.best_epoch + 1,
                std::string(to_string(rc.finetune.mode)).c_str());
    if (!r.best_model.raf_names().empty())
      write_file(dir / "curves.csv", curves_csv(export_curves(r.best_model, -3.0, 3.0, 200)));
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "raft finetune: %s\n", e.what());
    return 1;
  }
  std::printf("outputs in %s\n", dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int run_gradcheck(const Common& c, size_t instances) {
  GradcheckOptions opts;
  opts.seed = c.seed.value_or(resolve(c).seed);
  opts.instances = instances;
  bool ok = true;
  double worst = 0.0;
  auto show = [&](const GradcheckReport& r) {
    std::printf("%-24s instances=%-3zu entries=%-6zu max_rel_err=%.3e threshold=%.0e %s\n", r.name.c_str(),
                r.instances, r.entries, r.max_rel_error, r.threshold, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  };
  for (const auto& r : gradcheck_ops(opts)) {
    show(r);
    worst = std::max(worst, r.max_rel_error);
  }
  const auto scalar = gradcheck_rational_scalar(opts);
  show(scalar);
  worst = std::max(worst, scalar.max_rel_error);
  std::printf("max rel err (double, ops + rational): %.3e\n", worst);
  const auto model = gradcheck_model(opts.seed);
  show(model.double_precision);
  show(model.float_vs_double);
  return ok ? 0 : 1;
}

struct ExportArgs {
  std::string checkpoint;
  double lo = -3.0, hi = 3.0, threshold = 0.1;
  size_t samples = 200;
};

int run_export(const Common& c, const ExportArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto dir = out_dir(c, ".");
  write_file(dir / "curves.csv", curves_csv(export_curves(ck.model, a.lo, a.hi, a.samples)));
  const auto report = near_zero_report(ck.model, a.lo, a.hi, a.threshold, a.samples);
  write_file(dir / "near_zero.csv", near_zero_csv(report));
  for (const auto& r : report)
    std::printf("layer %-7s max|F| %.4g%s\n", r.layer.c_str(), r.max_abs, r.flagged ? "  near-inert" : "");
  std::printf("curves: %s\n", (dir / "curves.csv").c_str());
  return 0;
}

struct PlotArgs {
  std::vector<std::string> csv;
  std::vector<std::string> labels;
  std::string reference;
};

int run_plot(const Common& c, const PlotArgs& a) {
  std::vector<CurveSet> overlays;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (size_t i = 0; i < a.csv.size(); ++i) {
    CurveSet s;
    s.label = i < a.labels.size() ? a.labels[i] : fs::path(a.csv[i]).stem().string();
    s.points = parse_curves_csv(read_file(a.csv[i]));
    for (const auto& p : s.points) {
      lo = std::min(lo, p.x);
      hi = std::max(hi, p.x);
    }
    overlays.push_back(std::move(s));
  }
  if (!a.reference.empty() && lo < hi)
    overlays.push_back({a.reference, sample_target(parse_fit_target(a.reference), lo, hi, 200)});
  const auto dir = out_dir(c, ".");
  const auto summary = plot_curves(overlays, (dir / "curves.svg").string());
  std::printf("%zu panels -> %s\n", summary.panels, (dir / "curves.svg").c_str());
  return 0;
}

struct AuditArgs {
  ModelOverrides model;
  std::string checkpoint;
  std::string mode = "raf-only";
  std::optional<int> vocab;
};

int run_audit(const Common& c, const AuditArgs& a) {
  const TuningMode mode = parse_tuning_mode(a.mode);
  if (!a.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    std::cout << param_audit(ck.model, mode).to_text();
    return 0;
  }
  RunConfig rc = resolve(c);
  a.model.apply(rc);
  const int vocab = a.vocab.value_or(static_cast<int>(rc.data.vocab_size));
  Model model(make_transformer_config(rc, vocab), derive_seed(rc.seed, "init"));
  std::cout << param_audit(model, mode).to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trainable rational activations in a small transformer encoder"};
  app.require_subcommand(1);

  Common common;
  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Least-squares rational fit of a target activation");
  add_common(fit_cmd, common, "Coefficient file (error report is written next to it)");
  fit_cmd->add_option("--target", fit.target, "gelu | relu | identity | swish | tanh | sigmoid");
  fit_cmd->add_option("--m", fit.m, "Numerator degree");
  fit_cmd->add_option("--n", fit.n, "Denominator degree");
  fit_cmd->add_option("--lo", fit.lo, "Fit range start");
  fit_cmd->add_option("--hi", fit.hi, "Fit range end");
  fit_cmd->add_option("--grid", fit.grid, "Grid points");

  StudyArgs study;
  auto* study_cmd = app.add_subcommand("study", "Fit error for (m, n) in {4, 5} x {4, 5}");
  add_common(study_cmd, common, "Output directory (study.csv)");
  study_cmd->add_option("--targets", study.targets, "Target activations");
  study_cmd->add_option("--lo", study.lo, "Fit range start");
  study_cmd->add_option("--hi", study.hi, "Fit range end");
  study_cmd->add_option("--grid", study.grid, "Grid points");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Masked-language-model pretraining");
  add_common(pre_cmd, common, "Output directory");
  add_model_overrides(pre_cmd, pre.model);
  pre_cmd->add_option("--steps", pre.steps, "Total optimizer steps");
  pre_cmd->add_option("--batch-size", pre.batch_size, "Sequences per step");
  pre_cmd->add_option("--lr-theta", pre.lr_theta, "Peak learning rate for non-rational parameters");
  pre_cmd->add_option("--lr-raf", pre.lr_raf, "Learning rate for rational coefficients");
  pre_cmd->add_option("--corpus", pre.corpus, "Text corpus (default: synthetic)");

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Classification fine-tuning");
  add_common(ft_cmd, common, "Output directory");
  add_model_overrides(ft_cmd, ft.model);
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint (default: fresh model)");
  ft_cmd->add_option("--mode", ft.mode, "full | fixed-raf | raf-only | bias-only | bias-subset")
      ->check(CLI::IsMember({"full", "fixed-raf", "raf-only", "bias-only", "bias-subset"}));
  ft_cmd->add_option("--task", ft.task, "Task file: text[,text2],label (default: synthetic)");
  ft_cmd->add_option("--epochs", ft.epochs, "Maximum epochs");
  ft_cmd->add_option("--patience", ft.patience, "Early-stopping patience in epochs");
  ft_cmd->add_option("--batch-size", ft.batch_size, "Examples per step");
  ft_cmd->add_option("--lr-theta", ft.lr_theta, "Peak learning rate for non-rational parameters");
  ft_cmd->add_option("--lr-raf", ft.lr_raf, "Learning rate for rational coefficients");

  size_t gc_instances = 20;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gc_cmd, common, "Unused");
  gc_cmd->add_option("--instances", gc_instances, "Random instances per op");

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export", "Sample learned curves to CSV");
  add_common(ex_cmd, common, "Output directory (curves.csv, near_zero.csv)");
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  ex_cmd->add_option("--lo", ex.lo, "Range start");
  ex_cmd->add_option("--hi", ex.hi, "Range end");
  ex_cmd->add_option("--samples", ex.samples, "Points per layer");
  ex_cmd->add_option("--threshold", ex.threshold, "Near-inert threshold on max |F|");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Render curve CSVs as SVG panels");
  add_common(plot_cmd, common, "Output directory (curves.svg)");
  plot_cmd->add_option("csv", plot.csv, "Curve CSV files to overlay")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--labels", plot.labels, "Legend labels");
  plot_cmd->add_option("--reference", plot.reference, "Overlay a fixed activation, e.g. gelu");

  AuditArgs audit;
  auto* audit_cmd = app.add_subcommand("audit", "Trainable parameter counts per group");
  add_common(audit_cmd, common, "Unused");
  add_model_overrides(audit_cmd, audit.model);
  audit_cmd->add_option("--checkpoint", audit.checkpoint, "Checkpoint (default: model from the config)");
  audit_cmd->add_option("--mode", audit.mode, "full | fixed-raf | raf-only | bias-only | bias-subset")
      ->check(CLI::IsMember({"full", "fixed-raf", "raf-only", "bias-only", "bias-subset"}));
  audit_cmd->add_option("--vocab", audit.vocab, "Vocabulary size for a config-built model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(common, fit);
    if (study_cmd->parsed()) return run_study(common, study);
    if (pre_cmd->parsed()) return run_pretrain(common, pre);
    if (ft_cmd->parsed()) return run_finetune(common, ft);
    if (gc_cmd->parsed()) return run_gradcheck(common, gc_instances);
    if (ex_cmd->parsed()) return run_export(common, ex);
    if (plot_cmd->parsed()) return run_plot(common, plot);
    if (audit_cmd->parsed()) return run_audit(common, audit);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "raft: %s\n", e.what());
    return 1;
  }
  return 2;
}
