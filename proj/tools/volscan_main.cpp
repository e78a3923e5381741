// volscan: synthetic volume generation, model training, evaluation, model
// comparison, parameter inspection, and the finite-difference gradient suite.
// Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 internal error.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <thread>

#include "volscan/checkpoint.hpp"
#include "volscan/data.hpp"
#include "volscan/gradcheck.hpp"
#include "volscan/metrics.hpp"
#include "volscan/models.hpp"
#include "volscan/training.hpp"

namespace vs = volscan;
namespace fs = std::filesystem;

namespace {

struct Dims {
  std::size_t d = 0, h = 0, w = 0;
};

Dims parse_dims(const std::string& s) {
  Dims dims;
  if (std::sscanf(s.c_str(), "%zu,%zu,%zu", &dims.d, &dims.h, &dims.w) != 3 || dims.d == 0 ||
      dims.h == 0 || dims.w == 0)
    throw vs::ValueError("bad --dims '" + s + "', expected D,H,W positive integers");
  return dims;
}

void log_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string line = "[volscan] cmd=" + cmd;
  for (const auto& [k, v] : kv) line += " " + k + "=" + v;
  std::fprintf(stderr, "%s\n", line.c_str());
}

// ---------------------------------------------------------------- datasets ---

struct SplitSamples {
  std::vector<vs::Sample> train, val, test;
  Dims dims;
};

SplitSamples load_samples(const fs::path& manifest_path, const Dims* resize_to) {
  const auto records = vs::read_manifest(manifest_path);
  SplitSamples out;
  bool first = true;
  for (const auto& rec : records) {
    vs::TensorF vol = vs::read_volume(vs::resolve_volume_path(manifest_path, rec));
    if (resize_to) vol = vs::resize_volume(vol, resize_to->d, resize_to->h, resize_to->w);
    if (first) {
      out.dims = {vol.dim(0), vol.dim(1), vol.dim(2)};
      first = false;
    } else if (vol.shape() != vs::Shape({out.dims.d, out.dims.h, out.dims.w})) {
      throw vs::ValueError("manifest mixes volume dims (" + vs::shape_str(vol.shape()) +
                           " vs first volume); pass --dims to resize");
    }
    vs::Sample s{std::move(vol), rec.label};
    if (rec.split == "train")
      out.train.push_back(std::move(s));
    else if (rec.split == "val")
      out.val.push_back(std::move(s));
    else
      out.test.push_back(std::move(s));
  }
  return out;
}

std::vector<int> labels_of(const std::vector<vs::Sample>& set) {
  std::vector<int> labels(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) labels[i] = set[i].label;
  return labels;
}

// --------------------------------------------------------------------- gen ---

int cmd_gen(const fs::path& out_dir, std::size_t n_pos, std::size_t n_neg,
            const std::string& counts, const std::string& fractions, const Dims& dims,
            double lesion_frac, double contrast, double noise, std::size_t vpp,
            std::uint64_t seed) {
  vs::GenSpec spec;
  spec.depth = dims.d;
  spec.height = dims.h;
  spec.width = dims.w;
  spec.lesion_frac = lesion_frac;
  spec.contrast = contrast;
  spec.noise = noise;
  spec.volumes_per_patient = vpp;
  spec.seed = seed;

  if (!counts.empty()) {
    std::array<std::size_t, 6> c{};
    if (std::sscanf(counts.c_str(), "%zu,%zu,%zu,%zu,%zu,%zu", &c[0], &c[1], &c[2], &c[3], &c[4],
                    &c[5]) != 6)
      throw vs::ValueError("bad --counts, expected train_pos,train_neg,val_pos,val_neg,"
                           "test_pos,test_neg");
    spec.pos_counts = {c[0], c[2], c[4]};
    spec.neg_counts = {c[1], c[3], c[5]};
  } else {
    std::array<double, 3> frac{};
    if (std::sscanf(fractions.c_str(), "%lf,%lf,%lf", &frac[0], &frac[1], &frac[2]) != 3)
      throw vs::ValueError("bad --fractions, expected train,val,test");
    if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9)
      throw vs::ValueError("--fractions must sum to 1");
    // Largest-remainder quotas per class, mirroring split_by_patient.
    for (int cls = 0; cls < 2; ++cls) {
      const std::size_t total = cls ? n_pos : n_neg;
      std::array<std::size_t, 3> quota{};
      std::size_t assigned = 0;
      std::array<std::pair<double, int>, 3> rem{};
      for (int s = 0; s < 3; ++s) {
        const double exact = frac[s] * double(total);
        quota[s] = std::size_t(exact);
        rem[s] = {exact - double(quota[s]), s};
        assigned += quota[s];
      }
      std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (std::size_t k = 0; assigned < total; ++k, ++assigned) quota[rem[k % 3].second]++;
      for (int s = 0; s < 3; ++s) (cls ? spec.pos_counts : spec.neg_counts)[s] = quota[s];
    }
  }

  log_config("gen", {{"out", out_dir.string()},
                     {"dims", std::to_string(dims.d) + "," + std::to_string(dims.h) + "," +
                                  std::to_string(dims.w)},
                     {"lesion_frac", vs::format_double(lesion_frac)},
                     {"contrast", vs::format_double(contrast)},
                     {"noise", vs::format_double(noise)},
                     {"total", std::to_string(spec.total())},
                     {"workers", std::to_string(vs::worker_threads())},
                     {"seed", std::to_string(seed)}});
  const auto records = vs::generate_dataset(spec, out_dir);
  std::fprintf(stderr, "[volscan] wrote %zu volumes + manifest to %s\n", records.size(),
               out_dir.string().c_str());
  return 0;
}

// ------------------------------------------------------------------- train ---

int cmd_train(const std::string& model_name, const fs::path& manifest, const fs::path& out,
              const fs::path& history_path, std::size_t epochs, std::size_t batch, double lr,
              std::size_t patience, bool no_clip, std::uint64_t seed, const std::string& dims_flag) {
  const vs::ModelKind kind = vs::model_kind_from_string(model_name);
  Dims resize_dims;
  const bool have_dims = !dims_flag.empty();
  if (have_dims) resize_dims = parse_dims(dims_flag);
  log_config("train", {{"model", model_name},
                       {"manifest", manifest.string()},
                       {"out", out.string()},
                       {"epochs", std::to_string(epochs)},
                       {"batch", std::to_string(batch)},
                       {"lr", vs::format_double(lr)},
                       {"patience", std::to_string(patience)},
                       {"clip", no_clip ? "off" : "5.0"},
                       {"seed", std::to_string(seed)}});

  SplitSamples data = load_samples(manifest, have_dims ? &resize_dims : nullptr);
  if (data.train.empty() || data.val.empty())
    throw vs::ValueError("train: manifest must provide non-empty train and val splits");

  vs::ModelConfig cfg{kind, data.dims.d, data.dims.h, data.dims.w, vs::derive_seed(seed, "init")};
  auto model = vs::make_model<float>(cfg);

  vs::TrainConfig tc;
  tc.max_epochs = epochs;
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.patience = patience;
  tc.clip_norm = no_clip ? 0.0 : 5.0;
  tc.seed = seed;
  tc.log = true;
  const vs::TrainResult result = vs::train_model(*model, data.train, data.val, tc);

  vs::save_checkpoint(*model, out);
  vs::write_history_csv(history_path, result.history);
  std::fprintf(stderr, "[volscan] best epoch %zu val_auc=%.4f -> %s\n", result.best_epoch,
               result.best_val_auc, out.string().c_str());
  return 0;
}

// -------------------------------------------------------------------- eval ---

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const std::string& split,
             const fs::path& out, const fs::path& roc_csv, const fs::path& roc_svg) {
  if (split != "train" && split != "val" && split != "test")
    throw vs::ValueError("eval: --split must be train, val, or test");
  log_config("eval", {{"checkpoint", checkpoint.string()},
                      {"manifest", manifest.string()},
                      {"split", split},
                      {"out", out.string()}});

  auto model = vs::load_checkpoint(checkpoint);
  const auto& cfg = model->config();
  const Dims dims{cfg.depth, cfg.height, cfg.width};
  SplitSamples data = load_samples(manifest, &dims);

  auto& target = split == "train" ? data.train : split == "val" ? data.val : data.test;
  if (target.empty()) throw vs::ValueError("eval: split '" + split + "' is empty in manifest");
  if (data.val.empty())
    throw vs::ValueError("eval: manifest has no val split (needed for the operating point)");

  // Operating point always comes from validation, never from test.
  const auto val_scores = vs::evaluate(*model, data.val);
  const auto val_op = vs::youden_point(vs::roc_curve(val_scores, labels_of(data.val)));

  const auto scores = vs::evaluate(*model, target);
  const auto labels = labels_of(target);
  const vs::RocCurve roc = vs::roc_curve(scores, labels);
  const vs::Confusion conf = vs::confusion_metrics(scores, labels, val_op.threshold);

  vs::EvalReportRow row;
  row.model = vs::to_string(cfg.kind);
  row.auc = vs::auc(scores, labels);
  row.threshold = val_op.threshold;
  row.sensitivity = conf.sensitivity;
  row.specificity = conf.specificity;
  row.f1 = conf.f1;
  row.n_pos = conf.tp + conf.fn;
  row.n_neg = conf.tn + conf.fp;
  vs::write_report_csv(out, {row});
  if (!roc_csv.empty()) vs::write_roc_csv(roc_csv, roc);
  if (!roc_svg.empty()) vs::write_roc_svg(roc_svg, roc);
  std::fprintf(stderr, "[volscan] %s %s auc=%.4f sens=%.3f spec=%.3f -> %s\n",
               vs::to_string(cfg.kind), split.c_str(), row.auc, row.sensitivity, row.specificity,
               out.string().c_str());
  return 0;
}

// ----------------------------------------------------------------- compare ---

struct CompareRun {
  double auc = 0, sensitivity = 0, specificity = 0, f1 = 0;
};

CompareRun run_one(vs::ModelKind kind, const SplitSamples& data, std::uint64_t seed,
                   std::size_t epochs, std::size_t batch, double lr, std::size_t patience,
                   const fs::path& work_dir, bool log) {
  vs::ModelConfig cfg{kind, data.dims.d, data.dims.h, data.dims.w,
                      vs::derive_seed(seed, std::string("init-") + vs::to_string(kind))};
  auto model = vs::make_model<float>(cfg);
  vs::TrainConfig tc;
  tc.max_epochs = epochs;
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.patience = patience;
  tc.seed = seed;
  tc.log = log;
  const vs::TrainResult tr = vs::train_model(*model, data.train, data.val, tc);

  const std::string stem = std::string(vs::to_string(kind)) + "_seed" + std::to_string(seed);
  vs::save_checkpoint(*model, work_dir / (stem + ".vsck"));
  vs::write_history_csv(work_dir / (stem + ".history.csv"), tr.history);

  const auto val_scores = vs::evaluate(*model, data.val);
  const auto val_op = vs::youden_point(vs::roc_curve(val_scores, labels_of(data.val)));
  const auto scores = vs::evaluate(*model, data.test);
  const auto labels = labels_of(data.test);
  const vs::Confusion conf = vs::confusion_metrics(scores, labels, val_op.threshold);
  return {vs::auc(scores, labels), conf.sensitivity, conf.specificity, conf.f1};
}

int cmd_compare(const fs::path& out, const fs::path& manifest, const std::string& dims_flag,
                const std::string& seeds_flag, std::uint64_t seed, std::size_t epochs,
                std::size_t batch, double lr, std::size_t patience, bool dry_run) {
  std::vector<std::uint64_t> seeds;
  if (!seeds_flag.empty()) {
    std::size_t pos = 0;
    while (pos < seeds_flag.size()) {
      std::size_t comma = seeds_flag.find(',', pos);
      if (comma == std::string::npos) comma = seeds_flag.size();
      seeds.push_back(std::strtoull(seeds_flag.substr(pos, comma - pos).c_str(), nullptr, 10));
      pos = comma + 1;
    }
    if (seeds.empty()) throw vs::ValueError("bad --seeds list");
  } else {
    seeds = {seed};
  }

  log_config("compare", {{"out", out.string()},
                         {"manifest", manifest.empty() ? "-" : manifest.string()},
                         {"dry_run", dry_run ? "1" : "0"},
                         {"epochs", std::to_string(epochs)},
                         {"seeds", seeds_flag.empty() ? std::to_string(seed) : seeds_flag},
                         {"workers", std::to_string(vs::worker_threads())}});

  if (dry_run) {
    if (dims_flag.empty()) throw vs::ValueError("compare --dry-run requires --dims");
    const Dims dims = parse_dims(dims_flag);
    std::string csv = "model,kernels,parameters\n";
    for (vs::ModelKind kind : vs::kCompareOrder) {
      vs::ModelConfig cfg{kind, dims.d, dims.h, dims.w, 0};
      auto model = vs::make_model<float>(cfg);
      csv += std::string(vs::to_string(kind)) + "," + std::to_string(vs::base_filters(kind)) +
             "," + std::to_string(model->parameter_count()) + "\n";
    }
    vs::atomic_write_file(out, csv);
    std::fprintf(stderr, "[volscan] parameter counts -> %s\n", out.string().c_str());
    return 0;
  }

  if (manifest.empty()) throw vs::ValueError("compare requires --manifest (or --dry-run)");
  Dims resize_dims;
  const bool have_dims = !dims_flag.empty();
  if (have_dims) resize_dims = parse_dims(dims_flag);
  const SplitSamples data = load_samples(manifest, have_dims ? &resize_dims : nullptr);
  if (data.train.empty() || data.val.empty() || data.test.empty())
    throw vs::ValueError("compare: manifest must provide train, val, and test splits");

  fs::path work_dir = out;
  work_dir += ".d";
  std::error_code ec;
  fs::create_directories(work_dir, ec);

  struct Job {
    vs::ModelKind kind;
    std::uint64_t seed;
    CompareRun run;
  };
  std::vector<Job> jobs;
  for (vs::ModelKind kind : vs::kCompareOrder)
    for (std::uint64_t s : seeds) jobs.push_back({kind, s, {}});

  const std::size_t workers = std::min(vs::worker_threads(), jobs.size());
  const bool parallel = workers > 1;
  if (!parallel) {
    for (auto& job : jobs) {
      std::fprintf(stderr, "[volscan] training %s seed=%llu\n", vs::to_string(job.kind),
                   (unsigned long long)job.seed);
      job.run = run_one(job.kind, data, job.seed, epochs, batch, lr, patience, work_dir, true);
    }
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();)
            jobs[j].run = run_one(jobs[j].kind, data, jobs[j].seed, epochs, batch, lr, patience,
                                  work_dir, false);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // One row per model; with several seeds, per-seed AUC columns plus the
  // median, and the operating-point metrics from the median-AUC run.
  std::string csv = "model,kernels,parameters";
  if (seeds.size() > 1) {
    for (std::uint64_t s : seeds) csv += ",auc_seed_" + std::to_string(s);
    csv += ",auc_median";
  } else {
    csv += ",auc";
  }
  csv += ",sensitivity,specificity,f1\n";

  for (vs::ModelKind kind : vs::kCompareOrder) {
    std::vector<const Job*> runs;
    for (const auto& job : jobs)
      if (job.kind == kind) runs.push_back(&job);
    std::vector<const Job*> by_auc = runs;
    std::sort(by_auc.begin(), by_auc.end(),
              [](const Job* a, const Job* b) { return a->run.auc < b->run.auc; });
    const Job* median = by_auc[by_auc.size() / 2];

    vs::ModelConfig cfg{kind, data.dims.d, data.dims.h, data.dims.w, 0};
    const std::size_t n_params = vs::make_model<float>(cfg)->parameter_count();
    csv += std::string(vs::to_string(kind)) + "," + std::to_string(vs::base_filters(kind)) + "," +
           std::to_string(n_params);
    if (seeds.size() > 1) {
      for (const Job* job : runs) csv += "," + vs::format_double(job->run.auc);
      csv += "," + vs::format_double(median->run.auc);
    } else {
      csv += "," + vs::format_double(runs[0]->run.auc);
    }
    csv += "," + vs::format_double(median->run.sensitivity) + "," +
           vs::format_double(median->run.specificity) + "," + vs::format_double(median->run.f1) +
           "\n";
  }
  vs::atomic_write_file(out, csv);
  std::fprintf(stderr, "[volscan] comparison table -> %s\n", out.string().c_str());
  return 0;
}

// --------------------------------------------------------------- gradcheck ---

int cmd_gradcheck(const std::string& ops_flag, double tolerance) {
  std::vector<std::string> only;
  std::size_t pos = 0;
  while (pos < ops_flag.size()) {
    std::size_t comma = ops_flag.find(',', pos);
    if (comma == std::string::npos) comma = ops_flag.size();
    if (comma > pos) only.push_back(ops_flag.substr(pos, comma - pos));
    pos = comma + 1;
  }
  log_config("gradcheck",
             {{"ops", only.empty() ? "all" : ops_flag}, {"tolerance", vs::format_double(tolerance)}});
  const auto outcomes = vs::run_gradcheck_suite(only, tolerance);
  bool all_ok = true;
  for (const auto& oc : outcomes) {
    std::printf("%-16s %s  %s\n", oc.name.c_str(), oc.ok ? "PASS" : "FAIL", oc.detail.c_str());
    all_ok &= oc.ok;
  }
  if (!all_ok) throw vs::InternalError("gradcheck: at least one op failed");
  return 0;
}

// ------------------------------------------------------------------ params ---

int cmd_params(const std::string& model_name, const std::string& dims_flag) {
  const Dims dims = parse_dims(dims_flag);
  const vs::ModelKind kind = vs::model_kind_from_string(model_name);
  vs::ModelConfig cfg{kind, dims.d, dims.h, dims.w, 0};
  auto model = vs::make_model<float>(cfg);
  std::size_t total = 0;
  for (auto* p : model->params()) {
    std::printf("%-24s %-16s %zu\n", p->name.c_str(), vs::shape_str(p->value.shape()).c_str(),
                p->size());
    total += p->size();
  }
  std::printf("total %zu\n", total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volscan: conv-LSTM volume scanner, MIL and 3D CNN baselines on synthetic "
               "lesion volumes"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out, gen_counts, gen_fractions = "0.6,0.2,0.2", gen_dims = "16,32,32";
  std::size_t gen_pos = 0, gen_neg = 0, gen_vpp = 1;
  double gen_frac = 0.25, gen_contrast = 0.4, gen_noise = 0.05;
  std::uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n-pos", gen_pos, "total positive volumes");
  gen->add_option("--n-neg", gen_neg, "total negative volumes");
  gen->add_option("--counts", gen_counts,
                  "exact per-split counts: train_pos,train_neg,val_pos,val_neg,test_pos,test_neg");
  gen->add_option("--fractions", gen_fractions, "train,val,test fractions (default 0.6,0.2,0.2)");
  gen->add_option("--dims", gen_dims, "volume dims D,H,W");
  gen->add_option("--lesion-frac", gen_frac, "lesion slice-band fraction of depth");
  gen->add_option("--contrast", gen_contrast, "lesion intensity contrast in (0,1]");
  gen->add_option("--noise", gen_noise, "background noise amplitude");
  gen->add_option("--volumes-per-patient", gen_vpp, "volumes sharing one patient id");
  gen->add_option("--seed", gen_seed, "root seed");

  // train
  auto* train = app.add_subcommand("train", "train one model from a manifest");
  std::string tr_model, tr_dims;
  std::string tr_manifest, tr_out, tr_history;
  std::size_t tr_epochs = 50, tr_batch = 8, tr_patience = 5;
  double tr_lr = 1e-3;
  bool tr_no_clip = false;
  std::uint64_t tr_seed = 1;
  train->add_option("--model", tr_model, "convlstm|mil-max|mil-mean|mil-product|cnn3d")
      ->required();
  train->add_option("--manifest", tr_manifest, "dataset manifest CSV")->required();
  train->add_option("--out", tr_out, "checkpoint output path")->required();
  train->add_option("--history", tr_history, "history CSV path (default <out>.history.csv)");
  train->add_option("--epochs", tr_epochs, "max epochs");
  train->add_option("--batch", tr_batch, "mini-batch size");
  train->add_option("--lr", tr_lr, "learning rate");
  train->add_option("--patience", tr_patience, "early-stop patience (epochs)");
  train->add_flag("--no-clip", tr_no_clip, "disable gradient-norm clipping");
  train->add_option("--seed", tr_seed, "root seed");
  train->add_option("--dims", tr_dims, "resize volumes to D,H,W before training");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  std::string ev_ckpt, ev_manifest, ev_split = "test", ev_out, ev_roc_csv, ev_roc_svg;
  eval->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  eval->add_option("--manifest", ev_manifest, "dataset manifest CSV")->required();
  eval->add_option("--split", ev_split, "split to score (default test)");
  eval->add_option("--out", ev_out, "report CSV path")->required();
  eval->add_option("--roc-csv", ev_roc_csv, "optional ROC points CSV");
  eval->add_option("--roc-svg", ev_roc_svg, "optional ROC SVG");

  // compare
  auto* compare = app.add_subcommand("compare", "train and evaluate all five models");
  std::string cp_out, cp_manifest, cp_dims, cp_seeds;
  std::size_t cp_epochs = 30, cp_batch = 8, cp_patience = 5;
  double cp_lr = 1e-3;
  std::uint64_t cp_seed = 1;
  bool cp_dry = false;
  compare->add_option("--out", cp_out, "combined table CSV path")->required();
  compare->add_option("--manifest", cp_manifest, "dataset manifest CSV");
  compare->add_option("--dims", cp_dims, "model input dims D,H,W");
  compare->add_option("--seeds", cp_seeds, "comma-separated training seeds");
  compare->add_option("--seed", cp_seed, "single training seed (default 1)");
  compare->add_option("--epochs", cp_epochs, "max epochs per training");
  compare->add_option("--batch", cp_batch, "mini-batch size");
  compare->add_option("--lr", cp_lr, "learning rate");
  compare->add_option("--patience", cp_patience, "early-stop patience");
  compare->add_flag("--dry-run", cp_dry, "build models and report parameter counts only");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite (64-bit)");
  std::string gc_ops;
  double gc_tol = 1e-5;
  gradcheck->add_option("--ops", gc_ops, "comma-separated op filter");
  gradcheck->add_option("--tolerance", gc_tol, "max relative error");

  // params
  auto* params = app.add_subcommand("params", "print the parameter manifest of a model");
  std::string pa_model, pa_dims;
  params->add_option("--model", pa_model, "model kind")->required();
  params->add_option("--dims", pa_dims, "input dims D,H,W")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen(gen_out, gen_pos, gen_neg, gen_counts, gen_fractions, parse_dims(gen_dims),
                     gen_frac, gen_contrast, gen_noise, gen_vpp, gen_seed);
    if (train->parsed())
      return cmd_train(tr_model, tr_manifest, tr_out,
                       tr_history.empty() ? tr_out + ".history.csv" : tr_history, tr_epochs,
                       tr_batch, tr_lr, tr_patience, tr_no_clip, tr_seed, tr_dims);
    if (eval->parsed())
      return cmd_eval(ev_ckpt, ev_manifest, ev_split, ev_out, ev_roc_csv, ev_roc_svg);
    if (compare->parsed())
      return cmd_compare(cp_out, cp_manifest, cp_dims, cp_seeds, cp_seed, cp_epochs, cp_batch,
                         cp_lr, cp_patience, cp_dry);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_ops, gc_tol);
    if (params->parsed()) return cmd_params(pa_model, pa_dims);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const vs::ValueError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const vs::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
