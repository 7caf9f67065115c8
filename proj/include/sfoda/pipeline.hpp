#pragma once

// Command implementations behind the CLI. Each stage reads only the files
// named in its *Inputs struct and writes into an output directory.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sfoda/config.hpp"
#include "sfoda/csv.hpp"
#include "sfoda/data.hpp"
#include "sfoda/error.hpp"
#include "sfoda/metrics.hpp"
#include "sfoda/model.hpp"
#include "sfoda/pseudolabel.hpp"
#include "sfoda/text.hpp"
#include "sfoda/trainer.hpp"
#include "sfoda/verify.hpp"

namespace sfoda {

namespace fs = std::filesystem;

inline constexpr const char* kSourceCsv = "source.csv";
inline constexpr const char* kTargetCsv = "target.csv";
inline constexpr const char* kHiddenLabelsCsv = "target_labels_eval_only.csv";
inline constexpr const char* kManifest = "manifest.txt";
inline constexpr const char* kSourceCheckpoint = "source_model.ckpt";
inline constexpr const char* kAdaptedCheckpoint = "adapted_model.ckpt";

inline std::string config_fingerprint(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(dump_config(cfg))));
  return buf;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw DataError("missing " + what + ": " + p.string());
}

// ---------------------------------------------------------------------------
// Datasets

inline void write_hidden_labels_csv(const std::string& path, const std::vector<int>& labels) {
  CsvWriter w(path);
  w.write_row({"index", "label"});
  for (std::size_t i = 0; i < labels.size(); ++i) w.write_row({std::to_string(i), std::to_string(labels[i])});
}

// Reads index,label rows into a vector of size n; every index must appear
// exactly once.
inline std::vector<int> read_indexed_column(const std::string& path, const std::string& column,
                                            std::size_t n, bool allow_unknown_label = false) {
  const CsvTable t = read_csv(path);
  auto ic = t.column("index");
  auto vc = t.column(column);
  if (!ic || !vc) throw DataError(path + ": expected columns 'index' and '" + column + "'");
  std::vector<int> out(n, 0);
  std::vector<bool> seen(n, false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto idx = parse_int(t.rows[r][*ic]);
    if (!idx || *idx < 0 || static_cast<std::size_t>(*idx) >= n)
      throw DataError(path + ": bad index at row " + std::to_string(r + 1));
    const auto i = static_cast<std::size_t>(*idx);
    if (seen[i]) throw DataError(path + ": duplicate index " + std::to_string(i));
    seen[i] = true;
    const std::string cell(trim(t.rows[r][*vc]));
    if (allow_unknown_label && cell == "unknown") {
      out[i] = kUnknownLabel;
      continue;
    }
    auto v = parse_int(cell);
    if (!v || *v < (allow_unknown_label ? -1 : 0))
      throw DataError(path + ": bad value at row " + std::to_string(r + 1) + ": '" + cell + "'");
    out[i] = static_cast<int>(*v);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw DataError(path + ": index " + std::to_string(i) + " missing");
  return out;
}

// The data a single experiment run needs, in memory. For synthetic data the
// seed drives generation; CSV data is fixed.
inline DomainPair load_experiment_data(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.data_kind == "synthetic") {
    try {
      return generate_synthetic(cfg.synth, seed);
    } catch (const ContractError& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  }
  if (cfg.source_csv.empty() || cfg.target_csv.empty() || cfg.target_labels_csv.empty())
    throw ConfigError("data: csv runs need source_csv, target_csv and target_labels_csv");
  DomainPair pair;
  auto src = load_csv(cfg.source_csv, cfg.label_column, true);
  auto tgt = load_csv(cfg.target_csv, cfg.label_column, false);
  if (src.features.cols() != tgt.features.cols())
    throw DataError("source and target feature counts differ");
  pair.source = {std::move(src.features), std::move(*src.labels)};
  pair.target_features = std::move(tgt.features);
  pair.target_labels_hidden =
      read_indexed_column(cfg.target_labels_csv, "label", pair.target_features.rows());
  int max_label = 0;
  for (int y : pair.source.labels) max_label = std::max(max_label, y);
  pair.num_known = static_cast<std::size_t>(max_label) + 1;
  int max_target = 0;
  for (int y : pair.target_labels_hidden) max_target = std::max(max_target, y);
  pair.num_unknown = static_cast<std::size_t>(std::max(0, max_target + 1 - static_cast<int>(pair.num_known)));
  return pair;
}

inline void write_manifest(const fs::path& out_dir, const RunConfig& cfg, const std::string& command,
                           const std::vector<std::string>& files) {
  std::ofstream os(out_dir / kManifest);
  if (!os) throw DataError("cannot write manifest in " + out_dir.string());
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  os << "command " << command << "\n";
  os << "seed " << cfg.seed << "\n";
  os << "config_hash " << config_fingerprint(cfg) << "\n";
  os << "created " << stamp << "\n";
  for (const auto& f : files) os << "file " << f << "\n";
  os << "note " << kHiddenLabelsCsv << " holds ground truth for evaluation only\n";
  os << "[config]\n" << dump_config(cfg);
}

// generate: source.csv (features + label), target.csv (features only), the
// hidden target labels in a separate file, and manifest.txt.
inline void cmd_generate(const RunConfig& cfg, const fs::path& out_dir) {
  if (cfg.data_kind != "synthetic") throw ConfigError("generate needs data.kind = synthetic");
  const DomainPair pair = load_experiment_data(cfg, cfg.seed);
  ensure_dir(out_dir);
  write_features_csv((out_dir / kSourceCsv).string(), pair.source.features, &pair.source.labels, "label");
  write_features_csv((out_dir / kTargetCsv).string(), pair.target_features);
  write_hidden_labels_csv((out_dir / kHiddenLabelsCsv).string(), pair.target_labels_hidden);
  write_manifest(out_dir, cfg, "generate", {kSourceCsv, kTargetCsv, kHiddenLabelsCsv});
}

// ---------------------------------------------------------------------------
// Pipeline stages

struct TrainSourceInputs {
  fs::path source_csv;
};

struct AdaptInputs {
  fs::path source_checkpoint;
  fs::path target_csv;
};

struct EvalInputs {
  fs::path adapted_checkpoint;
  fs::path target_csv;
  fs::path hidden_labels_csv;
  std::optional<fs::path> source_checkpoint;  // for the pseudo-label report
  std::optional<fs::path> predictions_csv;    // evaluate these instead of the model
};

inline TrainSourceInputs default_train_source_inputs(const RunConfig& cfg, const fs::path& out_dir) {
  return {cfg.source_csv.empty() ? out_dir / kSourceCsv : fs::path(cfg.source_csv)};
}

inline AdaptInputs default_adapt_inputs(const RunConfig& cfg, const fs::path& out_dir) {
  return {out_dir / kSourceCheckpoint, cfg.target_csv.empty() ? out_dir / kTargetCsv : fs::path(cfg.target_csv)};
}

inline EvalInputs default_eval_inputs(const RunConfig& cfg, const fs::path& out_dir) {
  EvalInputs in;
  in.adapted_checkpoint = out_dir / kAdaptedCheckpoint;
  in.target_csv = cfg.target_csv.empty() ? out_dir / kTargetCsv : fs::path(cfg.target_csv);
  in.hidden_labels_csv =
      cfg.target_labels_csv.empty() ? out_dir / kHiddenLabelsCsv : fs::path(cfg.target_labels_csv);
  if (fs::is_regular_file(out_dir / kSourceCheckpoint)) in.source_checkpoint = out_dir / kSourceCheckpoint;
  if (!cfg.predictions_csv.empty()) in.predictions_csv = fs::path(cfg.predictions_csv);
  return in;
}

inline SourceTrainConfig source_train_config(const RunConfig& cfg, std::uint64_t seed) {
  SourceTrainConfig s = cfg.source;
  s.hidden_dims = cfg.hidden_dims;
  s.seed = seed;
  return s;
}

inline AdaptConfig adapt_config(const RunConfig& cfg, std::size_t num_known, std::uint64_t seed) {
  AdaptConfig a = cfg.adapt;
  a.thresholds = resolved_thresholds(cfg, num_known);
  a.seed = seed;
  return a;
}

inline std::size_t infer_num_known(const std::vector<int>& labels) {
  int m = -1;
  for (int y : labels) m = std::max(m, y);
  if (m < 1) throw DataError("source labels must cover at least 2 classes");
  return static_cast<std::size_t>(m) + 1;
}

inline void write_epoch_log_csv(const std::string& path, const SourceTrainResult& r) {
  CsvWriter w(path);
  w.write_row({"epoch", "loss"});
  w.write_row({"0", format_double(r.initial_loss)});
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
    w.write_row({std::to_string(e + 1), format_double(r.epoch_loss[e])});
}

inline ExpandedClassifier cmd_train_source(const RunConfig& cfg, const TrainSourceInputs& in,
                                           const fs::path& out_dir) {
  require_file(in.source_csv, "source CSV");
  auto ds = load_csv(in.source_csv.string(), cfg.label_column, true);
  const LabeledData data{std::move(ds.features), std::move(*ds.labels)};
  const std::size_t num_known = cfg.data_kind == "synthetic" ? cfg.num_known() : infer_num_known(data.labels);
  for (int y : data.labels)
    if (static_cast<std::size_t>(y) >= num_known)
      throw DataError("source label " + std::to_string(y) + " outside [0, " + std::to_string(num_known) + ")");
  auto result = train_source(data, num_known, source_train_config(cfg, cfg.seed));
  ensure_dir(out_dir);
  save_checkpoint((out_dir / kSourceCheckpoint).string(), result.model);
  write_epoch_log_csv((out_dir / "source_train_log.csv").string(), result);
  return std::move(result.model);
}

inline void write_pseudo_labels_csv(const std::string& path, const PseudoLabelSets& sets) {
  std::vector<int> label(sets.size(), -1);
  for (auto [idx, y] : sets.known) label[idx] = y;
  CsvWriter w(path);
  w.write_row({"index", "entropy", "assignment", "pseudo_label"});
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::string pl;
    if (sets.assignment[i] == Assignment::known) pl = std::to_string(label[i]);
    if (sets.assignment[i] == Assignment::unknown) pl = "unknown";
    w.write_row({std::to_string(i), format_double(sets.entropy[i]), to_string(sets.assignment[i]), pl});
  }
}

inline void write_predictions_csv(const std::string& path, const std::vector<int>& pred) {
  CsvWriter w(path);
  w.write_row({"index", "prediction"});
  for (std::size_t i = 0; i < pred.size(); ++i)
    w.write_row({std::to_string(i), pred[i] == kUnknownLabel ? std::string("unknown") : std::to_string(pred[i])});
}

// adapt: reads the source checkpoint and the unlabeled target features,
// nothing else.
inline ExpandedClassifier cmd_adapt(const RunConfig& cfg, const AdaptInputs& in, const fs::path& out_dir) {
  require_file(in.source_checkpoint, "source checkpoint");
  require_file(in.target_csv, "target CSV");
  const ExpandedClassifier source = load_checkpoint(in.source_checkpoint.string());
  const auto target = load_csv(in.target_csv.string(), cfg.label_column, false);
  if (target.features.cols() != source.input_dim()) {
    throw DataError("target has " + std::to_string(target.features.cols()) + " features, checkpoint expects " +
                    std::to_string(source.input_dim()));
  }
  auto result = adapt(source, target.features, adapt_config(cfg, source.num_known(), cfg.seed));
  ensure_dir(out_dir);
  save_checkpoint((out_dir / kAdaptedCheckpoint).string(), result.model);
  write_adapt_log_csv((out_dir / "adapt_log.csv").string(), result.log);
  if (result.pseudo_labels) write_pseudo_labels_csv((out_dir / "pseudo_labels.csv").string(), *result.pseudo_labels);
  return std::move(result.model);
}

inline EvalReport cmd_eval(const RunConfig& cfg, const EvalInputs& in, const fs::path& out_dir) {
  require_file(in.target_csv, "target CSV");
  require_file(in.hidden_labels_csv, "hidden target labels");
  const auto target = load_csv(in.target_csv.string(), cfg.label_column, false);
  const std::size_t n = target.features.rows();
  const auto truth = read_indexed_column(in.hidden_labels_csv.string(), "label", n);

  std::vector<int> pred;
  std::size_t num_known = 0;
  std::optional<ExpandedClassifier> model;
  if (in.predictions_csv) {
    require_file(*in.predictions_csv, "predictions CSV");
    pred = read_indexed_column(in.predictions_csv->string(), "prediction", n, true);
  }
  if (!in.predictions_csv || fs::is_regular_file(in.adapted_checkpoint)) {
    require_file(in.adapted_checkpoint, "adapted checkpoint");
    model = load_checkpoint(in.adapted_checkpoint.string());
    if (model->input_dim() != target.features.cols())
      throw DataError("target feature count does not match the adapted checkpoint");
    num_known = model->num_known();
    if (!in.predictions_csv) pred = predict_open_set(*model, target.features);
  } else {
    num_known = cfg.data_kind == "synthetic" ? cfg.num_known() : 0;
    if (num_known == 0) throw ConfigError("eval: need the adapted checkpoint to know |C_s| for csv data");
  }
  for (int p : pred)
    if (p != kUnknownLabel && (p < 0 || static_cast<std::size_t>(p) >= num_known))
      throw DataError("prediction " + std::to_string(p) + " is not a known class");

  EvalReport report;
  try {
    report = evaluate(pred, truth, num_known);
  } catch (const UndefinedMetricError& e) {
    throw DataError(e.what());
  }
  ensure_dir(out_dir);
  write_eval_csv((out_dir / "eval.csv").string(), report);
  write_confusion_csv((out_dir / "confusion.csv").string(), report);
  if (!in.predictions_csv) write_predictions_csv((out_dir / "predictions.csv").string(), pred);
  if (in.source_checkpoint && fs::is_regular_file(*in.source_checkpoint)) {
    const ExpandedClassifier source = load_checkpoint(in.source_checkpoint->string());
    const Thresholds t = resolved_thresholds(cfg, source.num_known()).value_or(default_thresholds(source.num_known()));
    const auto sets = partition_by_confidence(predict_probabilities(source, target.features), t,
                                              cfg.adapt.confidence, cfg.adapt.max_prob);
    write_reliability_csv((out_dir / "pseudo_label_reliability.csv").string(), sets, truth);
    const auto rel = pseudo_label_report(sets, truth, cfg.histogram_bins);
    write_histogram_csv((out_dir / "entropy_histogram.csv").string(), rel);
    CsvWriter w((out_dir / "pseudo_label_summary.csv").string());
    w.write_row({"metric", "value"});
    w.write_row({"known_precision", format_optional(rel.known_precision)});
    w.write_row({"unknown_precision", format_optional(rel.unknown_precision)});
    w.write_row({"known_coverage", format_double(rel.known_coverage)});
    w.write_row({"unknown_coverage", format_double(rel.unknown_coverage)});
    w.write_row({"discarded_fraction", format_double(rel.discarded_fraction)});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Multi-run experiments

// Runs tasks on up to `jobs` threads. Results come back in task order; the
// first failing task (by index) rethrows.
template <class T>
std::vector<T> run_parallel(const std::vector<std::function<T()>>& tasks, std::size_t jobs) {
  std::vector<std::optional<T>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(tasks.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

inline std::uint64_t run_seed(const RunConfig& cfg, std::size_t repeat) { return cfg.seed + repeat; }

struct MethodRun {
  std::string method;
  std::uint64_t seed = 0;
  EvalReport report;
};

// The head-expanded source model before any adaptation step.
inline ExpandedClassifier source_only_model(const ExpandedClassifier& source, const AdaptConfig& a) {
  return expand_head(source, a.extra_outputs, a.seed ^ 0xe4a11dULL);
}

inline EvalReport evaluate_model(const ExpandedClassifier& m, const DomainPair& pair) {
  return evaluate(predict_open_set(m, pair.target_features), pair.target_labels_hidden, pair.num_known);
}

// source_only, pl (alpha_c = 0), tc (alpha_p = 0) and full for one seed.
inline std::vector<MethodRun> ablation_runs_for_seed(const RunConfig& cfg, std::uint64_t seed) {
  const DomainPair pair = load_experiment_data(cfg, seed);
  const auto src = train_source(pair.source, pair.num_known, source_train_config(cfg, seed));
  const AdaptConfig base = adapt_config(cfg, pair.num_known, seed);
  std::vector<MethodRun> out;
  out.push_back({"source_only", seed, evaluate_model(source_only_model(src.model, base), pair)});
  for (const char* method : {"pl", "tc", "full"}) {
    AdaptConfig a = base;
    const std::string m = method;
    if (m == "pl") a.alpha_c = 0.0;
    if (m == "tc") a.alpha_p = 0.0;
    if (m != "full" && a.alpha_p == 0.0 && a.alpha_c == 0.0) continue;
    out.push_back({m, seed, evaluate_model(adapt(src.model, pair.target_features, a).model, pair)});
  }
  return out;
}

inline void write_runs_csv(const std::string& path, const std::string& key, const std::vector<SweepRun>& runs,
                           const std::vector<std::uint64_t>& seeds) {
  CsvWriter w(path);
  w.write_row({key, "value", "seed", "OS", "OS_star", "Acc", "unknown_acc"});
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    w.write_row({r.parameter, r.value, std::to_string(seeds[i]), format_double(r.report.os),
                 format_double(r.report.os_star), format_double(r.report.total_acc),
                 format_double(r.report.unknown_acc())});
  }
}

struct AblationResult {
  std::vector<MethodRun> runs;
  std::vector<SweepRow> summary;  // pl, tc, full
};

inline AblationResult cmd_ablate(const RunConfig& cfg, const fs::path& out_dir) {
  if (cfg.ablate_seeds == 0) throw ConfigError("ablate.seeds: must be >= 1");
  std::vector<std::function<std::vector<MethodRun>()>> tasks;
  for (std::size_t i = 0; i < cfg.ablate_seeds; ++i)
    tasks.push_back([&cfg, seed = run_seed(cfg, i)] { return ablation_runs_for_seed(cfg, seed); });
  AblationResult result;
  for (auto& per_seed : run_parallel(tasks, cfg.jobs))
    for (auto& r : per_seed) result.runs.push_back(std::move(r));

  std::vector<SweepRun> table, all;
  std::vector<std::uint64_t> seeds;
  for (const char* method : {"pl", "tc", "full"})
    for (const auto& r : result.runs)
      if (r.method == method) table.push_back({"method", r.method, r.report});
  for (const auto& r : result.runs) {
    all.push_back({"method", r.method, r.report});
    seeds.push_back(r.seed);
  }
  result.summary = sweep_summary(table);
  ensure_dir(out_dir);
  write_sweep_csv((out_dir / "ablation.csv").string(), result.summary);
  write_runs_csv((out_dir / "ablation_runs.csv").string(), "parameter", all, seeds);
  return result;
}

// Applies one sweep value to a copy of the config.
inline RunConfig with_sweep_value(const RunConfig& cfg, const std::string& parameter, double v,
                                  std::size_t num_known, std::size_t num_unknown) {
  RunConfig c = cfg;
  if (parameter == "beta") {
    c.adapt.beta = v;
  } else if (parameter == "k_ratio") {
    c.adapt.extra_outputs = static_cast<std::size_t>(
        std::max(1.0, std::round(v * static_cast<double>(std::max<std::size_t>(num_unknown, 1)))));
  } else if (parameter == "delta_k" || parameter == "delta_u") {
    const Thresholds d = resolved_thresholds(cfg, num_known).value_or(default_thresholds(num_known));
    c.adapt.thresholds = parameter == "delta_k" ? Thresholds{v, d.delta_u} : Thresholds{d.delta_k, v};
  } else if (parameter == "num_unknown") {
    if (v < 1.0 || v != std::floor(v))
      throw ConfigError("sweep.values: num_unknown values must be integers >= 1");
    if (cfg.data_kind != "synthetic") throw ConfigError("sweep.parameter num_unknown needs synthetic data");
    c.synth.num_unknown = static_cast<std::size_t>(v);
  } else {
    throw ConfigError("sweep.parameter: unsupported '" + parameter + "'");
  }
  validate_config(c);
  return c;
}

inline std::string sweep_value_label(const std::string& parameter, double v, const RunConfig& applied) {
  if (parameter == "k_ratio") return format_double(v) + " (K=" + std::to_string(applied.adapt.extra_outputs) + ")";
  return format_double(v);
}

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> summary;
};

inline SweepResult cmd_sweep(const RunConfig& cfg, const fs::path& out_dir) {
  if (cfg.sweep_values.empty()) throw ConfigError("sweep.values: empty grid");
  if (cfg.sweep_seeds == 0) throw ConfigError("sweep.seeds: must be >= 1");
  std::size_t num_known = cfg.num_known(), num_unknown = cfg.synth.num_unknown;
  if (cfg.data_kind == "csv") {
    const DomainPair probe = load_experiment_data(cfg, cfg.seed);
    num_known = probe.num_known;
    num_unknown = probe.num_unknown;
  }
  // Every grid point is validated before any training starts.
  std::vector<RunConfig> points;
  for (double v : cfg.sweep_values) points.push_back(with_sweep_value(cfg, cfg.sweep_parameter, v, num_known, num_unknown));

  // Source models depend on the data and seed only, so they are shared
  // across grid points unless the data itself is swept.
  const bool shared_source = cfg.sweep_parameter != "num_unknown";
  std::vector<std::optional<SourceTrainResult>> sources(cfg.sweep_seeds);
  std::vector<std::optional<DomainPair>> datasets(cfg.sweep_seeds);
  if (shared_source) {
    std::vector<std::function<int()>> prep;
    for (std::size_t s = 0; s < cfg.sweep_seeds; ++s)
      prep.push_back([&, s] {
        const auto seed = run_seed(cfg, s);
        datasets[s] = load_experiment_data(cfg, seed);
        sources[s] = train_source(datasets[s]->source, datasets[s]->num_known, source_train_config(cfg, seed));
        return 0;
      });
    run_parallel(prep, cfg.jobs);
  }

  std::vector<std::function<EvalReport()>> tasks;
  SweepResult result;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t s = 0; s < cfg.sweep_seeds; ++s) {
      const auto seed = run_seed(cfg, s);
      result.runs.push_back({cfg.sweep_parameter, sweep_value_label(cfg.sweep_parameter, cfg.sweep_values[p], points[p]), {}});
      result.seeds.push_back(seed);
      tasks.push_back([&, p, s, seed]() -> EvalReport {
        const RunConfig& pc = points[p];
        if (shared_source) {
          const auto a = adapt_config(pc, datasets[s]->num_known, seed);
          return evaluate_model(adapt(sources[s]->model, datasets[s]->target_features, a).model, *datasets[s]);
        }
        const DomainPair pair = load_experiment_data(pc, seed);
        const auto src = train_source(pair.source, pair.num_known, source_train_config(pc, seed));
        return evaluate_model(adapt(src.model, pair.target_features, adapt_config(pc, pair.num_known, seed)).model, pair);
      });
    }
  }
  auto reports = run_parallel(tasks, cfg.jobs);
  for (std::size_t i = 0; i < reports.size(); ++i) result.runs[i].report = std::move(reports[i]);
  result.summary = sweep_summary(result.runs);
  ensure_dir(out_dir);
  write_sweep_csv((out_dir / ("sweep_" + cfg.sweep_parameter + ".csv")).string(), result.summary);
  write_runs_csv((out_dir / ("sweep_" + cfg.sweep_parameter + "_runs.csv")).string(), "parameter", result.runs,
                 result.seeds);
  return result;
}

inline verify::SuiteReport cmd_verify(const fs::path& out_dir) {
  auto report = verify::run_suite();
  ensure_dir(out_dir);
  verify::write_suite_csv((out_dir / "verify.csv").string(), report);
  verify::write_convergence_csv((out_dir / "estimator_convergence.csv").string(), report);
  return report;
}

}  // namespace sfoda
