#pragma once

// Open-set evaluation. All target classes outside C_s collapse into one
// unknown class, indexed last (num_known).

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sfoda/csv.hpp"
#include "sfoda/error.hpp"
#include "sfoda/text.hpp"

namespace sfoda {

struct EvalReport {
  std::size_t num_known = 0;
  std::vector<double> per_class_acc;  // num_known + 1 entries, unknown last
  std::vector<std::size_t> n_per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double os = 0.0;
  double os_star = 0.0;
  double total_acc = 0.0;

  double unknown_acc() const { return per_class_acc.back(); }
};

// Predictions use -1 for unknown; hidden labels >= num_known are unknown.
inline EvalReport evaluate(std::span<const int> predictions, std::span<const int> hidden_labels,
                           std::size_t num_known) {
  if (predictions.size() != hidden_labels.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(hidden_labels.size()) + " labels");
  }
  const std::size_t nc = num_known + 1;
  const auto collapse_truth = [&](int y) {
    if (y < 0) throw ContractError("evaluate: negative ground-truth label");
    return static_cast<std::size_t>(y) >= num_known ? num_known : static_cast<std::size_t>(y);
  };
  const auto collapse_pred = [&](int p) {
    if (p < -1 || (p >= 0 && static_cast<std::size_t>(p) >= num_known)) {
      throw ContractError("evaluate: prediction " + std::to_string(p) + " is neither a known class nor -1");
    }
    return p < 0 ? num_known : static_cast<std::size_t>(p);
  };

  EvalReport r;
  r.num_known = num_known;
  r.confusion.assign(nc, std::vector<std::size_t>(nc, 0));
  r.n_per_class.assign(nc, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t t = collapse_truth(hidden_labels[i]);
    r.confusion[t][collapse_pred(predictions[i])]++;
    r.n_per_class[t]++;
  }
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (r.n_per_class[c] == 0) {
      throw UndefinedMetricError("evaluate: class " +
                                 (c == num_known ? std::string("unknown") : std::to_string(c)) +
                                 " has no ground-truth instances");
    }
    r.per_class_acc.push_back(static_cast<double>(r.confusion[c][c]) /
                              static_cast<double>(r.n_per_class[c]));
    correct += r.confusion[c][c];
    total += r.n_per_class[c];
  }
  double known_sum = 0.0;
  for (std::size_t c = 0; c < num_known; ++c) known_sum += r.per_class_acc[c];
  r.os_star = known_sum / static_cast<double>(num_known);
  r.os = (known_sum + r.per_class_acc.back()) / static_cast<double>(nc);
  r.total_acc = static_cast<double>(correct) / static_cast<double>(total);
  return r;
}

inline std::string class_name(std::size_t c, std::size_t num_known) {
  return c == num_known ? std::string("unknown") : std::to_string(c);
}

// metric,value rows: OS, OS*, Acc, then acc_<class> and n_<class>.
inline void write_eval_csv(const std::string& path, const EvalReport& r) {
  CsvWriter w(path);
  w.write_row({"metric", "value"});
  w.write_row({"OS", format_double(r.os)});
  w.write_row({"OS_star", format_double(r.os_star)});
  w.write_row({"Acc", format_double(r.total_acc)});
  for (std::size_t c = 0; c < r.per_class_acc.size(); ++c)
    w.write_row({"acc_" + class_name(c, r.num_known), format_double(r.per_class_acc[c])});
  for (std::size_t c = 0; c < r.n_per_class.size(); ++c)
    w.write_row({"n_" + class_name(c, r.num_known), std::to_string(r.n_per_class[c])});
}

inline void write_confusion_csv(const std::string& path, const EvalReport& r) {
  CsvWriter w(path);
  std::vector<std::string> header{"true\\pred"};
  for (std::size_t c = 0; c < r.confusion.size(); ++c) header.push_back(class_name(c, r.num_known));
  w.write_row(header);
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    std::vector<std::string> row{class_name(t, r.num_known)};
    for (auto n : r.confusion[t]) row.push_back(std::to_string(n));
    w.write_row(row);
  }
}

struct SweepRun {
  std::string parameter;  // e.g. "beta", "method"
  std::string value;
  EvalReport report;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation, 0 when n == 1
};

struct SweepRow {
  std::string parameter;
  std::string value;
  std::size_t n = 0;
  MeanStd os, os_star, acc;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

// Groups runs by (parameter, value) in order of first appearance and
// aggregates across seeds.
inline std::vector<SweepRow> sweep_summary(const std::vector<SweepRun>& runs) {
  std::vector<SweepRow> rows;
  std::vector<std::vector<const EvalReport*>> members;
  for (const auto& run : runs) {
    std::size_t k = 0;
    while (k < rows.size() && !(rows[k].parameter == run.parameter && rows[k].value == run.value)) ++k;
    if (k == rows.size()) {
      rows.push_back({run.parameter, run.value, 0, {}, {}, {}});
      members.emplace_back();
    }
    members[k].push_back(&run.report);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::vector<double> os, os_star, acc;
    for (const auto* r : members[k]) {
      os.push_back(r->os);
      os_star.push_back(r->os_star);
      acc.push_back(r->total_acc);
    }
    rows[k].n = members[k].size();
    rows[k].os = mean_std(os);
    rows[k].os_star = mean_std(os_star);
    rows[k].acc = mean_std(acc);
  }
  return rows;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  CsvWriter w(path);
  w.write_row({"parameter", "value", "n", "single_run", "OS_mean", "OS_std", "OS_star_mean",
               "OS_star_std", "Acc_mean", "Acc_std"});
  for (const auto& r : rows) {
    w.write_row({r.parameter, r.value, std::to_string(r.n), r.n == 1 ? "1" : "0",
                 format_double(r.os.mean), format_double(r.os.std), format_double(r.os_star.mean),
                 format_double(r.os_star.std), format_double(r.acc.mean), format_double(r.acc.std)});
  }
}

}  // namespace sfoda
