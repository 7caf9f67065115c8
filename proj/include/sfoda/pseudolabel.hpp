#pragma once

// Confidence-thresholded pseudo-labels from the frozen source model and the
// pseudo-label loss on the expanded model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfoda/autodiff.hpp"
#include "sfoda/csv.hpp"
#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/model.hpp"
#include "sfoda/text.hpp"

namespace sfoda {

// Shannon entropy in nats, with 0 log 0 = 0.
inline double prediction_entropy(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ContractError("prediction_entropy: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("prediction_entropy: probabilities sum to " + format_double(total));
  }
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

struct Thresholds {
  double delta_k = 0.0;  // known iff entropy <= delta_k
  double delta_u = 0.0;  // unknown iff entropy >= delta_u
};

// delta_u = log|C_s| / 2, delta_k = delta_u / 10.
inline Thresholds default_thresholds(std::size_t num_known) {
  if (num_known < 2) throw ContractError("default_thresholds: num_known must be >= 2");
  const double du = std::log(static_cast<double>(num_known)) / 2.0;
  return {0.1 * du, du};
}

enum class ConfidenceMeasure { entropy, max_prob };

// Cut-offs for the max-probability rule: known iff max >= known_min,
// unknown iff max <= unknown_factor / |C_s|.
struct MaxProbThresholds {
  double known_min = 0.95;
  double unknown_factor = 1.5;
};

enum class Assignment { known, unknown, discarded };

inline const char* to_string(Assignment a) {
  switch (a) {
    case Assignment::known: return "known";
    case Assignment::unknown: return "unknown";
    default: return "discarded";
  }
}

struct PseudoLabelSets {
  std::vector<std::pair<std::size_t, int>> known;  // (target index, class)
  std::vector<std::size_t> unknown;
  std::vector<std::size_t> discarded;
  double delta_k = 0.0;
  double delta_u = 0.0;
  std::size_t num_known_classes = 0;
  // Per target instance, in index order.
  std::vector<double> entropy;
  std::vector<Assignment> assignment;

  std::size_t size() const { return assignment.size(); }
};

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Applies the threshold rule to rows of source-model probabilities.
// Entropies are expressed in `log_base` units, and so must the thresholds be.
// Never throws on empty sets.
inline PseudoLabelSets partition_by_confidence(const Matrix& probs, const Thresholds& t,
                                               ConfidenceMeasure measure = ConfidenceMeasure::entropy,
                                               const MaxProbThresholds& mp = {},
                                               double log_base = std::numbers::e) {
  const std::size_t c = probs.cols();
  if (c < 2) throw ContractError("pseudo-labels: need at least 2 known classes");
  if (!(t.delta_k >= 0.0 && t.delta_k < t.delta_u &&
        t.delta_u <= std::log(static_cast<double>(c)) / std::log(log_base) + 1e-12)) {
    throw ContractError("pseudo-labels: thresholds must satisfy 0 <= delta_k < delta_u <= log|C_s| (got " +
                        format_double(t.delta_k) + ", " + format_double(t.delta_u) + ")");
  }
  PseudoLabelSets sets;
  sets.delta_k = t.delta_k;
  sets.delta_u = t.delta_u;
  sets.num_known_classes = c;
  const double base_scale = std::log(log_base);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    const double h = prediction_entropy(row) / base_scale;
    const std::size_t top = argmax_lowest(row);
    bool is_known = false;
    bool is_unknown = false;
    if (measure == ConfidenceMeasure::entropy) {
      is_known = h <= t.delta_k;
      is_unknown = h >= t.delta_u;
    } else {
      is_known = row[top] >= mp.known_min;
      is_unknown = row[top] <= mp.unknown_factor / static_cast<double>(c);
    }
    sets.entropy.push_back(h);
    if (is_known) {
      sets.known.emplace_back(i, static_cast<int>(top));
      sets.assignment.push_back(Assignment::known);
    } else if (is_unknown) {
      sets.unknown.push_back(i);
      sets.assignment.push_back(Assignment::unknown);
    } else {
      sets.discarded.push_back(i);
      sets.assignment.push_back(Assignment::discarded);
    }
  }
  return sets;
}

inline Matrix predict_probabilities(const ExpandedClassifier& model, const Matrix& x) {
  return ad::softmax_rows(model.forward(x)).data();
}

// Pseudo-labels target instances with the frozen, unexpanded source model.
// Throws AdaptationPreconditionError when either confident set is empty.
inline PseudoLabelSets assign_pseudo_labels(const ExpandedClassifier& source_model,
                                            const Matrix& target_features, const Thresholds& t,
                                            ConfidenceMeasure measure = ConfidenceMeasure::entropy,
                                            const MaxProbThresholds& mp = {}) {
  if (source_model.num_extra() != 0) {
    throw ContractError("assign_pseudo_labels: expects the unexpanded source model");
  }
  auto sets = partition_by_confidence(predict_probabilities(source_model, target_features), t,
                                      measure, mp);
  if (sets.known.empty()) {
    throw AdaptationPreconditionError("pseudo-label set of confident known instances is empty");
  }
  if (sets.unknown.empty()) {
    throw AdaptationPreconditionError("pseudo-label set of confident unknown instances is empty");
  }
  return sets;
}

struct PseudoLabelLoss {
  ad::Value known_term;    // mean cross-entropy on known pseudo-labels
  ad::Value unknown_term;  // -mean log of total extra-head probability
  ad::Value total;
};

// L_P = mean CE(known, label) - mean log sum_{c >= |C_s|} softmax_c(unknown).
inline PseudoLabelLoss pseudo_label_loss_parts(const ExpandedClassifier& model,
                                               const Matrix& known_x,
                                               std::span<const int> known_labels,
                                               const Matrix& unknown_x) {
  const std::size_t nk = model.num_known();
  const std::size_t out = model.num_outputs();
  if (model.num_extra() == 0) throw ContractError("pseudo_label_loss: model has no extra head");
  if (known_x.rows() == 0 || unknown_x.rows() == 0)
    throw ContractError("pseudo_label_loss: batches must be nonempty");
  if (known_labels.size() != known_x.rows())
    throw DimensionError("pseudo_label_loss: label count does not match known batch");

  Matrix onehot(known_x.rows(), out);
  for (std::size_t i = 0; i < known_labels.size(); ++i) {
    const int y = known_labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= nk) {
      throw ContractError("pseudo_label_loss: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(nk) + ")");
    }
    onehot(i, static_cast<std::size_t>(y)) = 1.0;
  }
  ad::Value log_probs = ad::log(ad::softmax_rows(model.forward(known_x)));
  ad::Value known_term = ad::scale(ad::sum(ad::mul(log_probs, ad::Value::constant(onehot))),
                                   -1.0 / static_cast<double>(known_x.rows()));

  ad::Value probs_u = ad::softmax_rows(model.forward(unknown_x));
  ad::Value unknown_mass = ad::matmul(ad::slice_cols(probs_u, nk, out),
                                      ad::Value::constant(Matrix(out - nk, 1, 1.0)));
  ad::Value unknown_term = ad::scale(ad::mean(ad::log(unknown_mass)), -1.0);
  return {known_term, unknown_term, ad::add(known_term, unknown_term)};
}

inline ad::Value pseudo_label_loss(const ExpandedClassifier& model, const Matrix& known_x,
                                   std::span<const int> known_labels, const Matrix& unknown_x) {
  return pseudo_label_loss_parts(model, known_x, known_labels, unknown_x).total;
}

// Quality of the pseudo-labels against hidden ground truth.
struct ReliabilityReport {
  std::optional<double> known_precision;
  std::optional<double> unknown_precision;
  double known_coverage = 0.0;
  double unknown_coverage = 0.0;
  double discarded_fraction = 0.0;
  std::vector<double> bin_edges;
  std::vector<std::size_t> hist_true_known;
  std::vector<std::size_t> hist_true_unknown;
};

inline ReliabilityReport pseudo_label_report(const PseudoLabelSets& sets,
                                             std::span<const int> hidden_labels,
                                             std::size_t num_bins = 20) {
  if (hidden_labels.size() != sets.size())
    throw DimensionError("pseudo_label_report: label count does not match target size");
  const int nk = static_cast<int>(sets.num_known_classes);
  ReliabilityReport r;
  const double n = static_cast<double>(sets.size());
  if (!sets.known.empty()) {
    std::size_t ok = 0;
    for (auto [idx, y] : sets.known) ok += hidden_labels[idx] == y;
    r.known_precision = static_cast<double>(ok) / static_cast<double>(sets.known.size());
  }
  if (!sets.unknown.empty()) {
    std::size_t ok = 0;
    for (auto idx : sets.unknown) ok += hidden_labels[idx] >= nk;
    r.unknown_precision = static_cast<double>(ok) / static_cast<double>(sets.unknown.size());
  }
  if (n > 0) {
    r.known_coverage = static_cast<double>(sets.known.size()) / n;
    r.unknown_coverage = static_cast<double>(sets.unknown.size()) / n;
    r.discarded_fraction = static_cast<double>(sets.discarded.size()) / n;
  }
  const double hmax = std::log(static_cast<double>(sets.num_known_classes));
  for (std::size_t b = 0; b <= num_bins; ++b)
    r.bin_edges.push_back(hmax * static_cast<double>(b) / static_cast<double>(num_bins));
  r.hist_true_known.assign(num_bins, 0);
  r.hist_true_unknown.assign(num_bins, 0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto bin = static_cast<std::size_t>(sets.entropy[i] / hmax * static_cast<double>(num_bins));
    bin = std::min(bin, num_bins - 1);
    (hidden_labels[i] < nk ? r.hist_true_known : r.hist_true_unknown)[bin]++;
  }
  return r;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("undefined");
}

// index, entropy, assignment, pseudo_label, correct (empty for discarded).
inline void write_reliability_csv(const std::string& path, const PseudoLabelSets& sets,
                                  std::span<const int> hidden_labels) {
  std::vector<int> label(sets.size(), -1);
  for (auto [idx, y] : sets.known) label[idx] = y;
  const int nk = static_cast<int>(sets.num_known_classes);
  CsvWriter w(path);
  w.write_row({"index", "entropy", "assignment", "pseudo_label", "correct"});
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::string pl, correct;
    if (sets.assignment[i] == Assignment::known) {
      pl = std::to_string(label[i]);
      correct = hidden_labels[i] == label[i] ? "1" : "0";
    } else if (sets.assignment[i] == Assignment::unknown) {
      pl = "unknown";
      correct = hidden_labels[i] >= nk ? "1" : "0";
    }
    w.write_row({std::to_string(i), format_double(sets.entropy[i]), to_string(sets.assignment[i]),
                 pl, correct});
  }
}

inline void write_histogram_csv(const std::string& path, const ReliabilityReport& r) {
  CsvWriter w(path);
  w.write_row({"bin_lo", "bin_hi", "true_known", "true_unknown"});
  for (std::size_t b = 0; b + 1 < r.bin_edges.size(); ++b) {
    w.write_row({format_double(r.bin_edges[b]), format_double(r.bin_edges[b + 1]),
                 std::to_string(r.hist_true_known[b]), std::to_string(r.hist_true_unknown[b])});
  }
}

}  // namespace sfoda
