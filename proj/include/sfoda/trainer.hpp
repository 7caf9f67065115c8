#pragma once

// Source pretraining, source-free target adaptation and open-set inference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfoda/autodiff.hpp"
#include "sfoda/consistency.hpp"
#include "sfoda/csv.hpp"
#include "sfoda/data.hpp"
#include "sfoda/error.hpp"
#include "sfoda/model.hpp"
#include "sfoda/optim.hpp"
#include "sfoda/pseudolabel.hpp"
#include "sfoda/random.hpp"
#include "sfoda/text.hpp"

namespace sfoda {

// Mean softmax cross-entropy over the first num_known outputs.
inline ad::Value cross_entropy_loss(const ad::Value& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows())
    throw DimensionError("cross_entropy: label count does not match batch");
  Matrix onehot(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.cols())
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  ad::Value log_probs = ad::log(ad::softmax_rows(logits));
  return ad::scale(ad::sum(ad::mul(log_probs, ad::Value::constant(onehot))),
                   -1.0 / static_cast<double>(labels.size()));
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

struct SourceTrainConfig {
  std::vector<std::size_t> hidden_dims{64, 64};
  SgdConfig sgd{};
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct SourceTrainResult {
  ExpandedClassifier model;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-data loss after each epoch
  double train_accuracy = 0.0;
};

inline double accuracy_known(const ExpandedClassifier& m, const Matrix& x, std::span<const int> y) {
  const Matrix logits = m.logits(x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i).first(m.num_known());
    ok += static_cast<int>(argmax_lowest(row)) == y[i];
  }
  return logits.rows() ? static_cast<double>(ok) / static_cast<double>(logits.rows()) : 0.0;
}

// Trains a classifier with |C_s| outputs by mini-batch SGD on cross-entropy.
inline SourceTrainResult train_source(const LabeledData& data, std::size_t num_known,
                                      const SourceTrainConfig& cfg) {
  const std::size_t n = data.features.rows();
  if (n == 0) throw ContractError("train_source: empty dataset");
  if (data.labels.size() != n) throw DimensionError("train_source: label count mismatch");
  for (int y : data.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_known)
      throw ContractError("train_source: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_known) + ")");
  if (cfg.batch_size == 0) throw ContractError("train_source: batch_size must be >= 1");

  SourceTrainResult result{build_classifier(data.features.cols(), cfg.hidden_dims, num_known, 0,
                                            cfg.seed), 0.0, {}, 0.0};
  auto& model = result.model;
  auto full_loss = [&] { return cross_entropy_loss(model.forward(data.features), data.labels).item(); };
  result.initial_loss = full_loss();

  Rng rng(cfg.seed ^ 0x5eed5eedULL);
  OptimState opt(cfg.sgd);
  auto params = model.parameters();
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(data.labels[i]);
      model.zero_grad();
      ad::Value loss = cross_entropy_loss(model.forward(data.features.gather_rows(idx)), batch_labels);
      if (!std::isfinite(loss.item()))
        throw NumericError("train_source: non-finite loss in epoch " + std::to_string(epoch));
      ad::backward(loss);
      sgd_step(params, opt);
    }
    result.epoch_loss.push_back(full_loss());
  }
  model.metadata() = {cfg.seed, opt.step_count};
  result.train_accuracy = accuracy_known(model, data.features, data.labels);
  return result;
}

struct AdaptConfig {
  double alpha_p = 0.1;
  double alpha_c = 1.0;
  double beta = 1.3;
  std::size_t extra_outputs = 8;  // K
  std::size_t pseudo_batch = 32;
  std::size_t consistency_batch = 32;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::optional<Thresholds> thresholds;  // defaults from |C_s| when unset
  ConfidenceMeasure confidence = ConfidenceMeasure::entropy;
  MaxProbThresholds max_prob{};
  TransformPolicy transform{};
  SgdConfig sgd{};

  void validate() const {
    if (!(alpha_p >= 0.0 && alpha_c >= 0.0)) throw ContractError("adapt: alphas must be >= 0");
    if (alpha_p == 0.0 && alpha_c == 0.0) throw ContractError("adapt: alpha_p and alpha_c both zero");
    if (!(beta > 0.0)) throw ContractError("adapt: beta must be > 0");
    if (extra_outputs < 1) throw ContractError("adapt: K must be >= 1");
    if (pseudo_batch < 2 || consistency_batch < 1) throw ContractError("adapt: batch sizes too small");
    transform.validate();
    sgd.validate();
  }
};

struct AdaptLogEntry {
  std::size_t step = 0;
  double pseudo_label_loss = 0.0;
  double consistency_loss = 0.0;
  double total = 0.0;
  double learning_rate = 0.0;
};

struct AdaptResult {
  ExpandedClassifier model;
  std::vector<AdaptLogEntry> log;
  std::optional<PseudoLabelSets> pseudo_labels;
};

struct ObjectiveParts {
  ad::Value pseudo_label;  // unset when alpha_p == 0
  ad::Value consistency;   // unset when alpha_c == 0
  ad::Value total;
};

// One mini-batch of the combined objective alpha_p * L_P + alpha_c * L_C.
inline ObjectiveParts adaptation_objective(const ExpandedClassifier& model, const AdaptConfig& cfg,
                                           const Matrix& known_x, std::span<const int> known_y,
                                           const Matrix& unknown_x, const Matrix& consistency_x,
                                           Rng& transform_rng) {
  ObjectiveParts parts;
  if (cfg.alpha_p > 0.0) parts.pseudo_label = pseudo_label_loss(model, known_x, known_y, unknown_x);
  if (cfg.alpha_c > 0.0)
    parts.consistency = consistency_loss(model, consistency_x, cfg.transform, cfg.beta, transform_rng);
  if (parts.pseudo_label.valid() && parts.consistency.valid()) {
    parts.total = ad::add(ad::scale(parts.pseudo_label, cfg.alpha_p),
                          ad::scale(parts.consistency, cfg.alpha_c));
  } else if (parts.pseudo_label.valid()) {
    parts.total = ad::scale(parts.pseudo_label, cfg.alpha_p);
  } else {
    parts.total = ad::scale(parts.consistency, cfg.alpha_c);
  }
  return parts;
}

// Adapts a source model to unlabeled target features. The source model is
// not modified; it pseudo-labels the target once, then the head-expanded copy
// is trained on the combined objective.
inline AdaptResult adapt(const ExpandedClassifier& source_model, const Matrix& target_features,
                         const AdaptConfig& cfg) {
  cfg.validate();
  if (source_model.num_extra() != 0) throw ContractError("adapt: source model is already expanded");
  if (target_features.cols() != source_model.input_dim()) {
    throw DimensionError("adapt: target has " + std::to_string(target_features.cols()) +
                         " features, model expects " + std::to_string(source_model.input_dim()));
  }
  if (target_features.rows() == 0) throw ContractError("adapt: empty target set");

  const ExpandedClassifier frozen = source_model;
  AdaptResult result{expand_head(frozen, cfg.extra_outputs, cfg.seed ^ 0xe4a11dULL), {}, std::nullopt};
  ExpandedClassifier& model = result.model;

  std::vector<std::size_t> known_idx, unknown_idx;
  std::vector<int> known_label;
  if (cfg.alpha_p > 0.0) {
    const Thresholds t = cfg.thresholds.value_or(default_thresholds(frozen.num_known()));
    result.pseudo_labels =
        assign_pseudo_labels(frozen, target_features, t, cfg.confidence, cfg.max_prob);
    for (auto [i, y] : result.pseudo_labels->known) {
      known_idx.push_back(i);
      known_label.push_back(y);
    }
    unknown_idx = result.pseudo_labels->unknown;
  }
  // Proportional split of the pseudo-label batch, at least one of each.
  const std::size_t pb = cfg.pseudo_batch;
  std::size_t n_known_batch = 0;
  if (cfg.alpha_p > 0.0) {
    const double share = static_cast<double>(known_idx.size()) /
                         static_cast<double>(known_idx.size() + unknown_idx.size());
    n_known_batch = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(share * static_cast<double>(pb))), 1, pb - 1);
  }

  Rng sample_rng(cfg.seed ^ 0x5a3b1eULL);
  Rng transform_rng(cfg.seed ^ 0x7f4a7cULL);
  OptimState opt(cfg.sgd);
  auto params = model.parameters(Partition::all);
  std::vector<std::size_t> kb(n_known_batch), ub(pb - n_known_batch), cb(cfg.consistency_batch);
  std::vector<int> kb_labels(n_known_batch);
  Matrix known_x, unknown_x, consistency_x;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cfg.alpha_p > 0.0) {
      for (std::size_t i = 0; i < kb.size(); ++i) {
        const std::size_t pick = sample_rng.index(known_idx.size());
        kb[i] = known_idx[pick];
        kb_labels[i] = known_label[pick];
      }
      for (auto& u : ub) u = unknown_idx[sample_rng.index(unknown_idx.size())];
      known_x = target_features.gather_rows(kb);
      unknown_x = target_features.gather_rows(ub);
    }
    if (cfg.alpha_c > 0.0) {
      for (auto& c : cb) c = sample_rng.index(target_features.rows());
      consistency_x = target_features.gather_rows(cb);
    }
    model.zero_grad();
    ObjectiveParts parts =
        adaptation_objective(model, cfg, known_x, kb_labels, unknown_x, consistency_x, transform_rng);
    const double total = parts.total.item();
    if (!std::isfinite(total)) {
      throw NumericError("adapt: non-finite loss at step " + std::to_string(step));
    }
    ad::backward(parts.total);
    sgd_step(params, opt);
    result.log.push_back({step, parts.pseudo_label.valid() ? parts.pseudo_label.item() : 0.0,
                          parts.consistency.valid() ? parts.consistency.item() : 0.0, total,
                          cfg.sgd.learning_rate});
  }
  model.metadata() = {cfg.seed, opt.step_count};
  return result;
}

inline void write_adapt_log_csv(const std::string& path, const std::vector<AdaptLogEntry>& log) {
  CsvWriter w(path);
  w.write_row({"step", "L_P", "L_C", "total", "learning_rate"});
  for (const auto& e : log) {
    w.write_row({std::to_string(e.step), format_double(e.pseudo_label_loss),
                 format_double(e.consistency_loss), format_double(e.total),
                 format_double(e.learning_rate)});
  }
}

inline constexpr int kUnknownLabel = -1;

// Known class argmax, or kUnknownLabel when the summed extra-head
// probability strictly exceeds the best known probability.
inline std::vector<int> predict_from_probabilities(const Matrix& probs, std::size_t num_known) {
  std::vector<int> out;
  out.reserve(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    auto known = row.first(num_known);
    const std::size_t best = argmax_lowest(known);
    double unknown_mass = 0.0;
    for (std::size_t c = num_known; c < row.size(); ++c) unknown_mass += row[c];
    out.push_back(unknown_mass > known[best] ? kUnknownLabel : static_cast<int>(best));
  }
  return out;
}

inline std::vector<int> predict_open_set(const ExpandedClassifier& model, const Matrix& features) {
  return predict_from_probabilities(predict_probabilities(model, features), model.num_known());
}

}  // namespace sfoda
