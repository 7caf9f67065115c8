#pragma once

// Run configuration: a UTF-8 key/value file with [section] headers.
//
//   seed = 3
//   [data]
//   num_unknown = 2
//   shift_translation = 0.5, 0.5
//   [adapt]
//   beta = 1.3
//
// Lines starting with '#' or ';' are comments. Unknown keys are rejected
// with their full dotted path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfoda/csv.hpp"
#include "sfoda/data.hpp"
#include "sfoda/error.hpp"
#include "sfoda/pseudolabel.hpp"
#include "sfoda/text.hpp"
#include "sfoda/trainer.hpp"

namespace sfoda {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t jobs = 1;

  // [data]
  std::string data_kind = "synthetic";  // synthetic | csv
  SynthConfig synth{};
  std::string source_csv;
  std::string target_csv;
  std::string target_labels_csv;
  std::string label_column = "label";

  // [model]
  std::vector<std::size_t> hidden_dims{64, 64};

  // [source]
  SourceTrainConfig source{};

  // [adapt]
  AdaptConfig adapt{};

  // [eval]
  std::string predictions_csv;
  std::size_t histogram_bins = 20;

  // [ablate]
  std::size_t ablate_seeds = 5;

  // [sweep]
  std::string sweep_parameter = "beta";
  std::vector<double> sweep_values{0.85, 1.0, 1.3, 1.6};
  std::size_t sweep_seeds = 5;

  std::size_t num_known() const { return synth.num_known; }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = s.find(',', start);
    auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class ConfigBinder {
 public:
  using Setter = std::function<void(const std::string& value)>;
  using Getter = std::function<std::string()>;

  void bind(std::string key, Setter set, Getter get) {
    order_.push_back(key);
    entries_.emplace(std::move(key), Entry{std::move(set), std::move(get)});
  }

  void set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second.set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }

  // Every key with its effective value, in declaration order.
  std::string dump() const {
    std::string out;
    for (const auto& k : order_) out += k + " = " + entries_.at(k).get() + "\n";
    return out;
  }

 private:
  struct Entry {
    Setter set;
    Getter get;
  };
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

inline double to_real(const std::string& v) {
  auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError("expected a real number, got '" + v + "'");
  return *d;
}

inline std::size_t to_count(const std::string& v) {
  auto i = parse_int(v);
  if (!i || *i < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*i);
}

inline std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + xs[i];
  return out;
}

inline ConfigBinder make_binder(RunConfig& c) {
  ConfigBinder b;
  auto real = [&b](const std::string& key, double& field) {
    b.bind(key, [&field](const std::string& v) { field = to_real(v); },
           [&field] { return format_double(field); });
  };
  auto count = [&b](const std::string& key, std::size_t& field) {
    b.bind(key, [&field](const std::string& v) { field = to_count(v); },
           [&field] { return std::to_string(field); });
  };
  auto text = [&b](const std::string& key, std::string& field) {
    b.bind(key, [&field](const std::string& v) { field = v; }, [&field] { return field; });
  };
  auto degrees = [&b](const std::string& key, double& radians) {
    b.bind(key, [&radians](const std::string& v) { radians = to_real(v) * std::numbers::pi / 180.0; },
           [&radians] { return format_double(radians * 180.0 / std::numbers::pi); });
  };
  auto counts = [&b](const std::string& key, std::vector<std::size_t>& field) {
    b.bind(key,
           [&field](const std::string& v) {
             field.clear();
             for (const auto& p : split_list(v)) field.push_back(to_count(p));
           },
           [&field] {
             std::vector<std::string> s;
             for (auto x : field) s.push_back(std::to_string(x));
             return join(s);
           });
  };
  auto reals = [&b](const std::string& key, std::vector<double>& field) {
    b.bind(key,
           [&field](const std::string& v) {
             field.clear();
             for (const auto& p : split_list(v)) field.push_back(to_real(p));
           },
           [&field] {
             std::vector<std::string> s;
             for (auto x : field) s.push_back(format_double(x));
             return join(s);
           });
  };

  b.bind("seed", [&c](const std::string& v) { c.seed = to_count(v); },
         [&c] { return std::to_string(c.seed); });
  text("output_dir", c.output_dir);
  count("jobs", c.jobs);

  text("data.kind", c.data_kind);
  count("data.dim", c.synth.dim);
  count("data.num_known", c.synth.num_known);
  count("data.num_unknown", c.synth.num_unknown);
  count("data.source_per_class", c.synth.source_per_class);
  count("data.target_per_class", c.synth.target_per_class);
  real("data.radius", c.synth.radius);
  real("data.unknown_radius", c.synth.unknown_radius);
  real("data.blob_std", c.synth.blob_std);
  real("data.shift_degrees", c.synth.shift_degrees);
  reals("data.shift_translation", c.synth.shift_translation);
  text("data.source_csv", c.source_csv);
  text("data.target_csv", c.target_csv);
  text("data.target_labels_csv", c.target_labels_csv);
  text("data.label_column", c.label_column);

  counts("model.hidden", c.hidden_dims);

  count("source.epochs", c.source.epochs);
  count("source.batch_size", c.source.batch_size);
  real("source.learning_rate", c.source.sgd.learning_rate);
  real("source.momentum", c.source.sgd.momentum);
  real("source.weight_decay", c.source.sgd.weight_decay);

  auto& a = c.adapt;
  real("adapt.alpha_p", a.alpha_p);
  real("adapt.alpha_c", a.alpha_c);
  real("adapt.beta", a.beta);
  count("adapt.K", a.extra_outputs);
  count("adapt.steps", a.steps);
  count("adapt.pseudo_batch", a.pseudo_batch);
  count("adapt.consistency_batch", a.consistency_batch);
  real("adapt.learning_rate", a.sgd.learning_rate);
  real("adapt.momentum", a.sgd.momentum);
  real("adapt.weight_decay", a.sgd.weight_decay);
  auto threshold = [&b, &c](const std::string& key, bool known) {
    b.bind(key,
           [&c, known](const std::string& v) {
             auto& t = c.adapt.thresholds;
             if (v == "auto") {
               if (t) (known ? t->delta_k : t->delta_u) = std::nan("");
               return;
             }
             if (!t) t = Thresholds{std::nan(""), std::nan("")};
             (known ? t->delta_k : t->delta_u) = to_real(v);
           },
           [&c, known] {
             const auto& t = c.adapt.thresholds;
             if (!t) return std::string("auto");
             const double v = known ? t->delta_k : t->delta_u;
             return std::isnan(v) ? std::string("auto") : format_double(v);
           });
  };
  threshold("adapt.delta_k", true);
  threshold("adapt.delta_u", false);
  b.bind("adapt.confidence",
         [&a](const std::string& v) {
           if (v == "entropy") a.confidence = ConfidenceMeasure::entropy;
           else if (v == "max_prob") a.confidence = ConfidenceMeasure::max_prob;
           else throw ConfigError("expected 'entropy' or 'max_prob', got '" + v + "'");
         },
         [&a] { return std::string(a.confidence == ConfidenceMeasure::entropy ? "entropy" : "max_prob"); });
  real("adapt.max_prob_known", a.max_prob.known_min);
  real("adapt.max_prob_unknown_factor", a.max_prob.unknown_factor);
  real("adapt.noise_std", a.transform.noise_std);
  degrees("adapt.rotation_max_degrees", a.transform.rotation_max_radians);
  real("adapt.scale_lo", a.transform.scale_lo);
  real("adapt.scale_hi", a.transform.scale_hi);

  text("eval.predictions_csv", c.predictions_csv);
  count("eval.histogram_bins", c.histogram_bins);

  count("ablate.seeds", c.ablate_seeds);

  text("sweep.parameter", c.sweep_parameter);
  reals("sweep.values", c.sweep_values);
  count("sweep.seeds", c.sweep_seeds);
  return b;
}

}  // namespace detail

// Replaces "auto" (NaN) thresholds by the defaults for |C_s|.
inline std::optional<Thresholds> resolved_thresholds(const RunConfig& c, std::size_t num_known) {
  if (!c.adapt.thresholds) return std::nullopt;
  Thresholds t = *c.adapt.thresholds;
  const Thresholds d = default_thresholds(num_known);
  if (std::isnan(t.delta_k)) t.delta_k = d.delta_k;
  if (std::isnan(t.delta_u)) t.delta_u = d.delta_u;
  return t;
}

inline void validate_config(const RunConfig& c) {
  if (c.data_kind != "synthetic" && c.data_kind != "csv")
    throw ConfigError("data.kind: expected 'synthetic' or 'csv', got '" + c.data_kind + "'");
  if (c.jobs == 0) throw ConfigError("jobs: must be >= 1");
  if (c.synth.num_known < 2) throw ConfigError("data.num_known: must be >= 2");
  if (c.histogram_bins == 0) throw ConfigError("eval.histogram_bins: must be >= 1");
  static const std::vector<std::string> params{"beta", "k_ratio", "delta_k", "delta_u", "num_unknown"};
  if (std::find(params.begin(), params.end(), c.sweep_parameter) == params.end())
    throw ConfigError("sweep.parameter: expected one of beta, k_ratio, delta_k, delta_u, num_unknown");
  if (auto t = resolved_thresholds(c, c.num_known())) {
    const double log_c = std::log(static_cast<double>(c.num_known()));
    if (!(t->delta_k >= 0.0 && t->delta_k < t->delta_u && t->delta_u <= log_c + 1e-12))
      throw ConfigError("adapt.delta_k/delta_u: need 0 <= delta_k < delta_u <= log(num_known) = " +
                        format_double(log_c));
  }
  try {
    c.adapt.validate();
    c.source.sgd.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid adaptation settings: ") + e.what());
  }
}

inline RunConfig parse_config(std::string_view text) {
  RunConfig c;
  auto binder = detail::make_binder(c);
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    binder.set(section.empty() ? key : section + "." + key, value);
  }
  c.source.hidden_dims = c.hidden_dims;
  validate_config(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

// Effective configuration, one "key = value" per line. Used for manifests
// and fingerprints.
inline std::string dump_config(const RunConfig& c) {
  RunConfig copy = c;
  return detail::make_binder(copy).dump();
}

}  // namespace sfoda
