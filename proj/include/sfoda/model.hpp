#pragma once

// Multilayer perceptron with an expandable output head.
//
// The final layer is stored as two blocks: the known head (|C_s| columns,
// inherited from source training) and the extra head (K columns, trained
// from scratch on the target). Their logits are concatenated, known first.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfoda/autodiff.hpp"
#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/random.hpp"
#include "sfoda/text.hpp"

namespace sfoda {

enum class Activation { relu, identity };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

struct DenseLayer {
  ad::Value weight;  // fan_in x fan_out
  ad::Value bias;    // 1 x fan_out
  Activation activation = Activation::identity;

  std::size_t fan_in() const { return weight.rows(); }
  std::size_t fan_out() const { return weight.cols(); }

  DenseLayer deep_copy() const {
    return {ad::Value::parameter(weight.data()), ad::Value::parameter(bias.data()), activation};
  }
};

// Which block of trainable parameters to select.
enum class Partition { all, inherited, expanded };

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
};

class ExpandedClassifier {
 public:
  ExpandedClassifier() = default;
  ExpandedClassifier(std::vector<DenseLayer> hidden, DenseLayer known_head,
                     std::optional<DenseLayer> extra_head, TrainingMetadata meta = {})
      : hidden_(std::move(hidden)),
        known_head_(std::move(known_head)),
        extra_head_(std::move(extra_head)),
        meta_(meta) {
    validate();
  }

  // Copies own their parameters.
  ExpandedClassifier(const ExpandedClassifier& other) : meta_(other.meta_) {
    if (!other.known_head_.weight.valid()) return;
    known_head_ = other.known_head_.deep_copy();
    for (const auto& l : other.hidden_) hidden_.push_back(l.deep_copy());
    if (other.extra_head_) extra_head_ = other.extra_head_->deep_copy();
  }
  ExpandedClassifier& operator=(const ExpandedClassifier& other) {
    if (this != &other) *this = ExpandedClassifier(other);
    return *this;
  }
  ExpandedClassifier(ExpandedClassifier&&) noexcept = default;
  ExpandedClassifier& operator=(ExpandedClassifier&&) noexcept = default;

  std::size_t input_dim() const {
    return hidden_.empty() ? known_head_.fan_in() : hidden_.front().fan_in();
  }
  std::size_t num_known() const { return known_head_.fan_out(); }
  std::size_t num_extra() const { return extra_head_ ? extra_head_->fan_out() : 0; }
  std::size_t num_outputs() const { return num_known() + num_extra(); }

  const std::vector<DenseLayer>& hidden_layers() const { return hidden_; }
  const DenseLayer& known_head() const { return known_head_; }
  const std::optional<DenseLayer>& extra_head() const { return extra_head_; }
  DenseLayer& known_head() { return known_head_; }
  std::optional<DenseLayer>& extra_head() { return extra_head_; }

  TrainingMetadata& metadata() { return meta_; }
  const TrainingMetadata& metadata() const { return meta_; }

  // Logits, b x (num_known + num_extra).
  ad::Value forward(const ad::Value& x) const {
    if (x.cols() != input_dim()) {
      throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                           " features, model expects " + std::to_string(input_dim()));
    }
    ad::Value h = x;
    for (const auto& layer : hidden_) h = apply(layer, h);
    ad::Value logits = apply(known_head_, h);
    if (extra_head_) logits = ad::concat_cols(logits, apply(*extra_head_, h));
    return logits;
  }

  ad::Value forward(const Matrix& x) const { return forward(ad::Value::constant(x)); }

  // Numeric logits without keeping a graph alive.
  Matrix logits(const Matrix& x) const { return forward(x).data(); }

  std::vector<ad::Value> parameters(Partition which = Partition::all) const {
    std::vector<ad::Value> out;
    if (which != Partition::expanded) {
      for (const auto& l : hidden_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
      }
      out.push_back(known_head_.weight);
      out.push_back(known_head_.bias);
    }
    if (which != Partition::inherited && extra_head_) {
      out.push_back(extra_head_->weight);
      out.push_back(extra_head_->bias);
    }
    return out;
  }

  std::size_t parameter_count(Partition which = Partition::all) const {
    std::size_t n = 0;
    for (const auto& p : parameters(which)) n += p.data().size();
    return n;
  }

  void zero_grad() const {
    for (auto p : parameters()) p.zero_grad();
  }

 private:
  static ad::Value apply(const DenseLayer& layer, const ad::Value& x) {
    ad::Value z = ad::add(ad::matmul(x, layer.weight), layer.bias);
    return layer.activation == Activation::relu ? ad::relu(z) : z;
  }

  void validate() const {
    std::size_t width = hidden_.empty() ? known_head_.fan_in() : hidden_.front().fan_in();
    for (const auto& l : hidden_) {
      if (l.fan_in() != width) throw DimensionError("hidden layer fan-in mismatch");
      if (l.bias.rows() != 1 || l.bias.cols() != l.fan_out())
        throw DimensionError("bias shape mismatch");
      width = l.fan_out();
    }
    if (known_head_.fan_in() != width) throw DimensionError("known head fan-in mismatch");
    if (extra_head_ && extra_head_->fan_in() != width)
      throw DimensionError("extra head fan-in mismatch");
  }

  std::vector<DenseLayer> hidden_;
  DenseLayer known_head_;
  std::optional<DenseLayer> extra_head_;
  TrainingMetadata meta_;
};

namespace detail {

inline DenseLayer gaussian_layer(std::size_t fan_in, std::size_t fan_out, double stddev,
                                 Activation act, Rng& rng) {
  Matrix w(fan_in, fan_out);
  for (auto& v : w.values()) v = rng.normal(0.0, stddev);
  return {ad::Value::parameter(std::move(w)), ad::Value::parameter(Matrix(1, fan_out)), act};
}

}  // namespace detail

// He-initialised perceptron: weights N(0, 2/fan_in), zero biases.
inline ExpandedClassifier build_classifier(std::size_t input_dim,
                                           const std::vector<std::size_t>& hidden_dims,
                                           std::size_t num_known, std::size_t num_extra,
                                           std::uint64_t seed) {
  if (input_dim < 1) throw ContractError("build: input_dim must be >= 1");
  if (num_known < 2) throw ContractError("build: num_known must be >= 2");
  for (auto h : hidden_dims)
    if (h == 0) throw ContractError("build: hidden layer width must be >= 1");

  Rng rng(seed);
  std::vector<DenseLayer> hidden;
  std::size_t width = input_dim;
  for (auto h : hidden_dims) {
    hidden.push_back(detail::gaussian_layer(width, h, std::sqrt(2.0 / width), Activation::relu, rng));
    width = h;
  }
  const double head_std = std::sqrt(2.0 / width);
  DenseLayer known = detail::gaussian_layer(width, num_known, head_std, Activation::identity, rng);
  std::optional<DenseLayer> extra;
  if (num_extra > 0)
    extra = detail::gaussian_layer(width, num_extra, head_std, Activation::identity, rng);
  return ExpandedClassifier(std::move(hidden), std::move(known), std::move(extra), {seed, 0});
}

inline constexpr double kExtraHeadInitStd = 0.01;

// Adds K extra output units. Everything else is copied bitwise from the
// source model.
inline ExpandedClassifier expand_head(const ExpandedClassifier& source, std::size_t extra,
                                      std::uint64_t seed) {
  if (source.num_extra() != 0) throw ContractError("expand_head: source model already expanded");
  if (extra < 1) throw ContractError("expand_head: K must be >= 1");
  ExpandedClassifier out = source;
  Rng rng(seed);
  out.extra_head() = detail::gaussian_layer(source.known_head().fan_in(), extra, kExtraHeadInitStd,
                                            Activation::identity, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   sfoda-checkpoint
//   version 1
//   num_known <n>
//   num_extra <k>
//   seed <s>
//   steps <t>
//   layers <L>
//   layer <i> <activation> <fan_in> <fan_out>
//   <fan_in*fan_out weights, row-major>
//   <fan_out biases>
//   ...
//
// The last layer stores the known and extra heads side by side
// (fan_out = num_known + num_extra, known columns first).

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const ExpandedClassifier& m) {
  auto write_values = [&os](const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? " " : "") << format_double(vals[i]);
    os << '\n';
  };
  os << "sfoda-checkpoint\n";
  os << "version " << kCheckpointVersion << '\n';
  os << "num_known " << m.num_known() << '\n';
  os << "num_extra " << m.num_extra() << '\n';
  os << "seed " << m.metadata().seed << '\n';
  os << "steps " << m.metadata().steps << '\n';
  os << "layers " << m.hidden_layers().size() + 1 << '\n';
  std::size_t idx = 0;
  for (const auto& l : m.hidden_layers()) {
    os << "layer " << idx++ << ' ' << to_string(l.activation) << ' ' << l.fan_in() << ' '
       << l.fan_out() << '\n';
    write_values(l.weight.data().values());
    write_values(l.bias.data().values());
  }
  const auto& kh = m.known_head();
  const std::size_t fan_in = kh.fan_in();
  const std::size_t out = m.num_outputs();
  Matrix w(fan_in, out);
  Matrix b(1, out);
  for (std::size_t i = 0; i < fan_in; ++i) {
    for (std::size_t j = 0; j < m.num_known(); ++j) w(i, j) = kh.weight.data()(i, j);
    for (std::size_t j = 0; j < m.num_extra(); ++j)
      w(i, m.num_known() + j) = m.extra_head()->weight.data()(i, j);
  }
  for (std::size_t j = 0; j < m.num_known(); ++j) b(0, j) = kh.bias.data()(0, j);
  for (std::size_t j = 0; j < m.num_extra(); ++j)
    b(0, m.num_known() + j) = m.extra_head()->bias.data()(0, j);
  os << "layer " << idx << " identity " << fan_in << ' ' << out << '\n';
  write_values(w.values());
  write_values(b.values());
}

inline ExpandedClassifier read_checkpoint(std::istream& is) {
  auto corrupt = [](const std::string& what) {
    return CorruptCheckpointError("corrupt checkpoint: " + what);
  };
  std::string word;
  auto expect_word = [&](const char* w) {
    if (!(is >> word) || word != w) throw corrupt(std::string("expected '") + w + "'");
  };
  auto read_count = [&](const char* key) -> std::uint64_t {
    expect_word(key);
    if (!(is >> word)) throw corrupt(std::string("missing value for ") + key);
    auto v = parse_int(word);
    if (!v || *v < 0) throw corrupt(std::string("bad value for ") + key);
    return static_cast<std::uint64_t>(*v);
  };
  auto read_values = [&](std::size_t n) {
    std::vector<double> vals(n);
    for (auto& v : vals) {
      if (!(is >> word)) throw corrupt("truncated parameter list");
      auto parsed = parse_double(word);
      if (!parsed) throw corrupt("non-numeric parameter '" + word + "'");
      v = *parsed;
    }
    return vals;
  };

  expect_word("sfoda-checkpoint");
  const auto version = read_count("version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                 " unsupported (expected " + std::to_string(kCheckpointVersion) +
                                 ")");
  }
  const auto num_known = read_count("num_known");
  const auto num_extra = read_count("num_extra");
  TrainingMetadata meta;
  meta.seed = read_count("seed");
  meta.steps = read_count("steps");
  const auto num_layers = read_count("layers");
  if (num_layers < 1) throw corrupt("no layers");

  std::vector<DenseLayer> layers;
  std::size_t prev_out = 0;
  for (std::uint64_t i = 0; i < num_layers; ++i) {
    if (read_count("layer") != i) throw corrupt("layer index out of order");
    if (!(is >> word)) throw corrupt("missing activation");
    Activation act;
    if (word == "relu") act = Activation::relu;
    else if (word == "identity") act = Activation::identity;
    else throw corrupt("unknown activation '" + word + "'");
    std::size_t shape[2];
    for (auto& s : shape) {
      if (!(is >> word)) throw corrupt("missing layer shape");
      auto v = parse_int(word);
      if (!v || *v < 1) throw corrupt("bad layer shape");
      s = static_cast<std::size_t>(*v);
    }
    if (i > 0 && shape[0] != prev_out) {
      throw CheckpointShapeError("layer " + std::to_string(i) + " fan-in " +
                                 std::to_string(shape[0]) + " does not match previous fan-out " +
                                 std::to_string(prev_out));
    }
    prev_out = shape[1];
    Matrix w = Matrix::from_rows(shape[0], shape[1], read_values(shape[0] * shape[1]));
    Matrix b = Matrix::from_rows(1, shape[1], read_values(shape[1]));
    layers.push_back({ad::Value::parameter(std::move(w)), ad::Value::parameter(std::move(b)), act});
  }
  if (is >> word) throw corrupt("trailing data");

  DenseLayer last = std::move(layers.back());
  layers.pop_back();
  if (last.fan_out() != num_known + num_extra) {
    throw CheckpointShapeError("output layer width " + std::to_string(last.fan_out()) +
                               " != num_known + num_extra = " +
                               std::to_string(num_known + num_extra));
  }
  if (num_known < 2) throw CheckpointShapeError("num_known must be >= 2");
  for (const auto& l : layers) {
    if (l.activation != Activation::relu) throw CheckpointShapeError("hidden layers must be relu");
  }

  const std::size_t fan_in = last.fan_in();
  Matrix wk(fan_in, num_known), bk(1, num_known), we(fan_in, num_extra), be(1, num_extra);
  for (std::size_t r = 0; r < fan_in; ++r) {
    for (std::size_t j = 0; j < num_known; ++j) wk(r, j) = last.weight.data()(r, j);
    for (std::size_t j = 0; j < num_extra; ++j) we(r, j) = last.weight.data()(r, num_known + j);
  }
  for (std::size_t j = 0; j < num_known; ++j) bk(0, j) = last.bias.data()(0, j);
  for (std::size_t j = 0; j < num_extra; ++j) be(0, j) = last.bias.data()(0, num_known + j);
  DenseLayer known{ad::Value::parameter(std::move(wk)), ad::Value::parameter(std::move(bk)),
                   Activation::identity};
  std::optional<DenseLayer> extra;
  if (num_extra > 0) {
    extra = DenseLayer{ad::Value::parameter(std::move(we)), ad::Value::parameter(std::move(be)),
                       Activation::identity};
  }
  return ExpandedClassifier(std::move(layers), std::move(known), std::move(extra), meta);
}

inline void save_checkpoint(const std::string& path, const ExpandedClassifier& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, m);
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

inline ExpandedClassifier load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace sfoda
