#pragma once

// Reference computations used to check the library: central finite
// differences and exact information quantities on small discrete
// distributions. Nothing here touches the autodiff graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/text.hpp"

namespace sfoda::oracle {

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences: (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
inline std::vector<double> finite_diff_grad(const ScalarFunction& f, std::vector<double> x,
                                            double h = 1e-5) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite probe at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// |a - b| <= max(rel * max(|a|, |b|), abs_tol).
inline bool grad_close(double a, double b, double rel = 1e-4, double abs_tol = 1e-6) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_tol);
}

// Joint probability table p(a, b) over small finite alphabets.
struct DiscreteJoint {
  Matrix p;

  explicit DiscreteJoint(Matrix table) : p(std::move(table)) {
    double total = 0.0;
    for (double v : p.values()) {
      if (!(v >= 0.0)) throw ContractError("DiscreteJoint: negative entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ContractError("DiscreteJoint: entries sum to " + format_double(total));
  }

  std::vector<double> row_marginal() const {
    std::vector<double> m(p.rows(), 0.0);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) m[i] += p(i, j);
    return m;
  }

  std::vector<double> col_marginal() const {
    std::vector<double> m(p.cols(), 0.0);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) m[j] += p(i, j);
    return m;
  }
};

inline double entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double v : dist)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// Direct double sum of p log( p / (p_a p_b)^((beta+1)/2) ) over p > 0.
inline double exact_mi_beta(const DiscreteJoint& joint, double beta) {
  const auto r = joint.row_marginal();
  const auto c = joint.col_marginal();
  double total = 0.0;
  for (std::size_t i = 0; i < joint.p.rows(); ++i) {
    for (std::size_t j = 0; j < joint.p.cols(); ++j) {
      const double pij = joint.p(i, j);
      if (pij <= 0.0) continue;
      total += pij * (std::log(pij) - 0.5 * (beta + 1.0) * (std::log(r[i]) + std::log(c[j])));
    }
  }
  return total;
}

// H(A) + H(B) - H(A, B).
inline double mutual_information(const DiscreteJoint& joint) {
  const auto r = joint.row_marginal();
  const auto c = joint.col_marginal();
  return entropy(r) + entropy(c) - entropy(joint.p.values());
}

// ---------------------------------------------------------------------------
// Transformation-consistency bound on an enumerable chain y -> x -> x+.

struct ChainSpec {
  std::vector<double> p_y;       // |Y|
  Matrix p_x_given_y;            // |Y| x |X|
  // p(x+ | x, y), one |X| x |X| block per label, stacked: row y*|X| + x.
  // A Markov chain has identical blocks wherever p(x, y) > 0.
  Matrix p_xplus_given_x_y;
  std::vector<int> predict;      // prediction map over X, shared by x and x+
};

struct BoundResult {
  double mi_pred_pair = 0.0;   // I(y~; y~+)
  double mi_pred_label = 0.0;  // I(y~; y)
  bool premise_holds = false;  // I(x; x+) == I(x; y) == I(x+; y)
  bool inequality_holds = false;
};

inline BoundResult check_consistency_bound(const ChainSpec& spec, double tol = 1e-12) {
  const std::size_t ny = spec.p_y.size();
  const std::size_t nx = spec.p_x_given_y.cols();
  if (spec.p_x_given_y.rows() != ny || spec.p_xplus_given_x_y.rows() != ny * nx ||
      spec.p_xplus_given_x_y.cols() != nx || spec.predict.size() != nx) {
    throw DimensionError("check_consistency_bound: inconsistent chain dimensions");
  }
  int num_pred = 0;
  for (int v : spec.predict) {
    if (v < 0) throw ContractError("check_consistency_bound: negative prediction");
    num_pred = std::max(num_pred, v + 1);
  }
  // Markov check: p(x+ | x, y) may not depend on y where p(x, y) > 0.
  for (std::size_t x = 0; x < nx; ++x) {
    std::size_t ref = ny;
    for (std::size_t y = 0; y < ny; ++y) {
      if (spec.p_y[y] * spec.p_x_given_y(y, x) <= 0.0) continue;
      if (ref == ny) {
        ref = y;
        continue;
      }
      for (std::size_t xp = 0; xp < nx; ++xp) {
        if (spec.p_xplus_given_x_y(y * nx + x, xp) != spec.p_xplus_given_x_y(ref * nx + x, xp)) {
          throw ContractError("check_consistency_bound: p(x+ | x, y) depends on y; chain is not Markov");
        }
      }
    }
  }

  // Full joint p(y, x, x+).
  const auto joint = [&](std::size_t y, std::size_t x, std::size_t xp) {
    return spec.p_y[y] * spec.p_x_given_y(y, x) * spec.p_xplus_given_x_y(y * nx + x, xp);
  };
  Matrix pxx(nx, nx), pyx(ny, nx), pyxp(ny, nx);
  const std::size_t np = static_cast<std::size_t>(num_pred);
  Matrix pred_pair(np, np), pred_label(np, ny);
  double total = 0.0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t xp = 0; xp < nx; ++xp) {
        const double v = joint(y, x, xp);
        total += v;
        pxx(x, xp) += v;
        pyx(y, x) += v;
        pyxp(y, xp) += v;
        const auto a = static_cast<std::size_t>(spec.predict[x]);
        const auto b = static_cast<std::size_t>(spec.predict[xp]);
        pred_pair(a, b) += v;
        pred_label(a, y) += v;
      }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("check_consistency_bound: chain does not normalize");
  // Absorb rounding so DiscreteJoint accepts the tables.
  for (Matrix* m : {&pxx, &pyx, &pyxp, &pred_pair, &pred_label})
    for (double& v : m->values()) v /= total;

  BoundResult r;
  r.mi_pred_pair = mutual_information(DiscreteJoint(pred_pair));
  r.mi_pred_label = mutual_information(DiscreteJoint(pred_label));
  const double i_x_xp = mutual_information(DiscreteJoint(pxx));
  const double i_x_y = mutual_information(DiscreteJoint(pyx));
  const double i_xp_y = mutual_information(DiscreteJoint(pyxp));
  r.premise_holds = std::abs(i_x_xp - i_x_y) <= 1e-9 && std::abs(i_xp_y - i_x_y) <= 1e-9;
  r.inequality_holds = r.mi_pred_pair <= r.mi_pred_label + tol;
  return r;
}

// Random chain satisfying the premise: X is partitioned into one nonempty
// group per label, p(x | y) lives on group y, and x+ is a fresh draw from a
// distribution q(. | y) on the same group, so x+ depends on x only through
// the label recovered from x.
inline ChainSpec random_premise_chain(std::mt19937_64& rng, std::size_t max_labels = 4,
                                      std::size_t max_inputs = 6, std::size_t max_preds = 4) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  const std::size_t ny = std::uniform_int_distribution<std::size_t>(1, max_labels)(rng);
  const std::size_t nx = std::uniform_int_distribution<std::size_t>(ny, std::max(ny, max_inputs))(rng);
  std::vector<std::size_t> group(nx);
  for (std::size_t x = 0; x < nx; ++x)
    group[x] = x < ny ? x : std::uniform_int_distribution<std::size_t>(0, ny - 1)(rng);
  std::shuffle(group.begin(), group.end(), rng);

  auto random_on_group = [&](std::size_t y) {
    std::vector<double> d(nx, 0.0);
    double s = 0.0;
    for (std::size_t x = 0; x < nx; ++x)
      if (group[x] == y) s += (d[x] = unit(rng));
    for (double& v : d) v /= s;
    return d;
  };

  ChainSpec spec;
  double s = 0.0;
  for (std::size_t y = 0; y < ny; ++y) s += spec.p_y.emplace_back(unit(rng));
  for (double& v : spec.p_y) v /= s;
  spec.p_x_given_y = Matrix(ny, nx);
  for (std::size_t y = 0; y < ny; ++y) {
    auto d = random_on_group(y);
    for (std::size_t x = 0; x < nx; ++x) spec.p_x_given_y(y, x) = d[x];
  }
  std::vector<std::vector<double>> q;
  for (std::size_t y = 0; y < ny; ++y) q.push_back(random_on_group(y));
  spec.p_xplus_given_x_y = Matrix(ny * nx, nx);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t xp = 0; xp < nx; ++xp) spec.p_xplus_given_x_y(y * nx + x, xp) = q[group[x]][xp];
  const std::size_t npred = std::uniform_int_distribution<std::size_t>(1, max_preds)(rng);
  for (std::size_t x = 0; x < nx; ++x)
    spec.predict.push_back(static_cast<int>(std::uniform_int_distribution<std::size_t>(0, npred - 1)(rng)));
  return spec;
}

// ---------------------------------------------------------------------------
// Estimator consistency on an enumerable pair distribution.

// Instance types s with weight w_s, each carrying soft predictions for the
// input and for its transformed copy.
struct PairDistribution {
  std::vector<double> weights;
  Matrix probs;       // S x C
  Matrix probs_plus;  // S x C

  // Population joint sum_s w_s p_s p+_s^T, symmetrized.
  DiscreteJoint exact_joint() const {
    const std::size_t c = probs.cols();
    Matrix p(c, c);
    for (std::size_t s = 0; s < weights.size(); ++s)
      for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b < c; ++b) p(a, b) += weights[s] * probs(s, a) * probs_plus(s, b);
    Matrix sym(c, c);
    double total = 0.0;
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) total += sym(a, b) = 0.5 * (p(a, b) + p(b, a));
    for (double& v : sym.values()) v /= total;
    return DiscreteJoint(std::move(sym));
  }
};

// Three-class toy: three instance types, each confident in its own class,
// with the transformed copy slightly less confident.
inline PairDistribution toy_pair_distribution() {
  PairDistribution d;
  d.weights = {0.5, 0.3, 0.2};
  d.probs = Matrix{{0.8, 0.1, 0.1}, {0.15, 0.7, 0.15}, {0.1, 0.2, 0.7}};
  d.probs_plus = Matrix{{0.7, 0.2, 0.1}, {0.2, 0.6, 0.2}, {0.15, 0.15, 0.7}};
  return d;
}

// Estimator under test: (probs, probs_plus) for n sampled instances -> I_beta.
using MiEstimator = std::function<double(const Matrix&, const Matrix&, double beta)>;

struct ConvergenceRow {
  std::size_t n = 0;
  double mean_abs_error = 0.0;
};

struct ConvergenceResult {
  double exact = 0.0;
  std::vector<ConvergenceRow> rows;
};

inline ConvergenceResult check_estimator_convergence(const PairDistribution& dist, double beta,
                               const std::vector<std::size_t>& sample_sizes, std::size_t seeds,
                               const MiEstimator& estimator) {
  ConvergenceResult result;
  result.exact = exact_mi_beta(dist.exact_joint(), beta);
  const std::size_t c = dist.probs.cols();
  for (std::size_t n : sample_sizes) {
    double err = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(seed * 1000003ull + n);
      std::discrete_distribution<std::size_t> pick(dist.weights.begin(), dist.weights.end());
      Matrix p(n, c), pp(n, c);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = pick(rng);
        for (std::size_t k = 0; k < c; ++k) {
          p(i, k) = dist.probs(s, k);
          pp(i, k) = dist.probs_plus(s, k);
        }
      }
      err += std::abs(estimator(p, pp, beta) - result.exact);
    }
    result.rows.push_back({n, err / static_cast<double>(seeds)});
  }
  return result;
}

}  // namespace sfoda::oracle
