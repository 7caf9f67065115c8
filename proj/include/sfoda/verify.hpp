#pragma once

// Oracle suite behind `sfoda verify`: autodiff gradients against finite
// differences, the MI estimator against direct sums, the transformation
// consistency bound on enumerable chains, estimator convergence, and the
// metric identity.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sfoda/autodiff.hpp"
#include "sfoda/consistency.hpp"
#include "sfoda/csv.hpp"
#include "sfoda/metrics.hpp"
#include "sfoda/model.hpp"
#include "sfoda/oracle.hpp"
#include "sfoda/pseudolabel.hpp"
#include "sfoda/text.hpp"
#include "sfoda/trainer.hpp"

namespace sfoda::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t instances = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // check-specific worst-case statistic
  double seconds = 0.0;
  std::string detail;
};

namespace detail {

template <class F>
CheckResult timed(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.passed = r.failures == 0 && r.instances > 0;
  return r;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
  return m;
}

inline Matrix random_probs(std::size_t rows, std::size_t cols, Rng& rng) {
  return ad::softmax_rows(ad::Value::constant(random_matrix(rows, cols, rng, 1.5))).data();
}

// Compares autodiff gradients of loss(model) with central differences over
// every parameter. Returns the number of mismatching coordinates and the
// worst relative error seen.
inline std::pair<std::size_t, double> compare_gradients(
    ExpandedClassifier& model, const std::function<ad::Value(const ExpandedClassifier&)>& loss) {
  auto params = model.parameters();
  for (auto& p : params) p.zero_grad();
  ad::backward(loss(model));
  std::vector<double> analytic, flat;
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.data().size(); ++i) {
      analytic.push_back(p.grad()[i]);
      flat.push_back(p.data()[i]);
    }
  auto set_flat = [&params](std::span<const double> x) {
    std::size_t k = 0;
    for (auto& p : params)
      for (double& v : p.mutable_data().values()) v = x[k++];
  };
  const auto numeric = oracle::finite_diff_grad(
      [&](std::span<const double> x) {
        set_flat(x);
        return loss(model).item();
      },
      flat);
  set_flat(flat);
  std::size_t bad = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!oracle::grad_close(analytic[i], numeric[i])) ++bad;
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return {bad, worst};
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.index(classes));
  return y;
}

}  // namespace detail

// Cross-entropy, L_P, L_C and the combined objective, `per_loss` random
// small instances each.
inline CheckResult gradient_suite(std::size_t per_loss = 15, std::uint64_t seed = 0) {
  return detail::timed("gradients", [&] {
    CheckResult r;
    Rng rng(seed);
    double worst = 0.0;
    auto record = [&](std::pair<std::size_t, double> res, const std::string& what) {
      ++r.instances;
      worst = std::max(worst, res.second);
      if (res.first) {
        ++r.failures;
        if (r.detail.empty()) r.detail = what + ": " + std::to_string(res.first) + " coordinates off";
      }
    };
    for (std::size_t i = 0; i < per_loss; ++i) {
      const std::size_t d = 2 + rng.index(3), c = 2 + rng.index(3), k = 1 + rng.index(3);
      const std::uint64_t s = rng.engine()();
      const Matrix x = detail::random_matrix(4, d, rng);
      const Matrix xk = detail::random_matrix(3, d, rng);
      const Matrix xu = detail::random_matrix(2, d, rng);
      const auto y = detail::random_labels(4, c, rng);
      const auto yk = detail::random_labels(3, c, rng);
      const double beta = rng.uniform(0.7, 1.8);
      TransformPolicy policy;

      ExpandedClassifier base = build_classifier(d, {5}, c, 0, s);
      record(detail::compare_gradients(
                 base, [&](const ExpandedClassifier& m) { return cross_entropy_loss(m.forward(x), y); }),
             "cross_entropy");

      ExpandedClassifier model = expand_head(base, k, s + 1);
      // Larger extra-head weights so the unknown term is not flat.
      for (double& v : model.extra_head()->weight.mutable_data().values()) v *= 50.0;
      record(detail::compare_gradients(
                 model, [&](const ExpandedClassifier& m) { return pseudo_label_loss(m, xk, yk, xu); }),
             "pseudo_label");
      record(detail::compare_gradients(model,
                                       [&](const ExpandedClassifier& m) {
                                         Rng t(s + 2);
                                         return consistency_loss(m, x, policy, beta, t);
                                       }),
             "consistency");
      AdaptConfig cfg;
      cfg.alpha_p = rng.uniform(0.05, 1.0);
      cfg.alpha_c = rng.uniform(0.05, 1.0);
      cfg.beta = beta;
      cfg.transform = policy;
      record(detail::compare_gradients(model,
                                       [&](const ExpandedClassifier& m) {
                                         Rng t(s + 3);
                                         return adaptation_objective(m, cfg, xk, yk, xu, x, t).total;
                                       }),
             "combined");
    }
    r.worst = worst;
    return r;
  });
}

// Empirical symmetrized joint by plain loops, independent of autodiff.
inline oracle::DiscreteJoint brute_force_joint(const Matrix& probs, const Matrix& probs_plus) {
  const std::size_t b = probs.rows(), c = probs.cols();
  Matrix p(c, c);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t e = 0; e < c; ++e)
        p(a, e) += 0.5 * (probs(i, a) * probs_plus(i, e) + probs(i, e) * probs_plus(i, a)) /
                   static_cast<double>(b);
  double total = 0.0;
  for (double v : p.values()) total += v;
  for (double& v : p.values()) v /= total;
  return oracle::DiscreteJoint(std::move(p));
}

inline double estimator_mi_beta(const Matrix& probs, const Matrix& probs_plus, double beta) {
  return mi_beta(build_joint(ad::Value::constant(probs), ad::Value::constant(probs_plus)), beta).item();
}

// build_joint + mi_beta against the direct sum, plus the bounds
// I_1 >= 0 and I_beta <= beta log C for beta >= 1.
inline CheckResult mi_equivalence(std::size_t instances = 100, std::uint64_t seed = 1) {
  return detail::timed("mi_equivalence", [&] {
    CheckResult r;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
      const std::size_t b = 1 + rng.index(8), c = 2 + rng.index(5);
      const Matrix p = detail::random_probs(b, c, rng);
      const Matrix pp = detail::random_probs(b, c, rng);
      const auto joint = brute_force_joint(p, pp);
      bool ok = true;
      for (double beta : {1.0, rng.uniform(0.5, 1.0), rng.uniform(1.0, 2.0)}) {
        const double est = estimator_mi_beta(p, pp, beta);
        const double ref = oracle::exact_mi_beta(joint, beta);
        r.worst = std::max(r.worst, std::abs(est - ref));
        ok = ok && std::abs(est - ref) <= 1e-10;
        if (beta == 1.0) ok = ok && est >= -1e-12 && std::abs(est - oracle::mutual_information(joint)) <= 1e-10;
        if (beta >= 1.0) ok = ok && est <= beta * std::log(static_cast<double>(c)) + 1e-12;
      }
      ++r.instances;
      if (!ok) {
        ++r.failures;
        if (r.detail.empty()) r.detail = "instance " + std::to_string(i) + " (b=" + std::to_string(b) +
                                         ", C=" + std::to_string(c) + ")";
      }
    }
    return r;
  });
}

inline CheckResult bound_corpus(std::size_t chains = 200, std::uint64_t seed = 2) {
  return detail::timed("consistency_bound", [&] {
    CheckResult r;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < chains; ++i) {
      const auto res = oracle::check_consistency_bound(oracle::random_premise_chain(rng));
      ++r.instances;
      r.worst = std::max(r.worst, res.mi_pred_pair - res.mi_pred_label);
      if (!res.premise_holds || !res.inequality_holds) {
        ++r.failures;
        if (r.detail.empty()) r.detail = "chain " + std::to_string(i);
      }
    }
    return r;
  });
}

struct ConvergenceTable {
  double beta = 0.0;
  oracle::ConvergenceResult result;
};

inline const std::vector<std::size_t>& convergence_sizes() {
  static const std::vector<std::size_t> sizes{50, 500, 5000};
  return sizes;
}

// Mean |estimate - exact| over `seeds` draws must shrink at least threefold
// from n = 50 to n = 5000.
inline CheckResult estimator_convergence(std::vector<ConvergenceTable>* tables = nullptr,
                                     std::size_t seeds = 20) {
  return detail::timed("estimator_convergence", [&] {
    CheckResult r;
    const auto dist = oracle::toy_pair_distribution();
    for (double beta : {1.0, 1.3}) {
      auto res = oracle::check_estimator_convergence(dist, beta, convergence_sizes(), seeds, estimator_mi_beta);
      const double first = res.rows.front().mean_abs_error;
      const double last = res.rows.back().mean_abs_error;
      ++r.instances;
      r.worst = std::max(r.worst, first > 0.0 ? last / first : 0.0);
      if (!(last <= first / 3.0)) {
        ++r.failures;
        r.detail = "beta " + format_double(beta) + ": " + format_double(last) + " vs " + format_double(first);
      }
      if (tables) tables->push_back({beta, std::move(res)});
    }
    return r;
  });
}

// OS = (|C_s| OS* + unknown accuracy) / (|C_s| + 1) on random confusions.
inline CheckResult metric_identity(std::size_t instances = 1000, std::uint64_t seed = 3) {
  return detail::timed("metric_identity", [&] {
    CheckResult r;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
      const std::size_t nk = 2 + rng.index(6), nu = 1 + rng.index(3);
      const std::size_t n = (nk + 1) * (1 + rng.index(20));
      std::vector<int> truth(n), pred(n);
      for (std::size_t j = 0; j < n; ++j) {
        // The first nk + 1 rows cover every collapsed class once.
        truth[j] = j < nk + 1 ? static_cast<int>(j == nk ? nk + rng.index(nu) : j)
                              : static_cast<int>(rng.index(nk + nu));
        const std::size_t p = rng.index(nk + 1);
        pred[j] = p == nk ? kUnknownLabel : static_cast<int>(p);
      }
      const auto rep = evaluate(pred, truth, nk);
      const double rhs = (static_cast<double>(nk) * rep.os_star + rep.unknown_acc()) / static_cast<double>(nk + 1);
      ++r.instances;
      r.worst = std::max(r.worst, std::abs(rep.os - rhs));
      if (std::abs(rep.os - rhs) > 1e-12) ++r.failures;
    }
    return r;
  });
}

struct SuiteReport {
  std::vector<CheckResult> checks;
  std::vector<ConvergenceTable> convergence;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

inline SuiteReport run_suite() {
  SuiteReport s;
  s.checks.push_back(gradient_suite());
  s.checks.push_back(mi_equivalence());
  s.checks.push_back(bound_corpus());
  s.checks.push_back(estimator_convergence(&s.convergence));
  s.checks.push_back(metric_identity());
  return s;
}

// Seconds are left out so the file is reproducible.
inline void write_suite_csv(const std::string& path, const SuiteReport& s) {
  CsvWriter w(path);
  w.write_row({"check", "passed", "instances", "failures", "worst", "detail"});
  for (const auto& c : s.checks) {
    w.write_row({c.name, c.passed ? "1" : "0", std::to_string(c.instances), std::to_string(c.failures),
                 format_double(c.worst), c.detail});
  }
}

inline void write_convergence_csv(const std::string& path, const SuiteReport& s) {
  CsvWriter w(path);
  w.write_row({"beta", "n", "mean_abs_error", "exact"});
  for (const auto& t : s.convergence)
    for (const auto& row : t.result.rows)
      w.write_row({format_double(t.beta), std::to_string(row.n), format_double(row.mean_abs_error),
                   format_double(t.result.exact)});
}

}  // namespace sfoda::verify
