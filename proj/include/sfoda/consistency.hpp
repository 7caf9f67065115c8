#pragma once

// Beta-weighted mutual information between the predictions for an input and
// for its transformed copy, estimated from a mini-batch.

#include <cstddef>

#include "sfoda/autodiff.hpp"
#include "sfoda/data.hpp"
#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/model.hpp"
#include "sfoda/random.hpp"
#include "sfoda/text.hpp"

namespace sfoda {

struct JointPredictionMatrix {
  ad::Value joint;         // C x C, entries sum to 1
  ad::Value row_marginal;  // C x 1
  ad::Value col_marginal;  // 1 x C
  bool symmetrized = false;
};

// P = probs^T probs_plus / b, then (P + P^T) / 2 when symmetrize is set.
inline JointPredictionMatrix build_joint(const ad::Value& probs, const ad::Value& probs_plus,
                                         bool symmetrize = true) {
  if (!probs.data().same_shape(probs_plus.data())) {
    throw DimensionError("build_joint: prediction shapes " + probs.data().shape_string() + " and " +
                         probs_plus.data().shape_string() + " differ");
  }
  const std::size_t b = probs.rows();
  const std::size_t c = probs.cols();
  if (b == 0) throw ContractError("build_joint: empty batch");
  ad::Value p = ad::scale(ad::matmul(ad::transpose(probs), probs_plus), 1.0 / static_cast<double>(b));
  if (symmetrize) p = ad::scale(ad::add(p, ad::transpose(p)), 0.5);
  JointPredictionMatrix out;
  out.joint = p;
  out.row_marginal = ad::matmul(p, ad::Value::constant(Matrix(c, 1, 1.0)));
  out.col_marginal = ad::matmul(ad::Value::constant(Matrix(1, c, 1.0)), p);
  out.symmetrized = symmetrize;
  return out;
}

// I_beta = sum_{c,c+} P log( P / (P_c P_c+)^((beta+1)/2) ). Equals plug-in
// mutual information at beta = 1.
inline ad::Value mi_beta(const JointPredictionMatrix& jp, double beta) {
  if (!(beta > 0.0)) throw ContractError("mi_beta: beta must be > 0, got " + format_double(beta));
  const std::size_t c = jp.joint.rows();
  ad::Value log_row = ad::matmul(ad::log(jp.row_marginal), ad::Value::constant(Matrix(1, c, 1.0)));
  ad::Value log_col = ad::matmul(ad::Value::constant(Matrix(c, 1, 1.0)), ad::log(jp.col_marginal));
  ad::Value log_ratio =
      ad::sub(ad::log(jp.joint), ad::scale(ad::add(log_row, log_col), (beta + 1.0) / 2.0));
  return ad::sum(ad::mul(jp.joint, log_ratio));
}

// -I_beta between softmax(f(x)) and softmax(f(x+)), one fresh transform per
// row of `batch`.
inline ad::Value consistency_loss(const ExpandedClassifier& model, const Matrix& batch,
                                  const TransformPolicy& policy, double beta, Rng& rng) {
  if (batch.rows() == 0) throw ContractError("consistency_loss: empty batch");
  const Matrix augmented = transform_batch(batch, policy, rng);
  ad::Value probs = ad::softmax_rows(model.forward(batch));
  ad::Value probs_plus = ad::softmax_rows(model.forward(augmented));
  return ad::scale(mi_beta(build_joint(probs, probs_plus), beta), -1.0);
}

}  // namespace sfoda
