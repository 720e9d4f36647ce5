#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "flaicf/config.hpp"
#include "flaicf/error.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/tensor.hpp"

namespace flaicf {

// Logits fed to a beta-smoothed softmax are clamped to this range before
// exponentiation. Max-shifting is not an option there: with beta != 1 the
// denominator is not shift-invariant.
inline constexpr double kLogitClamp = 30.0;

inline double clamp_logit(double v) { return std::clamp(v, -kLogitClamp, kLogitClamp); }

namespace detail {

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorKind::invalid_argument, std::string(what) + ": non-finite input");
  }
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::shape_mismatch, what);
}

}  // namespace detail

// pre = W x + b, act = ReLU(pre)
inline void attention_hidden(const Matrix& W, std::span<const double> b,
                             std::span<const double> x, std::span<double> pre,
                             std::span<double> act) {
  affine(W, x, b, pre);
  for (std::size_t l = 0; l < pre.size(); ++l) act[l] = pre[l] > 0.0 ? pre[l] : 0.0;
}

// â = H^T ReLU(W (p ⊙ q) + b), unnormalized.
inline Vector feature_logits(std::span<const double> p, std::span<const double> q,
                             const Matrix& W, std::span<const double> b, const Matrix& H) {
  const std::size_t d = p.size();
  detail::require_dims(q.size() == d && W.cols() == d && W.rows() == b.size() &&
                           H.rows() == W.rows() && H.cols() == d,
                       "feature_logits: inconsistent dimensions (p " + std::to_string(d) +
                           ", q " + std::to_string(q.size()) + ", W " + shape_string(W) +
                           ", b " + std::to_string(b.size()) + ", H " + shape_string(H) + ")");
  Vector x(d), pre(W.rows()), act(W.rows()), out(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) x[k] = p[k] * q[k];
  attention_hidden(W, b, x, pre, act);
  add_transpose_product(H, act, out);
  return out;
}

// v = h^T ReLU(W (p ⊙ q) + b)
inline double item_logit(std::span<const double> p, std::span<const double> q, const Matrix& W,
                         std::span<const double> b, std::span<const double> h) {
  const std::size_t d = p.size();
  detail::require_dims(q.size() == d && W.cols() == d && W.rows() == b.size() &&
                           h.size() == W.rows(),
                       "item_logit: inconsistent dimensions");
  Vector x(d), pre(W.rows()), act(W.rows());
  for (std::size_t k = 0; k < d; ++k) x[k] = p[k] * q[k];
  attention_hidden(W, b, x, pre, act);
  return dot(h, act);
}

// Plain softmax over the features of one history item, max-shifted.
inline void normalize_features(std::span<const double> logits, std::span<double> out) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    s += out[k];
  }
  for (double& v : out) v /= s;
}

inline Vector normalize_features(std::span<const double> logits) {
  require(!logits.empty(), "normalize_features: empty input");
  detail::require_finite(logits, "normalize_features");
  Vector out(logits.size());
  normalize_features(logits, out);
  return out;
}

// w_j = exp(v_j) / (sum_j' exp(v_j'))^beta over clamped logits. Returns the
// unexponentiated denominator sum_j' exp(v_j'). `stride` lets this run down a
// column of a row-major matrix.
inline double smoothed_softmax(const double* logits, double* out, std::size_t n,
                               std::size_t stride, double beta) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double e = std::exp(clamp_logit(logits[j * stride]));
    out[j * stride] = e;
    s += e;
  }
  double scale = std::pow(s, -beta);
  for (std::size_t j = 0; j < n; ++j) out[j * stride] *= scale;
  return s;
}

inline Vector smoothed_softmax(std::span<const double> logits, double beta) {
  require(!logits.empty(), "smoothed_softmax: empty history");
  require(beta > 0.0 && beta <= 1.0, "smoothed_softmax: beta must lie in (0, 1]");
  detail::require_finite(logits, "smoothed_softmax");
  Vector out(logits.size());
  smoothed_softmax(logits.data(), out.data(), logits.size(), 1, beta);
  return out;
}

// Given dL/dw for the outputs of smoothed_softmax, writes dL/dv:
//   dL/dv_k = a_k g_k - beta (e_k / S) sum_j g_j a_j,  with e_k / S = a_k S^(beta-1).
// Clamped logits get zero gradient.
inline void smoothed_softmax_backward(const double* logits, const double* weights,
                                      const double* grad_weights, double* grad_logits,
                                      std::size_t n, std::size_t stride, double denominator,
                                      double beta) {
  double coupled = 0.0;
  for (std::size_t j = 0; j < n; ++j) coupled += grad_weights[j * stride] * weights[j * stride];
  double to_plain = std::pow(denominator, beta - 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    double v = logits[k * stride];
    if (v <= -kLogitClamp || v >= kLogitClamp) {
      grad_logits[k * stride] = 0.0;
      continue;
    }
    double a = weights[k * stride];
    grad_logits[k * stride] = a * grad_weights[k * stride] - beta * a * to_plain * coupled;
  }
}

enum class AttentionScheme { item_level, design1, design2 };

inline AttentionScheme attention_scheme(const ModelConfig& c) {
  if (!is_feature_level(c.kind)) return AttentionScheme::item_level;
  return c.design == Design::design1 ? AttentionScheme::design1 : AttentionScheme::design2;
}

// Attention weights of every history item for one target, together with the
// intermediate values backpropagation needs. Unused parts are left empty:
// NAIS and DeepICF fill only item_weights, Design 2 only feature_weights,
// Design 1 both (its item_weights are the b_ij scaling each feature row).
struct AttentionOutput {
  Matrix inputs;  // |history| x in: p ⊙ q_j, or [p; q_j] in CONCAT mode
  Matrix pre;     // |history| x d': W x_j + b
  Matrix hidden;  // |history| x d': ReLU(pre)

  Vector item_logits;
  Vector item_weights;
  double item_denominator = 0.0;

  Matrix feature_logits;   // |history| x d
  Matrix feature_softmax;  // Design 1: per-row softmax of feature_logits
  Matrix feature_weights;  // |history| x d
  Vector feature_denominators;

  std::size_t history_size() const { return inputs.rows(); }
  bool has_item_weights() const { return !item_weights.empty(); }
  bool has_feature_weights() const { return !feature_weights.empty(); }
};

// `history` holds q_j in its rows.
inline void compute_attention(AttentionScheme scheme, std::span<const double> p,
                              const Matrix& history, const ParameterSet& params,
                              AttentionMode mode, double beta, AttentionOutput& out) {
  const std::size_t m = history.rows();
  const std::size_t d = p.size();
  const std::size_t dp = params.W.rows();
  require(m >= 1, "attention: empty history");
  const bool concat = mode == AttentionMode::concat;
  require(!concat || scheme == AttentionScheme::item_level,
          "CONCAT attention is only defined for item-level attention");
  const std::size_t in = concat ? 2 * d : d;
  detail::require_dims(history.cols() == d && params.W.cols() == in && params.b.size() == dp,
                       "attention: W is " + shape_string(params.W) + ", expected " +
                           std::to_string(dp) + "x" + std::to_string(in));
  const bool want_item = scheme != AttentionScheme::design2;
  const bool want_feature = scheme != AttentionScheme::item_level;
  if (want_item) detail::require_dims(params.h.size() == dp, "attention: h has wrong size");
  if (want_feature) {
    detail::require_dims(params.H.rows() == dp && params.H.cols() == d,
                         "attention: H is " + shape_string(params.H));
  }

  out.inputs.resize(m, in);
  out.pre.resize(m, dp);
  out.hidden.resize(m, dp);
  for (std::size_t j = 0; j < m; ++j) {
    auto x = out.inputs.row(j);
    auto q = history.row(j);
    if (concat) {
      std::copy(p.begin(), p.end(), x.begin());
      std::copy(q.begin(), q.end(), x.begin() + d);
    } else {
      for (std::size_t k = 0; k < d; ++k) x[k] = p[k] * q[k];
    }
    attention_hidden(params.W, params.b, x, out.pre.row(j), out.hidden.row(j));
  }

  if (want_item) {
    out.item_logits.resize(m);
    out.item_weights.resize(m);
    for (std::size_t j = 0; j < m; ++j) out.item_logits[j] = dot(params.h, out.hidden.row(j));
    out.item_denominator =
        smoothed_softmax(out.item_logits.data(), out.item_weights.data(), m, 1, beta);
  } else {
    out.item_logits.clear();
    out.item_weights.clear();
    out.item_denominator = 0.0;
  }

  if (!want_feature) {
    out.feature_logits.resize(0, 0);
    out.feature_softmax.resize(0, 0);
    out.feature_weights.resize(0, 0);
    out.feature_denominators.clear();
    return;
  }

  out.feature_logits.resize(m, d);
  out.feature_logits.fill(0.0);
  for (std::size_t j = 0; j < m; ++j) {
    add_transpose_product(params.H, out.hidden.row(j), out.feature_logits.row(j));
  }
  out.feature_weights.resize(m, d);

  if (scheme == AttentionScheme::design1) {
    out.feature_softmax.resize(m, d);
    out.feature_denominators.clear();
    for (std::size_t j = 0; j < m; ++j) {
      auto soft = out.feature_softmax.row(j);
      normalize_features(out.feature_logits.row(j), soft);
      auto w = out.feature_weights.row(j);
      for (std::size_t k = 0; k < d; ++k) w[k] = out.item_weights[j] * soft[k];
    }
  } else {
    out.feature_softmax.resize(0, 0);
    out.feature_denominators.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      out.feature_denominators[k] = smoothed_softmax(
          out.feature_logits.flat().data() + k, out.feature_weights.flat().data() + k, m, d, beta);
    }
  }
}

inline AttentionOutput design1_weights(std::span<const double> p, const Matrix& history,
                                       const ParameterSet& params, double beta) {
  AttentionOutput out;
  compute_attention(AttentionScheme::design1, p, history, params, AttentionMode::prod, beta, out);
  return out;
}

inline AttentionOutput design2_weights(std::span<const double> p, const Matrix& history,
                                       const ParameterSet& params, double beta) {
  AttentionOutput out;
  compute_attention(AttentionScheme::design2, p, history, params, AttentionMode::prod, beta, out);
  return out;
}

inline AttentionOutput nais_weights(std::span<const double> p, const Matrix& history,
                                    const ParameterSet& params, double beta,
                                    AttentionMode mode = AttentionMode::prod) {
  AttentionOutput out;
  compute_attention(AttentionScheme::item_level, p, history, params, mode, beta, out);
  return out;
}

}  // namespace flaicf
