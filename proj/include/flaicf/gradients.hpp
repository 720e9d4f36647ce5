#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "flaicf/attention.hpp"
#include "flaicf/config.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/predictors.hpp"
#include "flaicf/tensor.hpp"

namespace flaicf {

inline constexpr double kProbabilityClamp = 1e-12;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Negative log-likelihood of one instance, sigma clamped to [1e-12, 1 - 1e-12].
inline double instance_log_loss(double score, int label) {
  double p = std::clamp(sigmoid(score), kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

// Mean data term plus lambda * squared_norm. An empty batch has data term 0.
inline double log_loss(std::span<const double> scores, std::span<const int> labels,
                       double squared_norm, double lambda) {
  require(scores.size() == labels.size(), "log_loss: scores and labels differ in length");
  double data = 0.0;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    require(labels[n] == 0 || labels[n] == 1, "log_loss: labels must be binary");
    data += instance_log_loss(scores[n], labels[n]);
  }
  if (!scores.empty()) data /= static_cast<double>(scores.size());
  return data + lambda * squared_norm;
}

inline double log_loss(std::span<const double> scores, std::span<const int> labels,
                       const ParameterSet& params, double lambda) {
  return log_loss(scores, labels, squared_norm(params), lambda);
}

// Gradient rows of an index-addressed table, in insertion order.
struct SparseRows {
  std::size_t width = 0;
  std::vector<std::size_t> rows;
  std::vector<double> values;

  void reset(std::size_t w) {
    width = w;
    rows.clear();
    values.clear();
  }
  // Appends a zero row; rows added within one gradient must be distinct.
  std::span<double> add(std::size_t row) {
    rows.push_back(row);
    values.resize(values.size() + width, 0.0);
    return {values.data() + values.size() - width, width};
  }
  std::size_t count() const { return rows.size(); }
  std::span<double> row(std::size_t n) { return {values.data() + n * width, width}; }
  std::span<const double> row(std::size_t n) const { return {values.data() + n * width, width}; }
};

// Gradient of one instance's objective. Embedding tables and biases are
// sparse (only touched rows); the attention and deep weights are dense.
struct GradientSet {
  SparseRows P, Q, user_bias, item_bias;
  Matrix W;
  Vector b;
  Matrix H;
  Vector h;
  std::vector<Matrix> deep_W;
  std::vector<Vector> deep_b;
  Vector V;

  void reset_like(const ParameterSet& ps) {
    P.reset(ps.P.cols());
    Q.reset(ps.Q.cols());
    user_bias.reset(1);
    item_bias.reset(1);
    auto zero = [](auto& dst, const auto& src) {
      if constexpr (requires { src.rows(); }) {
        dst.resize(src.rows(), src.cols());
        dst.fill(0.0);
      } else {
        dst.assign(src.size(), 0.0);
      }
    };
    zero(W, ps.W);
    zero(b, ps.b);
    zero(H, ps.H);
    zero(h, ps.h);
    deep_W.resize(ps.deep_W.size());
    deep_b.resize(ps.deep_b.size());
    for (std::size_t l = 0; l < ps.deep_W.size(); ++l) {
      zero(deep_W[l], ps.deep_W[l]);
      zero(deep_b[l], ps.deep_b[l]);
    }
    zero(V, ps.V);
  }
};

// Full-shape copy of a gradient, laid out like the parameters.
inline ParameterSet densify(const GradientSet& g, const ParameterSet& like) {
  ParameterSet out = like;
  for_each_array(out, [](const std::string&, std::span<double> a) {
    std::fill(a.begin(), a.end(), 0.0);
  });
  auto scatter = [](const SparseRows& rows, std::span<double> table) {
    for (std::size_t n = 0; n < rows.count(); ++n) {
      auto src = rows.row(n);
      for (std::size_t k = 0; k < rows.width; ++k) table[rows.rows[n] * rows.width + k] += src[k];
    }
  };
  scatter(g.P, out.P.flat());
  scatter(g.Q, out.Q.flat());
  if (!out.user_bias.empty()) scatter(g.user_bias, out.user_bias);
  if (!out.item_bias.empty()) scatter(g.item_bias, out.item_bias);
  out.W = g.W;
  out.b = g.b;
  out.H = g.H;
  out.h = g.h;
  out.deep_W = g.deep_W;
  out.deep_b = g.deep_b;
  out.V = g.V;
  return out;
}

namespace detail {

// Workspace for backward; reused across calls to avoid reallocation.
struct BackwardScratch {
  Matrix grad_hist;       // dL/dq_j, |history| x d
  Vector grad_p;          // dL/dp
  Vector grad_items;      // dL/d(item weight)
  Vector grad_item_logits;
  Matrix grad_features;   // dL/d(feature weight)
  Matrix grad_feature_logits;
  Matrix grad_hidden;     // dL/d(hidden activation)
  Vector grad_pooled;
  Vector grad_layer;
  Vector grad_input;
};

// Backpropagates dL/d(attention weights) into W, b, h, H and the embeddings.
inline void attention_backward(AttentionScheme scheme, const ModelConfig& config,
                               const ParameterSet& params, const ForwardCache& cache,
                               BackwardScratch& s, GradientSet& g) {
  const AttentionOutput& att = cache.attention;
  const std::size_t m = att.history_size();
  const std::size_t d = config.d;
  const std::size_t dp = params.W.rows();
  const double beta = config.beta;
  auto p = params.P.row(cache.target);

  s.grad_hidden.resize(m, dp);
  s.grad_hidden.fill(0.0);

  if (scheme == AttentionScheme::design1) {
    // a_jk = b_j * soft_jk
    s.grad_items.assign(m, 0.0);
    s.grad_feature_logits.resize(m, d);
    for (std::size_t j = 0; j < m; ++j) {
      auto ga = s.grad_features.row(j);
      auto soft = att.feature_softmax.row(j);
      double gb = 0.0;
      double inner = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        gb += ga[k] * soft[k];
        inner += att.item_weights[j] * ga[k] * soft[k];
      }
      s.grad_items[j] = gb;
      auto gl = s.grad_feature_logits.row(j);
      for (std::size_t k = 0; k < d; ++k) gl[k] = soft[k] * (att.item_weights[j] * ga[k] - inner);
    }
  } else if (scheme == AttentionScheme::design2) {
    s.grad_feature_logits.resize(m, d);
    for (std::size_t k = 0; k < d; ++k) {
      smoothed_softmax_backward(att.feature_logits.flat().data() + k,
                                att.feature_weights.flat().data() + k,
                                s.grad_features.flat().data() + k,
                                s.grad_feature_logits.flat().data() + k, m, d,
                                att.feature_denominators[k], beta);
    }
  }

  if (scheme != AttentionScheme::design2) {
    s.grad_item_logits.resize(m);
    smoothed_softmax_backward(att.item_logits.data(), att.item_weights.data(),
                              s.grad_items.data(), s.grad_item_logits.data(), m, 1,
                              att.item_denominator, beta);
    for (std::size_t j = 0; j < m; ++j) {
      double gv = s.grad_item_logits[j];
      if (gv == 0.0) continue;
      auto hid = att.hidden.row(j);
      auto gh = s.grad_hidden.row(j);
      for (std::size_t l = 0; l < dp; ++l) {
        g.h[l] += gv * hid[l];
        gh[l] += gv * params.h[l];
      }
    }
  }

  if (scheme != AttentionScheme::item_level) {
    // feature_logits_j = H^T hidden_j
    for (std::size_t j = 0; j < m; ++j) {
      auto gl = s.grad_feature_logits.row(j);
      add_outer(att.hidden.row(j), gl, g.H);
      auto gh = s.grad_hidden.row(j);
      for (std::size_t l = 0; l < dp; ++l) gh[l] += dot(params.H.row(l), gl);
    }
  }

  const bool concat = params.W.cols() == 2 * d;
  s.grad_input.resize(params.W.cols());
  for (std::size_t j = 0; j < m; ++j) {
    auto gh = s.grad_hidden.row(j);
    auto pre = att.pre.row(j);
    bool any = false;
    for (std::size_t l = 0; l < dp; ++l) {
      if (pre[l] <= 0.0) gh[l] = 0.0;
      any = any || gh[l] != 0.0;
    }
    if (!any) continue;
    add_outer(gh, att.inputs.row(j), g.W);
    for (std::size_t l = 0; l < dp; ++l) g.b[l] += gh[l];
    std::fill(s.grad_input.begin(), s.grad_input.end(), 0.0);
    add_transpose_product(params.W, gh, s.grad_input);
    auto q = cache.history_embeddings.row(j);
    auto gq = s.grad_hist.row(j);
    if (concat) {
      for (std::size_t k = 0; k < d; ++k) {
        s.grad_p[k] += s.grad_input[k];
        gq[k] += s.grad_input[d + k];
      }
    } else {
      for (std::size_t k = 0; k < d; ++k) {
        s.grad_p[k] += s.grad_input[k] * q[k];
        gq[k] += s.grad_input[k] * p[k];
      }
    }
  }
}

}  // namespace detail

// Gradient of  instance_log_loss(score, label) + lambda * ||touched parameters||^2
// where the touched parameters are every dense array of the model plus the
// embedding and bias rows this instance reads. Consumes the forward cache.
// Returns the instance's data loss.
inline double backward(const ModelConfig& config, const ParameterSet& params,
                       const ForwardCache& cache, int label, double lambda, GradientSet& g) {
  thread_local detail::BackwardScratch s;
  g.reset_like(params);
  const std::size_t d = config.d;
  const std::size_t m = cache.history.size();
  const double dr = sigmoid(cache.score) - static_cast<double>(label);
  auto p = params.P.row(cache.target);
  const bool deep = is_deep(config.kind);

  s.grad_p.assign(d, 0.0);
  s.grad_hist.resize(m, d);
  s.grad_hist.fill(0.0);
  const Matrix& hist = cache.history_embeddings;

  if (m > 0) {
    switch (config.kind) {
      case ModelKind::fism: {
        const double c = cache.fism_scale * dr;
        for (std::size_t j = 0; j < m; ++j) {
          auto q = hist.row(j);
          auto gq = s.grad_hist.row(j);
          for (std::size_t k = 0; k < d; ++k) {
            s.grad_p[k] += c * q[k];
            gq[k] += c * p[k];
          }
        }
        break;
      }
      case ModelKind::nais: {
        const auto& a = cache.attention.item_weights;
        s.grad_items.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
          s.grad_items[j] = cache.similarities[j] * dr;
          auto q = hist.row(j);
          auto gq = s.grad_hist.row(j);
          for (std::size_t k = 0; k < d; ++k) {
            s.grad_p[k] += a[j] * q[k] * dr;
            gq[k] += a[j] * p[k] * dr;
          }
        }
        detail::attention_backward(AttentionScheme::item_level, config, params, cache, s, g);
        break;
      }
      case ModelKind::fla_nais: {
        const Matrix& A = cache.attention.feature_weights;
        s.grad_features.resize(m, d);
        for (std::size_t j = 0; j < m; ++j) {
          auto q = hist.row(j);
          auto a = A.row(j);
          auto ga = s.grad_features.row(j);
          auto gq = s.grad_hist.row(j);
          for (std::size_t k = 0; k < d; ++k) {
            ga[k] = p[k] * q[k] * dr;
            s.grad_p[k] += a[k] * q[k] * dr;
            gq[k] += a[k] * p[k] * dr;
          }
        }
        detail::attention_backward(attention_scheme(config), config, params, cache, s, g);
        break;
      }
      case ModelKind::deepicf:
      case ModelKind::fla_dicf: {
        // Regression head and tower.
        const std::size_t L = params.deep_W.size();
        const Vector& top = cache.layer_out[L - 1];
        s.grad_layer.resize(top.size());
        for (std::size_t k = 0; k < top.size(); ++k) {
          g.V[k] += dr * top[k];
          s.grad_layer[k] = dr * params.V[k];
        }
        for (std::size_t l = L; l-- > 0;) {
          const Vector& pre = cache.layer_pre[l];
          for (std::size_t r = 0; r < pre.size(); ++r) {
            if (pre[r] <= 0.0) s.grad_layer[r] = 0.0;
          }
          std::span<const double> input =
              l == 0 ? std::span<const double>(cache.pooled) : std::span<const double>(cache.layer_out[l - 1]);
          add_outer(s.grad_layer, input, g.deep_W[l]);
          for (std::size_t r = 0; r < pre.size(); ++r) g.deep_b[l][r] += s.grad_layer[r];
          s.grad_input.assign(input.size(), 0.0);
          add_transpose_product(params.deep_W[l], s.grad_layer, s.grad_input);
          s.grad_layer.swap(s.grad_input);
        }
        const Vector& ge = s.grad_layer;  // dL/d e_ui
        if (config.kind == ModelKind::deepicf) {
          const auto& a = cache.attention.item_weights;
          s.grad_items.resize(m);
          for (std::size_t j = 0; j < m; ++j) {
            auto q = hist.row(j);
            auto gq = s.grad_hist.row(j);
            double ga = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              ga += ge[k] * p[k] * q[k];
              s.grad_p[k] += a[j] * q[k] * ge[k];
              gq[k] += a[j] * p[k] * ge[k];
            }
            s.grad_items[j] = ga;
          }
        } else {
          const Matrix& A = cache.attention.feature_weights;
          s.grad_features.resize(m, d);
          for (std::size_t j = 0; j < m; ++j) {
            auto q = hist.row(j);
            auto a = A.row(j);
            auto ga = s.grad_features.row(j);
            auto gq = s.grad_hist.row(j);
            for (std::size_t k = 0; k < d; ++k) {
              ga[k] = ge[k] * p[k] * q[k];
              s.grad_p[k] += a[k] * q[k] * ge[k];
              gq[k] += a[k] * p[k] * ge[k];
            }
          }
        }
        detail::attention_backward(attention_scheme(config), config, params, cache, s, g);
        break;
      }
    }
  }

  // Assemble sparse rows and add 2 lambda theta on everything touched.
  const double r2 = 2.0 * lambda;
  auto gp = g.P.add(cache.target);
  for (std::size_t k = 0; k < d; ++k) gp[k] = s.grad_p[k] + r2 * p[k];
  for (std::size_t j = 0; j < m; ++j) {
    auto gq = g.Q.add(cache.history[j]);
    auto q = hist.row(j);
    auto src = s.grad_hist.row(j);
    for (std::size_t k = 0; k < d; ++k) gq[k] = src[k] + r2 * q[k];
  }
  if (deep) {
    g.user_bias.add(cache.user)[0] = dr + r2 * params.user_bias[cache.user];
    g.item_bias.add(cache.target)[0] = dr + r2 * params.item_bias[cache.target];
  }
  if (lambda != 0.0) {
    auto reg = [&](std::span<double> grad, std::span<const double> theta) {
      for (std::size_t n = 0; n < grad.size(); ++n) grad[n] += r2 * theta[n];
    };
    reg(g.W.flat(), params.W.flat());
    reg(g.b, params.b);
    reg(g.H.flat(), params.H.flat());
    reg(g.h, params.h);
    for (std::size_t l = 0; l < params.deep_W.size(); ++l) {
      reg(g.deep_W[l].flat(), params.deep_W[l].flat());
      reg(g.deep_b[l], params.deep_b[l]);
    }
    reg(g.V, params.V);
  }
  return instance_log_loss(cache.score, label);
}

// The objective backward differentiates, evaluated from scratch through the
// forward pass only. Used as the finite-difference target.
inline double instance_objective(const ModelConfig& config, const ParameterSet& params,
                                 std::size_t user, std::size_t target,
                                 std::span<const std::size_t> history, int label,
                                 double lambda) {
  ForwardCache cache;
  double score = forward(config, params, user, target, history, cache);
  double reg = 0.0;
  for (double v : params.P.row(target)) reg += v * v;
  for (auto j : history) {
    for (double v : params.Q.row(j)) reg += v * v;
  }
  if (is_deep(config.kind)) {
    reg += params.user_bias[user] * params.user_bias[user];
    reg += params.item_bias[target] * params.item_bias[target];
  }
  auto sq = [&](std::span<const double> a) {
    for (double v : a) reg += v * v;
  };
  sq(params.W.flat());
  sq(params.b);
  sq(params.H.flat());
  sq(params.h);
  for (std::size_t l = 0; l < params.deep_W.size(); ++l) {
    sq(params.deep_W[l].flat());
    sq(params.deep_b[l]);
  }
  sq(params.V);
  return instance_log_loss(score, label) + lambda * reg;
}

// Convenience wrapper: forward then backward for one labelled context.
inline GradientSet backward(const PredictionContext& ctx, int label, const ParameterSet& params,
                            const ModelConfig& config, double lambda) {
  ForwardCache cache;
  forward(config, params, ctx, cache);
  GradientSet g;
  backward(config, params, cache, label, lambda, g);
  return g;
}

}  // namespace flaicf
