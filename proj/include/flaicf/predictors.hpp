#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flaicf/attention.hpp"
#include "flaicf/config.hpp"
#include "flaicf/error.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/tensor.hpp"

namespace flaicf {

// One (user, target) pair with the user's training positives minus the target.
struct PredictionContext {
  std::size_t user = 0;
  std::size_t target = 0;
  std::vector<std::size_t> history;

  PredictionContext(std::size_t user, std::size_t target, std::vector<std::size_t> history)
      : user(user), target(target), history(std::move(history)) {
    require(std::find(this->history.begin(), this->history.end(), target) == this->history.end(),
            "prediction context: target item " + std::to_string(target) +
                " appears in its own history");
  }

  static PredictionContext from_positives(std::size_t user, std::size_t target,
                                          std::span<const std::size_t> positives) {
    std::vector<std::size_t> history;
    history.reserve(positives.size());
    for (auto j : positives) {
      if (j != target) history.push_back(j);
    }
    return PredictionContext(user, target, std::move(history));
  }
};

// Everything a forward pass produces; backward consumes exactly these values.
struct ForwardCache {
  std::size_t user = 0;
  std::size_t target = 0;
  std::vector<std::size_t> history;
  Matrix history_embeddings;  // rows q_j
  AttentionOutput attention;
  Vector similarities;        // p_i . q_j (FISM, NAIS)
  double fism_scale = 0.0;    // |history|^-alpha
  Vector pooled;              // e_ui (deep family)
  std::vector<Vector> layer_pre;
  std::vector<Vector> layer_out;
  double score = 0.0;

  bool empty_history() const { return history.empty(); }
};

// sum_j w_j p^T q_j
inline double weighted_similarity_score(std::span<const double> p, const Matrix& history,
                                        std::span<const double> item_weights) {
  double s = 0.0;
  for (std::size_t j = 0; j < history.rows(); ++j) s += item_weights[j] * dot(p, history.row(j));
  return s;
}

// sum_j p^T (a_j ⊙ q_j)
inline double feature_weighted_score(std::span<const double> p, const Matrix& history,
                                     const Matrix& feature_weights) {
  double s = 0.0;
  for (std::size_t j = 0; j < history.rows(); ++j) {
    auto q = history.row(j);
    auto a = feature_weights.row(j);
    for (std::size_t k = 0; k < p.size(); ++k) s += p[k] * a[k] * q[k];
  }
  return s;
}

// e = sum_j w_j (p ⊙ q_j)
inline void pool_item_weighted(std::span<const double> p, const Matrix& history,
                               std::span<const double> item_weights, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < history.rows(); ++j) {
    auto q = history.row(j);
    for (std::size_t k = 0; k < p.size(); ++k) out[k] += item_weights[j] * p[k] * q[k];
  }
}

// e = sum_j p ⊙ (a_j ⊙ q_j)
inline void pool_feature_weighted(std::span<const double> p, const Matrix& history,
                                  const Matrix& feature_weights, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < history.rows(); ++j) {
    auto q = history.row(j);
    auto a = feature_weights.row(j);
    for (std::size_t k = 0; k < p.size(); ++k) out[k] += p[k] * a[k] * q[k];
  }
}

// Stacked ReLU layers over e_ui followed by V^T e_L (biases excluded).
inline double deep_tower(const ParameterSet& params, std::span<const double> input,
                         std::vector<Vector>& layer_pre, std::vector<Vector>& layer_out) {
  const std::size_t L = params.deep_W.size();
  layer_pre.resize(L);
  layer_out.resize(L);
  std::span<const double> x = input;
  for (std::size_t l = 0; l < L; ++l) {
    const Matrix& Wl = params.deep_W[l];
    layer_pre[l].resize(Wl.rows());
    layer_out[l].resize(Wl.rows());
    attention_hidden(Wl, params.deep_b[l], x, layer_pre[l], layer_out[l]);
    x = layer_out[l];
  }
  return dot(params.V, x);
}

inline double forward(const ModelConfig& config, const ParameterSet& params, std::size_t user,
                      std::size_t target, std::span<const std::size_t> history,
                      ForwardCache& cache) {
  const std::size_t d = config.d;
  const std::size_t m = history.size();
  cache.user = user;
  cache.target = target;
  cache.history.assign(history.begin(), history.end());
  cache.history_embeddings.resize(m, d);
  for (std::size_t j = 0; j < m; ++j) {
    auto src = params.Q.row(history[j]);
    std::copy(src.begin(), src.end(), cache.history_embeddings.row(j).begin());
  }
  auto p = params.P.row(target);
  const bool deep = is_deep(config.kind);

  if (m == 0) {
    cache.score = deep ? params.user_bias[user] + params.item_bias[target] : 0.0;
    return cache.score;
  }

  switch (config.kind) {
    case ModelKind::fism: {
      cache.similarities.resize(m);
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        cache.similarities[j] = dot(p, cache.history_embeddings.row(j));
        s += cache.similarities[j];
      }
      cache.fism_scale = std::pow(static_cast<double>(m), -config.alpha);
      cache.score = cache.fism_scale * s;
      return cache.score;
    }
    case ModelKind::nais: {
      compute_attention(AttentionScheme::item_level, p, cache.history_embeddings, params,
                        config.attention_mode, config.beta, cache.attention);
      cache.similarities.resize(m);
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        cache.similarities[j] = dot(p, cache.history_embeddings.row(j));
        s += cache.attention.item_weights[j] * cache.similarities[j];
      }
      cache.score = s;
      return cache.score;
    }
    case ModelKind::fla_nais: {
      compute_attention(attention_scheme(config), p, cache.history_embeddings, params,
                        AttentionMode::prod, config.beta, cache.attention);
      cache.score =
          feature_weighted_score(p, cache.history_embeddings, cache.attention.feature_weights);
      return cache.score;
    }
    case ModelKind::deepicf:
    case ModelKind::fla_dicf: {
      compute_attention(attention_scheme(config), p, cache.history_embeddings, params,
                        AttentionMode::prod, config.beta, cache.attention);
      cache.pooled.resize(d);
      if (config.kind == ModelKind::deepicf) {
        pool_item_weighted(p, cache.history_embeddings, cache.attention.item_weights,
                           cache.pooled);
      } else {
        pool_feature_weighted(p, cache.history_embeddings, cache.attention.feature_weights,
                              cache.pooled);
      }
      cache.score = deep_tower(params, cache.pooled, cache.layer_pre, cache.layer_out) +
                    params.user_bias[user] + params.item_bias[target];
      return cache.score;
    }
  }
  fail(ErrorKind::invalid_argument, "unknown model kind");
}

inline double forward(const ModelConfig& config, const ParameterSet& params,
                      const PredictionContext& ctx, ForwardCache& cache) {
  return forward(config, params, ctx.user, ctx.target, ctx.history, cache);
}

// Dispatches on config.kind.
inline double predict(const PredictionContext& ctx, const ParameterSet& params,
                      const ModelConfig& config) {
  ForwardCache cache;
  return forward(config, params, ctx, cache);
}

namespace detail {
inline double predict_as(ModelKind kind, const PredictionContext& ctx,
                         const ParameterSet& params, ModelConfig config) {
  config.kind = kind;
  return predict(ctx, params, config);
}
}  // namespace detail

inline double predict_fism(const PredictionContext& ctx, const ParameterSet& params,
                           double alpha) {
  ModelConfig c = ModelConfig::make(ModelKind::fism, params.P.cols());
  c.alpha = alpha;
  return predict(ctx, params, c);
}

inline double predict_nais(const PredictionContext& ctx, const ParameterSet& params,
                           const ModelConfig& config) {
  return detail::predict_as(ModelKind::nais, ctx, params, config);
}

inline double predict_fla(const PredictionContext& ctx, const ParameterSet& params,
                          const ModelConfig& config) {
  return detail::predict_as(ModelKind::fla_nais, ctx, params, config);
}

inline double deepicf_forward(const PredictionContext& ctx, const ParameterSet& params,
                              const ModelConfig& config) {
  return detail::predict_as(ModelKind::deepicf, ctx, params, config);
}

inline double fla_dicf_forward(const PredictionContext& ctx, const ParameterSet& params,
                               const ModelConfig& config) {
  return detail::predict_as(ModelKind::fla_dicf, ctx, params, config);
}

}  // namespace flaicf
