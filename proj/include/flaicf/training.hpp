#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flaicf/config.hpp"
#include "flaicf/data.hpp"
#include "flaicf/error.hpp"
#include "flaicf/eval.hpp"
#include "flaicf/gradients.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/predictors.hpp"

namespace flaicf {

// Sum of squared gradients per parameter entry.
struct OptimizerState {
  ParameterSet accum;

  OptimizerState() = default;
  explicit OptimizerState(const ParameterSet& like) : accum(like) {
    for_each_array(accum, [](const std::string&, std::span<double> a) {
      std::fill(a.begin(), a.end(), 0.0);
    });
  }
};

// acc += g^2;  theta -= lr g / (sqrt(acc) + eps). Zero gradients leave both untouched.
inline void adagrad_update(std::span<double> theta, std::span<const double> grad,
                           std::span<double> acc, double learning_rate, double epsilon) {
  for (std::size_t n = 0; n < theta.size(); ++n) {
    const double g = grad[n];
    if (g == 0.0) continue;
    acc[n] += g * g;
    theta[n] -= learning_rate * g / (std::sqrt(acc[n]) + epsilon);
  }
}

inline void adagrad_step(ParameterSet& params, const GradientSet& g, OptimizerState& state,
                         double learning_rate, double epsilon) {
  auto sparse = [&](const SparseRows& rows, std::span<double> table, std::span<double> acc) {
    for (std::size_t n = 0; n < rows.count(); ++n) {
      const std::size_t offset = rows.rows[n] * rows.width;
      adagrad_update(table.subspan(offset, rows.width), rows.row(n), acc.subspan(offset, rows.width),
                     learning_rate, epsilon);
    }
  };
  ParameterSet& a = state.accum;
  sparse(g.P, params.P.flat(), a.P.flat());
  sparse(g.Q, params.Q.flat(), a.Q.flat());
  if (!params.user_bias.empty()) sparse(g.user_bias, params.user_bias, a.user_bias);
  if (!params.item_bias.empty()) sparse(g.item_bias, params.item_bias, a.item_bias);
  adagrad_update(params.W.flat(), g.W.flat(), a.W.flat(), learning_rate, epsilon);
  adagrad_update(params.b, g.b, a.b, learning_rate, epsilon);
  adagrad_update(params.H.flat(), g.H.flat(), a.H.flat(), learning_rate, epsilon);
  adagrad_update(params.h, g.h, a.h, learning_rate, epsilon);
  for (std::size_t l = 0; l < params.deep_W.size(); ++l) {
    adagrad_update(params.deep_W[l].flat(), g.deep_W[l].flat(), a.deep_W[l].flat(), learning_rate,
                   epsilon);
    adagrad_update(params.deep_b[l], g.deep_b[l], a.deep_b[l], learning_rate, epsilon);
  }
  adagrad_update(params.V, g.V, a.V, learning_rate, epsilon);
}

// neg_ratio * |positives| items drawn uniformly from the items outside
// `positives` (sorted), with replacement.
inline std::vector<std::size_t> sample_negatives(std::size_t user,
                                                 std::span<const std::size_t> positives,
                                                 std::size_t neg_ratio, std::size_t item_count,
                                                 std::mt19937_64& rng) {
  if (positives.size() >= item_count) {
    fail(ErrorKind::invalid_argument, "user " + std::to_string(user) +
                                          " interacted with every item; no negatives to sample");
  }
  const std::size_t count = neg_ratio * positives.size();
  std::vector<std::size_t> out;
  out.reserve(count);
  if (positives.size() * 2 <= item_count) {
    std::uniform_int_distribution<std::size_t> pick(0, item_count - 1);
    while (out.size() < count) {
      std::size_t i = pick(rng);
      if (!std::binary_search(positives.begin(), positives.end(), i)) out.push_back(i);
    }
  } else {
    // Dense users: draw from the explicit complement instead of rejecting.
    std::vector<std::size_t> complement;
    complement.reserve(item_count - positives.size());
    for (std::size_t i = 0; i < item_count; ++i) {
      if (!std::binary_search(positives.begin(), positives.end(), i)) complement.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> pick(0, complement.size() - 1);
    for (std::size_t n = 0; n < count; ++n) out.push_back(complement[pick(rng)]);
  }
  return out;
}

struct TrainInstance {
  std::size_t user = 0;
  std::size_t item = 0;
  int label = 0;
};

struct TrainResult {
  ParameterSet params;               // parameters of the best validation epoch
  std::vector<MetricsRecord> history;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

// Per-instance Adagrad over every training positive plus neg_ratio fresh
// negatives per positive each epoch, shuffled. After each epoch the model is
// ranked on the validation split; the epoch with the best (HR, NDCG) is kept.
inline TrainResult train(const SplitDataset& split, const ModelConfig& config,
                         const TrainConfig& tc,
                         const std::optional<Embeddings>& pretrained = std::nullopt,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  tc.validate();
  const InteractionDataset& trainset = split.train;
  require(trainset.interaction_count() > 0, "train: empty training split", ErrorKind::empty_dataset);
  const std::size_t users = split.user_count();
  const std::size_t items = split.item_count();

  TrainResult result;
  ParameterSet params = init_parameters(config, items, users, tc.seed, pretrained);
  OptimizerState state(params);
  std::mt19937_64 rng(tc.seed ^ 0x5DEECE66Dull);

  std::size_t validation_users = 0;
  for (std::size_t u = 0; u < users; ++u) validation_users += !split.validation.items_of(u).empty();

  std::vector<TrainInstance> instances;
  std::vector<std::size_t> history;
  ForwardCache cache;
  GradientSet grads;
  bool have_best = false;
  double best_hr = -1.0, best_ndcg = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    instances.clear();
    for (std::size_t u = 0; u < users; ++u) {
      auto pos = trainset.items_of(u);
      if (pos.empty()) continue;
      for (auto i : pos) instances.push_back({u, i, 1});
      for (auto i : sample_negatives(u, pos, tc.neg_ratio, items, rng)) instances.push_back({u, i, 0});
    }
    std::shuffle(instances.begin(), instances.end(), rng);

    double data_loss = 0.0;
    for (const auto& inst : instances) {
      auto pos = trainset.items_of(inst.user);
      history.clear();
      for (auto j : pos) {
        if (j != inst.item) history.push_back(j);
      }
      forward(config, params, inst.user, inst.item, history, cache);
      data_loss += backward(config, params, cache, inst.label, tc.lambda, grads);
      adagrad_step(params, grads, state, tc.learning_rate, tc.adagrad_epsilon);
    }
    if (!all_finite(params)) {
      fail(ErrorKind::invalid_argument,
           "training diverged: non-finite parameters after epoch " + std::to_string(epoch));
    }

    MetricsRecord record;
    if (validation_users > 0) {
      ModelScorer scorer(config, params, trainset);
      record = evaluate(scorer, split, EvalSplit::validation, tc.top_n, tc.threads);
    } else {
      record.split = "valid";
      record.n = tc.top_n;
    }
    record.epoch = epoch;
    record.loss = data_loss / static_cast<double>(instances.size()) + tc.lambda * squared_norm(params);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    const bool improved = !have_best || validation_users == 0 || record.hr > best_hr ||
                          (record.hr == best_hr && record.ndcg > best_ndcg);
    if (improved) {
      have_best = true;
      best_hr = record.hr;
      best_ndcg = record.ndcg;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (tc.early_stop_patience > 0 && ++since_best >= tc.early_stop_patience) {
      break;
    }
  }
  return result;
}

// Trains FISM with the same objective and optimizer and returns its
// embedding tables, for use as init_parameters' pretrained argument.
inline Embeddings pretrain_fism(const SplitDataset& split, const ModelConfig& config,
                                const TrainConfig& tc, const EpochCallback& on_epoch = {}) {
  ModelConfig fism = ModelConfig::make(ModelKind::fism, config.d);
  fism.alpha = config.alpha;
  auto result = train(split, fism, tc, std::nullopt, on_epoch);
  return {std::move(result.params.P), std::move(result.params.Q)};
}

}  // namespace flaicf
