#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flaicf/config.hpp"
#include "flaicf/data.hpp"
#include "flaicf/error.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/predictors.hpp"

namespace flaicf {

// Scores every candidate item of one user. Implementations must be safe to
// call concurrently for different users.
class Scorer {
 public:
  virtual ~Scorer() = default;
  // scores[i] is written for every i with candidates[i] != 0.
  virtual void score_user(std::size_t user, std::span<const std::uint8_t> candidates,
                          std::span<double> scores) const = 0;
};

// Top n candidates by descending score; equal scores rank the lower item index first.
inline std::vector<std::size_t> top_n(std::span<const double> scores,
                                      std::span<const std::uint8_t> candidates, std::size_t n) {
  std::vector<std::size_t> pool;
  pool.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (candidates[i]) pool.push_back(i);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  const std::size_t k = std::min(n, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), better);
  pool.resize(k);
  return pool;
}

// Ranks all non-excluded items by an item -> score function.
template <class ScoreFn>
  requires std::invocable<ScoreFn, std::size_t>
std::vector<std::size_t> rank_items(ScoreFn&& score, std::size_t item_count,
                                    std::span<const std::size_t> excluded, std::size_t n) {
  require(n >= 1, "rank_items: n must be >= 1");
  std::vector<std::uint8_t> candidates(item_count, 1);
  for (auto i : excluded) candidates[i] = 0;
  std::vector<double> scores(item_count, 0.0);
  for (std::size_t i = 0; i < item_count; ++i) {
    if (candidates[i]) scores[i] = score(i);
  }
  return top_n(scores, candidates, n);
}

inline std::vector<std::size_t> rank_items(const Scorer& scorer, std::size_t user,
                                           std::size_t item_count,
                                           std::span<const std::size_t> excluded, std::size_t n) {
  require(n >= 1, "rank_items: n must be >= 1");
  std::vector<std::uint8_t> candidates(item_count, 1);
  for (auto i : excluded) candidates[i] = 0;
  std::vector<double> scores(item_count, 0.0);
  scorer.score_user(user, candidates, scores);
  return top_n(scores, candidates, n);
}

// 1 if any test item is in the ranked list.
inline double hr_at_n(std::span<const std::size_t> ranked, std::span<const std::size_t> test_items) {
  for (auto i : ranked) {
    if (std::find(test_items.begin(), test_items.end(), i) != test_items.end()) return 1.0;
  }
  return 0.0;
}

// Binary-relevance NDCG; the ideal ranking places min(n, |test|) test items first.
inline double ndcg_at_n(std::span<const std::size_t> ranked, std::span<const std::size_t> test_items,
                        std::size_t n) {
  if (test_items.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t pos = 0; pos < ranked.size() && pos < n; ++pos) {
    if (std::find(test_items.begin(), test_items.end(), ranked[pos]) != test_items.end()) {
      dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t pos = 0; pos < std::min(n, test_items.size()); ++pos) {
    idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
  }
  return dcg / idcg;
}

inline double ndcg_at_n(std::span<const std::size_t> ranked, std::span<const std::size_t> test_items) {
  return ndcg_at_n(ranked, test_items, ranked.size());
}

struct RankingResult {
  std::size_t user = 0;
  std::vector<std::size_t> ranked;
  double hit = 0.0;
  double ndcg = 0.0;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::string split;
  std::size_t n = 10;
  double hr = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;  // users with at least one target item
};

// `epoch=<k> loss=<x> split=<name> hr@<n>=<x> ndcg@<n>=<x>`
inline std::string format_metrics_line(const MetricsRecord& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << "epoch=" << r.epoch << " loss=" << r.loss << " split=" << r.split
     << " hr@" << r.n << "=" << r.hr << " ndcg@" << r.n << "=" << r.ndcg;
  return os.str();
}

enum class EvalSplit { validation, test };

inline std::string_view to_string(EvalSplit s) { return s == EvalSplit::test ? "test" : "valid"; }

// Full ranking per user: candidates are all items outside the user's training
// positives (and validation positives when evaluating on test). Users without
// target items are skipped. Results come back in user order whatever the
// thread count.
inline std::vector<RankingResult> evaluate_users(const Scorer& scorer, const SplitDataset& split,
                                                 EvalSplit which, std::size_t n,
                                                 std::size_t threads = 1) {
  require(n >= 1, "evaluate: n must be >= 1");
  const InteractionDataset& targets = which == EvalSplit::test ? split.test : split.validation;
  const std::size_t users = split.user_count();
  const std::size_t items = split.item_count();
  std::vector<RankingResult> per_user(users);
  std::vector<std::uint8_t> evaluated(users, 0);

  auto work = [&](std::size_t first, std::size_t stride) {
    std::vector<std::uint8_t> candidates(items);
    std::vector<double> scores(items);
    for (std::size_t u = first; u < users; u += stride) {
      auto truth = targets.items_of(u);
      if (truth.empty()) continue;
      std::fill(candidates.begin(), candidates.end(), 1);
      for (auto i : split.train.items_of(u)) candidates[i] = 0;
      if (which == EvalSplit::test) {
        for (auto i : split.validation.items_of(u)) candidates[i] = 0;
      }
      scorer.score_user(u, candidates, scores);
      RankingResult& r = per_user[u];
      r.user = u;
      r.ranked = top_n(scores, candidates, n);
      r.hit = hr_at_n(r.ranked, truth);
      r.ndcg = ndcg_at_n(r.ranked, truth, n);
      evaluated[u] = 1;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, users));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }

  std::vector<RankingResult> out;
  for (std::size_t u = 0; u < users; ++u) {
    if (evaluated[u]) out.push_back(std::move(per_user[u]));
  }
  return out;
}

inline MetricsRecord aggregate(std::span<const RankingResult> results, std::string split,
                               std::size_t n) {
  MetricsRecord r;
  r.split = std::move(split);
  r.n = n;
  r.users = results.size();
  for (const auto& x : results) {
    r.hr += x.hit;
    r.ndcg += x.ndcg;
  }
  if (!results.empty()) {
    r.hr /= static_cast<double>(results.size());
    r.ndcg /= static_cast<double>(results.size());
  }
  return r;
}

inline MetricsRecord evaluate(const Scorer& scorer, const SplitDataset& split, EvalSplit which,
                              std::size_t n, std::size_t threads = 1) {
  auto results = evaluate_users(scorer, split, which, n, threads);
  return aggregate(results, std::string(to_string(which)), n);
}

// Scores with a trained model; the history of (u, i) is train(u) minus i.
class ModelScorer : public Scorer {
 public:
  ModelScorer(const ModelConfig& config, const ParameterSet& params, const InteractionDataset& train)
      : config_(config), params_(params), train_(train) {}

  void score_user(std::size_t user, std::span<const std::uint8_t> candidates,
                  std::span<double> scores) const override {
    ForwardCache cache;
    auto positives = train_.items_of(user);
    std::vector<std::size_t> without;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!candidates[i]) continue;
      std::span<const std::size_t> history = positives;
      if (std::binary_search(positives.begin(), positives.end(), i)) {
        without.clear();
        for (auto j : positives) {
          if (j != i) without.push_back(j);
        }
        history = without;
      }
      scores[i] = forward(config_, params_, user, i, history, cache);
    }
  }

 private:
  ModelConfig config_;
  const ParameterSet& params_;
  const InteractionDataset& train_;
};

enum class BaselineKind { random, pop, itemknn };

inline BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "RANDOM") return BaselineKind::random;
  if (s == "POP") return BaselineKind::pop;
  if (s == "ITEMKNN") return BaselineKind::itemknn;
  fail(ErrorKind::invalid_argument, "unknown baseline '" + std::string(s) + "'");
}

// Seeded uniform scores, a pure function of (seed, user, item).
class RandomScorer : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}

  void score_user(std::size_t user, std::span<const std::uint8_t> candidates,
                  std::span<double> scores) const override {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!candidates[i]) continue;
      std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ull * (user + 1)) ^ (0xBF58476D1CE4E5B9ull * (i + 1));
      // splitmix64 finalizer
      x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
      x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
      x ^= x >> 31;
      scores[i] = static_cast<double>(x >> 11) * 0x1.0p-53;
    }
  }

 private:
  std::uint64_t seed_;
};

// Training interaction count per item.
class PopScorer : public Scorer {
 public:
  explicit PopScorer(const InteractionDataset& train) {
    auto deg = train.item_degrees();
    counts_.assign(deg.begin(), deg.end());
  }
  explicit PopScorer(std::vector<double> counts) : counts_(std::move(counts)) {}

  void score_user(std::size_t, std::span<const std::uint8_t> candidates,
                  std::span<double> scores) const override {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i]) scores[i] = counts_[i];
    }
  }

 private:
  std::vector<double> counts_;
};

// Cosine similarity between item columns of the binary training matrix.
// score(u, i) = sum over j in train(u) of sim(i, j), keeping for each target i
// only its k most similar items (k = 0 keeps all).
class ItemKnnScorer : public Scorer {
 public:
  explicit ItemKnnScorer(const InteractionDataset& train, std::size_t k = 0)
      : train_(train), items_(train.item_count()), sim_(items_, items_) {
    auto deg = train.item_degrees();
    for (const auto& list : train.user_items) {
      for (auto a : list) {
        for (auto b : list) {
          if (a != b) sim_(a, b) += 1.0;
        }
      }
    }
    for (std::size_t a = 0; a < items_; ++a) {
      auto row = sim_.row(a);
      for (std::size_t b = 0; b < items_; ++b) {
        if (row[b] != 0.0) {
          row[b] /= std::sqrt(static_cast<double>(deg[a]) * static_cast<double>(deg[b]));
        }
      }
    }
    if (k > 0 && k < items_) {
      std::vector<std::size_t> order(items_);
      for (std::size_t a = 0; a < items_; ++a) {
        auto row = sim_.row(a);
        std::iota(order.begin(), order.end(), 0);
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                         [&](std::size_t x, std::size_t y) {
                           return row[x] > row[y] || (row[x] == row[y] && x < y);
                         });
        for (std::size_t r = k; r < items_; ++r) row[order[r]] = 0.0;
      }
    }
  }

  double similarity(std::size_t a, std::size_t b) const { return sim_(a, b); }

  void score_user(std::size_t user, std::span<const std::uint8_t> candidates,
                  std::span<double> scores) const override {
    auto history = train_.items_of(user);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!candidates[i]) continue;
      auto row = sim_.row(i);
      double s = 0.0;
      for (auto j : history) s += row[j];
      scores[i] = s;
    }
  }

 private:
  const InteractionDataset& train_;
  std::size_t items_;
  Matrix sim_;
};

inline std::unique_ptr<Scorer> baseline_scores(BaselineKind kind, const InteractionDataset& train,
                                               std::uint64_t seed = 0, std::size_t knn_k = 0) {
  require(train.interaction_count() > 0, "baseline: empty training split", ErrorKind::empty_dataset);
  switch (kind) {
    case BaselineKind::random: return std::make_unique<RandomScorer>(seed);
    case BaselineKind::pop: return std::make_unique<PopScorer>(train);
    case BaselineKind::itemknn: return std::make_unique<ItemKnnScorer>(train, knn_k);
  }
  fail(ErrorKind::invalid_argument, "unknown baseline");
}

}  // namespace flaicf
