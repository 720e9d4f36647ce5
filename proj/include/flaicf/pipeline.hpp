#pragma once

// End-to-end commands behind the CLI: prepare, train, evaluate and attention
// export. Each takes a RunConfig and writes its outputs to disk.

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flaicf/checkpoint.hpp"
#include "flaicf/config.hpp"
#include "flaicf/data.hpp"
#include "flaicf/error.hpp"
#include "flaicf/eval.hpp"
#include "flaicf/predictors.hpp"
#include "flaicf/run_config.hpp"
#include "flaicf/training.hpp"

namespace flaicf {

namespace fs = std::filesystem;

inline std::string format_stats_line(const DatasetStats& s) {
  std::ostringstream os;
  os << "users=" << s.users << " items=" << s.items << " interactions=" << s.interactions
     << " sparsity=" << std::fixed << std::setprecision(2) << 100.0 * s.sparsity << "%";
  return os.str();
}

inline nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"split", r.split}, {"n", r.n},
                      {"hr", r.hr},       {"ndcg", r.ndcg},   {"users", r.users}};
  j["loss"] = std::isfinite(r.loss) ? nlohmann::json(r.loss) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const RunConfig& rc) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : rc.values()) j[k] = v;
  return j;
}

// prepare: raw file -> k-core -> per-user split -> data_dir.
inline DatasetStats run_prepare(const RunConfig& rc, std::ostream* log = nullptr) {
  const auto& raw = rc.get("raw");
  require(!raw.empty(), "prepare: raw is required");
  auto ratios = to_ratios(rc);
  auto options = to_parse_options(rc);
  InteractionDataset ds = parse_interactions(fs::path(raw), options);
  ds = k_core_filter(ds, rc.get_size("k_user"), rc.get_size("k_item"));
  SplitDataset split = split_per_user(ds, ratios, rc.get_size("seed"));
  const fs::path dir = rc.get("data_dir");
  write_split(split, dir);

  DatasetStats stats = dataset_stats(ds);
  nlohmann::json j = {{"users", stats.users},
                      {"items", stats.items},
                      {"interactions", stats.interactions},
                      {"sparsity", stats.sparsity},
                      {"train", split.train.interaction_count()},
                      {"valid", split.validation.interaction_count()},
                      {"test", split.test.interaction_count()}};
  std::ofstream(dir / "stats.json") << j.dump(2) << "\n";
  if (log) *log << format_stats_line(stats) << "\n";
  return stats;
}

struct TrainRunSummary {
  fs::path checkpoint;
  std::optional<fs::path> pretrain_checkpoint;
  std::size_t best_epoch = 0;
  MetricsRecord test;
};

namespace detail {

// Trains one model into `dir`: checkpoint.bin, metrics.log, metrics.json.
inline TrainResult train_into(const fs::path& dir, const SplitDataset& split,
                              const ModelConfig& config, const TrainConfig& tc,
                              const std::optional<Embeddings>& pretrained, const RunConfig& rc,
                              std::size_t eval_n, MetricsRecord& test, std::ostream* log) {
  fs::create_directories(dir);
  std::ofstream lines(dir / "metrics.log", std::ios::trunc);
  if (!lines) fail(ErrorKind::io, "cannot write " + (dir / "metrics.log").string());
  auto on_epoch = [&](const MetricsRecord& r) {
    auto line = format_metrics_line(r);
    lines << line << "\n" << std::flush;
    if (log) *log << line << "\n" << std::flush;
  };
  TrainResult result = train(split, config, tc, pretrained, on_epoch);
  save_checkpoint(result.params, config, dir / "checkpoint.bin");

  ModelScorer scorer(config, result.params, split.train);
  test = evaluate(scorer, split, EvalSplit::test, eval_n, tc.threads);
  test.epoch = result.best_epoch;
  test.loss = result.history.at(result.best_epoch - 1).loss;
  on_epoch(test);

  nlohmann::json j;
  j["model"] = std::string(to_string(config.kind));
  j["config"] = to_json(rc);
  j["epochs"] = nlohmann::json::array();
  for (const auto& r : result.history) j["epochs"].push_back(to_json(r));
  j["best_epoch"] = result.best_epoch;
  j["test"] = to_json(test);
  std::ofstream(dir / "metrics.json") << j.dump(2) << "\n";
  return result;
}

}  // namespace detail

// train: optional FISM pre-training (into out_dir/fism), then the configured
// model into out_dir. Configuration is validated before any data is read.
inline TrainRunSummary run_train(const RunConfig& rc, const fs::path& out_dir,
                                 std::ostream* log = nullptr) {
  const ModelConfig config = to_model_config(rc);
  const TrainConfig tc = to_train_config(rc);
  const std::size_t eval_n = rc.get_size("n");
  require(eval_n >= 1, "n must be >= 1");
  TrainConfig pre_tc = tc;
  if (auto e = rc.get_size("pretrain_epochs"); e > 0) pre_tc.epochs = e;
  if (auto lr = rc.get_real("pretrain_lr"); lr > 0.0) pre_tc.learning_rate = lr;
  pre_tc.validate();

  const SplitDataset split = read_split(rc.get("data_dir"));
  TrainRunSummary summary;
  std::optional<Embeddings> pretrained;
  const bool wants_init = config.kind != ModelKind::fism;
  if (wants_init && !rc.get("pretrained").empty()) {
    auto loaded = load_checkpoint(rc.get("pretrained"));
    require(loaded.config.kind == ModelKind::fism, "pretrained: expected a FISM checkpoint");
    pretrained = Embeddings{std::move(loaded.params.P), std::move(loaded.params.Q)};
  } else if (wants_init && rc.get_bool("pretrain")) {
    ModelConfig fism = ModelConfig::make(ModelKind::fism, config.d);
    fism.alpha = config.alpha;
    MetricsRecord fism_test;
    if (log) *log << "# pretraining FISM\n";
    auto result = detail::train_into(out_dir / "fism", split, fism, pre_tc, std::nullopt, rc, eval_n,
                                     fism_test, log);
    pretrained = Embeddings{std::move(result.params.P), std::move(result.params.Q)};
    summary.pretrain_checkpoint = out_dir / "fism" / "checkpoint.bin";
  }
  if (log) *log << "# training " << to_string(config.kind) << "\n";
  auto result =
      detail::train_into(out_dir, split, config, tc, pretrained, rc, eval_n, summary.test, log);
  summary.checkpoint = out_dir / "checkpoint.bin";
  summary.best_epoch = result.best_epoch;
  return summary;
}

inline std::string format_eval_line(const MetricsRecord& r, const std::string& what) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << "model=" << what << " split=" << r.split << " hr@"
     << r.n << "=" << r.hr << " ndcg@" << r.n << "=" << r.ndcg << " users=" << r.users;
  return os.str();
}

// evaluate: a checkpoint (or a baseline) on the test or validation split.
inline MetricsRecord run_evaluate(const RunConfig& rc, std::ostream* log = nullptr) {
  const std::size_t n = rc.get_size("n");
  require(n >= 1, "n must be >= 1");
  const auto& split_name = rc.get("split");
  require(split_name == "test" || split_name == "valid",
          "split must be test or valid, got '" + split_name + "'");
  const EvalSplit which = split_name == "test" ? EvalSplit::test : EvalSplit::validation;
  const std::size_t threads = rc.get_size("threads");

  MetricsRecord r;
  std::string what;
  if (!rc.get("baseline").empty()) {
    const auto kind = parse_baseline_kind(rc.get("baseline"));
    const SplitDataset split = read_split(rc.get("data_dir"));
    auto scorer = baseline_scores(kind, split.train, rc.get_size("seed"), rc.get_size("knn_k"));
    r = evaluate(*scorer, split, which, n, threads);
    what = rc.get("baseline");
  } else {
    require(!rc.get("checkpoint").empty(), "evaluate: checkpoint or baseline is required");
    auto loaded = load_checkpoint(rc.get("checkpoint"));
    const SplitDataset split = read_split(rc.get("data_dir"));
    require(loaded.params.item_count() == split.item_count() &&
                loaded.params.user_count() == split.user_count(),
            "checkpoint was trained on " + std::to_string(loaded.params.item_count()) + " items and " +
                std::to_string(loaded.params.user_count()) + " users, data has " +
                std::to_string(split.item_count()) + " and " + std::to_string(split.user_count()),
            ErrorKind::size_mismatch);
    ModelScorer scorer(loaded.config, loaded.params, split.train);
    r = evaluate(scorer, split, which, n, threads);
    what = std::string(to_string(loaded.config.kind));
  }
  if (log) *log << format_eval_line(r, what) << "\n";
  return r;
}

struct AttentionExport {
  std::string target;                 // raw target id
  std::vector<std::string> history;   // raw history ids, row order
  Vector item_weights;                // empty for Design 2
  Matrix feature_weights;             // empty for item-level models
  std::vector<fs::path> files;
};

namespace detail {

inline std::string file_safe(const std::string& raw) {
  std::string s = raw;
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return s;
}

inline void write_csv_real(std::ostream& os, double v) {
  os << format_real(v);
}

}  // namespace detail

// export-attention: per target, the item-level weights (1 x |history|) and
// the feature-level weights (|history| x d), headed by raw item ids.
inline std::vector<AttentionExport> run_export_attention(const RunConfig& rc) {
  require(!rc.get("checkpoint").empty(), "export-attention: checkpoint is required");
  auto loaded = load_checkpoint(rc.get("checkpoint"));
  const ModelConfig& config = loaded.config;
  require(has_attention(config.kind),
          "export-attention: " + std::string(to_string(config.kind)) + " has no attention weights");
  const SplitDataset split = read_split(rc.get("data_dir"));
  require(loaded.params.item_count() == split.item_count(), "checkpoint and data disagree on items",
          ErrorKind::size_mismatch);

  const auto& raw_user = rc.get("user");
  require(!raw_user.empty(), "export-attention: user is required");
  auto user = split.train.users->find(raw_user);
  require(user.has_value(), "export-attention: unknown user '" + raw_user + "'");
  auto raw_targets = rc.get_list("targets");
  require(!raw_targets.empty(), "export-attention: targets is required");

  const fs::path dir = rc.get("out_dir");
  fs::create_directories(dir);
  const auto& items = *split.train.items;
  std::vector<AttentionExport> out;
  ForwardCache cache;
  for (const auto& raw_target : raw_targets) {
    auto target = items.find(raw_target);
    require(target.has_value(), "export-attention: unknown item '" + raw_target + "'");
    auto ctx = PredictionContext::from_positives(*user, *target, split.train.items_of(*user));
    require(!ctx.history.empty(), "export-attention: user '" + raw_user +
                                      "' has no history besides '" + raw_target + "'");
    forward(config, loaded.params, ctx, cache);

    AttentionExport e;
    e.target = raw_target;
    for (auto j : ctx.history) e.history.push_back(items.raw(j));
    e.item_weights = cache.attention.item_weights;
    e.feature_weights = cache.attention.feature_weights;
    const std::string stem =
        "attention_" + detail::file_safe(raw_user) + "_" + detail::file_safe(raw_target);

    if (!e.item_weights.empty()) {
      fs::path path = dir / (stem + "_item.csv");
      std::ofstream os(path);
      if (!os) fail(ErrorKind::io, "cannot write " + path.string());
      for (std::size_t j = 0; j < e.history.size(); ++j) os << (j ? "," : "") << e.history[j];
      os << "\n";
      for (std::size_t j = 0; j < e.item_weights.size(); ++j) {
        if (j) os << ",";
        detail::write_csv_real(os, e.item_weights[j]);
      }
      os << "\n";
      e.files.push_back(path);
    }
    if (!e.feature_weights.empty()) {
      fs::path path = dir / (stem + "_feature.csv");
      std::ofstream os(path);
      if (!os) fail(ErrorKind::io, "cannot write " + path.string());
      os << "history_item";
      for (std::size_t k = 0; k < e.feature_weights.cols(); ++k) os << ",f" << k;
      os << "\n";
      for (std::size_t j = 0; j < e.feature_weights.rows(); ++j) {
        os << e.history[j];
        for (double v : e.feature_weights.row(j)) {
          os << ",";
          detail::write_csv_real(os, v);
        }
        os << "\n";
      }
      e.files.push_back(path);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace flaicf
