#pragma once

// Flat key=value run configuration shared by every CLI command. A config file
// holds one `key=value` per line (`#` starts a comment); command-line flags of
// the same name override it. Comma lists on sweepable numeric keys expand to
// a Cartesian product of runs.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flaicf/config.hpp"
#include "flaicf/data.hpp"
#include "flaicf/error.hpp"

namespace flaicf {

struct ConfigKey {
  const char* name;
  const char* default_value;
  bool sweepable;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      // data preparation
      {"raw", "", false, "raw interaction file (prepare)"},
      {"format", "CSV", false, "MOVIELENS_DAT | CSV | TSV"},
      {"user_col", "0", false, "0-based user id column"},
      {"item_col", "1", false, "0-based item id column"},
      {"skip_lines", "0", false, "header lines to skip"},
      {"delimiter", "", false, "override the format's delimiter"},
      {"k_user", "1", false, "minimum interactions per user"},
      {"k_item", "1", false, "minimum interactions per item"},
      {"ratios", "0.7,0.1,0.2", false, "train,valid,test fractions per user"},
      {"data_dir", "data", false, "processed split directory"},
      {"seed", "2024", true, "seed for splitting, init, sampling"},
      // model
      {"model", "FLA_NAIS", false, "FISM | NAIS | FLA_NAIS | DEEPICF | FLA_DICF"},
      {"design", "2", false, "1 | 2 (FLA models)"},
      {"mode", "PROD", false, "PROD | CONCAT (NAIS attention input)"},
      {"d", "16", true, "embedding size"},
      {"dp", "0", true, "attention hidden size (0 = d)"},
      {"beta", "0.7", true, "softmax smoothing exponent in (0,1]"},
      {"alpha", "0.5", true, "FISM normalization exponent in [0,1]"},
      {"layers", "", false, "deep layer sizes, e.g. 16,8 (default d,d/2)"},
      // training
      {"lr", "0.01", true, "Adagrad learning rate"},
      {"lambda", "1e-6", true, "l2 coefficient"},
      {"neg_ratio", "4", true, "negatives per positive"},
      {"epochs", "40", true, "maximum epochs"},
      {"patience", "10", true, "early-stopping patience in epochs (0 = off)"},
      {"epsilon", "1e-8", true, "Adagrad epsilon"},
      {"topn", "10", true, "cutoff for validation model selection"},
      {"threads", "1", false, "evaluation threads"},
      {"pretrain", "false", false, "train FISM first and initialize P, Q from it"},
      {"pretrain_epochs", "0", true, "FISM epochs (0 = epochs)"},
      {"pretrain_lr", "0", true, "FISM learning rate (0 = lr)"},
      {"pretrained", "", false, "existing FISM checkpoint to initialize from"},
      {"out_dir", "runs", false, "output directory"},
      // evaluation / export
      {"checkpoint", "", false, "checkpoint to evaluate or export"},
      {"split", "test", false, "test | valid"},
      {"n", "10", false, "ranking cutoff"},
      {"baseline", "", false, "RANDOM | POP | ITEMKNN instead of a checkpoint"},
      {"knn_k", "0", false, "ItemKNN neighbours per item (0 = all)"},
      {"user", "", false, "raw user id (export-attention)"},
      {"targets", "", false, "comma-separated raw target item ids (export-attention)"},
      // gradient check
      {"tolerance", "1e-4", false, "max relative error"},
      {"history", "5", false, "history length of the random instance"},
  };
  return keys;
}

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  void set(const std::string& key, const std::string& value) {
    if (!find_config_key(key)) fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
    return it->second;
  }

  double get_real(const std::string& key) const {
    const auto& s = get(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
      fail(ErrorKind::invalid_argument, key + ": expected a number, got '" + s + "'");
    }
    return v;
  }

  std::size_t get_size(const std::string& key) const {
    const auto& s = get(key);
    std::size_t pos = 0;
    unsigned long long v = 0;
    bool ok = !s.empty() && s[0] != '-';
    if (ok) {
      try {
        v = std::stoull(s, &pos);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || pos != s.size()) {
      fail(ErrorKind::invalid_argument, key + ": expected a nonnegative integer, got '" + s + "'");
    }
    return static_cast<std::size_t>(v);
  }

  bool get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no" || s.empty()) return false;
    fail(ErrorKind::invalid_argument, key + ": expected true/false, got '" + s + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    for (std::string part; std::getline(ss, part, ',');) {
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline void load_config_file(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::parse, path.string() + " line " + std::to_string(line_no) +
                                 ": expected key=value");
    }
    config.set(std::string(detail::trim(view.substr(0, eq))),
               std::string(detail::trim(view.substr(eq + 1))));
  }
}

struct SweepRun {
  std::string suffix;  // "" for a single run, else e.g. "beta=0.5_lr=0.01"
  RunConfig config;
};

// One run per element of the Cartesian product of comma lists on sweepable keys.
inline std::vector<SweepRun> expand_sweeps(const RunConfig& base) {
  std::vector<SweepRun> runs{{"", base}};
  for (const auto& key : config_keys()) {
    if (!key.sweepable) continue;
    auto options = base.get_list(key.name);
    if (options.size() <= 1) {
      if (options.size() == 1) {
        for (auto& r : runs) r.config.set(key.name, options[0]);
      }
      continue;
    }
    std::vector<SweepRun> next;
    for (const auto& r : runs) {
      for (const auto& v : options) {
        SweepRun n = r;
        n.config.set(key.name, v);
        n.suffix += (n.suffix.empty() ? "" : "_") + std::string(key.name) + "=" + v;
        next.push_back(std::move(n));
      }
    }
    runs = std::move(next);
  }
  return runs;
}

inline ModelConfig to_model_config(const RunConfig& rc) {
  ModelConfig c = ModelConfig::make(parse_model_kind(rc.get("model")), rc.get_size("d"));
  c.design = parse_design(rc.get("design"));
  c.attention_mode = parse_attention_mode(rc.get("mode"));
  if (std::size_t dp = rc.get_size("dp"); dp > 0) c.d_prime = dp;
  c.beta = rc.get_real("beta");
  c.alpha = rc.get_real("alpha");
  if (is_deep(c.kind) && !rc.get("layers").empty()) {
    c.deep_layers.clear();
    for (const auto& part : rc.get_list("layers")) {
      RunConfig tmp;
      tmp.set("d", part);
      c.deep_layers.push_back(tmp.get_size("d"));
    }
  }
  c.validate();
  return c;
}

inline TrainConfig to_train_config(const RunConfig& rc) {
  TrainConfig t;
  t.learning_rate = rc.get_real("lr");
  t.lambda = rc.get_real("lambda");
  t.neg_ratio = rc.get_size("neg_ratio");
  t.epochs = rc.get_size("epochs");
  t.seed = rc.get_size("seed");
  t.early_stop_patience = rc.get_size("patience");
  t.adagrad_epsilon = rc.get_real("epsilon");
  t.top_n = rc.get_size("topn");
  t.threads = rc.get_size("threads");
  t.validate();
  return t;
}

inline std::array<double, 3> to_ratios(const RunConfig& rc) {
  auto parts = rc.get_list("ratios");
  require(parts.size() == 3, "ratios: expected three comma-separated fractions");
  std::array<double, 3> r{};
  for (std::size_t n = 0; n < 3; ++n) {
    RunConfig tmp;
    tmp.set("beta", parts[n]);
    r[n] = tmp.get_real("beta");
  }
  return r;
}

inline ParseOptions to_parse_options(const RunConfig& rc) {
  ParseOptions o;
  o.format = parse_interaction_format(rc.get("format"));
  o.user_column = rc.get_size("user_col");
  o.item_column = rc.get_size("item_col");
  o.skip_lines = rc.get_size("skip_lines");
  if (!rc.get("delimiter").empty()) {
    o.delimiter = rc.get("delimiter") == "\\t" ? std::string("\t") : rc.get("delimiter");
  }
  return o;
}

}  // namespace flaicf
