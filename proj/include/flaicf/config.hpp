#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flaicf/error.hpp"

namespace flaicf {

enum class ModelKind { fism, nais, fla_nais, deepicf, fla_dicf };
enum class Design { design1, design2 };
enum class AttentionMode { prod, concat };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::fism: return "FISM";
    case ModelKind::nais: return "NAIS";
    case ModelKind::fla_nais: return "FLA_NAIS";
    case ModelKind::deepicf: return "DEEPICF";
    case ModelKind::fla_dicf: return "FLA_DICF";
  }
  return "?";
}

inline std::string_view to_string(Design design) {
  return design == Design::design1 ? "DESIGN1" : "DESIGN2";
}

inline std::string_view to_string(AttentionMode mode) {
  return mode == AttentionMode::prod ? "PROD" : "CONCAT";
}

// Case-insensitive: "DeepICF" and "fla_nais" are accepted.
inline ModelKind parse_model_kind(std::string_view s) {
  auto same = [](std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
             return std::toupper(static_cast<unsigned char>(x)) == y;
           });
  };
  for (auto k : {ModelKind::fism, ModelKind::nais, ModelKind::fla_nais, ModelKind::deepicf,
                 ModelKind::fla_dicf}) {
    if (same(s, to_string(k))) return k;
  }
  fail(ErrorKind::invalid_argument, "unknown model kind '" + std::string(s) + "'");
}

inline Design parse_design(std::string_view s) {
  if (s == "DESIGN1" || s == "1") return Design::design1;
  if (s == "DESIGN2" || s == "2") return Design::design2;
  fail(ErrorKind::invalid_argument, "unknown design '" + std::string(s) + "'");
}

inline AttentionMode parse_attention_mode(std::string_view s) {
  if (s == "PROD") return AttentionMode::prod;
  if (s == "CONCAT") return AttentionMode::concat;
  fail(ErrorKind::invalid_argument, "unknown attention mode '" + std::string(s) + "'");
}

inline bool is_deep(ModelKind k) { return k == ModelKind::deepicf || k == ModelKind::fla_dicf; }
inline bool is_feature_level(ModelKind k) {
  return k == ModelKind::fla_nais || k == ModelKind::fla_dicf;
}
inline bool has_attention(ModelKind k) { return k != ModelKind::fism; }

struct ModelConfig {
  ModelKind kind = ModelKind::fla_nais;
  Design design = Design::design2;
  AttentionMode attention_mode = AttentionMode::prod;
  std::size_t d = 16;
  std::size_t d_prime = 16;
  double beta = 0.7;
  double alpha = 0.5;
  std::vector<std::size_t> deep_layers;

  // d_prime = d and, for the deep family, a halving tower [d, d/2].
  static ModelConfig make(ModelKind kind, std::size_t d) {
    ModelConfig c;
    c.kind = kind;
    c.d = d;
    c.d_prime = d;
    if (is_deep(kind)) c.deep_layers = {d, std::max<std::size_t>(1, d / 2)};
    return c;
  }

  // Uses the item-level output vector h.
  bool uses_item_logits() const {
    return kind == ModelKind::nais || kind == ModelKind::deepicf ||
           (is_feature_level(kind) && design == Design::design1);
  }

  std::size_t attention_input_size() const {
    return kind == ModelKind::nais && attention_mode == AttentionMode::concat ? 2 * d : d;
  }

  void validate() const {
    require(d >= 1, "d must be >= 1");
    require(d_prime >= 1, "d_prime must be >= 1");
    require(std::isfinite(beta) && beta > 0.0 && beta <= 1.0,
            "beta must lie in (0, 1], got " + std::to_string(beta));
    require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0,
            "alpha must lie in [0, 1], got " + std::to_string(alpha));
    require(attention_mode == AttentionMode::prod || kind == ModelKind::nais,
            "CONCAT attention is only defined for NAIS");
    if (is_deep(kind)) {
      require(!deep_layers.empty(), "deep_layers must be nonempty for the DeepICF family");
      for (auto w : deep_layers) require(w >= 1, "deep layer sizes must be positive");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double lambda = 1e-6;
  std::size_t neg_ratio = 4;
  std::size_t epochs = 40;
  std::uint64_t seed = 2024;
  std::size_t early_stop_patience = 10;  // 0 disables early stopping
  double adagrad_epsilon = 1e-8;
  std::size_t top_n = 10;                // cutoff used for validation model selection
  std::size_t threads = 1;               // evaluation fan-out

  void validate() const {
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be >= 0");
    require(neg_ratio >= 1, "neg_ratio must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(std::isfinite(adagrad_epsilon) && adagrad_epsilon > 0.0,
            "adagrad_epsilon must be > 0");
    require(top_n >= 1, "top_n must be >= 1");
    require(threads >= 1, "threads must be >= 1");
  }
};

}  // namespace flaicf
