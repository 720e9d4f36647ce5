#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flaicf/config.hpp"
#include "flaicf/error.hpp"
#include "flaicf/tensor.hpp"

namespace flaicf {

inline constexpr double kInitStd = 0.01;

// Every trainable array of every model kind. Arrays a kind does not use stay
// empty, so the set of nonempty arrays is exactly that kind's parameters.
struct ParameterSet {
  Matrix P;  // target-role item embeddings, items x d
  Matrix Q;  // history-role item embeddings, items x d
  Matrix W;  // attention hidden weights, d' x d (d' x 2d for NAIS CONCAT)
  Vector b;  // attention hidden bias, d'
  Matrix H;  // feature-level output weights, d' x d
  Vector h;  // item-level output weights, d'
  std::vector<Matrix> deep_W;  // layer l: out_l x in_l
  std::vector<Vector> deep_b;
  Vector V;          // regression weights over the last deep layer
  Vector user_bias;  // b_u
  Vector item_bias;  // b_i
  std::size_t users = 0;

  std::size_t item_count() const { return P.rows(); }
  std::size_t user_count() const { return users; }

  bool operator==(const ParameterSet&) const = default;
};

struct Embeddings {
  Matrix P;
  Matrix Q;
};

// Zero-filled arrays with the shapes `config` requires.
inline ParameterSet zero_parameters(const ModelConfig& config, std::size_t item_count,
                                    std::size_t user_count) {
  ParameterSet ps;
  ps.users = user_count;
  ps.P = Matrix(item_count, config.d);
  ps.Q = Matrix(item_count, config.d);
  if (has_attention(config.kind)) {
    ps.W = Matrix(config.d_prime, config.attention_input_size());
    ps.b = Vector(config.d_prime, 0.0);
  }
  if (is_feature_level(config.kind)) ps.H = Matrix(config.d_prime, config.d);
  if (config.uses_item_logits()) ps.h = Vector(config.d_prime, 0.0);
  if (is_deep(config.kind)) {
    std::size_t in = config.d;
    for (auto out : config.deep_layers) {
      ps.deep_W.emplace_back(out, in);
      ps.deep_b.emplace_back(out, 0.0);
      in = out;
    }
    ps.V = Vector(in, 0.0);
    ps.user_bias = Vector(user_count, 0.0);
    ps.item_bias = Vector(item_count, 0.0);
  }
  return ps;
}

// Visits every nonempty array in the fixed order used by checkpoints:
// P, Q, W, b, H, h, (deep_W[l], deep_b[l])..., V, user_bias, item_bias.
template <class PS, class F>
  requires std::same_as<std::remove_const_t<PS>, ParameterSet>
void for_each_array(PS& ps, F&& f) {
  auto visit = [&](const std::string& name, auto& a) {
    if (a.empty()) return;
    if constexpr (requires { a.flat(); }) {
      f(name, a.flat());
    } else {
      f(name, std::span(a));
    }
  };
  visit("P", ps.P);
  visit("Q", ps.Q);
  visit("W", ps.W);
  visit("b", ps.b);
  visit("H", ps.H);
  visit("h", ps.h);
  for (std::size_t l = 0; l < ps.deep_W.size(); ++l) {
    visit("deep_W" + std::to_string(l), ps.deep_W[l]);
    visit("deep_b" + std::to_string(l), ps.deep_b[l]);
  }
  visit("V", ps.V);
  visit("user_bias", ps.user_bias);
  visit("item_bias", ps.item_bias);
}

inline std::size_t total_size(const ParameterSet& ps) {
  std::size_t n = 0;
  for_each_array(ps, [&](const std::string&, std::span<const double> a) { n += a.size(); });
  return n;
}

inline double squared_norm(const ParameterSet& ps) {
  double s = 0.0;
  for_each_array(ps, [&](const std::string&, std::span<const double> a) {
    for (double v : a) s += v * v;
  });
  return s;
}

inline bool all_finite(const ParameterSet& ps) {
  bool ok = true;
  for_each_array(ps, [&](const std::string&, std::span<const double> a) {
    for (double v : a) ok = ok && std::isfinite(v);
  });
  return ok;
}

// Gaussian(0, 0.01) for weights, zero for biases. Pretrained embeddings, when
// given, replace P and Q; every other array is still drawn from the seed.
inline ParameterSet init_parameters(const ModelConfig& config, std::size_t item_count,
                                    std::size_t user_count, std::uint64_t seed,
                                    const std::optional<Embeddings>& pretrained = std::nullopt) {
  config.validate();
  require(item_count >= 1 && user_count >= 1, "item and user counts must be >= 1");
  ParameterSet ps = zero_parameters(config, item_count, user_count);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, kInitStd);
  auto draw = [&](std::span<double> a) {
    for (double& v : a) v = gauss(rng);
  };
  draw(ps.P.flat());
  draw(ps.Q.flat());
  draw(ps.W.flat());
  draw(ps.H.flat());
  draw(ps.h);
  for (auto& m : ps.deep_W) draw(m.flat());
  draw(ps.V);

  if (pretrained) {
    auto check = [&](const Matrix& m, const char* name) {
      if (m.rows() != item_count || m.cols() != config.d) {
        fail(ErrorKind::shape_mismatch, std::string("pretrained ") + name + " has shape " +
                                            shape_string(m) + ", expected " +
                                            std::to_string(item_count) + "x" +
                                            std::to_string(config.d));
      }
    };
    check(pretrained->P, "P");
    check(pretrained->Q, "Q");
    ps.P = pretrained->P;
    ps.Q = pretrained->Q;
  }
  return ps;
}

}  // namespace flaicf
