#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flaicf/config.hpp"
#include "flaicf/gradients.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/predictors.hpp"

namespace flaicf {

struct GradcheckOptions {
  std::size_t history = 5;
  std::size_t extra_items = 3;  // items outside the instance, expected zero data gradient
  double step = 1e-4;
  double lambda = 0.01;
  double scale = 0.5;           // std of the random parameter values
  double error_floor = 1e-6;    // relative errors use max(|analytic|, |numeric|, floor)
  // Applied to the dense analytic gradient before comparison (negative controls).
  std::function<void(ParameterSet&)> corrupt;
};

struct GradcheckArray {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU kink or logit clamp
};

struct GradcheckReport {
  ModelConfig config;
  double tolerance = 0.0;
  std::vector<GradcheckArray> arrays;
  double max_relative_error = 0.0;
  bool passed = false;
};

namespace detail {

// Sign pattern of every piecewise-linear decision in the forward pass.
inline std::vector<signed char> activation_signature(const ForwardCache& c) {
  std::vector<signed char> sig;
  for (double v : c.attention.pre.flat()) sig.push_back(v > 0.0);
  auto clamp_state = [&](double v) -> signed char {
    return v <= -kLogitClamp ? -1 : (v >= kLogitClamp ? 1 : 0);
  };
  for (double v : c.attention.item_logits) sig.push_back(clamp_state(v));
  for (double v : c.attention.feature_logits.flat()) sig.push_back(clamp_state(v));
  for (const auto& layer : c.layer_pre) {
    for (double v : layer) sig.push_back(v > 0.0);
  }
  return sig;
}

}  // namespace detail

// Compares backward() against central finite differences of
// instance_objective() on a random instance, for every parameter entry.
inline GradcheckReport gradcheck(const ModelConfig& config, std::uint64_t seed, double tolerance,
                                 const GradcheckOptions& options = {}) {
  config.validate();
  const std::size_t items = options.history + 1 + options.extra_items;
  const std::size_t users = 2;
  std::mt19937_64 rng(seed);

  ParameterSet params = zero_parameters(config, items, users);
  std::normal_distribution<double> gauss(0.0, options.scale);
  for_each_array(params, [&](const std::string&, std::span<double> a) {
    for (double& v : a) v = gauss(rng);
  });

  // Target is item 0, history items 1..history; user 1.
  const std::size_t user = 1;
  const std::size_t target = 0;
  std::vector<std::size_t> history(options.history);
  for (std::size_t j = 0; j < history.size(); ++j) history[j] = j + 1;
  const int label = std::uniform_int_distribution<int>(0, 1)(rng);

  ForwardCache cache;
  forward(config, params, user, target, history, cache);
  const auto base_signature = detail::activation_signature(cache);
  GradientSet grads;
  backward(config, params, cache, label, options.lambda, grads);
  ParameterSet analytic = densify(grads, params);
  if (options.corrupt) options.corrupt(analytic);

  GradcheckReport report;
  report.config = config;
  report.tolerance = tolerance;

  std::vector<std::span<const double>> analytic_arrays;
  for_each_array(analytic, [&](const std::string&, std::span<const double> a) {
    analytic_arrays.push_back(a);
  });

  std::size_t index = 0;
  for_each_array(params, [&](const std::string& name, std::span<double> a) {
    GradcheckArray entry{name};
    auto expected = analytic_arrays[index++];
    for (std::size_t n = 0; n < a.size(); ++n) {
      const double saved = a[n];
      ForwardCache probe;
      a[n] = saved + options.step;
      double up = instance_objective(config, params, user, target, history, label, options.lambda);
      forward(config, params, user, target, history, probe);
      bool kink = detail::activation_signature(probe) != base_signature;
      a[n] = saved - options.step;
      double down =
          instance_objective(config, params, user, target, history, label, options.lambda);
      forward(config, params, user, target, history, probe);
      kink = kink || detail::activation_signature(probe) != base_signature;
      a[n] = saved;
      if (kink) {
        ++entry.skipped;
        continue;
      }
      double numeric = (up - down) / (2.0 * options.step);
      double denom = std::max({std::abs(numeric), std::abs(expected[n]), options.error_floor});
      entry.max_relative_error =
          std::max(entry.max_relative_error, std::abs(numeric - expected[n]) / denom);
      ++entry.checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.arrays.push_back(entry);
  });
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace flaicf
