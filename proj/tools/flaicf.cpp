// flaicf: prepare data, train, evaluate, gradient-check and export attention.
//
//   flaicf prepare --raw ratings.dat --format MOVIELENS_DAT --k_user 5 --data_dir data/ml1m
//   flaicf train --data_dir data/ml1m --model FLA_NAIS --pretrain true --out_dir runs/fla
//   flaicf train --config base.cfg --beta 0.1,0.3,0.5,0.7,0.9
//   flaicf evaluate --data_dir data/ml1m --checkpoint runs/fla/checkpoint.bin --n 10
//   flaicf gradcheck --model all --d 8
//   flaicf export-attention --checkpoint ... --user 12 --targets 5,9 --out_dir heat

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flaicf/flaicf.hpp"

namespace {

using namespace flaicf;

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int cmd_train(const RunConfig& rc) {
  auto runs = expand_sweeps(rc);
  // Validate every run before training any of them.
  for (const auto& run : runs) {
    to_model_config(run.config);
    to_train_config(run.config);
  }
  const std::filesystem::path base = rc.get("out_dir");
  for (const auto& run : runs) {
    auto dir = run.suffix.empty() ? base : base / run.suffix;
    if (!run.suffix.empty()) std::cout << "# run " << run.suffix << "\n";
    auto summary = run_train(run.config, dir, &std::cout);
    std::cout << "# checkpoint " << summary.checkpoint.string() << " best_epoch=" << summary.best_epoch
              << "\n";
  }
  return 0;
}

std::vector<ModelConfig> gradcheck_configs(const RunConfig& rc) {
  std::vector<ModelKind> kinds;
  if (rc.get("model") == "all") {
    kinds = {ModelKind::fism, ModelKind::nais, ModelKind::fla_nais, ModelKind::deepicf,
             ModelKind::fla_dicf};
  } else {
    for (const auto& k : rc.get_list("model")) kinds.push_back(parse_model_kind(k));
  }
  const bool all_designs = rc.get("design") == "all";
  const bool all_modes = rc.get("mode") == "all";
  std::vector<ModelConfig> out;
  for (auto kind : kinds) {
    RunConfig one = rc;
    one.set("model", std::string(to_string(kind)));
    if (all_designs) one.set("design", "2");
    if (all_modes) one.set("mode", "PROD");
    std::vector<Design> designs{parse_design(one.get("design"))};
    if (all_designs && is_feature_level(kind)) designs = {Design::design1, Design::design2};
    std::vector<AttentionMode> modes{parse_attention_mode(one.get("mode"))};
    if (all_modes && kind == ModelKind::nais) modes = {AttentionMode::prod, AttentionMode::concat};
    for (auto design : designs) {
      for (auto mode : modes) {
        ModelConfig c = to_model_config(one);
        c.design = design;
        c.attention_mode = mode;
        c.validate();
        out.push_back(c);
      }
    }
  }
  return out;
}

int cmd_gradcheck(const RunConfig& rc) {
  const double tolerance = rc.get_real("tolerance");
  GradcheckOptions options;
  options.history = rc.get_size("history");
  require(options.history >= 1, "history must be >= 1");
  bool all_passed = true;
  for (const auto& config : gradcheck_configs(rc)) {
    auto report = gradcheck(config, rc.get_size("seed"), tolerance, options);
    std::string label = "model=" + std::string(to_string(config.kind));
    if (is_feature_level(config.kind)) label += " design=" + std::string(to_string(config.design));
    if (config.kind == ModelKind::nais) label += " mode=" + std::string(to_string(config.attention_mode));
    for (const auto& a : report.arrays) {
      std::cout << label << " array=" << a.name << " max_rel_err=" << a.max_relative_error
                << " checked=" << a.checked << " skipped=" << a.skipped << "\n";
    }
    std::cout << label << " max_rel_err=" << report.max_relative_error << " tolerance=" << tolerance
              << " result=" << (report.passed ? "PASS" : "FAIL") << "\n";
    all_passed = all_passed && report.passed;
  }
  if (!all_passed) {
    std::cerr << "error=gradcheck_failed: relative error above tolerance " << tolerance << "\n";
    return 1;
  }
  return 0;
}

int cmd_export(const RunConfig& rc) {
  for (const auto& e : run_export_attention(rc)) {
    for (const auto& f : e.files) std::cout << f.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-level attentive item-based collaborative filtering"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key=value config file");
  std::map<std::string, std::string> flags;
  for (const auto& key : config_keys()) {
    std::string help = key.help;
    if (*key.default_value) help += " [" + std::string(key.default_value) + "]";
    app.add_option("--" + std::string(key.name), flags[key.name], help);
  }

  auto* prepare = app.add_subcommand("prepare", "parse, k-core filter and split a raw file");
  auto* train_cmd = app.add_subcommand("train", "train a model (comma lists sweep)");
  auto* eval_cmd = app.add_subcommand("evaluate", "HR@n / NDCG@n of a checkpoint or baseline");
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare gradients with finite differences");
  auto* export_cmd = app.add_subcommand("export-attention", "write attention weights as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error=usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    RunConfig rc;
    if (grad_cmd->parsed()) {
      rc.set("model", "all");
      rc.set("design", "all");
      rc.set("mode", "all");
      rc.set("d", "8");
    }
    if (!config_path.empty()) load_config_file(config_path, rc);
    for (const auto& key : config_keys()) {
      if (app.get_option("--" + std::string(key.name))->count() > 0) rc.set(key.name, flags[key.name]);
    }

    if (prepare->parsed()) {
      run_prepare(rc, &std::cout);
      return 0;
    }
    if (train_cmd->parsed()) return cmd_train(rc);
    if (eval_cmd->parsed()) {
      run_evaluate(rc, &std::cout);
      return 0;
    }
    if (grad_cmd->parsed()) return cmd_gradcheck(rc);
    if (export_cmd->parsed()) return cmd_export(rc);
  } catch (const Error& e) {
    std::cerr << "error=" << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error=internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
