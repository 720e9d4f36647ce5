#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "flaicf/flaicf.hpp"
#include "json.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace flaicf;
using flaicf::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + FLAICF_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// A prepared synthetic split shared by the pipeline tests.
class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    flaicf::testing::SyntheticSpec spec;
    spec.users = 80;
    spec.items = 50;
    spec.seed = 3;
    flaicf::testing::write_synthetic_csv(spec, dir / "raw.csv");
    rc.set("raw", (dir / "raw.csv").string());
    rc.set("data_dir", (dir / "data").string());
    rc.set("k_user", "3");
    rc.set("k_item", "2");
    rc.set("d", "8");
    rc.set("epochs", "3");
    rc.set("lr", "0.05");
    run_prepare(rc);
  }

  TempDir dir;
  RunConfig rc;
};

}  // namespace

TEST(RunConfig, DefaultsAndUnknownKeys) {
  RunConfig rc;
  EXPECT_EQ(rc.get("model"), "FLA_NAIS");
  EXPECT_DOUBLE_EQ(rc.get_real("beta"), 0.7);
  EXPECT_THROW(rc.set("learning_rate", "1"), Error);
  EXPECT_THROW(rc.get("nope"), Error);
  rc.set("epochs", "-3");
  EXPECT_THROW(rc.get_size("epochs"), Error);
  rc.set("pretrain", "maybe");
  EXPECT_THROW(rc.get_bool("pretrain"), Error);
}

TEST(RunConfig, FileParsing) {
  TempDir dir;
  std::ofstream(dir / "a.cfg") << "# comment\nmodel = NAIS  # trailing\n\nbeta=0.5\n";
  RunConfig rc;
  load_config_file(dir / "a.cfg", rc);
  EXPECT_EQ(rc.get("model"), "NAIS");
  EXPECT_EQ(rc.get("beta"), "0.5");

  std::ofstream(dir / "b.cfg") << "model=NAIS\nnot a pair\n";
  try {
    load_config_file(dir / "b.cfg", rc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::ofstream(dir / "c.cfg") << "colour=blue\n";
  EXPECT_THROW(load_config_file(dir / "c.cfg", rc), Error);
}

TEST(RunConfig, SweepsAreACartesianProduct) {
  RunConfig rc;
  rc.set("beta", "0.5,0.7");
  rc.set("lr", "0.01,0.05,0.1");
  rc.set("d", "8");
  auto runs = expand_sweeps(rc);
  ASSERT_EQ(runs.size(), 6u);
  std::set<std::string> suffixes;
  for (const auto& r : runs) {
    suffixes.insert(r.suffix);
    EXPECT_EQ(r.config.get_list("beta").size(), 1u);
    EXPECT_EQ(r.config.get("d"), "8");
  }
  EXPECT_EQ(suffixes.size(), 6u);
  EXPECT_TRUE(suffixes.count("beta=0.5_lr=0.1"));
  EXPECT_EQ(expand_sweeps(RunConfig{}).size(), 1u);
  EXPECT_EQ(expand_sweeps(RunConfig{})[0].suffix, "");
}

TEST(RunConfig, Converters) {
  RunConfig rc;
  rc.set("model", "DeepICF");
  rc.set("d", "16");
  rc.set("layers", "16,4");
  auto c = to_model_config(rc);
  EXPECT_EQ(c.kind, ModelKind::deepicf);
  EXPECT_EQ(c.deep_layers, (std::vector<std::size_t>{16, 4}));
  EXPECT_EQ(c.d_prime, 16u);
  rc.set("delimiter", "\\t");
  EXPECT_EQ(to_parse_options(rc).delimiter, std::optional<std::string>("\t"));
  rc.set("ratios", "0.8,0.2");
  EXPECT_THROW(to_ratios(rc), Error);
}

TEST_F(PipelineTest, InvalidBetaRejectedBeforeTraining) {
  rc.set("beta", "1.5");
  try {
    run_train(rc, dir / "run");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
  EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST_F(PipelineTest, PrepareIsDeterministic) {
  RunConfig again = rc;
  again.set("data_dir", (dir / "data2").string());
  run_prepare(again);
  for (const char* f : {"train.txt", "valid.txt", "test.txt", "user_vocab.txt", "item_vocab.txt"}) {
    EXPECT_EQ(slurp(dir / "data" / f), slurp(dir / "data2" / f)) << f;
  }
  auto stats = nlohmann::json::parse(slurp(dir / "data" / "stats.json"));
  EXPECT_GT(stats["interactions"].get<int>(), 0);
}

TEST_F(PipelineTest, PretrainTrainEvaluate) {
  rc.set("model", "FLA_NAIS");
  rc.set("pretrain", "true");
  rc.set("pretrain_epochs", "2");
  std::ostringstream log;
  auto summary = run_train(rc, dir / "run", &log);
  ASSERT_TRUE(summary.pretrain_checkpoint.has_value());
  EXPECT_TRUE(fs::exists(*summary.pretrain_checkpoint));
  EXPECT_TRUE(fs::exists(summary.checkpoint));
  EXPECT_EQ(load_checkpoint(*summary.pretrain_checkpoint).config.kind, ModelKind::fism);
  EXPECT_EQ(load_checkpoint(summary.checkpoint).config.kind, ModelKind::fla_nais);

  // metrics.log: one line per epoch plus the test line.
  auto lines = slurp(dir / "run" / "metrics.log");
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 4);
  EXPECT_NE(lines.find("split=test"), std::string::npos);
  auto j = nlohmann::json::parse(slurp(dir / "run" / "metrics.json"));
  EXPECT_EQ(j["model"], "FLA_NAIS");
  EXPECT_EQ(j["epochs"].size(), 3u);
  EXPECT_EQ(j["best_epoch"].get<std::size_t>(), summary.best_epoch);

  rc.set("checkpoint", summary.checkpoint.string());
  auto r = run_evaluate(rc);
  EXPECT_DOUBLE_EQ(r.hr, summary.test.hr);
  EXPECT_DOUBLE_EQ(r.ndcg, summary.test.ndcg);
  rc.set("n", "5");
  EXPECT_LE(run_evaluate(rc).hr, r.hr);

  // Reusing the saved FISM embeddings skips pre-training.
  RunConfig reuse = rc;
  reuse.set("pretrain", "false");
  reuse.set("pretrained", summary.pretrain_checkpoint->string());
  auto second = run_train(reuse, dir / "reuse");
  EXPECT_FALSE(second.pretrain_checkpoint.has_value());
}

TEST_F(PipelineTest, EvaluateBaselinesAndMismatch) {
  rc.set("baseline", "POP");
  auto pop = run_evaluate(rc);
  EXPECT_GT(pop.users, 0u);
  rc.set("split", "train");
  EXPECT_THROW(run_evaluate(rc), Error);

  // A checkpoint sized for a different catalogue.
  RunConfig other;
  auto c = to_model_config(rc);
  save_checkpoint(init_parameters(c, 3, 2, 1), c, dir / "tiny.bin");
  RunConfig ev = rc;
  ev.set("baseline", "");
  ev.set("split", "test");
  ev.set("checkpoint", (dir / "tiny.bin").string());
  try {
    run_evaluate(ev);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size_mismatch);
  }
}

TEST_F(PipelineTest, ExportAttentionIdentities) {
  const auto split = read_split(rc.get("data_dir"));
  const std::string user = split.train.users->raw(0);
  const auto& own = split.train.items_of(0);
  std::vector<std::string> targets;
  for (std::size_t i = 0; i < split.item_count() && targets.size() < 2; ++i) {
    if (std::find(own.begin(), own.end(), i) == own.end()) targets.push_back(split.train.items->raw(i));
  }
  ASSERT_EQ(targets.size(), 2u);
  rc.set("user", user);
  rc.set("targets", targets[0] + "," + targets[1]);
  rc.set("epochs", "1");

  for (auto design : {"1", "2"}) {
    RunConfig r = rc;
    r.set("design", design);
    r.set("beta", design == std::string("2") ? "1" : "0.7");
    const fs::path run = dir / ("d" + std::string(design));
    run_train(r, run);
    r.set("checkpoint", (run / "checkpoint.bin").string());
    r.set("out_dir", (run / "export").string());
    auto exports = run_export_attention(r);
    ASSERT_EQ(exports.size(), 2u);

    auto feat = read_csv(exports[0].files.back());
    ASSERT_EQ(feat.size(), own.size() + 1);
    EXPECT_EQ(feat[0][0], "history_item");
    EXPECT_EQ(feat[0].size(), 9u);
    if (design == std::string("1")) {
      auto item = read_csv(exports[0].files.front());
      ASSERT_EQ(item.size(), 2u);
      for (std::size_t j = 0; j < own.size(); ++j) {
        EXPECT_EQ(item[0][j], feat[j + 1][0]);
        double row = 0.0;
        for (std::size_t k = 1; k < feat[j + 1].size(); ++k) row += std::stod(feat[j + 1][k]);
        EXPECT_NEAR(row, std::stod(item[1][j]), 1e-12);
      }
    } else {
      EXPECT_EQ(exports[0].files.size(), 1u);
      for (std::size_t k = 1; k < 9; ++k) {
        double col = 0.0;
        for (std::size_t j = 1; j < feat.size(); ++j) col += std::stod(feat[j][k]);
        EXPECT_NEAR(col, 1.0, 1e-12);
      }
    }
    EXPECT_NE(slurp(exports[0].files.back()), slurp(exports[1].files.back()));
  }

  RunConfig fism = rc;
  fism.set("model", "FISM");
  run_train(fism, dir / "fism");
  fism.set("checkpoint", (dir / "fism" / "checkpoint.bin").string());
  EXPECT_THROW(run_export_attention(fism), Error);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir;
  auto r = run_cli("train --no-such-flag 1", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error=usage", 0), 0u) << r.err;
  EXPECT_EQ(run_cli("", dir).code, 2);
}

TEST(Cli, InvalidConfigExitsOneWithErrorLine) {
  TempDir dir;
  auto r = run_cli("train --beta 1.5 --data_dir " + (dir / "missing").string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error=invalid_argument", 0), 0u) << r.err;
  auto io = run_cli("evaluate --baseline POP --data_dir " + (dir / "missing").string(), dir);
  EXPECT_EQ(io.code, 1);
  EXPECT_EQ(io.err.rfind("error=io", 0), 0u) << io.err;
}

TEST(Cli, EndToEnd) {
  TempDir dir;
  flaicf::testing::SyntheticSpec spec;
  spec.users = 60;
  spec.items = 40;
  flaicf::testing::write_synthetic_csv(spec, dir / "raw.csv");
  const std::string data = " --data_dir " + (dir / "data").string();
  auto prep = run_cli("prepare --raw " + (dir / "raw.csv").string() + data, dir);
  ASSERT_EQ(prep.code, 0) << prep.err;
  EXPECT_EQ(prep.out.rfind("users=", 0), 0u);

  auto train = run_cli("train --model NAIS --d 8 --epochs 2 --beta 0.5,1 --out_dir " +
                           (dir / "runs").string() + data,
                       dir);
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_TRUE(fs::exists(dir / "runs" / "beta=0.5" / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir / "runs" / "beta=1" / "checkpoint.bin"));

  auto ev = run_cli("evaluate --checkpoint " + (dir / "runs" / "beta=1" / "checkpoint.bin").string() +
                        data,
                    dir);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out.rfind("model=NAIS split=test hr@10=", 0), 0u) << ev.out;
}

TEST(Cli, GradcheckPassesAndFailsAtImpossibleTolerance) {
  TempDir dir;
  auto ok = run_cli("gradcheck --model FISM,NAIS --design 1 --mode PROD", dir);
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("result=PASS"), std::string::npos);
  auto bad = run_cli("gradcheck --model NAIS --design 1 --mode PROD --tolerance 1e-12", dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("result=FAIL"), std::string::npos);
  EXPECT_EQ(bad.err.rfind("error=gradcheck_failed", 0), 0u) << bad.err;
}
