#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "flaicf/flaicf.hpp"
#include "support/tempdir.hpp"

using namespace flaicf;
using flaicf::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

ErrorKind load_error(const std::filesystem::path& p) {
  try {
    load_checkpoint(p);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load_checkpoint did not throw";
  return ErrorKind::invalid_argument;
}

}  // namespace

TEST(ModelConfig, Defaults) {
  auto c = ModelConfig::make(ModelKind::deepicf, 16);
  EXPECT_EQ(c.d_prime, 16u);
  EXPECT_DOUBLE_EQ(c.beta, 0.7);
  EXPECT_EQ(c.deep_layers, (std::vector<std::size_t>{16, 8}));
  EXPECT_NO_THROW(c.validate());
  EXPECT_TRUE(ModelConfig::make(ModelKind::nais, 8).deep_layers.empty());
}

TEST(ModelConfig, RejectsOutOfRange) {
  auto c = ModelConfig::make(ModelKind::fla_nais, 8);
  c.beta = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig::make(ModelKind::fism, 8);
  c.alpha = -0.1;
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig::make(ModelKind::fla_nais, 8);
  c.attention_mode = AttentionMode::concat;
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig::make(ModelKind::deepicf, 8);
  c.deep_layers.clear();
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig::make(ModelKind::nais, 0);
  EXPECT_THROW(c.validate(), Error);
}

TEST(ModelConfig, EnumNamesRoundTrip) {
  for (auto k : {ModelKind::fism, ModelKind::nais, ModelKind::fla_nais, ModelKind::deepicf,
                 ModelKind::fla_dicf}) {
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_design("1"), Design::design1);
  EXPECT_EQ(parse_design("DESIGN2"), Design::design2);
  EXPECT_EQ(parse_attention_mode("CONCAT"), AttentionMode::concat);
  EXPECT_THROW(parse_model_kind("BPR"), Error);
}

TEST(Parameters, ShapesFollowConfig) {
  auto c = ModelConfig::make(ModelKind::nais, 4);
  c.d_prime = 3;
  c.attention_mode = AttentionMode::concat;
  auto ps = zero_parameters(c, 10, 5);
  EXPECT_EQ(ps.P.rows(), 10u);
  EXPECT_EQ(ps.Q.cols(), 4u);
  EXPECT_EQ(ps.W.rows(), 3u);
  EXPECT_EQ(ps.W.cols(), 8u);
  EXPECT_EQ(ps.h.size(), 3u);
  EXPECT_TRUE(ps.H.empty());
  EXPECT_TRUE(ps.V.empty());

  auto deep = zero_parameters(ModelConfig::make(ModelKind::fla_dicf, 8), 10, 5);
  ASSERT_EQ(deep.deep_W.size(), 2u);
  EXPECT_EQ(deep.deep_W[0].rows(), 8u);
  EXPECT_EQ(deep.deep_W[1].rows(), 4u);
  EXPECT_EQ(deep.deep_W[1].cols(), 8u);
  EXPECT_EQ(deep.V.size(), 4u);
  EXPECT_EQ(deep.user_bias.size(), 5u);
  EXPECT_EQ(deep.item_bias.size(), 10u);
  EXPECT_EQ(deep.H.rows(), 8u);
  // Design 2 never uses the item-level output weights.
  EXPECT_TRUE(deep.h.empty());
}

TEST(Parameters, InitIsDeterministic) {
  auto c = ModelConfig::make(ModelKind::fla_dicf, 8);
  auto a = init_parameters(c, 30, 7, 7);
  auto b = init_parameters(c, 30, 7, 7);
  EXPECT_TRUE(a == b);
  auto other = init_parameters(c, 30, 7, 8);
  EXPECT_FALSE(a == other);
}

TEST(Parameters, InitStatistics) {
  auto c = ModelConfig::make(ModelKind::fla_nais, 16);
  auto ps = init_parameters(c, 625, 3, 11);  // P alone has 10^4 entries
  double sum = 0.0, sq = 0.0;
  const auto p = ps.P.flat();
  ASSERT_EQ(p.size(), 10000u);
  for (double v : p) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(p.size());
  const double mean = sum / n;
  const double std = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.001);
  EXPECT_NEAR(std, 0.01, 0.001);
  for (double v : ps.b) EXPECT_EQ(v, 0.0);
}

TEST(Parameters, PretrainedEmbeddingsAreCopied) {
  auto c = ModelConfig::make(ModelKind::nais, 4);
  Embeddings e{Matrix(6, 4), Matrix(6, 4)};
  for (std::size_t n = 0; n < 24; ++n) {
    e.P.flat()[n] = 0.5 + static_cast<double>(n);
    e.Q.flat()[n] = -static_cast<double>(n);
  }
  auto ps = init_parameters(c, 6, 2, 3, e);
  EXPECT_TRUE(ps.P == e.P);
  EXPECT_TRUE(ps.Q == e.Q);
  // Other arrays are still drawn from the seed.
  auto fresh = init_parameters(c, 6, 2, 3);
  EXPECT_TRUE(ps.W == fresh.W);
}

TEST(Parameters, PretrainedShapeMismatchNamesShapes) {
  auto c = ModelConfig::make(ModelKind::nais, 4);
  Embeddings e{Matrix(6, 8), Matrix(6, 4)};
  try {
    init_parameters(c, 6, 2, 3, e);
    FAIL() << "expected a shape mismatch";
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::shape_mismatch);
    std::string msg = err.what();
    EXPECT_NE(msg.find("6x8"), std::string::npos) << msg;
    EXPECT_NE(msg.find("6x4"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  for (auto kind : {ModelKind::fism, ModelKind::nais, ModelKind::fla_nais, ModelKind::deepicf,
                    ModelKind::fla_dicf}) {
    auto c = ModelConfig::make(kind, 16);
    c.beta = 0.3;
    c.alpha = 0.1;  // not exactly representable
    if (kind == ModelKind::fla_nais) c.design = Design::design1;
    auto ps = init_parameters(c, 20, 9, 5);
    ps.P(0, 0) = -0.0;
    ps.Q(1, 1) = 1e-310;  // subnormal
    auto path = dir / "ck.bin";
    save_checkpoint(ps, c, path);
    auto loaded = load_checkpoint(path);
    EXPECT_TRUE(loaded.config == c) << to_string(kind);
    EXPECT_TRUE(loaded.params == ps) << to_string(kind);
    EXPECT_TRUE(std::signbit(loaded.params.P(0, 0)));
    EXPECT_EQ(loaded.params.user_count(), 9u);
  }
}

TEST(Checkpoint, HeaderLine) {
  auto c = ModelConfig::make(ModelKind::fla_nais, 16);
  auto ps = zero_parameters(c, 3, 2);
  auto h = checkpoint_header(ps, c);
  EXPECT_EQ(h.rfind("FLAICF v1 FLA_NAIS d=16 dp=16 beta=0.69999999999999996 items=3 users=2 ", 0),
            0u)
      << h;
}

TEST(Checkpoint, BadMagicIsFormatError) {
  TempDir dir;
  auto c = ModelConfig::make(ModelKind::nais, 4);
  save_checkpoint(init_parameters(c, 5, 2, 1), c, dir / "ck.bin");
  auto s = slurp(dir / "ck.bin");
  s[0] = 'X';
  spit(dir / "ck.bin", s);
  EXPECT_EQ(load_error(dir / "ck.bin"), ErrorKind::format);
  spit(dir / "empty.bin", "");
  EXPECT_EQ(load_error(dir / "empty.bin"), ErrorKind::format);
}

TEST(Checkpoint, VersionMismatch) {
  TempDir dir;
  auto c = ModelConfig::make(ModelKind::nais, 4);
  save_checkpoint(init_parameters(c, 5, 2, 1), c, dir / "ck.bin");
  auto s = slurp(dir / "ck.bin");
  s.replace(s.find("v1"), 2, "v9");
  spit(dir / "ck.bin", s);
  EXPECT_EQ(load_error(dir / "ck.bin"), ErrorKind::version);
}

TEST(Checkpoint, TruncatedBody) {
  TempDir dir;
  auto c = ModelConfig::make(ModelKind::fla_nais, 8);
  save_checkpoint(init_parameters(c, 5, 2, 1), c, dir / "ck.bin");
  auto s = slurp(dir / "ck.bin");
  spit(dir / "ck.bin", s.substr(0, s.size() - 12));
  EXPECT_EQ(load_error(dir / "ck.bin"), ErrorKind::truncated);
}

TEST(Checkpoint, HeaderBodyDisagreement) {
  TempDir dir;
  auto c = ModelConfig::make(ModelKind::fla_nais, 8);
  save_checkpoint(init_parameters(c, 5, 2, 1), c, dir / "ck.bin");
  auto s = slurp(dir / "ck.bin");
  // Claim d=16 while the body holds d=8 arrays.
  s.replace(s.find(" d=8 dp=8 "), 10, " d=16 dp=16 ");
  spit(dir / "ck.bin", s);
  EXPECT_EQ(load_error(dir / "ck.bin"), ErrorKind::size_mismatch);

  save_checkpoint(init_parameters(c, 5, 2, 1), c, dir / "ok.bin");
  spit(dir / "ok.bin", slurp(dir / "ok.bin") + "extra!!!");
  EXPECT_EQ(load_error(dir / "ok.bin"), ErrorKind::size_mismatch);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_EQ(load_error("/nonexistent/dir/ck.bin"), ErrorKind::io);
}
