#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "flaicf/flaicf.hpp"
#include "support/datasets.hpp"
#include "support/tempdir.hpp"

using namespace flaicf;
using flaicf::testing::TempDir;

namespace {

InteractionDataset parse_text(const std::string& text, InteractionFormat format,
                              std::size_t skip = 0) {
  std::istringstream in(text);
  ParseOptions o;
  o.format = format;
  o.skip_lines = skip;
  return parse_interactions(in, o);
}

ErrorKind error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::invalid_argument;
}

InteractionDataset random_bipartite(std::size_t users, std::size_t items, double p,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p);
  flaicf::testing::Pairs pairs;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      if (edge(rng)) pairs.emplace_back(u, i);
    }
    if (pairs.empty() || pairs.back().first != u) pairs.emplace_back(u, u % items);
  }
  return flaicf::testing::dataset(users, items, pairs);
}

}  // namespace

TEST(Parse, MovielensExample) {
  auto ds = parse_text("u1::i1::5::100\nu1::i2::3::101\nu2::i1::4::102\n",
                       InteractionFormat::movielens_dat);
  EXPECT_EQ(ds.user_count(), 2u);
  EXPECT_EQ(ds.item_count(), 2u);
  EXPECT_EQ(ds.interaction_count(), 3u);
  EXPECT_EQ(ds.users->raw(0), "u1");
  EXPECT_EQ(ds.items->raw(1), "i2");
}

TEST(Parse, DuplicatesCollapse) {
  auto ds = parse_text("u1,i1,5\nu1,i1,3\n", InteractionFormat::csv);
  EXPECT_EQ(ds.interaction_count(), 1u);
}

TEST(Parse, FirstAppearanceVocabulary) {
  auto ds = parse_text("b\tz\na\ty\nb\tx\n", InteractionFormat::tsv);
  EXPECT_EQ(ds.users->raw(0), "b");
  EXPECT_EQ(ds.users->raw(1), "a");
  EXPECT_EQ(ds.items->raw(0), "z");
  EXPECT_EQ(ds.items->raw(2), "x");
  EXPECT_EQ(ds.user_items[0], (std::vector<std::size_t>{0, 2}));
}

TEST(Parse, HeaderColumnsAndDelimiter) {
  std::istringstream in("item;rating;user\ni9;4;alice\ni8;1;bob\n");
  ParseOptions o;
  o.format = InteractionFormat::csv;
  o.delimiter = ";";
  o.user_column = 2;
  o.item_column = 0;
  o.skip_lines = 1;
  auto ds = parse_interactions(in, o);
  EXPECT_EQ(ds.users->raw(0), "alice");
  EXPECT_EQ(ds.items->raw(1), "i8");
  EXPECT_EQ(ds.interaction_count(), 2u);
}

TEST(Parse, MalformedLineNamesLineNumber) {
  try {
    parse_text("u1,i1\nu2,i2\nbroken\n", InteractionFormat::csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Parse, EmptyInputRejected) {
  EXPECT_EQ(error_of([] { parse_text("", InteractionFormat::csv); }), ErrorKind::empty_dataset);
  EXPECT_EQ(error_of([] { parse_text("\n\n", InteractionFormat::csv); }), ErrorKind::empty_dataset);
  EXPECT_EQ(error_of([] { parse_interactions(std::filesystem::path("/no/such/file"), {}); }),
            ErrorKind::io);
  EXPECT_THROW(parse_interaction_format("JSON"), Error);
}

TEST(KCore, FixedPointUnchanged) {
  auto ds = parse_text("a,x\na,y\nb,x\nb,y\n", InteractionFormat::csv);
  auto f = k_core_filter(ds, 2, 2);
  EXPECT_EQ(f.user_count(), 2u);
  EXPECT_EQ(f.item_count(), 2u);
  EXPECT_EQ(f.interaction_count(), 4u);
}

TEST(KCore, ChainCollapsesToEmpty) {
  auto ds = parse_text("u1,i1\nu1,i2\nu2,i2\n", InteractionFormat::csv);
  EXPECT_EQ(error_of([&] { k_core_filter(ds, 2, 2); }), ErrorKind::empty_dataset);
}

TEST(KCore, SurvivorsMeetThresholdAndAreAFixedPoint) {
  auto ds = random_bipartite(120, 90, 0.04, 1);
  auto f = k_core_filter(ds, 3, 3);
  ASSERT_GT(f.interaction_count(), 0u);
  for (std::size_t u = 0; u < f.user_count(); ++u) EXPECT_GE(f.items_of(u).size(), 3u);
  for (auto d : f.item_degrees()) EXPECT_GE(d, 3u);
  auto again = k_core_filter(f, 3, 3);
  EXPECT_EQ(again.user_items, f.user_items);
  EXPECT_TRUE(*again.items == *f.items);
}

TEST(KCore, IterativePruningOracle) {
  // Naive oracle: delete one offending node at a time until none remain.
  auto ds = random_bipartite(60, 50, 0.09, 2);
  std::set<std::pair<std::string, std::string>> edges;
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    for (auto i : ds.items_of(u)) edges.emplace(ds.users->raw(u), ds.items->raw(i));
  }
  for (bool changed = true; changed;) {
    changed = false;
    std::map<std::string, int> du, di;
    for (const auto& [u, i] : edges) {
      ++du[u];
      ++di[i];
    }
    for (auto it = edges.begin(); it != edges.end();) {
      if (du[it->first] < 4 || di[it->second] < 3) {
        it = edges.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  ASSERT_FALSE(edges.empty());
  auto f = k_core_filter(ds, 4, 3);
  std::set<std::pair<std::string, std::string>> got;
  for (std::size_t u = 0; u < f.user_count(); ++u) {
    for (auto i : f.items_of(u)) got.emplace(f.users->raw(u), f.items->raw(i));
  }
  EXPECT_EQ(got, edges);
}

TEST(Split, TenItems) {
  flaicf::testing::Pairs pairs;
  for (std::size_t i = 0; i < 10; ++i) pairs.emplace_back(0, i);
  auto s = split_per_user(flaicf::testing::dataset(1, 10, pairs), {0.7, 0.1, 0.2}, 3);
  EXPECT_EQ(s.train.items_of(0).size(), 7u);
  EXPECT_EQ(s.validation.items_of(0).size(), 1u);
  EXPECT_EQ(s.test.items_of(0).size(), 2u);
}

TEST(Split, TinyUsersKeepOneTrainingItem) {
  auto s = split_per_user(flaicf::testing::dataset(2, 3, {{0, 0}, {0, 1}, {1, 2}}), {0.7, 0.1, 0.2}, 1);
  EXPECT_EQ(s.train.items_of(0).size(), 1u);
  EXPECT_EQ(s.validation.items_of(0).size(), 0u);
  EXPECT_EQ(s.test.items_of(0).size(), 1u);
  EXPECT_EQ(s.train.items_of(1).size(), 1u);
  EXPECT_EQ(s.test.items_of(1).size(), 0u);
}

TEST(Split, IsAPartitionAndDeterministic) {
  auto ds = random_bipartite(200, 80, 0.08, 4);
  auto s = split_per_user(ds, {0.7, 0.1, 0.2}, 9);
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    std::multiset<std::size_t> all;
    for (auto* part : {&s.train, &s.validation, &s.test}) {
      for (auto i : part->items_of(u)) all.insert(i);
    }
    std::multiset<std::size_t> want(ds.items_of(u).begin(), ds.items_of(u).end());
    EXPECT_EQ(all, want);  // multiset equality also rules out overlap
    EXPECT_GE(s.train.items_of(u).size(), 1u);
  }
  auto t = split_per_user(ds, {0.7, 0.1, 0.2}, 9);
  EXPECT_EQ(t.train.user_items, s.train.user_items);
  EXPECT_EQ(t.test.user_items, s.test.user_items);
  auto other = split_per_user(ds, {0.7, 0.1, 0.2}, 10);
  EXPECT_NE(other.train.user_items, s.train.user_items);
  EXPECT_EQ(merge_split(s).user_items, ds.user_items);
}

TEST(Split, RejectsBadRatios) {
  auto ds = random_bipartite(5, 5, 0.5, 5);
  EXPECT_THROW(split_per_user(ds, {0.5, 0.1, 0.2}), Error);
  EXPECT_THROW(split_per_user(ds, {0.9, 0.1, 0.0}), Error);
}

TEST(Stats, SparsityFormula) {
  auto ds = flaicf::testing::dataset(2, 2, {{0, 0}, {1, 1}});
  auto st = dataset_stats(ds);
  EXPECT_EQ(st.users, 2u);
  EXPECT_EQ(st.items, 2u);
  EXPECT_EQ(st.interactions, 2u);
  EXPECT_DOUBLE_EQ(st.sparsity, 0.5);
  EXPECT_EQ(format_stats_line(st), "users=2 items=2 interactions=2 sparsity=50.00%");
}

TEST(SplitFiles, RoundTrip) {
  TempDir dir;
  auto ds = parse_text("alice,x 1\nbob,y\nalice,z\ncarol,x 1\nbob,x 1\ncarol,z\n",
                       InteractionFormat::csv);
  auto s = split_per_user(ds, {0.7, 0.1, 0.2}, 2);
  write_split(s, dir.path());
  for (const char* f : {"train.txt", "valid.txt", "test.txt", "user_vocab.txt", "item_vocab.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  auto r = read_split(dir.path());
  EXPECT_TRUE(*r.train.users == *s.train.users);
  EXPECT_TRUE(*r.train.items == *s.train.items);
  EXPECT_EQ(r.train.user_items, s.train.user_items);
  EXPECT_EQ(r.validation.user_items, s.validation.user_items);
  EXPECT_EQ(r.test.user_items, s.test.user_items);
  EXPECT_EQ(r.train.items->raw(0), "x 1");
}

TEST(SplitFiles, CorruptPairIsParseError) {
  TempDir dir;
  auto s = split_per_user(flaicf::testing::dataset(2, 2, {{0, 0}, {1, 1}}), {0.7, 0.1, 0.2}, 1);
  write_split(s, dir.path());
  std::ofstream(dir / "test.txt") << "0\t7\n";
  EXPECT_EQ(error_of([&] { read_split(dir.path()); }), ErrorKind::parse);
  EXPECT_EQ(error_of([] { read_split("/no/such/dir"); }), ErrorKind::io);
}
