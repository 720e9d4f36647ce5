#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flaicf/error.hpp"

namespace flaicf {

// Raw id <-> dense index, indices assigned in first-appearance order.
class Vocabulary {
 public:
  std::size_t add(const std::string& raw) {
    auto [it, inserted] = index_.try_emplace(raw, raw_.size());
    if (inserted) raw_.push_back(raw);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& raw) const {
    auto it = index_.find(raw);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t at(const std::string& raw) const {
    auto idx = find(raw);
    if (!idx) fail(ErrorKind::invalid_argument, "unknown id '" + raw + "'");
    return *idx;
  }

  const std::string& raw(std::size_t index) const { return raw_.at(index); }
  std::size_t size() const { return raw_.size(); }

  bool operator==(const Vocabulary& o) const { return raw_ == o.raw_; }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-user sorted item lists over dense indices. Split views share the
// vocabularies of the dataset they were cut from.
struct InteractionDataset {
  std::shared_ptr<const Vocabulary> users;
  std::shared_ptr<const Vocabulary> items;
  std::vector<std::vector<std::size_t>> user_items;

  std::size_t user_count() const { return users ? users->size() : 0; }
  std::size_t item_count() const { return items ? items->size() : 0; }

  std::size_t interaction_count() const {
    std::size_t n = 0;
    for (const auto& v : user_items) n += v.size();
    return n;
  }

  std::span<const std::size_t> items_of(std::size_t user) const { return user_items[user]; }

  bool contains(std::size_t user, std::size_t item) const {
    const auto& v = user_items[user];
    return std::binary_search(v.begin(), v.end(), item);
  }

  std::vector<std::size_t> item_degrees() const {
    std::vector<std::size_t> deg(item_count(), 0);
    for (const auto& v : user_items) {
      for (auto i : v) ++deg[i];
    }
    return deg;
  }
};

struct SplitDataset {
  InteractionDataset train;
  InteractionDataset validation;
  InteractionDataset test;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  std::uint64_t seed = 0;

  std::size_t user_count() const { return train.user_count(); }
  std::size_t item_count() const { return train.item_count(); }
};

enum class InteractionFormat { movielens_dat, csv, tsv };

inline InteractionFormat parse_interaction_format(std::string_view s) {
  if (s == "MOVIELENS_DAT") return InteractionFormat::movielens_dat;
  if (s == "CSV") return InteractionFormat::csv;
  if (s == "TSV") return InteractionFormat::tsv;
  fail(ErrorKind::invalid_argument, "unknown interaction format '" + std::string(s) + "'");
}

struct ParseOptions {
  InteractionFormat format = InteractionFormat::csv;
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t skip_lines = 0;         // header lines
  std::optional<std::string> delimiter;  // overrides the format's delimiter
};

namespace detail {

inline std::string_view default_delimiter(InteractionFormat f) {
  switch (f) {
    case InteractionFormat::movielens_dat: return "::";
    case InteractionFormat::csv: return ",";
    case InteractionFormat::tsv: return "\t";
  }
  return ",";
}

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline void normalize(InteractionDataset& ds) {
  for (auto& v : ds.user_items) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

}  // namespace detail

// Every record is an implicit positive; ratings, timestamps and any other
// columns are ignored. Duplicate (user, item) pairs collapse.
inline InteractionDataset parse_interactions(std::istream& in, const ParseOptions& options) {
  const std::string delim = options.delimiter.value_or(std::string(detail::default_delimiter(options.format)));
  require(!delim.empty(), "empty delimiter");
  const std::size_t needed = std::max(options.user_column, options.item_column) + 1;

  auto users = std::make_shared<Vocabulary>();
  auto items = std::make_shared<Vocabulary>();
  InteractionDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no <= options.skip_lines) continue;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    auto fields = detail::split_fields(view, delim);
    if (fields.size() < needed) {
      fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected at least " +
                                 std::to_string(needed) + " fields, found " +
                                 std::to_string(fields.size()));
    }
    auto u = detail::trim(fields[options.user_column]);
    auto i = detail::trim(fields[options.item_column]);
    if (u.empty() || i.empty()) {
      fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": empty user or item id");
    }
    std::size_t ui = users->add(std::string(u));
    std::size_t ii = items->add(std::string(i));
    if (ui >= ds.user_items.size()) ds.user_items.resize(ui + 1);
    ds.user_items[ui].push_back(ii);
  }
  if (users->size() == 0) fail(ErrorKind::empty_dataset, "no interactions found");
  ds.users = std::move(users);
  ds.items = std::move(items);
  detail::normalize(ds);
  return ds;
}

inline InteractionDataset parse_interactions(const std::filesystem::path& path,
                                             const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return parse_interactions(in, options);
}

// Repeatedly drops users with fewer than k_user items and items with fewer
// than k_item users until nothing changes, then re-densifies both vocabularies
// (surviving ids keep their relative order).
inline InteractionDataset k_core_filter(const InteractionDataset& ds, std::size_t k_user,
                                        std::size_t k_item) {
  require(k_user >= 1 && k_item >= 1, "k-core thresholds must be >= 1");
  std::vector<std::vector<std::size_t>> lists = ds.user_items;
  std::vector<bool> item_alive(ds.item_count(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> deg(ds.item_count(), 0);
    for (auto& v : lists) {
      if (v.size() < k_user) {
        if (!v.empty()) changed = true;
        v.clear();
      }
      for (auto i : v) ++deg[i];
    }
    for (std::size_t i = 0; i < deg.size(); ++i) {
      if (item_alive[i] && deg[i] < k_item) {
        item_alive[i] = false;
        changed = changed || deg[i] > 0;
      }
    }
    for (auto& v : lists) {
      auto end = std::remove_if(v.begin(), v.end(), [&](std::size_t i) { return !item_alive[i]; });
      if (end != v.end()) {
        changed = true;
        v.erase(end, v.end());
      }
    }
  }

  auto users = std::make_shared<Vocabulary>();
  auto items = std::make_shared<Vocabulary>();
  std::vector<std::size_t> item_map(ds.item_count(), SIZE_MAX);
  // Keep the original first-appearance order for items.
  std::vector<bool> used(ds.item_count(), false);
  for (const auto& v : lists) {
    for (auto i : v) used[i] = true;
  }
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i]) item_map[i] = items->add(ds.items->raw(i));
  }
  InteractionDataset out;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    if (lists[u].empty()) continue;
    users->add(ds.users->raw(u));
    std::vector<std::size_t> mapped;
    mapped.reserve(lists[u].size());
    for (auto i : lists[u]) mapped.push_back(item_map[i]);
    out.user_items.push_back(std::move(mapped));
  }
  if (users->size() == 0) {
    fail(ErrorKind::empty_dataset, "k-core filter (k_user=" + std::to_string(k_user) +
                                       ", k_item=" + std::to_string(k_item) +
                                       ") removed every interaction");
  }
  out.users = std::move(users);
  out.items = std::move(items);
  detail::normalize(out);
  return out;
}

// Shuffles each user's items with one seeded generator (users in index order)
// and cuts at round(r0 n) and round((r0 + r1) n). Users with fewer than three
// items keep one training item and put the rest in test.
inline SplitDataset split_per_user(const InteractionDataset& ds,
                                   std::array<double, 3> ratios = {0.7, 0.1, 0.2},
                                   std::uint64_t seed = 0) {
  for (double r : ratios) require(r > 0.0, "split ratios must be positive");
  require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9, "split ratios must sum to 1");

  SplitDataset split;
  split.ratios = ratios;
  split.seed = seed;
  for (auto* part : {&split.train, &split.validation, &split.test}) {
    part->users = ds.users;
    part->items = ds.items;
    part->user_items.resize(ds.user_count());
  }

  std::mt19937_64 rng(seed);
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    std::vector<std::size_t> items = ds.user_items[u];
    std::shuffle(items.begin(), items.end(), rng);
    const std::size_t n = items.size();
    std::size_t n_train = 0, n_train_valid = 0;
    if (n < 3) {
      n_train = n_train_valid = std::min<std::size_t>(1, n);
    } else {
      n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
      n_train_valid =
          static_cast<std::size_t>(std::llround((ratios[0] + ratios[1]) * static_cast<double>(n)));
      n_train = std::clamp<std::size_t>(n_train, 1, n);
      n_train_valid = std::clamp(n_train_valid, n_train, n);
    }
    split.train.user_items[u].assign(items.begin(), items.begin() + n_train);
    split.validation.user_items[u].assign(items.begin() + n_train, items.begin() + n_train_valid);
    split.test.user_items[u].assign(items.begin() + n_train_valid, items.end());
  }
  detail::normalize(split.train);
  detail::normalize(split.validation);
  detail::normalize(split.test);
  return split;
}

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double sparsity = 0.0;  // 1 - interactions / (users * items)
};

inline DatasetStats dataset_stats(const InteractionDataset& ds) {
  require(ds.user_count() > 0 && ds.item_count() > 0, "dataset_stats: empty dataset",
          ErrorKind::empty_dataset);
  DatasetStats s;
  s.users = ds.user_count();
  s.items = ds.item_count();
  s.interactions = ds.interaction_count();
  s.sparsity = 1.0 - static_cast<double>(s.interactions) /
                         (static_cast<double>(s.users) * static_cast<double>(s.items));
  return s;
}

// Union of the three parts of a split.
inline InteractionDataset merge_split(const SplitDataset& split) {
  InteractionDataset out;
  out.users = split.train.users;
  out.items = split.train.items;
  out.user_items.resize(split.user_count());
  for (std::size_t u = 0; u < split.user_count(); ++u) {
    auto& v = out.user_items[u];
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
      v.insert(v.end(), part->user_items[u].begin(), part->user_items[u].end());
    }
  }
  detail::normalize(out);
  return out;
}

// Processed split on disk: train.txt / valid.txt / test.txt hold
// "<user>\t<item>" dense index pairs; user_vocab.txt / item_vocab.txt hold
// "<index>\t<raw id>".
inline void write_split(const SplitDataset& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + (dir / name).string());
    return out;
  };
  auto write_pairs = [&](const InteractionDataset& part, const char* name) {
    auto out = open(name);
    for (std::size_t u = 0; u < part.user_items.size(); ++u) {
      for (auto i : part.user_items[u]) out << u << '\t' << i << '\n';
    }
  };
  write_pairs(split.train, "train.txt");
  write_pairs(split.validation, "valid.txt");
  write_pairs(split.test, "test.txt");
  auto write_vocab = [&](const Vocabulary& v, const char* name) {
    auto out = open(name);
    for (std::size_t n = 0; n < v.size(); ++n) out << n << '\t' << v.raw(n) << '\n';
  };
  write_vocab(*split.train.users, "user_vocab.txt");
  write_vocab(*split.train.items, "item_vocab.txt");
}

inline SplitDataset read_split(const std::filesystem::path& dir) {
  auto read_vocab = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) fail(ErrorKind::io, "cannot open " + (dir / name).string());
    auto vocab = std::make_shared<Vocabulary>();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        fail(ErrorKind::parse, (dir / name).string() + " line " + std::to_string(line_no) +
                                   ": expected '<index>\\t<raw id>'");
      }
      std::string raw(detail::trim(std::string_view(line).substr(tab + 1)));
      if (vocab->add(raw) != static_cast<std::size_t>(std::stoull(line.substr(0, tab)))) {
        fail(ErrorKind::parse, (dir / name).string() + " line " + std::to_string(line_no) +
                                   ": indices must be dense and in order");
      }
    }
    return vocab;
  };
  std::shared_ptr<const Vocabulary> users = read_vocab("user_vocab.txt");
  std::shared_ptr<const Vocabulary> items = read_vocab("item_vocab.txt");

  auto read_pairs = [&](const char* name) {
    InteractionDataset part;
    part.users = users;
    part.items = items;
    part.user_items.resize(users->size());
    std::ifstream in(dir / name);
    if (!in) fail(ErrorKind::io, "cannot open " + (dir / name).string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      std::istringstream fields(line);
      long long u = -1, i = -1;
      if (!(fields >> u >> i) || u < 0 || i < 0 || static_cast<std::size_t>(u) >= users->size() ||
          static_cast<std::size_t>(i) >= items->size()) {
        fail(ErrorKind::parse, (dir / name).string() + " line " + std::to_string(line_no) +
                                   ": bad '<user>\\t<item>' pair");
      }
      part.user_items[u].push_back(static_cast<std::size_t>(i));
    }
    detail::normalize(part);
    return part;
  };
  SplitDataset split;
  split.train = read_pairs("train.txt");
  split.validation = read_pairs("valid.txt");
  split.test = read_pairs("test.txt");
  return split;
}

}  // namespace flaicf
