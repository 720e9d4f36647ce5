#pragma once

// Checkpoint layout:
//
//   FLAICF v1 <KIND> d=<d> dp=<d'> beta=<beta> items=<n> users=<m> design=<D>
//     mode=<M> alpha=<alpha> layers=<l1,l2,...|-> bytes=<body size>\n
//   <body>
//
// The header is a single text line. The body is every nonempty parameter array
// in for_each_array order (P, Q, W, b, H, h, deep_W0, deep_b0, ..., V,
// user_bias, item_bias), row-major, as 64-bit IEEE-754 little-endian doubles.
// Reals in the header are printed with 17 significant digits so they round-trip.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "flaicf/config.hpp"
#include "flaicf/error.hpp"
#include "flaicf/parameters.hpp"

namespace flaicf {

inline constexpr std::string_view kCheckpointMagic = "FLAICF";
inline constexpr std::string_view kCheckpointVersion = "v1";

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::size_t parse_size(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-') {
    fail(ErrorKind::format, "checkpoint header: bad integer for " + key + ": '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

inline double parse_real(const std::string& s, const std::string& key) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    fail(ErrorKind::format, "checkpoint header: bad real for " + key + ": '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline std::string checkpoint_header(const ParameterSet& params, const ModelConfig& config) {
  std::ostringstream os;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << ' ' << to_string(config.kind)
     << " d=" << config.d << " dp=" << config.d_prime
     << " beta=" << detail::format_real(config.beta) << " items=" << params.item_count()
     << " users=" << params.user_count() << " design=" << to_string(config.design)
     << " mode=" << to_string(config.attention_mode)
     << " alpha=" << detail::format_real(config.alpha)
     << " layers=" << detail::join_sizes(config.deep_layers)
     << " bytes=" << total_size(params) * sizeof(double);
  return os.str();
}

inline void save_checkpoint(const ParameterSet& params, const ModelConfig& config,
                            const std::filesystem::path& path) {
  config.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open checkpoint for writing: " + path.string());
  out << checkpoint_header(params, config) << '\n';
  for_each_array(params, [&](const std::string&, std::span<const double> a) {
    for (double v : a) {
      std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  });
  if (!out) fail(ErrorKind::io, "failed writing checkpoint: " + path.string());
}

struct LoadedCheckpoint {
  ParameterSet params;
  ModelConfig config;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto newline = bytes.find('\n');
  if (newline == std::string::npos) fail(ErrorKind::format, "checkpoint has no header line");
  std::istringstream header(bytes.substr(0, newline));

  std::string magic, version, kind;
  header >> magic >> version >> kind;
  if (magic != kCheckpointMagic) {
    fail(ErrorKind::format, "not a checkpoint (bad magic '" + magic + "')");
  }
  if (version != kCheckpointVersion) {
    fail(ErrorKind::version, "unsupported checkpoint version '" + version + "'");
  }

  std::map<std::string, std::string> fields;
  for (std::string tok; header >> tok;) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorKind::format, "checkpoint header token '" + tok + "'");
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) fail(ErrorKind::format, "checkpoint header lacks '" + key + "'");
    return it->second;
  };

  ModelConfig config;
  try {
    config.kind = parse_model_kind(kind);
    config.design = parse_design(field("design"));
    config.attention_mode = parse_attention_mode(field("mode"));
  } catch (const Error& e) {
    fail(ErrorKind::format, std::string("checkpoint header: ") + e.what());
  }
  config.d = detail::parse_size(field("d"), "d");
  config.d_prime = detail::parse_size(field("dp"), "dp");
  config.beta = detail::parse_real(field("beta"), "beta");
  config.alpha = detail::parse_real(field("alpha"), "alpha");
  if (field("layers") != "-") {
    std::stringstream ls(field("layers"));
    for (std::string part; std::getline(ls, part, ',');) {
      config.deep_layers.push_back(detail::parse_size(part, "layers"));
    }
  }
  try {
    config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::format, std::string("checkpoint header: ") + e.what());
  }
  std::size_t items = detail::parse_size(field("items"), "items");
  std::size_t users = detail::parse_size(field("users"), "users");
  std::size_t declared = detail::parse_size(field("bytes"), "bytes");

  ParameterSet params = zero_parameters(config, items, users);
  std::size_t expected = total_size(params) * sizeof(double);
  std::size_t available = bytes.size() - newline - 1;
  if (declared != expected) {
    fail(ErrorKind::size_mismatch,
         "checkpoint header dimensions need " + std::to_string(expected) +
             " body bytes but the body is declared as " + std::to_string(declared));
  }
  if (available < declared) {
    fail(ErrorKind::truncated, "checkpoint body truncated: " + std::to_string(available) +
                                   " of " + std::to_string(declared) + " bytes");
  }
  if (available > declared) {
    fail(ErrorKind::size_mismatch, "checkpoint body has " +
                                       std::to_string(available - declared) +
                                       " trailing bytes");
  }

  const char* cursor = bytes.data() + newline + 1;
  for_each_array(params, [&](const std::string&, std::span<double> a) {
    for (double& v : a) {
      std::uint64_t bits;
      std::memcpy(&bits, cursor, sizeof bits);
      cursor += sizeof bits;
      v = std::bit_cast<double>(detail::to_little_endian(bits));
    }
  });
  return {std::move(params), std::move(config)};
}

}  // namespace flaicf
