#pragma once

// Run configuration: `[section]` headers, `key = value` lines, `#` comments.
// Every subcommand has a full defaults table; a file may only override keys
// that appear in it. Keys written before any section header are resolved by
// name when the name is unique across sections.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"

namespace jiio {

class RunConfig {
 public:
  using Table = std::map<std::string, std::map<std::string, std::string>>;

  RunConfig() = default;
  explicit RunConfig(Table values) : values_(std::move(values)) {}

  bool has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
  }

  const std::string& str(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    if (s == values_.end() || !s->second.count(key))
      throw Error(ErrorCode::kMissingKey, "missing config key " + section + "." + key);
    return s->second.at(key);
  }

  double num(const std::string& section, const std::string& key) const {
    const std::string& v = str(section, key);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0')
      throw Error(ErrorCode::kInvalidArgument, section + "." + key + " = '" + v + "' is not a number");
    return d;
  }

  long long integer(const std::string& section, const std::string& key) const {
    const std::string& v = str(section, key);
    char* end = nullptr;
    const long long i = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0')
      throw Error(ErrorCode::kInvalidArgument, section + "." + key + " = '" + v + "' is not an integer");
    return i;
  }

  std::size_t count(const std::string& section, const std::string& key) const {
    const long long v = integer(section, key);
    require(v >= 0, ErrorCode::kInvalidArgument, section + "." + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  }

  void set(const std::string& section, const std::string& key, std::string value) {
    values_[section][key] = std::move(value);
  }

  const Table& table() const { return values_; }
  bool operator==(const RunConfig&) const = default;

  /// FNV-1a over the canonical "section.key=value" lines.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [s, kv] : values_)
      for (const auto& [k, v] : kv)
        for (char c : s + "." + k + "=" + v + "\n") {
          h ^= static_cast<unsigned char>(c);
          h *= 0x100000001b3ull;
        }
    return h;
  }

  std::string dump() const {
    std::string out;
    for (const auto& [s, kv] : values_) {
      out += "[" + s + "]\n";
      for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    }
    return out;
  }

 private:
  Table values_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"fit-gen",    "latent", "invprob",          "attack",
                                              "advtrain",   "meta",   "bench-solvers", "bench-efficiency",
                                              "gradcheck"};
  return names;
}

/// The documented defaults for one subcommand (see README).
inline RunConfig default_config(const std::string& subcommand) {
  RunConfig::Table t;
  t["run"] = {{"seed", "0"}, {"threads", "1"}};
  t["model"] = {{"activation", "tanh"}, {"state_dim", "24"}, {"input_dim", "8"},
                {"gamma", "0.9"},       {"input_scale", "1"}, {"bias_scale", "0.1"}};
  t["solver"] = {{"kind", "anderson"}, {"anderson_type", "I"}, {"max_iter", "40"}, {"eval_iter", "100"},
                 {"tol", "1e-8"},      {"memory", "20"},       {"beta", "1"},      {"select_c", "10"}};
  t["damping"] = {{"alpha_z", "0.8"}, {"alpha_mu", "0.6"}, {"alpha_x", "0.01"},
                  {"schedule_iter", "65"}, {"alpha_x_late", "0.003"}};
  t["data"] = {{"source", "synthetic"}, {"count", "64"}, {"holdout", "16"}, {"idx_images", ""},
               {"idx_labels", ""},       {"data_seed", "1"}};
  t["train"] = {{"steps", "50"}, {"batch", "8"}, {"lr", "0.003"}, {"lambda", "0.1"}, {"hutchinson_samples", "2"}};

  if (subcommand == "invprob") {
    t["inverse"] = {{"mode", "unsup"}, {"operator", "noisy"}, {"sigma", "0.2"}, {"window", "3"}};
  } else if (subcommand == "attack" || subcommand == "advtrain") {
    t["model"]["state_dim"] = "16";
    t["model"]["input_dim"] = "2";
    t["damping"]["alpha_x"] = "0.6";
    t["damping"]["alpha_x_late"] = "0.2";
    t["solver"]["max_iter"] = "80";
    t["data"]["count"] = "200";
    t["data"]["holdout"] = "100";
    t["train"]["lr"] = "0.01";
    t["train"]["batch"] = "16";
    t["train"]["steps"] = "150";
    t["attack"] = {{"eps", "0.3"}, {"pgd_steps", "20"}, {"pgd_step", "0"}, {"method", "jiio"}};
    if (subcommand == "advtrain") t["attack"]["adversary"] = "jiio";
  } else if (subcommand == "meta") {
    t["model"]["state_dim"] = "16";
    t["damping"]["alpha_x"] = "0.04";
    t["damping"]["alpha_x_late"] = "0.01";
    t["solver"]["max_iter"] = "100";
    t["data"]["count"] = "16";
    t["train"]["lr"] = "0.003";
    t["train"]["batch"] = "4";
    t["meta"] = {{"feature_dim", "4"}, {"task_dim", "2"}, {"support", "5"}, {"query", "10"}};
  } else if (subcommand == "bench-solvers") {
    t["bench"] = {{"dim", "20"}, {"radius", "0.9"}, {"max_iter", "300"}, {"tol", "1e-6"}};
  } else if (subcommand == "bench-efficiency") {
    t["model"]["activation"] = "tanh";
    t["solver"]["anderson_type"] = "II";
    t["solver"]["max_iter"] = "300";
    t["bench"] = {{"instances", "20"}, {"baseline_steps", "40"}, {"baseline_lr", "0.05"},
                  {"forward_tol", "1e-8"}, {"adjoint_tol", "1e-8"}};
  } else if (subcommand == "gradcheck") {
    t["model"]["state_dim"] = "6";
    t["model"]["input_dim"] = "3";
    t["damping"]["alpha_x"] = "0.1";
    t["solver"]["anderson_type"] = "II";
    t["solver"]["max_iter"] = "500";
    t["solver"]["tol"] = "1e-13";
    t["gradcheck"] = {{"instances", "4"}, {"output_dim", "5"}, {"fd_step", "1e-5"}};
  }
  return RunConfig(std::move(t));
}

/// Parses `text` on top of the subcommand defaults.
inline RunConfig parse_config_text(const std::string& text, const std::string& subcommand) {
  RunConfig cfg = default_config(subcommand);
  std::map<std::string, std::vector<std::string>> sections_of;
  for (const auto& [s, kv] : cfg.table())
    for (const auto& [k, v] : kv) sections_of[k].push_back(s);

  std::stringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || !detail::valid_name(detail::trim(line.substr(1, line.size() - 2))))
        throw ParseError(lineno, "malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!cfg.table().count(section)) throw Error(ErrorCode::kUnknownKey, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!detail::valid_name(key)) throw ParseError(lineno, "malformed key '" + key + "'");
    std::string target = section;
    if (target.empty()) {
      auto it = sections_of.find(key);
      if (it == sections_of.end()) throw Error(ErrorCode::kUnknownKey, "unknown config key '" + key + "'");
      if (it->second.size() != 1)
        throw ParseError(lineno, "key '" + key + "' is ambiguous outside a section");
      target = it->second.front();
    }
    if (!cfg.has(target, key)) throw Error(ErrorCode::kUnknownKey, "unknown config key " + target + "." + key);
    cfg.set(target, key, value);
  }
  if (cfg.has("data", "source")) {
    const std::string& src = cfg.str("data", "source");
    if (src == "idx" && cfg.str("data", "idx_images").empty())
      throw Error(ErrorCode::kMissingKey, "data.source = idx requires data.idx_images");
    if (src != "idx" && src != "synthetic")
      throw Error(ErrorCode::kInvalidArgument, "data.source must be 'synthetic' or 'idx'");
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path, const std::string& subcommand) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIoError, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), subcommand);
}

}  // namespace jiio
