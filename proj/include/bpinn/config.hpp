#pragma once

// Run configuration and its flat key-value file format (dotted sections,
// `key = value` lines, '#' comments). Serialization round-trips losslessly.

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bpinn/common.hpp"

namespace bpinn {

struct RunConfig {
  std::string problem = "stationary";  // "stationary" | "nonstationary"
  std::uint64_t seed = 0;
  std::string out_dir = "runs";

  std::vector<int> hidden_sizes = {32, 32};
  std::string activation = "tanh";
  bool periodic_embedding = false;

  int n_interior = 8000;
  int n_boundary = 500;
  int n_initial = 500;

  int adam_epochs = 3000;
  double adam_lr = 1e-3;
  int lbfgs_iters = 5000;
  int lbfgs_memory = 100;

  bool rar_enabled = true;
  int rar_pool_size = 100000;
  double rar_threshold = 5e-3;
  int rar_add_per_round = 100;
  int rar_max_rounds = 20;
  int rar_adam_epochs = 0;
  int rar_lbfgs_iters = 5000;

  int grid_n_per_axis = 32;

  // Optional problem overrides; empty/absent means benchmark defaults.
  std::optional<double> nu;
  std::optional<double> final_time;
  std::vector<double> domain_lo, domain_hi;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    if constexpr (std::is_same_v<T, double>)
      out += format_g17(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "problem = " << c.problem << '\n';
  out << "seed = " << c.seed << '\n';
  out << "out_dir = " << c.out_dir << '\n';
  out << "net.hidden_sizes = " << detail::join(c.hidden_sizes) << '\n';
  out << "net.activation = " << c.activation << '\n';
  out << "net.periodic_embedding = " << (c.periodic_embedding ? "true" : "false") << '\n';
  out << "points.interior = " << c.n_interior << '\n';
  out << "points.boundary = " << c.n_boundary << '\n';
  out << "points.initial = " << c.n_initial << '\n';
  out << "train.adam_epochs = " << c.adam_epochs << '\n';
  out << "train.adam_lr = " << format_g17(c.adam_lr) << '\n';
  out << "train.lbfgs_iters = " << c.lbfgs_iters << '\n';
  out << "train.lbfgs_memory = " << c.lbfgs_memory << '\n';
  out << "rar.enabled = " << (c.rar_enabled ? "true" : "false") << '\n';
  out << "rar.pool_size = " << c.rar_pool_size << '\n';
  out << "rar.threshold = " << format_g17(c.rar_threshold) << '\n';
  out << "rar.add_per_round = " << c.rar_add_per_round << '\n';
  out << "rar.max_rounds = " << c.rar_max_rounds << '\n';
  out << "rar.adam_epochs = " << c.rar_adam_epochs << '\n';
  out << "rar.lbfgs_iters = " << c.rar_lbfgs_iters << '\n';
  out << "grid.n_per_axis = " << c.grid_n_per_axis << '\n';
  if (c.nu) out << "problem_override.nu = " << format_g17(*c.nu) << '\n';
  if (c.final_time) out << "problem_override.final_time = " << format_g17(*c.final_time) << '\n';
  if (!c.domain_lo.empty()) out << "problem_override.domain_lo = " << detail::join(c.domain_lo) << '\n';
  if (!c.domain_hi.empty()) out << "problem_override.domain_hi = " << detail::join(c.domain_hi) << '\n';
  return out.str();
}

inline RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }

  RunConfig c;
  const auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  const auto get_bool = [&](const std::string& key, bool& dst) {
    if (auto v = get(key)) {
      if (*v != "true" && *v != "false") throw InvalidInput("bad bool for " + key);
      dst = *v == "true";
    }
  };
  const auto get_int = [&](const std::string& key, int& dst) {
    if (auto v = get(key)) dst = std::stoi(*v);
  };
  const auto get_double = [&](const std::string& key, double& dst) {
    if (auto v = get(key)) dst = std::stod(*v);
  };
  const auto get_doubles = [&](const std::string& key, std::vector<double>& dst) {
    if (auto v = get(key)) {
      dst.clear();
      std::istringstream ss(*v);
      double x;
      while (ss >> x) dst.push_back(x);
    }
  };

  if (auto v = get("problem")) c.problem = *v;
  if (auto v = get("seed")) c.seed = std::stoull(*v);
  if (auto v = get("out_dir")) c.out_dir = *v;
  if (auto v = get("net.hidden_sizes")) {
    c.hidden_sizes.clear();
    std::istringstream ss(*v);
    int s;
    while (ss >> s) c.hidden_sizes.push_back(s);
  }
  if (auto v = get("net.activation")) c.activation = *v;
  get_bool("net.periodic_embedding", c.periodic_embedding);
  get_int("points.interior", c.n_interior);
  get_int("points.boundary", c.n_boundary);
  get_int("points.initial", c.n_initial);
  get_int("train.adam_epochs", c.adam_epochs);
  get_double("train.adam_lr", c.adam_lr);
  get_int("train.lbfgs_iters", c.lbfgs_iters);
  get_int("train.lbfgs_memory", c.lbfgs_memory);
  get_bool("rar.enabled", c.rar_enabled);
  get_int("rar.pool_size", c.rar_pool_size);
  get_double("rar.threshold", c.rar_threshold);
  get_int("rar.add_per_round", c.rar_add_per_round);
  get_int("rar.max_rounds", c.rar_max_rounds);
  get_int("rar.adam_epochs", c.rar_adam_epochs);
  get_int("rar.lbfgs_iters", c.rar_lbfgs_iters);
  get_int("grid.n_per_axis", c.grid_n_per_axis);
  if (auto v = get("problem_override.nu")) c.nu = std::stod(*v);
  if (auto v = get("problem_override.final_time")) c.final_time = std::stod(*v);
  get_doubles("problem_override.domain_lo", c.domain_lo);
  get_doubles("problem_override.domain_hi", c.domain_hi);
  return c;
}

}  // namespace bpinn
