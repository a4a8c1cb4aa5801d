#pragma once

// Experiment configuration: INI text with [experiment], [descent], [flow],
// [verify] and [certify] sections. See configs/README.md for every key.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "slopeflow/report.hpp"

namespace slopeflow {

enum class Mode { descend, flow, verify, compare, certify };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::descend: return "descend";
    case Mode::flow: return "flow";
    case Mode::verify: return "verify";
    case Mode::compare: return "compare";
    case Mode::certify: return "certify";
  }
  return "descend";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "descend") return Mode::descend;
  if (s == "flow") return Mode::flow;
  if (s == "verify") return Mode::verify;
  if (s == "compare") return Mode::compare;
  if (s == "certify") return Mode::certify;
  throw Error("unknown mode '" + s + "' (expected descend, flow, verify, compare or certify)");
}

struct ExperimentConfig {
  // [experiment]
  std::string function;  // corpus name, "all", or function text
  std::size_t dim = 0;   // required for function text unless x0 is given
  Mode mode = Mode::descend;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<Vector> x0;

  // [descent]
  std::optional<double> eta;
  std::vector<int> k_schedule{64, 128, 256, 512, 1024};
  double sup_tol = 1e-2;
  std::optional<double> min_slope;
  std::optional<double> search_radius;
  int restarts = 4;
  double feasibility_tol = 1e-8;
  double dist_tol = 1e-6;

  // [flow]
  std::optional<double> h;
  std::optional<double> T;
  double stop_slope = 5e-5;
  int event_depth = 48;

  // [verify]
  std::optional<double> verify_tol;
  std::vector<std::string> properties;
  std::string curve;
  ParamTag curve_tag = ParamTag::arclength;
  std::vector<std::pair<std::string, Verdict>> expect;
  double compare_tol = 5e-2;

  // [certify]
  int draws = 20;
  int kl_starts = 20;

  int jobs = 1;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("'" + key + "': not a number: " + s);
  return v;
}

inline long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("'" + key + "': not an integer: " + s);
  return v;
}

inline Verdict verdict_from_string(const std::string& s) {
  if (s == "pass") return Verdict::pass;
  if (s == "fail") return Verdict::fail;
  if (s == "vacuous") return Verdict::vacuous;
  throw Error("unknown verdict '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> allowed{
      {"experiment", {"function", "dim", "mode", "seed", "out", "x0"}},
      {"descent",
       {"eta", "k_schedule", "sup_tol", "min_slope", "search_radius", "restarts", "feasibility_tol", "dist_tol"}},
      {"flow", {"h", "T", "stop_slope", "event_depth"}},
      {"verify", {"tol", "properties", "curve", "tag", "expect", "compare_tol"}},
      {"certify", {"draws", "kl_starts"}},
  };
  for (const auto& [section, body] : tree) {
    auto it = allowed.find(section);
    if (it == allowed.end()) throw Error("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw Error("config: unknown key '" + key + "' in [" + section + "]");
    }
  }

  ExperimentConfig c;
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(path)) return *v;
    return std::nullopt;
  };
  auto num = [&](const std::string& path) -> std::optional<double> {
    if (auto v = get(path)) return detail::parse_double(path, *v);
    return std::nullopt;
  };
  auto integer = [&](const std::string& path) -> std::optional<long long> {
    if (auto v = get(path)) return detail::parse_int(path, *v);
    return std::nullopt;
  };

  auto fn = get("experiment.function");
  if (!fn || fn->empty()) throw Error("config: [experiment] function is required");
  c.function = *fn;
  auto mode = get("experiment.mode");
  if (!mode) throw Error("config: [experiment] mode is required");
  c.mode = mode_from_string(*mode);
  if (auto s = integer("experiment.seed")) {
    if (*s < 0) throw Error("config: seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(*s);
  }
  if (auto v = integer("experiment.dim")) {
    if (*v < 1) throw Error("config: dim must be positive");
    c.dim = static_cast<std::size_t>(*v);
  }
  if (auto v = get("experiment.out")) c.out = *v;
  if (auto v = get("experiment.x0")) {
    auto parts = detail::split_list(*v);
    Vector x(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) x[static_cast<Eigen::Index>(i)] = detail::parse_double("x0", parts[i]);
    c.x0 = x;
  }

  c.eta = num("descent.eta");
  if (auto v = get("descent.k_schedule")) {
    c.k_schedule.clear();
    for (const auto& p : detail::split_list(*v)) c.k_schedule.push_back(static_cast<int>(detail::parse_int("k_schedule", p)));
  }
  if (auto v = num("descent.sup_tol")) c.sup_tol = *v;
  c.min_slope = num("descent.min_slope");
  c.search_radius = num("descent.search_radius");
  if (auto v = integer("descent.restarts")) c.restarts = static_cast<int>(*v);
  if (auto v = num("descent.feasibility_tol")) c.feasibility_tol = *v;
  if (auto v = num("descent.dist_tol")) c.dist_tol = *v;

  c.h = num("flow.h");
  c.T = num("flow.T");
  if (auto v = num("flow.stop_slope")) c.stop_slope = *v;
  if (auto v = integer("flow.event_depth")) c.event_depth = static_cast<int>(*v);

  c.verify_tol = num("verify.tol");
  if (auto v = get("verify.properties")) c.properties = detail::split_list(*v);
  if (auto v = get("verify.curve")) c.curve = *v;
  if (auto v = get("verify.tag")) c.curve_tag = param_tag_from_string(*v);
  if (auto v = get("verify.expect")) {
    for (const auto& item : detail::split_list(*v)) {
      auto colon = item.find(':');
      if (colon == std::string::npos) throw Error("config: expect entries look like property:verdict");
      c.expect.emplace_back(item.substr(0, colon), detail::verdict_from_string(item.substr(colon + 1)));
    }
  }
  if (auto v = num("verify.compare_tol")) c.compare_tol = *v;

  if (auto v = integer("certify.draws")) c.draws = static_cast<int>(*v);
  if (auto v = integer("certify.kl_starts")) c.kl_starts = static_cast<int>(*v);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path);
  return parse_config(is);
}

}  // namespace slopeflow
