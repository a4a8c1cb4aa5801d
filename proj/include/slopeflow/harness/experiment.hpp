#pragma once

// run_experiment: resolves a config against the corpus, runs one mode, and
// writes manifest.json, curve CSVs, report JSONs and plot.svg.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "slopeflow/harness/config.hpp"
#include "slopeflow/harness/corpus.hpp"
#include "slopeflow/harness/io.hpp"

namespace slopeflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitVerificationFailed = 2;

/// Worst of several exit codes: any error beats any verification failure.
inline int combine_exit_codes(int a, int b) {
  if (a == kExitError || b == kExitError) return kExitError;
  if (a == kExitVerificationFailed || b == kExitVerificationFailed) return kExitVerificationFailed;
  return kExitOk;
}

/// The corpus entry named by the config, or one assembled from function text.
/// Config values override the entry's defaults.
inline CorpusEntry resolve_problem(const std::string& function, const ExperimentConfig& cfg) {
  const auto& names = corpus_names();
  CorpusEntry e = [&]() -> CorpusEntry {
    if (std::find(names.begin(), names.end(), function) != names.end()) return corpus(function);
    std::size_t n = cfg.dim;
    if (n == 0 && cfg.x0) n = static_cast<std::size_t>(cfg.x0->size());
    if (n == 0) throw Error("function text needs [experiment] dim or x0");
    if (!cfg.x0 && cfg.mode != Mode::verify) throw Error("function text needs [experiment] x0");
    CorpusEntry c{"custom", function, parse_expr(function, n), detail::box(n, -2, 2),
                  {cfg.x0 ? *cfg.x0 : Vector(Vector::Zero(static_cast<Eigen::Index>(n)))}};
    c.eta = 0.0;
    return c;
  }();
  if (cfg.x0) {
    e.f.check_point(*cfg.x0);
    if (e.name != "custom") e.starts.insert(e.starts.begin(), *cfg.x0);
  }
  if (cfg.eta) e.eta = *cfg.eta;
  if (cfg.min_slope) e.min_slope = *cfg.min_slope;
  if (cfg.search_radius) e.search_radius = *cfg.search_radius;
  if (cfg.h) e.flow_h = *cfg.h;
  if (cfg.T) e.flow_T = *cfg.T;
  return e;
}

struct ErrorBoundDraw {
  Vector x;
  double alpha = 0.0;
};

/// Seeded (x, alpha) pairs: x uniform in the region, alpha a uniform fraction
/// in [0.05, 0.95] of the way from f(x) down to the known minimum (or one
/// unit down when f is unbounded below).
inline std::vector<ErrorBoundDraw> error_bound_draws(const CorpusEntry& e, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ErrorBoundDraw> out;
  while (out.size() < count) {
    Vector x(e.region.dim());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      x[j] = e.region.lo[j] + detail::unit_uniform(rng) * (e.region.hi[j] - e.region.lo[j]);
    }
    double u = 0.05 + 0.9 * detail::unit_uniform(rng);
    double fx = e.f(x);
    double span = e.min_value ? fx - *e.min_value : 1.0;
    if (span < 1e-6) continue;
    out.push_back(ErrorBoundDraw{std::move(x), fx - u * span});
  }
  return out;
}

inline DescentRun make_descent_run(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed) {
  DescentRun run{e.f, e.starts.front()};
  run.eta = e.eta;
  run.tol = ProjectionTolerances{cfg.feasibility_tol, cfg.dist_tol};
  run.restarts = cfg.restarts;
  run.search_radius = e.search_radius;
  run.min_slope = e.min_slope;
  run.seed = seed;
  return run;
}

inline FlowConfig make_flow_config(const CorpusEntry& e, const ExperimentConfig& cfg, const Vector& x0,
                                   std::uint64_t seed) {
  FlowConfig fc{e.f, x0};
  fc.h = e.flow_h;
  fc.T = e.flow_T;
  fc.stop_slope = cfg.stop_slope;
  fc.event_depth = cfg.event_depth;
  fc.seed = seed;
  return fc;
}

struct Outcome {
  Json results = Json::object();
  std::vector<std::pair<std::string, VerifyReport>> reports;  // file stem, report
  std::vector<std::pair<std::string, SampledCurve>> curves;   // file stem, curve
  std::vector<std::string> failures;

  void report(std::string stem, VerifyReport r, bool must_pass = true) {
    if (must_pass && !r.passed()) failures.push_back(stem + ": " + to_string(r.verdict));
    reports.emplace_back(std::move(stem), std::move(r));
  }
};

namespace detail {

/// Descent refinement plus the arclength view of its finest curve.
inline std::optional<SampledCurve> run_descent(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed,
                                               Outcome& out) {
  DescentRun run = make_descent_run(e, cfg, seed);
  RefineResult rr = refine_until_cauchy(run, cfg.k_schedule, cfg.sup_tol);
  const DescentResult& fin = rr.finest;
  Json levels = Json::array();
  for (const auto& l : rr.levels) levels.push_back(Json{{"k", l.k}, {"sup_distance", number_json(l.sup_distance)}});
  Json steps = Json::array();
  bool certs = true;
  for (const auto& s : fin.steps) {
    steps.push_back(to_json(s));
    certs = certs && s.certificate_holds;
  }
  out.results["descent"] = Json{{"levels", levels},
                                {"converged", rr.converged},
                                {"diverging", rr.diverging},
                                {"last_sup_distance", number_json(rr.last_sup)},
                                {"constant_curve", fin.constant},
                                {"sampled_min_slope", number_json(fin.sampled_min_slope)},
                                {"slope_bound_verified", fin.slope_bound_verified},
                                {"all_step_certificates_hold", certs},
                                {"steps", steps}};
  if (fin.failed) {
    throw ProjectionError("projection failed at step " + std::to_string(fin.failed_step) + ": " + fin.failure, 0.0);
  }
  if (!rr.converged) out.failures.push_back(rr.diverging ? "descent refinement diverging" : "descent refinement not converged");
  if (!certs) out.failures.push_back("a segment Lipschitz certificate failed");
  out.curves.emplace_back("descent_value", *fin.curve);
  if (fin.constant) return std::nullopt;
  SampledCurve arc = arclength_reparam(*fin.curve);
  out.curves.emplace_back("descent_arclength", arc);
  VerifyOptions vo;
  vo.act_tol = run.act_tol;
  vo.tol = cfg.verify_tol.value_or(1e-2);
  vo.seed = seed;
  out.report("descent_near_steepest", check_near_steepest(e.f, arc, vo));
  // Whether constructed curves are steepest is an open question: recorded
  // as evidence only.
  out.report("descent_steepest", check_steepest(e.f, arc, vo), false);
  return arc;
}

inline Json flow_json(const FlowResult& r) {
  return Json{{"start", to_json(r.curve.points().front())},
              {"endpoint", to_json(r.curve.points().back())},
              {"stop", to_string(r.stop)},
              {"events", r.events},
              {"rejected_steps", r.rejected_steps},
              {"clarke_discrepancies", r.clarke_discrepancies},
              {"max_clarke_discrepancy", r.max_clarke_discrepancy},
              {"final_slope", r.final_slope},
              {"duration", r.curve.back_knot()},
              {"length", curve_length(r.curve)}};
}

inline void check_flow(const CorpusEntry& e, const FlowResult& fr, const std::string& stem, double tol, Outcome& out) {
  VerifyOptions vo;
  vo.tol = tol;
  out.report(stem + "_near_max_slope", check_near_max_slope(e.f, fr.curve, vo));
  out.report(stem + "_chain_rule", check_chain_rule(e.f, fr.curve, vo));
}

inline void mode_descend(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed, Outcome& out) {
  run_descent(e, cfg, seed, out);
}

inline void mode_flow(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed, Outcome& out) {
  Json runs = Json::array();
  for (std::size_t i = 0; i < e.starts.size(); ++i) {
    FlowResult fr = integrate_min_norm_flow(make_flow_config(e, cfg, e.starts[i], seed));
    std::string stem = "flow" + std::to_string(i);
    runs.push_back(flow_json(fr));
    check_flow(e, fr, stem, cfg.verify_tol.value_or(1e-2), out);
    out.curves.emplace_back(stem, fr.curve);
  }
  out.results["flows"] = runs;
}

inline VerifyReport run_property(const std::string& name, const FuncExpr& f, const SampledCurve& c,
                                 const VerifyOptions& vo) {
  if (name == "near_steepest") return check_near_steepest(f, c, vo);
  if (name == "steepest") return check_steepest(f, c, vo);
  if (name == "near_max_slope") return check_near_max_slope(f, c, vo);
  if (name == "chain_rule") return check_chain_rule(f, c, vo);
  if (name == "flow_descent_identity") return flow_descent_identity(f, c, vo.tol, vo.act_tol);
  throw Error("unknown property '" + name +
              "' (expected near_steepest, steepest, near_max_slope, chain_rule or flow_descent_identity)");
}

inline void mode_verify(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed, Outcome& out) {
  std::optional<SampledCurve> curve;
  std::vector<std::pair<std::string, Verdict>> expect = cfg.expect;
  double tol = cfg.verify_tol.value_or(1e-2);
  if (!cfg.curve.empty()) {
    curve = read_curve_csv(cfg.curve, cfg.curve_tag);
  } else if (e.reference_curve) {
    curve = e.reference_curve;
    if (expect.empty()) expect = e.expectations;
    if (!cfg.verify_tol) tol = e.reference_tol;
  } else {
    throw Error("verify mode needs [verify] curve for function '" + e.name + "'");
  }
  std::vector<std::string> props = cfg.properties;
  if (props.empty()) {
    for (const auto& [p, v] : expect) props.push_back(p);
  }
  if (props.empty()) props.push_back("near_steepest");
  VerifyOptions vo;
  vo.tol = tol;
  vo.seed = seed;
  Json checks = Json::array();
  for (const auto& p : props) {
    VerifyReport r = run_property(p, e.f, *curve, vo);
    auto it = std::find_if(expect.begin(), expect.end(), [&](const auto& x) { return x.first == p; });
    bool met = it == expect.end() ? r.passed() : r.verdict == it->second;
    checks.push_back(Json{{"property", p},
                          {"verdict", to_string(r.verdict)},
                          {"expected", it == expect.end() ? std::string("pass") : to_string(it->second)},
                          {"met", met}});
    if (!met) out.failures.push_back(p + ": " + to_string(r.verdict));
    out.report("verify_" + p, r, false);
  }
  out.results["checks"] = checks;
  out.curves.emplace_back("verified_curve", *curve);
}

inline void mode_compare(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed, Outcome& out) {
  std::optional<SampledCurve> arc = run_descent(e, cfg, seed, out);
  FlowConfig fc = make_flow_config(e, cfg, e.starts.front(), seed);
  fc.stop_value = e.f(e.starts.front()) - e.eta;
  FlowResult fr = integrate_min_norm_flow(fc);
  out.results["flow"] = flow_json(fr);
  out.curves.emplace_back("flow", fr.curve);
  check_flow(e, fr, "flow", cfg.verify_tol.value_or(1e-2), out);
  if (!arc) {
    out.results["compare_curves"] = 0.0;
    return;
  }
  SlopeTimeOptions so;
  so.act_tol = 1e-6;
  so.truncate_at_floor = true;
  SampledCurve st = slope_time_reparam(*arc, e.f, so);
  out.curves.emplace_back("descent_slope_time", st);
  VerifyOptions vo;
  vo.act_tol = 1e-6;
  vo.tol = cfg.verify_tol.value_or(1e-2);
  out.report("descent_slope_time_near_max_slope", check_near_max_slope(e.f, st, vo));
  double d = compare_curves(st, fr.curve);
  out.results["compare_curves"] = d;
  out.results["compare_tol"] = cfg.compare_tol;
  if (!(d <= cfg.compare_tol)) out.failures.push_back("compare_curves " + format_number(d) + " exceeds tolerance");
}

inline void mode_certify(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed, Outcome& out) {
  Json certs = Json::array();
  std::size_t held = 0;
  auto draws = error_bound_draws(e, static_cast<std::size_t>(cfg.draws), seed);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    ErrorBoundOptions opt;
    opt.tol = ProjectionTolerances{cfg.feasibility_tol, cfg.dist_tol};
    opt.restarts = cfg.restarts;
    opt.seed = seed + i;
    ErrorBoundCertificate c = error_bound_certificate(e.f, draws[i].x, draws[i].alpha, e.region, opt);
    held += c.holds ? 1 : 0;
    certs.push_back(to_json(c));
  }
  out.results["error_bound"] = Json{{"draws", certs}, {"held", held}, {"total", draws.size()}};
  if (held != draws.size()) out.failures.push_back("error bound failed on " + std::to_string(draws.size() - held) + " draws");
  auto starts = random_starts(e.region, static_cast<std::size_t>(cfg.kl_starts), seed);
  KLReport kl = kl_length_report(e.f, e.region, starts, make_flow_config(e, cfg, e.starts.front(), seed));
  out.results["kl_length"] = to_json(kl);
}

inline Json parameters_json(const CorpusEntry& e, const ExperimentConfig& cfg, std::uint64_t seed) {
  Json starts = Json::array();
  for (const auto& s : e.starts) starts.push_back(to_json(s));
  return Json{{"x0", to_json(e.starts.front())},
              {"starts", starts},
              {"eta", e.eta},
              {"k_schedule", cfg.k_schedule},
              {"sup_tol", cfg.sup_tol},
              {"tolerances", Json{{"feasibility", cfg.feasibility_tol}, {"distance", cfg.dist_tol}}},
              {"restarts", cfg.restarts},
              {"search_radius", e.search_radius},
              {"min_slope", e.min_slope},
              {"flow", Json{{"h", e.flow_h}, {"T", e.flow_T}, {"stop_slope", cfg.stop_slope},
                            {"event_depth", cfg.event_depth}}},
              {"seed", seed}};
}

}  // namespace detail

/// Runs one function into `dir`. Never throws for library errors: they are
/// recorded in the manifest and mapped to exit code 1.
inline int run_single(const std::string& function, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const std::uint64_t seed = *cfg.seed;
  Json manifest{{"function", function}, {"mode", to_string(cfg.mode)}, {"seed", seed}};
  Outcome out;
  int code = kExitOk;
  Json errors = Json::array();
  try {
    fs::create_directories(dir);
  } catch (const std::exception& ex) {
    std::cerr << "error: cannot create output directory " << dir.string() << ": " << ex.what() << "\n";
    return kExitError;
  }
  std::optional<CorpusEntry> entry;
  try {
    entry = resolve_problem(function, cfg);
    manifest["text"] = print_expr(entry->f);
    manifest["dim"] = entry->f.dim();
    manifest["parameters"] = detail::parameters_json(*entry, cfg, seed);
    switch (cfg.mode) {
      case Mode::descend: detail::mode_descend(*entry, cfg, seed, out); break;
      case Mode::flow: detail::mode_flow(*entry, cfg, seed, out); break;
      case Mode::verify: detail::mode_verify(*entry, cfg, seed, out); break;
      case Mode::compare: detail::mode_compare(*entry, cfg, seed, out); break;
      case Mode::certify: detail::mode_certify(*entry, cfg, seed, out); break;
    }
    if (!out.failures.empty()) code = kExitVerificationFailed;
  } catch (const std::exception& ex) {
    errors.push_back(ex.what());
    code = kExitError;
  }

  try {
    Json curve_files = Json::array();
    for (const auto& [stem, c] : out.curves) {
      std::string name = stem + ".csv";
      write_curve_csv((dir / name).string(), c, entry->f, stem.rfind("descent", 0) == 0 ? 1e-6 : kDefaultActivityTol);
      curve_files.push_back(name);
    }
    Json report_files = Json::array();
    if (!out.reports.empty()) fs::create_directories(dir / "reports");
    Json reports = Json::array();
    for (const auto& [stem, r] : out.reports) {
      std::string name = "reports/" + stem + ".json";
      write_json((dir / name).string(), to_json(r));
      report_files.push_back(name);
      Json rj = to_json(r);
      rj["name"] = stem;
      reports.push_back(rj);
    }
    if (entry && entry->f.dim() <= 3 && !out.curves.empty()) {
      std::vector<PlotCurve> pc;
      for (const auto& [stem, c] : out.curves) pc.push_back(PlotCurve{stem, &c});
      write_text((dir / "plot.svg").string(), render_svg(entry->f, entry->region, pc));
    }
    manifest["results"] = out.results;
    manifest["reports"] = reports;
    manifest["curves"] = curve_files;
    manifest["failures"] = out.failures;
  } catch (const std::exception& ex) {
    errors.push_back(ex.what());
    code = kExitError;
  }
  manifest["errors"] = errors;
  manifest["exit_code"] = code;
  try {
    write_json((dir / "manifest.json").string(), manifest);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitError;
  }
  for (const auto& e : errors) std::cerr << "error: " << e.get<std::string>() << "\n";
  return code;
}

/// Runs the configured experiment; "all" runs every corpus function, each in
/// its own subdirectory, over `cfg.jobs` threads.
inline int run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (!cfg.seed) {
    std::cerr << "error: a seed is required ([experiment] seed or --seed)\n";
    return kExitError;
  }
  if (cfg.function != "all") return run_single(cfg.function, cfg, cfg.out);

  const auto& names = corpus_names();
  std::vector<int> codes(names.size(), kExitOk);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < names.size(); i = next++) {
      codes[i] = run_single(names[i], cfg, fs::path(cfg.out) / names[i]);
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(cfg.jobs, 1)), 1, names.size());
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Json entries = Json::array();
  int code = kExitOk;
  for (std::size_t i = 0; i < names.size(); ++i) {
    entries.push_back(Json{{"function", names[i]}, {"exit_code", codes[i]}, {"manifest", names[i] + "/manifest.json"}});
    code = combine_exit_codes(code, codes[i]);
  }
  Json manifest{{"function", "all"}, {"mode", to_string(cfg.mode)}, {"seed", *cfg.seed}, {"entries", entries},
                {"exit_code", code}};
  try {
    fs::create_directories(cfg.out);
    write_json((fs::path(cfg.out) / "manifest.json").string(), manifest);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitError;
  }
  return code;
}

}  // namespace slopeflow
