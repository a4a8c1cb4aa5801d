// slopeflow command line: run configs, list the corpus, verify curve files.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "slopeflow/harness/experiment.hpp"

namespace {

int cmd_run(const std::string& path, int jobs, const std::optional<std::uint64_t>& seed,
            const std::string& out_flag) {
  slopeflow::ExperimentConfig cfg;
  try {
    cfg = slopeflow::load_config(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return slopeflow::kExitError;
  }
  if (const char* env = std::getenv("SLOPEFLOW_OUT"); env && *env) cfg.out = env;
  if (!out_flag.empty()) cfg.out = out_flag;
  if (seed) cfg.seed = *seed;
  cfg.jobs = jobs;
  int code = slopeflow::run_experiment(cfg);
  const char* status = code == slopeflow::kExitOk                       ? "ok"
                       : code == slopeflow::kExitVerificationFailed ? "verification failed"
                                                                    : "error";
  std::cout << "status: " << status << "; outputs in " << cfg.out << "\n";
  return code;
}

int cmd_corpus(bool list, const std::string& name) {
  try {
    if (list || name.empty()) {
      for (const auto& n : slopeflow::corpus_names()) {
        std::cout << n << "  " << slopeflow::corpus(n).description << "\n";
      }
      return 0;
    }
    auto e = slopeflow::corpus(name);
    std::cout << "name: " << e.name << "\ntext: " << slopeflow::print_expr(e.f) << "\ndim: " << e.f.dim()
              << "\nregion: " << slopeflow::to_json(e.region.lo).dump() << " to " << slopeflow::to_json(e.region.hi).dump()
              << "\neta: " << slopeflow::format_number(e.eta) << "\n";
    for (const auto& s : e.starts) std::cout << "start: " << slopeflow::to_json(s).dump() << "\n";
    if (e.min_value) std::cout << "min_value: " << slopeflow::format_number(*e.min_value) << "\n";
    return 0;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return slopeflow::kExitError;
  }
}

int cmd_verify(const std::string& csv, const std::string& function, const std::string& property,
               const std::string& tag, double tol, std::uint64_t seed, const std::string& out) {
  try {
    auto curve = slopeflow::read_curve_csv(csv, slopeflow::param_tag_from_string(tag));
    auto f = slopeflow::parse_expr(function, static_cast<std::size_t>(curve.dim()));
    slopeflow::VerifyOptions vo;
    vo.tol = tol;
    vo.seed = seed;
    auto report = slopeflow::detail::run_property(property, f, curve, vo);
    auto j = slopeflow::to_json(report);
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
      std::filesystem::create_directories(out);
      slopeflow::write_json((std::filesystem::path(out) / (property + ".json")).string(), j);
    }
    return report.passed() ? slopeflow::kExitOk : slopeflow::kExitVerificationFailed;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return slopeflow::kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-steepest descent curves, subgradient flows and their checks"};
  app.require_subcommand(1);

  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("--jobs", jobs, "Threads for corpus-wide batches")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out, "Output directory (overrides config and SLOPEFLOW_OUT)");

  bool list = false;
  std::string name;
  auto* corp = app.add_subcommand("corpus", "Show built-in functions");
  corp->add_flag("--list", list, "List every corpus function");
  corp->add_option("name", name, "Show one corpus function");

  std::string csv, function, property, tag = "arclength";
  double tol = 1e-2;
  std::uint64_t vseed = 0;
  std::string vout;
  auto* ver = app.add_subcommand("verify", "Check one property of a curve CSV");
  ver->add_option("curve", csv, "Curve CSV (t,x1,...,xn[,f,limiting_slope,speed])")->required()->check(CLI::ExistingFile);
  ver->add_option("--function", function, "Function text")->required();
  ver->add_option("--property", property,
                  "near_steepest, steepest, near_max_slope, chain_rule or flow_descent_identity")
      ->required();
  ver->add_option("--tag", tag, "Parametrization of the curve (value, arclength, slope_time, flow_time)");
  ver->add_option("--tol", tol, "Check tolerance");
  ver->add_option("--seed", vseed, "Seed for sampled slopes");
  ver->add_option("--out", vout, "Directory for the report JSON");

  CLI11_PARSE(app, argc, argv);
  if (*run) return cmd_run(config, jobs, seed, out);
  if (*corp) return cmd_corpus(list, name);
  return cmd_verify(csv, function, property, tag, tol, vseed, vout);
}
