#include "pdecon/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pdecon/em.hpp"
#include "pdecon/errors.hpp"
#include "pdecon/harness.hpp"
#include "pdecon/mm.hpp"
#include "pdecon/observation.hpp"
#include "pdecon/parallel.hpp"
#include "pdecon/pipeline.hpp"

namespace pdecon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int jobs = default_jobs();
  std::string log_level = "warn";
};

struct LoadedConfig {
  json body = json::object();
  fs::path base = ".";
};

LoadedConfig read_config(const std::string& path, bool required) {
  LoadedConfig c;
  if (path.empty()) {
    if (required) throw UsageError("missing --config");
    return c;
  }
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    c.body = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!c.body.is_object()) throw UsageError("config '" + path + "' must be a JSON object");
  c.base = fs::path(path).parent_path();
  return c;
}

const json& need(const json& j, const char* field) {
  if (!j.contains(field)) throw UsageError(std::string("config: missing field '") + field + "'");
  return j.at(field);
}

template <typename T>
T get_as(const json& j, const char* field) {
  try {
    return need(j, field).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config: field '") + field + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

double parse_exposure(const json& v) {
  if (v.is_string() && v.get<std::string>() == "inf") return kInfinity;
  if (!v.is_number()) throw UsageError("config: field 't' must be a positive number or \"inf\"");
  const double t = v.get<double>();
  if (!(t > 0.0)) throw UsageError("config: field 't' must be a positive number or \"inf\"");
  return t;
}

Kernel read_kernel(const LoadedConfig& cfg, int dimension) {
  json k = need(cfg.body, "kernel");
  if (k.is_object() && k.value("type", "") == "tabulated") {
    if (k.contains("csv")) k["csv"] = resolve(cfg.base, k["csv"].get<std::string>()).string();
    if (k.contains("meta")) k["meta"] = resolve(cfg.base, k["meta"].get<std::string>()).string();
  }
  try {
    return kernel_from_json(k, dimension);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: malformed field 'kernel': ") + e.what());
  }
}

AtomicUniformMeasure read_measure(const LoadedConfig& cfg, const json& v) {
  try {
    if (v.is_string()) {
      std::ifstream in(resolve(cfg.base, v.get<std::string>()));
      if (!in) throw UsageError("cannot open measure file '" + v.get<std::string>() + "'");
      return measure_from_json(json::parse(in));
    }
    return measure_from_json(v);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: malformed measure: ") + e.what());
  }
}

std::uint64_t pick_seed(const GlobalOptions& g, const json& body) {
  if (g.seed) return *g.seed;
  if (body.contains("seed")) return get_as<std::uint64_t>(body, "seed");
  return kDefaultSeed;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

BinGrid read_grid(const json& body) {
  const json& g = need(body, "grid");
  const int dim = g.value("dimension", 2);
  if (dim != 1 && dim != 2) throw UsageError("config: grid dimension must be 1 or 2");
  std::vector<double> w;
  try {
    w = g.value("window", dim == 2 ? std::vector<double>{0, 1, 0, 1} : std::vector<double>{0, 1});
  } catch (const json::exception&) {
    throw UsageError("config: field 'grid.window' must be a list of numbers");
  }
  const json& m = need(g, "m");
  int nx = 0, ny = 1;
  if (m.is_array() && m.size() == 2) {
    nx = m[0].get<int>();
    ny = m[1].get<int>();
  } else if (m.is_number_integer()) {
    nx = m.get<int>();
    ny = dim == 2 ? nx : 1;
  } else {
    throw UsageError("config: field 'grid.m' must be an integer or [nx, ny]");
  }
  if (dim == 1) {
    if (w.size() < 2) throw UsageError("config: field 'grid.window' needs [x0, x1]");
    return BinGrid(1, {w[0], w[1], 0.0, 0.0}, nx, 1);
  }
  if (w.size() != 4) throw UsageError("config: field 'grid.window' needs [x0, x1, y0, y1]");
  return BinGrid(2, {w[0], w[1], w[2], w[3]}, nx, ny);
}

AtomicUniformMeasure read_truth(const LoadedConfig& cfg) {
  const json& b = cfg.body;
  if (b.contains("measure")) return read_measure(cfg, b["measure"]);
  if (b.contains("configuration")) return builtin_configuration(get_as<std::string>(b, "configuration"), get_as<int>(b, "k"));
  throw UsageError("config: missing field 'measure' (or 'configuration' and 'k')");
}

int cmd_simulate(const GlobalOptions& g) {
  const LoadedConfig cfg = read_config(g.config, true);
  const BinGrid grid = read_grid(cfg.body);
  const Kernel kernel = read_kernel(cfg, grid.dimension());
  const AtomicUniformMeasure mu = read_truth(cfg);
  const double t = parse_exposure(need(cfg.body, "t"));
  const std::uint64_t seed = pick_seed(g, cfg.body);
  const std::string name = cfg.body.value("name", "image");
  const std::string units = cfg.body.value("units", "");
  const CountImage image = t == kInfinity ? noiseless(kernel, mu, grid) : simulate(kernel, mu, grid, t, seed);
  fs::create_directories(g.out);
  save_image(image, {fs::path(g.out) / (name + ".csv"), fs::path(g.out) / (name + ".json")}, units);
  spdlog::info("simulate: wrote {} bins to {}", grid.size(), g.out);
  return 0;
}

int cmd_estimate(const GlobalOptions& g) {
  const LoadedConfig cfg = read_config(g.config, true);
  const json& b = cfg.body;
  const std::string estimator = get_as<std::string>(b, "estimator");
  if (estimator != "mm-complex" && estimator != "mm-real" && estimator != "mm-general" && estimator != "em") {
    throw UsageError("config: unknown estimator '" + estimator + "'");
  }
  const int k = get_as<int>(b, "k");
  if (k < 1) throw UsageError("config: field 'k' must be >= 1");
  const CountImage image = load_image(resolve(cfg.base, get_as<std::string>(b, "image")));
  const Kernel kernel = read_kernel(cfg, image.grid().dimension());
  const fs::path out(g.out);
  fs::create_directories(out);

  json result;
  if (estimator == "em") {
    EmConfig em;
    if (b.contains("em_max_iterations")) em.max_iterations = get_as<int>(b, "em_max_iterations");
    std::optional<AtomicUniformMeasure> init;
    json init_diag;
    if (b.contains("init")) {
      init = read_measure(cfg, b["init"]);
    } else {
      const MmEstimate mm =
          image.grid().dimension() == 2 ? mm_complex(image, kernel, k) : mm_real(image, kernel, k);
      init = mm.measure;
      init_diag = mm;
    }
    const EmResult fit = run_em(image, kernel, *init, em);
    result = fit.measure;
    result["diagnostics"] = {{"estimator", "em"},
                             {"iterations", fit.trace.iterations.size()},
                             {"monotone", fit.trace.monotone()},
                             {"collision", fit.trace.collision},
                             {"init_clipped", fit.trace.init_clipped}};
    if (!init_diag.is_null()) result["diagnostics"]["init"] = init_diag;
    write_text(out / "trace.csv", fit.trace.to_csv());
  } else {
    MmEstimate est = [&] {
      if (estimator == "mm-complex") return mm_complex(image, kernel, k);
      if (estimator == "mm-real") return mm_real(image, kernel, k);
      MmGeneralOptions o;
      o.seed = pick_seed(g, b);
      if (b.contains("restarts")) o.restarts = get_as<int>(b, "restarts");
      return mm_general(image, kernel, k, o);
    }();
    result = est;
    result["diagnostics"]["estimator"] = estimator;
  }
  write_text(out / "estimate.json", result.dump(2) + "\n");
  return 0;
}

int cmd_pipeline(const GlobalOptions& g) {
  const LoadedConfig cfg = read_config(g.config, true);
  const json& b = cfg.body;
  const CountImage image = load_image(resolve(cfg.base, get_as<std::string>(b, "image")));
  const Kernel kernel = read_kernel(cfg, image.grid().dimension());
  PartitionConfig pc;
  pc.components = get_as<int>(b, "k");
  if (b.contains("mode_count")) pc.mode_count = get_as<int>(b, "mode_count");
  if (b.contains("mode_half_width")) pc.mode_half_width = get_as<double>(b, "mode_half_width");
  if (b.contains("link_threshold")) pc.link_threshold = get_as<double>(b, "link_threshold");
  if (b.contains("em_max_iterations")) pc.em.max_iterations = get_as<int>(b, "em_max_iterations");
  pc.pixel_size = image.grid().dx();
  pc.jobs = g.jobs;
  const PipelineResult r = run_pipeline(image, kernel, pc);
  write_pipeline_outputs(r, image.grid(), g.out);
  spdlog::info("pipeline: {} cells, {} atoms", r.cells.size(), r.merged ? r.merged->size() : 0);
  return 0;
}

// Named experiments; any field of the config overrides the preset.
json experiment_preset(const std::string& name) {
  static const std::map<std::string, json> presets = {
      {"grid-risk",
       {{"configuration", "grid"}, {"k", 4}, {"sigma", 0.05}, {"m", 40}, {"t", {1e3, 1e4, 1e5, 1e6, 1e7}},
        {"replicates", 100}, {"estimators", {"mm-complex", "em"}}}},
      {"corners-ordering",
       {{"configuration", "corners"}, {"k", 4}, {"sigma", 0.05}, {"m", 40}, {"t", 1e5}, {"replicates", 100},
        {"estimators", {"mm-complex", "em"}}}},
      {"grid16-ordering",
       {{"configuration", "grid"}, {"k", 16}, {"sigma", 0.05}, {"m", 40}, {"t", 1e5}, {"replicates", 100},
        {"estimators", {"mm-complex", "em"}}}},
      {"bin-saturation",
       {{"configuration", "grid"}, {"k", 4}, {"sigma", 0.05}, {"m", {40, 80}}, {"t", 1e6}, {"replicates", 100},
        {"estimators", {"em"}}}},
      {"runtime",
       {{"configuration", "grid"}, {"k", 4}, {"sigma", 0.05}, {"m", 80}, {"t", 1e5}, {"replicates", 20},
        {"estimators", {"mm-complex", "em"}}, {"timing", true}}},
  };
  const auto it = presets.find(name);
  if (it == presets.end()) throw UsageError("unknown experiment '" + name + "'");
  json p = it->second;
  p["experiment"] = name;
  return p;
}

int cmd_experiment(const GlobalOptions& g, const std::string& name) {
  const LoadedConfig cfg = read_config(g.config, false);
  std::string preset = name;
  if (preset.empty() && cfg.body.contains("experiment")) preset = get_as<std::string>(cfg.body, "experiment");
  if (preset.empty() && g.config.empty()) throw UsageError("experiment: give a name or --config");
  json body = preset.empty() ? json::object() : experiment_preset(preset);
  body.update(cfg.body);
  if (body.contains("measure") && body["measure"].is_string()) {
    body["measure"] = resolve(cfg.base, body["measure"].get<std::string>()).string();
    std::ifstream in(body["measure"].get<std::string>());
    if (!in) throw UsageError("cannot open measure file");
    body["measure"] = json::parse(in);
  }
  ExperimentSpec spec = experiment_from_json(body);
  spec.seed = pick_seed(g, body);
  spec.jobs = g.jobs;
  const bool timing = body.value("timing", false);
  const RiskTable table = timing ? run_runtime_comparison(spec) : run_risk_experiment(spec);
  write_risk_outputs(table, g.out);
  return 0;
}

int cmd_metrics(const GlobalOptions& g, const std::string& a_path, const std::string& b_path) {
  auto load = [](const std::string& p) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot open measure file '" + p + "'");
    try {
      return measure_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw UsageError("malformed measure file '" + p + "': " + e.what());
    }
  };
  const AtomicUniformMeasure a = load(a_path);
  const AtomicUniformMeasure b = load(b_path);
  if (a.dimension() != b.dimension()) throw UsageError("metrics: measures have different dimensions");
  json r;
  r["hausdorff"] = hausdorff(a, b);
  if (a.size() == b.size()) {
    r["w1"] = wasserstein(a, b, 1.0);
    r["w2"] = wasserstein(a, b, 2.0);
    r["winf"] = wasserstein(a, b, kInfinity);
    const int order = static_cast<int>(a.size());
    r["moment_distance"] = moment_distance(exact_multi_moments(a, order), exact_multi_moments(b, order));
  } else {
    r["w1"] = wasserstein1_general(a, b);
    r["w2"] = nullptr;
    r["winf"] = nullptr;
    r["moment_distance"] = nullptr;
  }
  const std::string text = r.dump(2) + "\n";
  std::cout << text;
  if (g.out != ".") write_text(fs::path(g.out) / "metrics.json", text);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Deconvolution of binned Poisson images by moments and EM"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config, "JSON config file");
  CLI::Option* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  auto* sim = app.add_subcommand("simulate", "Simulate a count image");
  auto* est = app.add_subcommand("estimate", "Estimate atoms from an image");
  auto* pipe = app.add_subcommand("pipeline", "Partition an image and estimate per cell");
  auto* exp = app.add_subcommand("experiment", "Run a risk experiment");
  std::string experiment_name;
  exp->add_option("name", experiment_name, "Preset name (grid-risk, corners-ordering, grid16-ordering, "
                                           "bin-saturation, runtime)");
  auto* met = app.add_subcommand("metrics", "Distances between two measure files");
  std::string a_path, b_path;
  met->add_option("a", a_path)->required();
  met->add_option("b", b_path)->required();
  // Global flags are accepted after the subcommand too.
  for (auto* sub : {sim, est, pipe, exp, met}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  // Logs go to stderr so stdout stays machine-readable.
  if (!spdlog::get("pdecon")) spdlog::set_default_logger(spdlog::stderr_color_mt("pdecon"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  int code = 1;
  try {
    if (*sim) code = cmd_simulate(g);
    if (*est) code = cmd_estimate(g);
    if (*pipe) code = cmd_pipeline(g);
    if (*exp) code = cmd_experiment(g, experiment_name);
    if (*met) code = cmd_metrics(g, a_path, b_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 1;
  }
  return code;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace pdecon
