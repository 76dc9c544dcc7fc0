// mtroute: command-line driver for the adaptive MT router.
//
// Exit codes: 0 success, 1 configuration/input error, 2 backend error,
// 3 internal invariant violation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtroute/config.hpp"
#include "mtroute/harness.hpp"
#include "mtroute/router.hpp"
#include "mtroute/simulation.hpp"

namespace fs = std::filesystem;
using namespace mtroute;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kBackend = 2, kInternal = 3 };

struct Options {
  std::string config;
  std::optional<std::size_t> max_mts;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repetitions;
  std::string corpus;
  std::string out = "mtroute-out";
  std::string qe;
  std::string engines;
  std::string audit_dir;
};

AppConfig resolve(const Options& o) {
  AppConfig c = o.config.empty() ? parse_config(nlohmann::json::object()) : load_config(o.config);
  if (!o.engines.empty()) {
    auto j = read_json_file(o.engines);
    c.engines = parse_engines(j.is_object() && j.contains("engines") ? j.at("engines") : j);
  }
  if (!o.qe.empty()) {
    if (o.qe == "sim") {
      c.qe.http = false;
    } else if (o.qe.starts_with("http:")) {
      c.qe.http = true;
      c.qe.endpoint = HttpEndpoint{};
      c.qe.endpoint.base_url = o.qe.substr(5);
    } else {
      throw ConfigError("--qe must be sim or http:URL");
    }
  }
  if (o.max_mts) c.router.max_mts = *o.max_mts;
  if (o.alpha) c.router.alpha = *o.alpha;
  if (o.seed) {
    c.router.seed = *o.seed;
    c.experiment.base_seed = *o.seed;
  }
  if (o.repetitions) c.experiment.repetitions = *o.repetitions;
  return c;
}

// Requests from --corpus (corpus file, or plain text with one segment per
// line) or from the configured synthetic generator.
std::vector<TranslationRequest> load_requests(const Options& o, const AppConfig& c) {
  if (o.corpus.empty()) return generate_corpus(c.simulation.corpus);
  std::ifstream in(o.corpus, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + o.corpus);
  if (looks_like_corpus(in)) return load_corpus(in);

  std::optional<VectorStore> store;
  if (c.features.embedding_dim) {
    if (!c.embeddings_path) throw ConfigError("features.embedding_dim set without features.embeddings_path");
    std::ifstream vs(*c.embeddings_path);
    if (!vs) throw ConfigError("cannot open " + *c.embeddings_path);
    store = VectorStore::load(vs, c.features.embedding_dim);
  }
  std::vector<TranslationRequest> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    TranslationRequest r;
    r.id = request_id_for(out.size());
    r.arrival_index = out.size();
    r.features = build_features(r.id, line, c.features, store ? &*store : nullptr);
    r.source = std::move(line);
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError(o.corpus + ": no requests");
  return out;
}

struct Backends {
  std::vector<EngineSpec> engines;
  std::shared_ptr<QualityEstimator> qe;
  std::shared_ptr<SimulatedWorld> world;  // null for remote backends
  std::vector<TranslationRequest> corpus;
};

Backends make_backends(const AppConfig& c, std::vector<TranslationRequest> corpus) {
  Backends b;
  if (all_simulated(c)) {
    for (const auto& r : corpus) {
      if (!r.latent_domain) throw ConfigError("simulated backends need a corpus with latent domains");
    }
    auto sim = make_simulation(std::move(corpus), world_params(c));
    b.engines = std::move(sim.engines);
    b.qe = std::move(sim.qe);
    b.world = std::move(sim.world);
    b.corpus = std::move(sim.corpus);
    return b;
  }
  if (!c.qe.http) throw ConfigError("remote engines need a remote quality estimator (--qe http:URL)");
  b.engines = http_engines(c);
  b.qe = std::make_shared<HttpQualityEstimator>(c.qe.endpoint);
  b.corpus = std::move(corpus);
  return b;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary);
  f << body;
  if (!f) throw Error("cannot write " + p.string());
}

int cmd_run(const Options& o) {
  const AppConfig c = resolve(o);
  auto b = make_backends(c, load_requests(o, c));
  Router router(c.router, b.engines, b.qe);
  RunRecord rec;
  rec.max_mts = c.router.max_mts;
  rec.alpha = c.router.alpha;
  rec.seed = c.router.seed;
  rec.outcomes = router.run(b.corpus);
  if (b.world) {
    for (const auto& s : rec.outcomes) rec.quality.push_back(b.world->true_quality(s.request_id, s.chosen_engine));
  } else {
    rec.quality.assign(rec.outcomes.size(), 0.0);
  }
  rec.totals = totals_of(rec.outcomes, rec.quality);
  if (!b.world) rec.quality.clear();

  fs::create_directories(o.out);
  {
    std::ofstream f(fs::path(o.out) / "audit.tsv", std::ios::binary);
    write_audit(f, rec);
  }
  nlohmann::ordered_json j;
  j["max_mts"] = rec.max_mts;
  j["alpha"] = rec.alpha;
  j["seed"] = rec.seed;
  j["requests"] = rec.totals.steps;
  j["total_cost"] = rec.totals.total_cost;
  j["mean_true_quality"] = b.world ? nlohmann::ordered_json(rec.totals.mean_quality) : nullptr;
  j["engine_calls"] = rec.totals.engine_calls;
  j["qe_calls"] = rec.totals.qe_calls;
  j["exploit_fraction"] = rec.totals.exploit_fraction();
  write_file(fs::path(o.out) / "summary.json", j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return kOk;
}

void sort_unique(auto& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

int cmd_grid(const Options& o) {
  AppConfig c = resolve(o);
  if (!all_simulated(c)) throw ConfigError("grid runs need simulated engines and QE");
  auto sim = make_simulation(load_requests(o, c), world_params(c));
  GridSpec grid = c.experiment.grid;
  if (o.max_mts) grid.max_mts = {*o.max_mts};
  if (o.alpha) grid.alpha = {*o.alpha};
  sort_unique(grid.max_mts);
  sort_unique(grid.alpha);
  GridOptions opts;
  opts.repetitions = c.experiment.repetitions;
  opts.base_seed = c.experiment.base_seed;
  opts.f1_window = c.experiment.f1_window;
  opts.confusion_prefix = c.experiment.confusion_prefix;
  opts.router = c.router;
  opts.audit_dir = fs::path(o.out) / "audit";
  const auto report = run_grid(sim, grid, opts);
  write_report(report, o.out);
  std::cout << baselines_csv(report) << cells_csv(report);
  return kOk;
}

int cmd_baselines(const Options& o) {
  const AppConfig c = resolve(o);
  auto b = make_backends(c, load_requests(o, c));
  const auto full = baseline_full_ensemble(b.corpus, b.engines, *b.qe, b.world.get());
  std::ostringstream csv;
  csv << "baseline,engine,total_cost,mean_quality,engine_calls\n";
  if (b.world) {
    const auto best = baseline_best_mt(b.corpus, b.engines, *b.world);
    csv << "best_mt," << best.engine << ',' << format_double(best.total_cost) << ','
        << format_double(best.mean_quality) << ',' << b.corpus.size() << '\n';
  }
  csv << "full_ensemble,-," << format_double(full.total_cost) << ','
      << (full.mean_quality ? format_double(*full.mean_quality) : std::string("-")) << ',' << full.engine_calls << '\n';
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "baselines.csv", csv.str());
  std::cout << csv.str();
  return kOk;
}

int cmd_report(const Options& o, std::size_t window, std::size_t prefix) {
  if (o.audit_dir.empty()) throw ConfigError("report needs an audit directory");
  const auto report = report_from_audits(o.audit_dir, window, prefix);
  write_report(report, o.out);
  std::cout << baselines_csv(report) << cells_csv(report);
  return kOk;
}

int cmd_dump_corpus(const Options& o) {
  const AppConfig c = resolve(o);
  const auto corpus = generate_corpus(c.simulation.corpus);
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + o.out);
  save_corpus(f, corpus);
  return kOk;
}

int classify(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const RunError& e) {
    std::cerr << "error: " << e.what() << '\n';
    const int code = classify(e.cause());
    return code;
  } catch (const BackendError&) {
    return kBackend;
  } catch (const ConfigError&) {
    return kConfig;
  } catch (const FormatError&) {
    return kConfig;
  } catch (const LookupError&) {
    return kConfig;
  } catch (...) {
    return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive machine-translation router with entropy-gated exploration"};
  app.require_subcommand(1);
  Options o;
  std::size_t window = 100, prefix = 100;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--engines", o.engines, "JSON engine list, overrides the config's engines")->check(CLI::ExistingFile);
    sub->add_option("--corpus", o.corpus, "corpus file, or plain text with one segment per line")->check(CLI::ExistingFile);
    sub->add_option("--qe", o.qe, "quality estimator: sim or http:URL");
    sub->add_option("--seed", o.seed, "router seed (run) or base seed (grid)");
  };

  auto* run = app.add_subcommand("run", "route one corpus with a single configuration");
  common(run);
  run->add_option("--max-mts", o.max_mts, "engines sampled per explore step");
  run->add_option("--alpha", o.alpha, "normalized-entropy threshold for exploitation");
  run->add_option("--out", o.out, "output directory");

  auto* grid = app.add_subcommand("grid", "full (max_mts, alpha) study on simulated backends");
  common(grid);
  grid->add_option("--max-mts", o.max_mts, "restrict the grid to one max_mts");
  grid->add_option("--alpha", o.alpha, "restrict the grid to one alpha");
  grid->add_option("--repetitions", o.repetitions, "runs per grid cell");
  grid->add_option("--out", o.out, "output directory");

  auto* baselines = app.add_subcommand("baselines", "best single engine and full QE ensemble");
  common(baselines);
  baselines->add_option("--out", o.out, "output directory");

  auto* report = app.add_subcommand("report", "recompute report tables from audit trails");
  report->add_option("audit_dir", o.audit_dir, "audit directory written by grid")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", o.out, "output directory");
  report->add_option("--window", window, "weighted-F1 window");
  report->add_option("--confusion-prefix", prefix, "requests counted in the confusion matrix");

  auto* dump = app.add_subcommand("dump-corpus", "write the configured synthetic corpus to a file");
  dump->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  dump->add_option("--out", o.out, "corpus file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(o);
    if (*grid) return cmd_grid(o);
    if (*baselines) return cmd_baselines(o);
    if (*report) return cmd_report(o, window, prefix);
    if (*dump) return cmd_dump_corpus(o);
  } catch (const RunError&) {
    return classify(std::current_exception());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return classify(std::current_exception());
  }
  return kInternal;
}
