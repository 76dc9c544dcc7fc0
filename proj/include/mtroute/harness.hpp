#pragma once

// Experiment driver: baselines, grid runs over (max_mts, alpha) with
// repetitions, agreement metrics, and the report/audit file formats.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mtroute/backends.hpp"
#include "mtroute/domain.hpp"
#include "mtroute/router.hpp"
#include "mtroute/simulation.hpp"
#include "mtroute/util.hpp"

namespace mtroute {

// ---------------------------------------------------------------------------
// Metrics

// Per-class F1 (0/0 taken as 0) weighted by each class's share of `reference`.
inline double weighted_f1(std::span<const EngineId> predicted, std::span<const EngineId> reference) {
  if (predicted.size() != reference.size()) throw ConfigError("weighted_f1: length mismatch");
  if (predicted.empty()) throw ConfigError("weighted_f1: empty input");
  std::size_t classes = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) classes = std::max({classes, predicted[i] + 1, reference[i] + 1});
  std::vector<std::size_t> tp(classes, 0), pred_count(classes, 0), ref_count(classes, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++pred_count[predicted[i]];
    ++ref_count[reference[i]];
    if (predicted[i] == reference[i]) ++tp[predicted[i]];
  }
  double total = 0.0;
  const double n = static_cast<double>(reference.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (ref_count[c] == 0) continue;
    // F1 = 2 tp / (|predicted c| + |reference c|)
    const double f1 = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(pred_count[c] + ref_count[c]);
    total += f1 * static_cast<double>(ref_count[c]) / n;
  }
  return total;
}

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<double> values;   // row-major; row = ensemble choice, column = router choice
  std::vector<bool> supported;  // false for rows with no ensemble support (all zero)

  double at(std::size_t row, std::size_t col) const { return values[row * classes + col]; }
};

inline ConfusionMatrix normalize_counts(std::size_t classes, const std::vector<double>& counts) {
  ConfusionMatrix m{classes, counts, std::vector<bool>(classes, false)};
  for (std::size_t r = 0; r < classes; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < classes; ++c) row += m.values[r * classes + c];
    if (row == 0.0) continue;
    m.supported[r] = true;
    for (std::size_t c = 0; c < classes; ++c) m.values[r * classes + c] /= row;
  }
  return m;
}

inline std::vector<double> confusion_counts(std::span<const EngineId> router, std::span<const EngineId> ensemble,
                                            std::size_t first_n, std::size_t classes) {
  if (router.size() != ensemble.size()) throw ConfigError("confusion_matrix: length mismatch");
  if (first_n > router.size()) throw ConfigError("confusion_matrix: first_n exceeds sequence length");
  std::vector<double> counts(classes * classes, 0.0);
  for (std::size_t i = 0; i < first_n; ++i) {
    if (router[i] >= classes || ensemble[i] >= classes) throw ConfigError("confusion_matrix: label out of range");
    counts[ensemble[i] * classes + router[i]] += 1.0;
  }
  return counts;
}

// Rows = ensemble choice, columns = router choice, over the first `first_n`
// entries, each supported row normalized to sum to 1.
inline ConfusionMatrix confusion_matrix(std::span<const EngineId> router, std::span<const EngineId> ensemble,
                                        std::size_t first_n, std::size_t classes) {
  return normalize_counts(classes, confusion_counts(router, ensemble, first_n, classes));
}

// Weighted F1 over a trailing window ending at each position (partial
// windows at the start).
inline std::vector<double> windowed_f1(std::span<const EngineId> predicted, std::span<const EngineId> reference,
                                       std::size_t window) {
  if (window == 0) throw ConfigError("window must be positive");
  std::vector<double> out(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::size_t start = i + 1 >= window ? i + 1 - window : 0;
    out[i] = weighted_f1(predicted.subspan(start, i + 1 - start), reference.subspan(start, i + 1 - start));
  }
  return out;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 with a single value
  bool std_defined = false;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  s.std_defined = true;
  return s;
}

// ---------------------------------------------------------------------------
// Baselines

struct FullEnsembleResult {
  std::vector<EngineId> choice;  // per corpus request, in corpus order
  std::vector<std::string> translation;
  std::size_t engine_calls = 0;
  double total_cost = 0.0;
  std::optional<double> mean_quality;
};

// Translate every request with every engine and keep the best QE score
// (ties to the lowest engine id).
inline FullEnsembleResult baseline_full_ensemble(std::span<const TranslationRequest> corpus,
                                                 std::span<const EngineSpec> engines, QualityEstimator& qe,
                                                 const SimulatedWorld* world = nullptr) {
  FullEnsembleResult out;
  double quality = 0.0;
  for (const auto& r : corpus) {
    std::vector<std::string> hyps;
    hyps.reserve(engines.size());
    for (const auto& e : engines) {
      hyps.push_back(e.backend->translate(e, r));
      ++out.engine_calls;
    }
    const auto scores = qe.batch_score(r.source, hyps);
    EngineId best = 0;
    for (EngineId e = 1; e < engines.size(); ++e) {
      if (scores[e].value > scores[best].value) best = e;
    }
    const std::size_t chars = text::code_point_count(r.source);
    for (const auto& e : engines) out.total_cost += call_cost(e, chars);
    out.choice.push_back(best);
    out.translation.push_back(std::move(hyps[best]));
    if (world) quality += world->true_quality(r.id, best);
  }
  if (world && !corpus.empty()) out.mean_quality = quality / static_cast<double>(corpus.size());
  return out;
}

struct BestMtResult {
  EngineId engine = 0;
  double total_cost = 0.0;
  double mean_quality = 0.0;
  std::vector<double> per_engine_quality;
};

// The single engine with the highest mean true quality over the corpus
// (ties to the lowest engine id).
inline BestMtResult baseline_best_mt(std::span<const TranslationRequest> corpus, std::span<const EngineSpec> engines,
                                     const SimulatedWorld& world) {
  if (corpus.empty()) throw ConfigError("best_mt: empty corpus");
  BestMtResult out;
  out.per_engine_quality.assign(engines.size(), 0.0);
  std::vector<double> cost(engines.size(), 0.0);
  for (const auto& r : corpus) {
    const std::size_t chars = text::code_point_count(r.source);
    for (EngineId e = 0; e < engines.size(); ++e) {
      out.per_engine_quality[e] += world.true_quality(r.id, e);
      cost[e] += call_cost(engines[e], chars);
    }
  }
  for (double& q : out.per_engine_quality) q /= static_cast<double>(corpus.size());
  for (EngineId e = 1; e < engines.size(); ++e) {
    if (out.per_engine_quality[e] > out.per_engine_quality[out.engine]) out.engine = e;
  }
  out.mean_quality = out.per_engine_quality[out.engine];
  out.total_cost = cost[out.engine];
  return out;
}

// ---------------------------------------------------------------------------
// Single runs

struct RunTotals {
  double total_cost = 0.0;
  double mean_quality = 0.0;
  std::size_t engine_calls = 0;
  std::size_t qe_calls = 0;
  std::size_t exploit_steps = 0;
  std::size_t steps = 0;

  double exploit_fraction() const { return steps ? static_cast<double>(exploit_steps) / static_cast<double>(steps) : 0.0; }
};

// Totals in processing order; `quality` holds the true quality of each step's
// responded engine.
inline RunTotals totals_of(std::span<const StepOutcome> outcomes, std::span<const double> quality) {
  RunTotals t;
  double q = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    t.total_cost += outcomes[i].cost;
    q += quality[i];
    t.engine_calls += outcomes[i].engines_called.size();
    t.qe_calls += outcomes[i].qe_calls;
    if (!outcomes[i].explored) ++t.exploit_steps;
  }
  t.steps = outcomes.size();
  if (!outcomes.empty()) t.mean_quality = q / static_cast<double>(outcomes.size());
  return t;
}

struct RunRecord {
  std::size_t max_mts = 0;
  double alpha = 0.0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::vector<StepOutcome> outcomes;
  std::vector<double> quality;  // true quality per step
  RunTotals totals;
};

inline RunRecord run_once(const SimulationSetup& sim, RouterConfig config) {
  Router router(config, sim.engines, sim.qe);
  RunRecord rec;
  rec.max_mts = config.max_mts;
  rec.alpha = config.alpha;
  rec.seed = config.seed;
  rec.outcomes = router.run(sim.corpus);
  rec.quality.reserve(rec.outcomes.size());
  for (const auto& o : rec.outcomes) rec.quality.push_back(sim.world->true_quality(o.request_id, o.chosen_engine));
  rec.totals = totals_of(rec.outcomes, rec.quality);
  return rec;
}

// ---------------------------------------------------------------------------
// Audit trail
//
// One file per run. Two '#' lines (run identity, then column names) and one
// tab-separated record per step in processing order:
//   step request_id chosen_engine engines_called(';'-joined) qe_calls cost
//   explored(0/1) learned_label entropy source_chars true_quality(or -) translation(escaped)

inline void write_audit(std::ostream& out, const RunRecord& rec) {
  out << "# max_mts=" << rec.max_mts << " alpha=" << format_double(rec.alpha) << " repetition=" << rec.repetition
      << " seed=" << rec.seed << '\n';
  out << "# step\trequest_id\tchosen_engine\tengines_called\tqe_calls\tcost\texplored\tlearned_label\tentropy\t"
         "source_chars\ttrue_quality\ttranslation\n";
  for (std::size_t i = 0; i < rec.outcomes.size(); ++i) {
    const auto& o = rec.outcomes[i];
    out << i << '\t' << escape_field(o.request_id) << '\t' << o.chosen_engine << '\t';
    for (std::size_t k = 0; k < o.engines_called.size(); ++k) out << (k ? ";" : "") << o.engines_called[k];
    out << '\t' << o.qe_calls << '\t' << format_double(o.cost) << '\t' << (o.explored ? 1 : 0) << '\t'
        << o.learned_label << '\t' << format_double(o.entropy_at_decision) << '\t' << o.source_chars << '\t'
        << (i < rec.quality.size() ? format_double(rec.quality[i]) : std::string("-")) << '\t'
        << escape_field(o.translation) << '\n';
  }
}

inline RunRecord read_audit(std::istream& in) {
  RunRecord rec;
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# max_mts=")) throw FormatError("audit: missing run header");
  {
    std::istringstream hs(line.substr(2));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("audit: bad header token '" + tok + "'");
      const auto key = tok.substr(0, eq);
      const auto val = std::string_view(tok).substr(eq + 1);
      if (key == "max_mts") rec.max_mts = parse_u64(val);
      else if (key == "alpha") rec.alpha = parse_double(val);
      else if (key == "repetition") rec.repetition = parse_u64(val);
      else if (key == "seed") rec.seed = parse_u64(val);
    }
  }
  bool have_quality = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 12) throw FormatError("audit: expected 12 fields, got " + std::to_string(f.size()));
    StepOutcome o;
    o.request_id = unescape_field(f[1]);
    o.chosen_engine = parse_u64(f[2]);
    for (auto e : split(f[3], ';')) o.engines_called.push_back(parse_u64(e));
    o.qe_calls = parse_u64(f[4]);
    o.cost = parse_double(f[5]);
    o.explored = f[6] == "1";
    o.learned_label = parse_u64(f[7]);
    o.entropy_at_decision = parse_double(f[8]);
    o.source_chars = parse_u64(f[9]);
    if (f[10] == "-") have_quality = false;
    else rec.quality.push_back(parse_double(f[10]));
    o.translation = unescape_field(f[11]);
    rec.outcomes.push_back(std::move(o));
  }
  if (!have_quality) rec.quality.clear();
  else rec.totals = totals_of(rec.outcomes, rec.quality);
  return rec;
}

// ---------------------------------------------------------------------------
// Grid experiments

struct GridSpec {
  std::vector<std::size_t> max_mts;
  std::vector<double> alpha;
};

struct GridOptions {
  std::size_t repetitions = 1;
  std::uint64_t base_seed = 0;
  std::size_t f1_window = 100;
  std::size_t confusion_prefix = 100;
  RouterConfig router;  // template; max_mts, alpha and seed are overwritten per run
  std::optional<std::filesystem::path> audit_dir;
  // Execute cells in this order (indices into the cell list). Results do not
  // depend on it.
  std::vector<std::size_t> cell_order;
};

// Seed for one run; depends only on the cell and the repetition.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::size_t max_mts, double alpha, std::size_t repetition) {
  return mix(base_seed, max_mts, std::bit_cast<std::uint64_t>(alpha), repetition);
}

struct CellReport {
  std::size_t max_mts = 0;
  double alpha = 0.0;
  std::size_t repetitions = 0;
  Summary cost, quality, engine_calls, qe_calls, exploit_fraction;
  std::vector<double> convergence;  // windowed F1 vs ensemble, averaged over repetitions
  ConfusionMatrix confusion;        // pooled over repetitions
};

struct ExperimentReport {
  std::size_t n_requests = 0;
  std::size_t n_engines = 0;
  std::size_t f1_window = 100;
  std::size_t confusion_prefix = 100;
  std::vector<CellReport> cells;
  FullEnsembleResult full_ensemble;
  BestMtResult best_mt;
};

// Aggregates the runs of one cell. `ensemble_by_id` maps request id to the
// full-ensemble choice.
inline CellReport aggregate_cell(std::size_t max_mts, double alpha, std::span<const RunRecord> runs,
                                 const std::unordered_map<std::string, EngineId>& ensemble_by_id,
                                 std::size_t classes, std::size_t window, std::size_t confusion_prefix) {
  CellReport cell;
  cell.max_mts = max_mts;
  cell.alpha = alpha;
  cell.repetitions = runs.size();
  std::vector<double> cost, quality, calls, qe, exploit;
  std::vector<double> counts(classes * classes, 0.0);
  for (const auto& run : runs) {
    cost.push_back(run.totals.total_cost);
    quality.push_back(run.totals.mean_quality);
    calls.push_back(static_cast<double>(run.totals.engine_calls));
    qe.push_back(static_cast<double>(run.totals.qe_calls));
    exploit.push_back(run.totals.exploit_fraction());

    std::vector<EngineId> routed, reference;
    routed.reserve(run.outcomes.size());
    reference.reserve(run.outcomes.size());
    for (const auto& o : run.outcomes) {
      routed.push_back(o.chosen_engine);
      reference.push_back(ensemble_by_id.at(o.request_id));
    }
    const auto curve = windowed_f1(routed, reference, window);
    if (cell.convergence.empty()) cell.convergence.assign(curve.size(), 0.0);
    for (std::size_t i = 0; i < curve.size(); ++i) cell.convergence[i] += curve[i] / static_cast<double>(runs.size());
    const auto c = confusion_counts(routed, reference, std::min(confusion_prefix, routed.size()), classes);
    for (std::size_t i = 0; i < c.size(); ++i) counts[i] += c[i];
  }
  cell.cost = summarize(cost);
  cell.quality = summarize(quality);
  cell.engine_calls = summarize(calls);
  cell.qe_calls = summarize(qe);
  cell.exploit_fraction = summarize(exploit);
  cell.confusion = normalize_counts(classes, counts);
  return cell;
}

inline std::filesystem::path audit_path(const std::filesystem::path& dir, std::size_t max_mts, double alpha,
                                        std::size_t repetition) {
  return dir / ("run_m" + std::to_string(max_mts) + "_a" + format_double(alpha) + "_r" + std::to_string(repetition) +
                ".tsv");
}

inline void write_full_ensemble(std::ostream& out, std::span<const TranslationRequest> corpus,
                                std::span<const EngineSpec> engines, const FullEnsembleResult& full,
                                const SimulatedWorld& world);

inline ExperimentReport run_grid(const SimulationSetup& sim, const GridSpec& grid, const GridOptions& options) {
  if (options.repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (grid.max_mts.empty() || grid.alpha.empty()) throw ConfigError("grid must have at least one max_mts and one alpha");
  for (auto m : grid.max_mts) {
    RouterConfig probe = options.router;
    probe.max_mts = m;
    validate_config(probe, sim.engines);
  }
  for (double a : grid.alpha) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("grid alpha outside [0, 1]");
  }

  ExperimentReport report;
  report.n_requests = sim.corpus.size();
  report.n_engines = sim.engines.size();
  report.f1_window = options.f1_window;
  report.confusion_prefix = options.confusion_prefix;
  report.full_ensemble = baseline_full_ensemble(sim.corpus, sim.engines, *sim.qe, sim.world.get());
  report.best_mt = baseline_best_mt(sim.corpus, sim.engines, *sim.world);

  std::unordered_map<std::string, EngineId> ensemble_by_id;
  for (std::size_t i = 0; i < sim.corpus.size(); ++i) ensemble_by_id[sim.corpus[i].id] = report.full_ensemble.choice[i];

  if (options.audit_dir) {
    std::filesystem::create_directories(*options.audit_dir);
    std::ofstream f(*options.audit_dir / "full_ensemble.tsv", std::ios::binary);
    write_full_ensemble(f, sim.corpus, sim.engines, report.full_ensemble, *sim.world);
  }

  struct Cell {
    std::size_t m;
    double a;
  };
  std::vector<Cell> cells;
  for (auto m : grid.max_mts)
    for (double a : grid.alpha) cells.push_back({m, a});

  std::vector<std::size_t> order = options.cell_order;
  if (order.empty()) {
    order.resize(cells.size());
    std::iota(order.begin(), order.end(), 0);
  }
  if (order.size() != cells.size()) throw ConfigError("cell_order must list every cell once");

  report.cells.resize(cells.size());
  std::vector<bool> done(cells.size(), false);
  for (std::size_t idx : order) {
    if (idx >= cells.size() || done[idx]) throw ConfigError("cell_order must list every cell once");
    done[idx] = true;
    const auto [m, a] = cells[idx];
    std::vector<RunRecord> runs;
    for (std::size_t r = 0; r < options.repetitions; ++r) {
      RouterConfig cfg = options.router;
      cfg.max_mts = m;
      cfg.alpha = a;
      cfg.seed = derive_seed(options.base_seed, m, a, r);
      RunRecord rec;
      try {
        rec = run_once(sim, cfg);
      } catch (const RunError& e) {
        throw RunError(e.completed_steps(), e.cause(),
                       "cell max_mts=" + std::to_string(m) + " alpha=" + format_double(a) + " repetition=" +
                           std::to_string(r) + ": " + e.what());
      }
      rec.repetition = r;
      if (options.audit_dir) {
        std::ofstream f(audit_path(*options.audit_dir, m, a, r), std::ios::binary);
        write_audit(f, rec);
      }
      runs.push_back(std::move(rec));
    }
    report.cells[idx] = aggregate_cell(m, a, runs, ensemble_by_id, sim.engines.size(), options.f1_window,
                                       options.confusion_prefix);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report files

// Per-request full-ensemble record, enough to rebuild both baselines:
//   '# prices=p0,p1,...' then
//   request_id ensemble_choice source_chars q0 ... q{K-1}
inline void write_full_ensemble(std::ostream& out, std::span<const TranslationRequest> corpus,
                                std::span<const EngineSpec> engines, const FullEnsembleResult& full,
                                const SimulatedWorld& world) {
  std::vector<double> prices;
  for (const auto& e : engines) prices.push_back(e.price_per_million_chars);
  out << "# prices=" << join_doubles(prices) << '\n';
  out << "# request_id\tensemble_choice\tsource_chars";
  for (std::size_t e = 0; e < engines.size(); ++e) out << "\tq" << e;
  out << '\n';
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out << escape_field(corpus[i].id) << '\t' << full.choice[i] << '\t' << text::code_point_count(corpus[i].source);
    for (EngineId e = 0; e < engines.size(); ++e) out << '\t' << format_double(world.true_quality(corpus[i].id, e));
    out << '\n';
  }
}

inline std::string cells_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "max_mts,alpha,repetitions,cost_mean,cost_std,quality_mean,quality_std,engine_calls_mean,engine_calls_std,"
         "qe_calls_mean,qe_calls_std,exploit_fraction_mean,exploit_fraction_std,std_defined\n";
  for (const auto& c : r.cells) {
    out << c.max_mts << ',' << format_double(c.alpha) << ',' << c.repetitions;
    for (const Summary* s : {&c.cost, &c.quality, &c.engine_calls, &c.qe_calls, &c.exploit_fraction}) {
      out << ',' << format_double(s->mean) << ',' << format_double(s->std);
    }
    out << ',' << (c.cost.std_defined ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string baselines_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "baseline,engine,total_cost,mean_quality,engine_calls\n";
  out << "best_mt," << r.best_mt.engine << ',' << format_double(r.best_mt.total_cost) << ','
      << format_double(r.best_mt.mean_quality) << ',' << r.n_requests << '\n';
  out << "full_ensemble,-," << format_double(r.full_ensemble.total_cost) << ','
      << (r.full_ensemble.mean_quality ? format_double(*r.full_ensemble.mean_quality) : std::string("-")) << ','
      << r.full_ensemble.engine_calls << '\n';
  return out.str();
}

inline std::string convergence_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "max_mts,alpha,step,weighted_f1\n";
  for (const auto& c : r.cells) {
    for (std::size_t i = 0; i < c.convergence.size(); ++i) {
      out << c.max_mts << ',' << format_double(c.alpha) << ',' << i << ',' << format_double(c.convergence[i]) << '\n';
    }
  }
  return out.str();
}

inline std::string confusion_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "max_mts,alpha,ensemble_engine,router_engine,value,row_supported\n";
  for (const auto& c : r.cells) {
    for (std::size_t row = 0; row < c.confusion.classes; ++row) {
      for (std::size_t col = 0; col < c.confusion.classes; ++col) {
        out << c.max_mts << ',' << format_double(c.alpha) << ',' << row << ',' << col << ','
            << format_double(c.confusion.at(row, col)) << ',' << (c.confusion.supported[row] ? 1 : 0) << '\n';
      }
    }
  }
  return out.str();
}

inline nlohmann::ordered_json summary_json(const ExperimentReport& r) {
  nlohmann::ordered_json j;
  j["n_requests"] = r.n_requests;
  j["n_engines"] = r.n_engines;
  j["f1_window"] = r.f1_window;
  j["confusion_prefix"] = r.confusion_prefix;
  j["baselines"] = {
      {"best_mt", {{"engine", r.best_mt.engine}, {"total_cost", r.best_mt.total_cost}, {"mean_quality", r.best_mt.mean_quality}}},
      {"full_ensemble",
       {{"total_cost", r.full_ensemble.total_cost},
        {"mean_quality", r.full_ensemble.mean_quality ? nlohmann::ordered_json(*r.full_ensemble.mean_quality) : nullptr},
        {"engine_calls", r.full_ensemble.engine_calls}}}};
  auto& cells = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    const std::size_t tail = std::min<std::size_t>(c.convergence.size(), r.f1_window);
    const double final_f1 = c.convergence.empty() ? 0.0 : c.convergence.back();
    cells.push_back({{"max_mts", c.max_mts},
                     {"alpha", c.alpha},
                     {"repetitions", c.repetitions},
                     {"cost", {{"mean", c.cost.mean}, {"std", c.cost.std}}},
                     {"quality", {{"mean", c.quality.mean}, {"std", c.quality.std}}},
                     {"exploit_fraction", c.exploit_fraction.mean},
                     {"final_window_f1", final_f1},
                     {"window", tail},
                     {"std_defined", c.cost.std_defined}});
  }
  return j;
}

inline void write_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& body) {
    std::ofstream f(dir / name, std::ios::binary);
    f << body;
    if (!f) throw Error(std::string("cannot write ") + (dir / name).string());
  };
  put("cells.csv", cells_csv(r));
  put("baselines.csv", baselines_csv(r));
  put("convergence.csv", convergence_csv(r));
  put("confusion.csv", confusion_csv(r));
  put("summary.json", summary_json(r).dump(2) + "\n");
}

// Rebuilds a report from an audit directory written by run_grid.
inline ExperimentReport report_from_audits(const std::filesystem::path& dir, std::size_t f1_window = 100,
                                           std::size_t confusion_prefix = 100) {
  ExperimentReport report;
  report.f1_window = f1_window;
  report.confusion_prefix = confusion_prefix;

  std::ifstream fe(dir / "full_ensemble.tsv", std::ios::binary);
  if (!fe) throw LookupError("missing " + (dir / "full_ensemble.tsv").string());
  std::string line;
  std::getline(fe, line);
  if (!line.starts_with("# prices=")) throw FormatError("full_ensemble.tsv: missing prices header");
  const auto prices = parse_doubles(std::string_view(line).substr(9));
  const std::size_t k = prices.size();
  report.n_engines = k;
  std::unordered_map<std::string, EngineId> ensemble_by_id;
  std::vector<double> engine_quality(k, 0.0), engine_cost(k, 0.0);
  double full_quality = 0.0;
  while (std::getline(fe, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 3 + k) throw FormatError("full_ensemble.tsv: wrong field count");
    const EngineId choice = parse_u64(f[1]);
    const std::size_t chars = parse_u64(f[2]);
    ensemble_by_id[unescape_field(f[0])] = choice;
    report.full_ensemble.choice.push_back(choice);
    for (EngineId e = 0; e < k; ++e) {
      const double q = parse_double(f[3 + e]);
      engine_quality[e] += q;
      const double c = prices[e] * static_cast<double>(chars) / 1e6;
      engine_cost[e] += c;
      report.full_ensemble.total_cost += c;
      if (e == choice) full_quality += q;
    }
    report.full_ensemble.engine_calls += k;
  }
  const std::size_t n = report.full_ensemble.choice.size();
  if (n == 0) throw FormatError("full_ensemble.tsv: no records");
  report.n_requests = n;
  report.full_ensemble.mean_quality = full_quality / static_cast<double>(n);
  for (double& q : engine_quality) q /= static_cast<double>(n);
  report.best_mt.per_engine_quality = engine_quality;
  for (EngineId e = 1; e < k; ++e) {
    if (engine_quality[e] > engine_quality[report.best_mt.engine]) report.best_mt.engine = e;
  }
  report.best_mt.mean_quality = engine_quality[report.best_mt.engine];
  report.best_mt.total_cost = engine_cost[report.best_mt.engine];

  std::map<std::pair<std::size_t, std::uint64_t>, std::vector<RunRecord>> by_cell;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("run_") && name.ends_with(".tsv")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::ifstream f(p, std::ios::binary);
    auto rec = read_audit(f);
    if (rec.quality.empty()) throw FormatError(p.string() + ": audit lacks true quality");
    by_cell[{rec.max_mts, std::bit_cast<std::uint64_t>(rec.alpha)}].push_back(std::move(rec));
  }
  // Cells in (max_mts, alpha) order, repetitions in index order.
  std::vector<std::pair<std::size_t, double>> keys;
  for (const auto& [key, runs] : by_cell) keys.emplace_back(key.first, std::bit_cast<double>(key.second));
  std::sort(keys.begin(), keys.end());
  for (const auto& [m, a] : keys) {
    auto& runs = by_cell[{m, std::bit_cast<std::uint64_t>(a)}];
    std::sort(runs.begin(), runs.end(), [](const RunRecord& x, const RunRecord& y) { return x.repetition < y.repetition; });
    report.cells.push_back(aggregate_cell(m, a, runs, ensemble_by_id, k, f1_window, confusion_prefix));
  }
  return report;
}

}  // namespace mtroute
