#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rsclust/consensus.hpp"
#include "rsclust/diagnostics.hpp"
#include "rsclust/io.hpp"
#include "rsclust/model.hpp"
#include "rsclust/oracle.hpp"
#include "rsclust/regen.hpp"
#include "rsclust/samplers.hpp"

namespace rsclust::cli {

using nlohmann::json;

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::optimization_failure:
      return kOptimizationFailure;
    case ErrorKind::resource_limit:
      return kResourceLimit;
    default:
      return kInputError;
  }
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> default_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 1; i <= n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

int num_observations(const Trace& trace) {
  return static_cast<int>(trace.state(0).str().size());
}

// Rough moment-based starting point for the EB fit.
HyperParams moment_init(const DataMatrix& data) {
  const Eigen::MatrixXd& means = data.means();
  HyperParams h;
  h.mu = means.mean();
  const int dof = data.num_columns() - data.num_observations();
  h.sigma2 = dof > 0 ? data.within_ss().sum() / (static_cast<double>(dof) * data.num_variables())
                     : 1.0;
  const double spread = (means.array() - h.mu).square().mean();
  h.sigma2_eta = std::max(0.5 * spread, 1e-3);
  h.sigma2_theta = std::max(spread, 1e-3);
  h.p = 0.5;
  h.sigma2 = std::max(h.sigma2, 1e-3);
  return h;
}

StateKey choose_delta(const Trace& trace, const std::string& rule) {
  if (rule == "most-visited") return most_visited_state(trace);
  const StateKey key(rule);
  key.allocation();  // validates
  if (trace.find(key) < 0) {
    fail(ErrorKind::insufficient_regeneration, "return state " + rule + " never visited");
  }
  return key;
}

using SchemeFn = std::function<PartitionScheme(const Trace&, int)>;

struct Checkpoint {
  std::size_t iteration = 0;
  std::string delta;
  int R = 0;
  std::vector<double> p, t2, log_z_inv;
  double max_cv = kNaN;
  std::string note;
};

Checkpoint evaluate_checkpoint(const Trace& prefix, const std::vector<int>& Ks,
                               const std::string& delta_rule, const SchemeFn& scheme) {
  Checkpoint c;
  c.iteration = prefix.size();
  c.p.assign(Ks.size(), kNaN);
  c.t2.assign(Ks.size(), kNaN);
  c.log_z_inv.assign(Ks.size(), kNaN);
  try {
    const StateKey delta = choose_delta(prefix, delta_rule);
    c.delta = delta.str();
    const Tours tours = find_tours(prefix, delta);
    c.R = tours.R;
    for (std::size_t k = 0; k < Ks.size(); ++k) {
      try {
        const DiagnosticResult r = hotelling_rs(prefix, tours, scheme(prefix, Ks[k]));
        c.p[k] = r.p_value;
        c.t2[k] = r.t2;
        c.log_z_inv[k] = r.log_z_inv_hat;
      } catch (const Error& e) {
        c.note += (c.note.empty() ? "" : "; ") + std::string("K=") + std::to_string(Ks[k]) + ": " + e.what();
      }
    }
    if (tours.R >= 2) c.max_cv = cv_all_pairs(prefix, tours).max_cv;
  } catch (const Error& e) {
    c.note = e.what();
  }
  return c;
}

std::string format_series(const std::vector<Checkpoint>& series, const std::vector<int>& Ks) {
  std::ostringstream out;
  out << "iteration,delta,R";
  for (int k : Ks) out << ",p_K" << k << ",t2_K" << k << ",log_z_inv_K" << k;
  out << ",max_cv,note\n";
  for (const auto& c : series) {
    out << c.iteration << ',' << c.delta << ',' << c.R;
    for (std::size_t k = 0; k < Ks.size(); ++k) {
      out << ',' << format_double(c.p[k]) << ',' << format_double(c.t2[k]) << ','
          << format_double(c.log_z_inv[k]);
    }
    std::string note = c.note;
    std::replace(note.begin(), note.end(), ',', ';');
    out << ',' << format_double(c.max_cv) << ',' << note << '\n';
  }
  return out.str();
}

void write_map(const fs::path& path, const MapState& map, const std::vector<std::string>& ids) {
  std::ostringstream out;
  out << "# state=" << map.key.str() << "\n# log_post=" << format_double(map.log_post)
      << "\nid,cluster\n";
  for (int i = 0; i < map.allocation.size(); ++i) {
    out << ids[static_cast<std::size_t>(i)] << ',' << map.allocation[i] << '\n';
  }
  write_file_atomic(path, out.str());
}

// Final-state outputs shared by run and report. Returns the per-K results.
json write_final_outputs(const Trace& trace, const std::vector<int>& Ks,
                         const std::string& delta_rule, const SchemeFn& scheme,
                         const std::vector<std::string>& ids, double rho_min,
                         const fs::path& dir) {
  json summary;
  const StateKey delta = choose_delta(trace, delta_rule);
  const Tours tours = find_tours(trace, delta);
  write_tours(dir / "tours.csv", tours);
  summary["delta"] = delta.str();
  summary["R"] = tours.R;
  summary["mean_tour_length"] = tours.mean_length;
  json per_k = json::object();
  for (int k : Ks) {
    try {
      const DiagnosticResult r = hotelling_rs(trace, tours, scheme(trace, k));
      const std::string text = diagnostic_json(r);
      write_file_atomic(dir / ("diagnostic_K" + std::to_string(k) + ".json"), text + "\n");
      per_k[std::to_string(k)] = {{"p_value", r.p_value}, {"t2", r.t2}, {"dof", r.dof}};
    } catch (const Error& e) {
      per_k[std::to_string(k)] = {{"error", e.what()}};
    }
  }
  summary["hotelling"] = per_k;
  if (tours.R >= 2) {
    const ConsensusMatrix cm = co_occurrence_rs(trace, tours);
    write_consensus(dir, "consensus", cm, ids);
    write_consensus_pairs(dir / "consensus_pairs.csv", cm, ids, rho_min);
    const CvSummary cv = cv_all_pairs(trace, tours);
    summary["max_cv"] = cv.max_cv;
    summary["max_cv_pair"] = {ids[static_cast<std::size_t>(cv.argmax_i)],
                              ids[static_cast<std::size_t>(cv.argmax_j)]};
  }
  const MapState map = map_allocation(trace);
  write_map(dir / "map.csv", map, ids);
  summary["map_state"] = map.key.str();
  summary["map_log_post"] = map.log_post;
  return summary;
}

HyperParams resolve_hyper(const RunManifest& m, const DataMatrix& data, std::ostream& log) {
  if (m.hyper != "fit") return read_hyper(m.hyper).hyper;
  EbOptions options;
  const EbFit fit = fit_empirical_bayes(data, moment_init(data), options);
  write_hyper(m.out_dir / "hyper.txt", fit.hyper, &fit.standard_errors);
  log << "fitted hyperparameters: objective " << format_double(fit.objective) << "\n";
  return fit.hyper;
}

}  // namespace

// ------------------------------------------------------------------ fit

int cmd_fit(const FitArgs& args, std::ostream& log) {
  const DataMatrix data = read_data_csv(args.data);
  const HyperParams init = args.init ? read_hyper(*args.init).hyper : moment_init(data);
  EbOptions options;
  options.seed = args.seed;
  options.starts = args.starts;
  const EbFit fit = fit_empirical_bayes(data, init, options);
  write_hyper(args.out, fit.hyper, &fit.standard_errors);
  log << "objective " << format_double(fit.init_objective) << " -> "
      << format_double(fit.objective) << " in " << fit.iterations << " iterations (start "
      << fit.best_start << ")\n";
  const std::size_t shown = std::min<std::size_t>(fit.trace.size(), 5);
  for (std::size_t i = fit.trace.size() - shown; i < fit.trace.size(); ++i) {
    log << "  iter " << fit.trace[i].iteration << "  objective "
        << format_double(fit.trace[i].objective) << "  |grad| "
        << format_double(fit.trace[i].gradient_norm) << "\n";
  }
  for (const auto& name : fit.boundary_hits) log << "warning: " << name << " at its guard\n";
  log << format_hyper(fit.hyper, &fit.standard_errors);
  return kOk;
}

// ------------------------------------------------------------------ run

void RunManifest::validate() const {
  if (data.has_value() == fixture.has_value()) {
    fail(ErrorKind::invalid_input, "manifest needs exactly one of data or fixture");
  }
  if (data && !fs::exists(*data)) fail(ErrorKind::invalid_input, "data file not found: " + data->string());
  if (data && hyper != "fit" && !fs::exists(hyper)) {
    fail(ErrorKind::invalid_input, "hyperparameter file not found: " + hyper);
  }
  if (K.empty()) fail(ErrorKind::invalid_input, "K list is empty");
  for (int k : K) {
    if (k < 2) fail(ErrorKind::invalid_input, "K values must be >= 2");
  }
  if (chains.empty()) fail(ErrorKind::invalid_input, "manifest lists no chains");
  std::vector<std::string> names;
  for (const auto& c : chains) {
    if (c.iters < 1) fail(ErrorKind::invalid_input, "chain " + c.name + ": iters must be >= 1");
    parse_kernel(c.kernel);
    names.push_back(c.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    fail(ErrorKind::invalid_input, "chain names must be unique");
  }
  if (check_every < 1) fail(ErrorKind::invalid_input, "check-every must be >= 1");
  if (threads < 1) fail(ErrorKind::invalid_input, "threads must be >= 1");
  if (fixture && !(fixture->epsilon > 0.0 && fixture->epsilon < 0.5)) {
    fail(ErrorKind::invalid_input, "fixture epsilon must lie in (0, 0.5)");
  }
}

RunManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_input, path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  RunManifest m;
  try {
    if (j.contains("data")) m.data = resolve(j.at("data").get<std::string>());
    if (j.contains("fixture")) {
      FixtureSpec f;
      const json& jf = j.at("fixture");
      f.epsilon = jf.value("epsilon", f.epsilon);
      f.trapped_cross = jf.value("trapped_cross", f.trapped_cross);
      f.mixing_cross = jf.value("mixing_cross", f.mixing_cross);
      m.fixture = f;
    }
    if (j.contains("hyper")) {
      const std::string h = j.at("hyper").get<std::string>();
      m.hyper = h == "fit" ? h : resolve(h).string();
    }
    int index = 0;
    for (const json& jc : j.at("chains")) {
      ChainSpec c;
      c.kernel = jc.value("kernel", c.kernel);
      c.iters = jc.value("iters", c.iters);
      c.seed = jc.value("seed", c.seed);
      c.gibbs_per_sm = jc.value("gibbs_per_sm", c.gibbs_per_sm);
      c.init = jc.value("init", c.init);
      c.name = jc.value("name", "chain" + std::to_string(index));
      m.chains.push_back(c);
      ++index;
    }
    if (j.contains("diagnostics")) {
      const json& jd = j.at("diagnostics");
      m.K = jd.value("K", m.K);
      m.delta = jd.value("delta", m.delta);
      m.check_every = jd.value("check_every", m.check_every);
    }
    m.rho_min = j.value("rho_min", m.rho_min);
    m.threads = j.value("threads", m.threads);
    if (j.contains("out_dir")) m.out_dir = resolve(j.at("out_dir").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_input, path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

int cmd_run(const RunManifest& m, std::ostream& log) {
  m.validate();
  fs::create_directories(m.out_dir);

  DataMatrix data;
  HyperParams hyper;
  std::vector<std::string> ids;
  std::optional<ChainFixture> trapped, mixing;
  if (m.data) {
    data = read_data_csv(*m.data);
    hyper = resolve_hyper(m, data, log);
    ids = data.observation_ids();
  } else {
    trapped = adversarial_two_island_fixture(m.fixture->epsilon, m.fixture->trapped_cross);
    mixing = adversarial_two_island_fixture(m.fixture->epsilon, m.fixture->mixing_cross);
    ids = default_ids(5);
  }

  struct Outcome {
    int code = kOk;
    std::string message;
    json summary;
  };
  std::vector<Outcome> outcomes(m.chains.size());

  auto run_one = [&](std::size_t index) {
    const ChainSpec& spec = m.chains[index];
    Outcome& out = outcomes[index];
    try {
      const fs::path dir = m.out_dir / spec.name;
      fs::create_directories(dir);
      Trace trace;
      SchemeFn scheme;
      const Kernel kernel = parse_kernel(spec.kernel);
      if (m.data) {
        ChainConfig cfg;
        cfg.kernel = kernel;
        cfg.n_iterations = spec.iters;
        cfg.seed = spec.seed;
        cfg.gibbs_cycles_per_splitmerge = spec.gibbs_per_sm;
        cfg.initial_allocation = initial_allocation(spec.init, data.num_observations(), spec.seed);
        trace = run_chain(data, hyper, cfg);
        scheme = [](const Trace& t, int k) { return top_k_scheme(t, k); };
      } else {
        const ChainFixture& f = kernel == Kernel::gibbs ? *trapped : *mixing;
        const auto start = static_cast<std::size_t>(
            std::find(f.island.begin(), f.island.end(), 0) - f.island.begin());
        trace = simulate_fixture_chain(f, static_cast<std::size_t>(spec.iters), start, spec.seed);
        trace.meta["kernel"] = to_string(kernel);
        scheme = [&f](const Trace&, int k) { return island_pair_scheme(f, k); };
      }
      write_trace(dir / "trace.csv", trace);

      std::vector<Checkpoint> series;
      const std::size_t every = static_cast<std::size_t>(m.check_every);
      for (std::size_t c = every; c <= trace.size(); c += every) {
        series.push_back(evaluate_checkpoint(trace.prefix(c), m.K, m.delta, scheme));
      }
      write_file_atomic(dir / "diagnostics.csv", format_series(series, m.K));

      out.summary = write_final_outputs(trace, m.K, m.delta, scheme, ids, m.rho_min, dir);
      out.summary["recorded_states"] = trace.size();
      out.summary["checkpoints"] = series.size();
    } catch (const Error& e) {
      out.code = exit_code(e.kind());
      out.message = e.what();
    } catch (const std::exception& e) {
      out.code = kInputError;
      out.message = e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < m.chains.size(); i = next++) run_one(i);
  };
  const int pool = std::min<int>(m.threads, static_cast<int>(m.chains.size()));
  std::vector<std::thread> threads;
  for (int t = 1; t < pool; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  json summary;
  summary["mode"] = m.data ? "data" : "fixture";
  int code = kOk;
  for (std::size_t i = 0; i < m.chains.size(); ++i) {
    json c = outcomes[i].summary.is_null() ? json::object() : outcomes[i].summary;
    c["name"] = m.chains[i].name;
    c["kernel"] = m.chains[i].kernel;
    c["seed"] = m.chains[i].seed;
    if (outcomes[i].code != kOk) {
      c["error"] = outcomes[i].message;
      log << "chain " << m.chains[i].name << " failed: " << outcomes[i].message << "\n";
      if (code == kOk) code = outcomes[i].code;
    } else {
      log << "chain " << m.chains[i].name << ": " << c["recorded_states"] << " states, "
          << c["checkpoints"] << " checkpoints\n";
    }
    summary["chains"].push_back(c);
  }
  write_file_atomic(m.out_dir / "summary.json", summary.dump(2) + "\n");
  return code;
}

// ------------------------------------------------------------- validate

int cmd_validate(const ValidateArgs& args, std::ostream& log) {
  const int cap = args.allow_long ? kLongOracleCap : kDefaultOracleCap;
  if (args.n < 1) fail(ErrorKind::invalid_input, "N must be >= 1");
  if (args.n > cap) {
    fail(ErrorKind::resource_limit, "N=" + std::to_string(args.n) + " exceeds the enumeration cap " +
                                        std::to_string(cap));
  }
  if (args.iters < 1) fail(ErrorKind::invalid_input, "iters must be >= 1");

  // Three roughly equal groups.
  std::vector<int> labels(static_cast<std::size_t>(args.n));
  for (int i = 0; i < args.n; ++i) labels[static_cast<std::size_t>(i)] = 1 + 3 * i / args.n;
  const HyperParams hyper{0.0, 0.5, 0.3, 1.0, 0.5};
  const std::vector<int> reps(static_cast<std::size_t>(args.n), 2);
  const DataMatrix data = simulate_data(hyper, canonicalize(labels), 10, reps, args.seed);

  OracleOptions options;
  options.allow_long = args.allow_long;
  options.threads = args.threads;
  const MassTable table = exact_posterior_table(data, hyper, options);

  ChainConfig cfg;
  cfg.n_iterations = args.iters;
  cfg.seed = args.seed;
  cfg.initial_allocation = Allocation::singletons(args.n);
  const Trace trace = run_chain(data, hyper, cfg);

  json report;
  report["N"] = args.n;
  report["iters"] = args.iters;
  report["seed"] = args.seed;
  report["states"] = table.size();
  const double tv = total_variation(trace, table);
  report["tv"] = tv;
  bool ok = tv < 0.01;
  std::vector<std::string> failed;
  if (!(tv < 0.01)) failed.push_back("tv");
  log << (tv < 0.01 ? "PASS" : "FAIL") << " total variation " << format_double(tv) << " < 0.01\n";

  if (args.n >= 2) {
    const Tours tours = find_tours(trace, most_visited_state(trace));
    const ConsensusMatrix est = co_occurrence_rs(trace, tours);
    const double err = (est.rho - exact_consensus(table).rho).cwiseAbs().maxCoeff();
    report["consensus_max_error"] = err;
    ok = ok && err < 0.02;
    if (!(err < 0.02)) failed.push_back("consensus");
    log << (err < 0.02 ? "PASS" : "FAIL") << " consensus max error " << format_double(err)
        << " < 0.02\n";
  }

  // Calibration summary: Hotelling p-values over 20 disjoint segments.
  // Segments are short and dependent, so this is reported, not gated.
  if (table.size() >= 3) {
    const std::size_t segments = 20;
    const std::size_t len = trace.size() / segments;
    std::vector<double> pv;
    for (std::size_t s = 0; s < segments && len > 0; ++s) {
      Trace seg;
      for (std::size_t t = s * len; t < (s + 1) * len; ++t) seg.push(trace.state(t), trace.log_post(t));
      try {
        const Tours tours = find_tours(seg, most_visited_state(seg));
        pv.push_back(hotelling_rs(seg, tours, top_k_scheme(seg, 3)).p_value);
      } catch (const Error&) {
      }
    }
    std::sort(pv.begin(), pv.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double n = static_cast<double>(pv.size());
      ks = std::max({ks, std::abs((i + 1) / n - pv[i]), std::abs(pv[i] - i / n)});
    }
    report["calibration"] = {{"segments", pv.size()}, {"ks_uniform", pv.empty() ? kNaN : ks},
                             {"p_values", pv}};
    log << "INFO p-value calibration over " << pv.size() << " segments: KS " << format_double(ks)
        << "\n";
  }
  report["passed"] = ok;
  report["failed"] = failed;
  if (args.out_dir) write_file_atomic(*args.out_dir / "validate.json", report.dump(2) + "\n");
  return ok ? kOk : kAcceptanceFailure;
}

// --------------------------------------------------------------- report

int cmd_report(const ReportArgs& args, std::ostream& log) {
  if (args.K.empty()) fail(ErrorKind::invalid_input, "K list is empty");
  const Trace trace = read_trace(args.trace);
  if (trace.empty()) fail(ErrorKind::invalid_input, "trace is empty");
  fs::create_directories(args.out_dir);
  const SchemeFn scheme = [](const Trace& t, int k) { return top_k_scheme(t, k); };
  json summary = write_final_outputs(trace, args.K, args.delta, scheme,
                                     default_ids(num_observations(trace)), args.rho_min,
                                     args.out_dir);
  if (args.mass_table) {
    const MassTable table = read_mass_table(*args.mass_table);
    const auto curve = cumulative_mass_curve(table.entries());
    std::ostringstream out;
    out << "rank,cumulative_mass\n";
    for (const auto& [rank, mass] : curve) out << rank << ',' << format_double(mass) << '\n';
    write_file_atomic(args.out_dir / "cumulative_mass.csv", out.str());
    summary["tv_exact"] = total_variation(trace, table);
  }
  summary["recorded_states"] = trace.size();
  summary["distinct_states"] = trace.num_distinct();
  write_file_atomic(args.out_dir / "report.json", summary.dump(2) + "\n");
  log << summary.dump(2) << "\n";
  return kOk;
}

// ------------------------------------------------------------- simulate

int cmd_simulate(const SimulateArgs& args, std::ostream& log) {
  if (args.truth.empty()) fail(ErrorKind::invalid_input, "truth labels are required");
  if (args.reps < 1 || args.vars < 1) fail(ErrorKind::invalid_input, "vars and reps must be >= 1");
  const HyperParams hyper = args.hyper ? read_hyper(*args.hyper).hyper
                                       : HyperParams{0.0, 0.5, 0.3, 1.0, 0.5};
  hyper.validate();
  const Allocation truth = canonicalize(args.truth);
  const std::vector<int> reps(static_cast<std::size_t>(truth.size()), args.reps);
  const DataMatrix data = simulate_data(hyper, truth, args.vars, reps, args.seed);
  write_data_csv(args.out, data);
  log << "wrote " << data.num_observations() << " observations x " << data.num_variables()
      << " variables to " << args.out.string() << "\n";
  return kOk;
}

// ------------------------------------------------------------ enumerate

int cmd_enumerate(const EnumerateArgs& args, std::ostream& log) {
  const DataMatrix data = read_data_csv(args.data);
  const HyperParams hyper = read_hyper(args.hyper).hyper;
  OracleOptions options;
  options.allow_long = args.allow_long;
  options.threads = args.threads;
  std::mutex mu;
  int last = -1;
  options.progress = [&](double fraction) {
    const std::lock_guard lock(mu);
    const int pct = static_cast<int>(100.0 * fraction);
    if (pct / 10 != last / 10) {
      log << "enumerated " << pct << "%\n";
      last = pct;
    }
  };
  const MassTable table = exact_posterior_table(data, hyper, options);
  write_mass_table(args.out, table);
  log << table.size() << " states, log_Z " << format_double(table.log_Z) << "\n";
  return kOk;
}

}  // namespace rsclust::cli
