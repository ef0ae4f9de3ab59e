#include "anchorlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"

namespace anchorlab::harness {
namespace {

using nlohmann::ordered_json;

[[noreturn]] void bad_config(const std::string& what) { throw Error(Errc::invalid_config, what); }

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += format_double(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, count))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> draw_distinct(std::size_t count, std::size_t population, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, population - 1);
  std::vector<std::size_t> out;
  while (out.size() < count) {
    const auto i = pick(rng);
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  return out;
}

backend::Shot shot_for(const arith::BaseProblem& p) {
  return {p.prompt, p.answer + "_" + std::to_string(p.base)};
}

bool backend_error(Errc code) {
  switch (code) {
    case Errc::transport:
    case Errc::rate_limited:
    case Errc::malformed_response:
    case Errc::backend_failure:
    case Errc::backend_exhausted:
      return true;
    default:
      return false;
  }
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0};
}

}  // namespace

// ---- configuration -------------------------------------------------------

void SimSettings::validate() const {
  if (trials < 100) bad_config("sim.trials must be >= 100");
  if (n_values.empty()) bad_config("sim.n must list at least one value");
  for (int n : n_values)
    if (n < 1) bad_config("sim.n values must be >= 1");
  if (!(span > 0)) bad_config("sim.span must be > 0");
  if (grid_points < 3) bad_config("sim.grid_points must be >= 3");
  template_config().validate();
  const double s_c = sim::critical_threshold(tau, m, delta);
  if (!(s_c - span > 0))
    bad_config("sim grid reaches S* <= 0, where competitors at 0 tie or beat the target; shrink sim.span");
}

sim::SimConfig SimSettings::template_config() const {
  sim::SimConfig c;
  c.m = m;
  c.tau = tau;
  c.delta = delta;
  c.noise_sigma = noise_sigma;
  c.p_optimal = p_optimal;
  c.seed = seed;
  c.strengths.assign(static_cast<std::size_t>(std::max(m, 0)), 0.0);
  if (!c.strengths.empty()) c.strengths[0] = 1.0;
  return c;
}

void ExperimentConfig::validate() const {
  if (bases.empty()) bad_config("no bases configured");
  for (std::size_t i = 0; i < bases.size(); ++i) {
    if (bases[i] < arith::kMinBase || bases[i] > arith::kMaxBase)
      bad_config("base " + std::to_string(bases[i]) + " outside [2, 36]");
    if (std::count(bases.begin(), bases.end(), bases[i]) > 1) bad_config("base listed twice");
  }
  if (k_grid.empty()) bad_config("empty k grid");
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    if (k_grid[i] < 0) bad_config("k grid values must be >= 0");
    if (i > 0 && k_grid[i] <= k_grid[i - 1]) bad_config("k grid must be strictly ascending");
    if (static_cast<std::size_t>(k_grid[i]) > arith::kTrainSize) bad_config("k exceeds the training split");
  }
  if (items_per_cell < 1 || static_cast<std::size_t>(items_per_cell) > arith::kIdSize)
    bad_config("items per cell must be in [1, " + std::to_string(arith::kIdSize) + "]");
  if (seeds.empty()) bad_config("no seeds");
  for (auto s : seeds)
    if (std::count(seeds.begin(), seeds.end(), s) > 1) bad_config("seed listed twice");
  if (parallel < 1) bad_config("parallel must be >= 1");
  if (rate_limit < 0) bad_config("rate limit must be >= 0");
  if (backend == BackendKind::mock) {
    mock.validate();
    for (int b : bases)
      if (!mock.domains.contains(b)) bad_config("mock has no entry for base " + std::to_string(b));
  }
  try {
    anchor_params.validate();
  } catch (const Error& e) {
    bad_config(e.what());
  }
  if (!(floor >= 0 && floor < 1)) bad_config("floor must be in [0, 1)");
  if (bootstrap != 0 && bootstrap < 200) bad_config("bootstrap needs 0 or >= 200 resamples");
  if (!(level > 0 && level < 1)) bad_config("level must be in (0, 1)");
  if (probe_samples < 1) bad_config("probe_samples must be >= 1");
  if (probe_anchors < 2) bad_config("probe_anchors must be >= 2");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << "bases=" << join(bases) << "\n";
  o << "k_grid=" << join(k_grid) << "\n";
  o << "items=" << items_per_cell << "\n";
  o << "seeds=" << join(seeds) << "\n";
  o << "data_seed=" << data_seed << "\n";
  o << "backend=" << (backend == BackendKind::mock ? "mock" : "wire") << "\n";
  if (backend == BackendKind::mock) {
    o << "mock.alpha=" << format_double(mock.params.alpha) << "\n";
    o << "mock.beta=" << format_double(mock.params.beta) << "\n";
    o << "mock.gamma=" << format_double(mock.params.gamma) << "\n";
    o << "mock.embed_dim=" << mock.embed_dim << "\n";
    o << "mock.seed=" << mock.seed << "\n";
    for (const auto& [b, d] : mock.domains)
      o << "mock." << b << "=" << format_double(d.rho) << "," << format_double(d.d) << ","
        << backend::decoy_mode_name(d.decoy) << "\n";
  } else {
    o << "wire.base_url=" << wire.base_url << "\n";
    o << "wire.model=" << wire.model << "\n";
    o << "wire.shot_mode=" << (wire.shot_mode == backend::ShotMode::chat_turns ? "chat" : "concat") << "\n";
  }
  o << "alpha=" << format_double(anchor_params.alpha) << "\n";
  o << "beta=" << format_double(anchor_params.beta) << "\n";
  o << "gamma=" << format_double(anchor_params.gamma) << "\n";
  o << "floor=" << format_double(floor) << "\n";
  o << "asymptote=" << (asymptote_mode == psy::AsymptoteMode::fixed ? "fixed" : "free") << "\n";
  o << "bootstrap=" << bootstrap << "\n";
  o << "level=" << format_double(level) << "\n";
  return o.str();
}

std::string ExperimentConfig::digest() const { return hex64(fnv1a64(canonical())); }

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("ANCHORLAB_DATA_DIR")) return env;
  return ANCHORLAB_DATA_DIR;
}

std::unique_ptr<backend::Backend> make_backend(const ExperimentConfig& config) {
  if (config.backend == BackendKind::mock) return std::make_unique<backend::MockBackend>(config.mock);
  auto wire = config.wire;
  if (config.rate_limit > 0) wire.rate_limit_per_min = config.rate_limit;
  return std::make_unique<backend::WireBackend>(wire);
}

// ---- few-shot runs -------------------------------------------------------

std::vector<CellAggregate> aggregate_items(const std::vector<ItemRow>& items,
                                           const std::set<std::pair<int, int>>& skip) {
  std::map<std::pair<int, int>, std::pair<long, long>> tally;
  for (const auto& it : items) {
    const std::pair key{it.base, it.k};
    if (skip.contains(key)) continue;
    auto& [correct, n] = tally[key];
    correct += it.correct ? 1 : 0;
    ++n;
  }
  std::vector<CellAggregate> out;
  for (const auto& [key, t] : tally)
    out.push_back({key.first, key.second, static_cast<double>(t.first) / static_cast<double>(t.second), t.second, true});
  return out;
}

std::vector<CellAggregate> RunRecord::aggregates() const {
  std::set<std::pair<int, int>> skip;
  for (const auto& c : cells)
    if (!c.complete) skip.emplace(c.base, c.k);
  return aggregate_items(items, skip);
}

RunRecord run_fewshot(const ExperimentConfig& config, backend::Backend& backend) {
  config.validate();
  std::map<int, arith::DatasetBundle> bundles;
  for (int b : config.bases) bundles.emplace(b, arith::synthesize_bundle(b, config.data_seed));

  RunRecord record;
  record.config_text = config.canonical();
  record.config_digest = config.digest();
  {
    std::uint64_t h = fnv1a64(record.config_text);
    for (auto s : config.seeds) h = derive_seed(h, {s});
    record.run_id = hex64(h);
  }
  record.timestamp = utc_now();

  std::mutex persist;
  for (int base : config.bases) {
    const auto& bundle = bundles.at(base);
    for (int k : config.k_grid) {
      const std::size_t per_seed = static_cast<std::size_t>(config.items_per_cell);
      const std::size_t total = per_seed * config.seeds.size();
      std::vector<std::optional<ItemRow>> rows(total);
      std::atomic<bool> aborted{false};
      std::string failure;
      Errc failure_code = Errc::backend_failure;

      parallel_for(total, config.parallel, [&](std::size_t job) {
        if (aborted) return;
        const auto seed = config.seeds[job / per_seed];
        const int item = static_cast<int>(job % per_seed);
        const std::uint64_t item_seed =
            derive_seed(seed, {static_cast<std::uint64_t>(base), static_cast<std::uint64_t>(k),
                               static_cast<std::uint64_t>(item)});
        const auto& problem = bundle.id_2d[static_cast<std::size_t>(item)];

        backend::GenerationRequest req;
        req.query = problem.prompt;
        req.seed = item_seed;
        std::mt19937_64 rng(derive_seed(item_seed, {1}));
        for (auto idx : draw_distinct(static_cast<std::size_t>(k), bundle.train_2d.size(), rng))
          req.shots.push_back(shot_for(bundle.train_2d[idx]));

        ItemRow row{base, k, seed, item, problem.prompt, problem.answer, {}, false, 0.0};
        const auto t0 = std::chrono::steady_clock::now();
        try {
          row.response = backend.generate(req);
        } catch (const Error& e) {
          if (!backend_error(e.code())) throw;
          std::lock_guard lock(persist);
          if (!aborted.exchange(true)) {
            failure = e.what();
            failure_code = e.code();
          }
          return;
        }
        row.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        row.correct = arith::grade(row.response, problem.answer, base);
        rows[job] = std::move(row);
      });

      long n = 0, correct = 0;
      for (auto& r : rows)
        if (r) {
          ++n;
          correct += r->correct ? 1 : 0;
          record.items.push_back(std::move(*r));
        }
      CellAggregate cell{base, k, n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0, n, !aborted};
      if (aborted) {
        record.warnings.push_back("cell base=" + std::to_string(base) + " k=" + std::to_string(k) +
                                  " incomplete, excluded from fits: " + failure);
        if (failure_code == Errc::backend_exhausted) record.exhausted = true;
      }
      record.cells.push_back(cell);
    }
  }
  std::sort(record.cells.begin(), record.cells.end(),
            [](const CellAggregate& a, const CellAggregate& b) { return std::pair{a.base, a.k} < std::pair{b.base, b.k}; });
  return record;
}

void write_runrecord(std::ostream& out, const RunRecord& record) {
  ordered_json header;
  header["type"] = "header";
  header["run_id"] = record.run_id;
  header["timestamp"] = record.timestamp;
  header["config_digest"] = record.config_digest;
  header["config"] = record.config_text;
  out << header.dump() << "\n";
  for (const auto& it : record.items) {
    ordered_json j;
    j["type"] = "item";
    j["base"] = it.base;
    j["k"] = it.k;
    j["seed"] = it.seed;
    j["item"] = it.item;
    j["prompt"] = it.prompt;
    j["expected"] = it.expected;
    j["response"] = it.response;
    j["correct"] = it.correct;
    j["latency_ms"] = it.latency_ms;
    out << j.dump() << "\n";
  }
  for (const auto& c : record.cells) {
    ordered_json j;
    j["type"] = "cell";
    j["base"] = c.base;
    j["k"] = c.k;
    j["accuracy"] = c.accuracy;
    j["n"] = c.n;
    j["complete"] = c.complete;
    out << j.dump() << "\n";
  }
  if (!out) throw Error(Errc::io_failure, "run record write failed");
}

RunRecord read_runrecord(std::istream& in) {
  RunRecord r;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        r.run_id = j.at("run_id").get<std::string>();
        r.timestamp = j.at("timestamp").get<std::string>();
        r.config_digest = j.at("config_digest").get<std::string>();
        r.config_text = j.at("config").get<std::string>();
      } else if (type == "item") {
        ItemRow it;
        it.base = j.at("base").get<int>();
        it.k = j.at("k").get<int>();
        it.seed = j.at("seed").get<std::uint64_t>();
        it.item = j.at("item").get<int>();
        it.prompt = j.at("prompt").get<std::string>();
        it.expected = j.at("expected").get<std::string>();
        it.response = j.at("response").get<std::string>();
        it.correct = j.at("correct").get<bool>();
        it.latency_ms = j.at("latency_ms").get<double>();
        r.items.push_back(std::move(it));
      } else if (type == "cell") {
        r.cells.push_back({j.at("base").get<int>(), j.at("k").get<int>(), j.at("accuracy").get<double>(),
                           j.at("n").get<long>(), j.at("complete").get<bool>()});
      } else {
        throw Error(Errc::io_failure, "unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io_failure, "run record line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return r;
}

std::vector<CellAggregate> replay(const std::filesystem::path& runrecord_jsonl) {
  std::ifstream in(runrecord_jsonl);
  if (!in) throw Error(Errc::io_failure, "cannot open " + runrecord_jsonl.string());
  return read_runrecord(in).aggregates();
}

// ---- fitting -------------------------------------------------------------

psy::ShotCurve shot_curve(const std::vector<CellAggregate>& aggregates, int base) {
  psy::ShotCurve curve;
  for (const auto& c : aggregates)
    if (c.base == base && c.complete) curve.points.push_back({c.k, c.accuracy, c.n});
  std::sort(curve.points.begin(), curve.points.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
  return curve;
}

FitSet fit_all(const std::vector<CellAggregate>& aggregates, const ExperimentConfig& config) {
  FitSet out;
  psy::FitOptions opt;
  opt.floor = config.floor;
  opt.asymptote_mode = config.asymptote_mode;
  std::set<int> bases;
  for (const auto& c : aggregates) bases.insert(c.base);
  for (int base : bases) {
    try {
      const auto curve = shot_curve(aggregates, base);
      FitOutcome f{psy::fit_shot_curve(curve, opt), std::nullopt};
      if (config.bootstrap > 0)
        f.boot = psy::bootstrap_intervals(curve, config.bootstrap,
                                          derive_seed(config.seeds.front(), {0xb0, static_cast<std::uint64_t>(base)}),
                                          opt, config.level, config.parallel);
      out.fits.emplace(base, f);
    } catch (const Error& e) {
      out.warnings.push_back("base " + std::to_string(base) + " not fitted: " + e.what());
    }
  }
  return out;
}

// ---- density probe -------------------------------------------------------

ProbeReport run_density_probe(const ExperimentConfig& config, backend::Backend& backend) {
  config.validate();
  if (!backend.capabilities().supports_embeddings)
    throw Error(Errc::backend_failure, "backend '" + backend.capabilities().name + "' has no embeddings");

  ProbeReport report;
  for (int base : config.bases) {
    const auto bundle = arith::synthesize_bundle(base, config.data_seed);
    ProbeRow row;
    row.base = base;
    for (int s = 0; s < config.probe_samples; ++s) {
      std::mt19937_64 rng(derive_seed(config.seeds.front(), {0x9b, static_cast<std::uint64_t>(base),
                                                             static_cast<std::uint64_t>(s)}));
      try {
        std::vector<anchor::EmbeddingVector> anchors;
        for (auto idx : draw_distinct(static_cast<std::size_t>(config.probe_anchors), bundle.train_2d.size(), rng))
          anchors.push_back(backend.embed(backend::exemplar_text(shot_for(bundle.train_2d[idx]))));
        std::uniform_int_distribution<std::size_t> pick(0, bundle.id_2d.size() - 1);
        const auto query = backend.embed(bundle.id_2d[pick(rng)].prompt);
        const double rho = anchor::pattern_density(anchors);
        const double d = anchor::semantic_distance(query, anchor::centroid(anchors));
        row.rho_samples.push_back(rho);
        row.d_samples.push_back(d);
      } catch (const Error&) {
        ++row.failures;
      }
    }
    row.samples = static_cast<int>(row.rho_samples.size());
    if (row.samples * 5 < config.probe_samples * 4)
      throw Error(Errc::too_few_samples, "base " + std::to_string(base) + ": only " + std::to_string(row.samples) +
                                             " of " + std::to_string(config.probe_samples) + " probe samples succeeded");
    std::tie(row.rho_mean, row.rho_sd) = mean_sd(row.rho_samples);
    std::tie(row.d_mean, row.d_sd) = mean_sd(row.d_samples);
    report.rows.push_back(std::move(row));
  }
  auto safe_d = [](const std::vector<double>& a, const std::vector<double>& b) {
    try {
      return psy::cohens_d(a, b);
    } catch (const Error&) {
      return std::nan("");
    }
  };
  for (std::size_t i = 0; i < report.rows.size(); ++i)
    for (std::size_t j = i + 1; j < report.rows.size(); ++j) {
      const auto& a = report.rows[i];
      const auto& b = report.rows[j];
      report.pairs.push_back({a.base, b.base, safe_d(a.rho_samples, b.rho_samples), safe_d(a.d_samples, b.d_samples)});
    }
  return report;
}

// ---- simulation sweep ----------------------------------------------------

ScalingReport run_threshold_sweep(const SimSettings& settings, unsigned parallelism) {
  settings.validate();
  ScalingReport report;
  report.s_c = sim::critical_threshold(settings.tau, settings.m, settings.delta);
  std::vector<double> grid(static_cast<std::size_t>(settings.grid_points));
  for (int i = 0; i < settings.grid_points; ++i)
    grid[static_cast<std::size_t>(i)] =
        report.s_c - settings.span + 2.0 * settings.span * i / (settings.grid_points - 1);

  std::vector<double> ns, widths;
  for (int n : settings.n_values) {
    auto cfg = settings.template_config();
    cfg.n = n;
    cfg.seed = derive_seed(settings.seed, {static_cast<std::uint64_t>(n)});
    SweepCurve sc;
    sc.n = n;
    sc.curve = sim::success_curve(cfg, grid, settings.trials, parallelism);
    sc.width = sim::transition_width(sc.curve);
    ns.push_back(n);
    widths.push_back(sc.width);
    report.curves.push_back(std::move(sc));
  }
  if (ns.size() >= 3) report.fit = sim::scaling_exponent(ns, widths);
  else report.notes.push_back("fewer than three n values: no scaling slope");
  return report;
}

}  // namespace anchorlab::harness
