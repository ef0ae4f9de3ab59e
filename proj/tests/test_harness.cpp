#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/harness.hpp"

using namespace anchorlab;
using namespace anchorlab::harness;
namespace fs = std::filesystem;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an anchorlab::Error");
  return Errc::invalid_argument;
}

fs::path scratch(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = fs::temp_directory_path() /
                   ("anchorlab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Timestamp and latency are the only fields allowed to differ between runs.
std::string masked(RunRecord r) {
  r.timestamp.clear();
  for (auto& it : r.items) it.latency_ms = 0;
  std::ostringstream out;
  write_runrecord(out, r);
  return out.str();
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.items_per_cell = 40;
  c.seeds = {3, 4};
  return c;
}

class CountingBackend : public backend::Backend {
 public:
  explicit CountingBackend(backend::Backend& inner) : inner_(inner) {}
  std::atomic<long> calls{0};
  std::string generate(const backend::GenerationRequest& r) override {
    ++calls;
    return inner_.generate(r);
  }
  anchor::EmbeddingVector embed(std::string_view t) override { return inner_.embed(t); }
  backend::Capabilities capabilities() const override { return inner_.capabilities(); }

 private:
  backend::Backend& inner_;
};

// Fails every request carrying `bad_k` shots.
class FlakyBackend : public backend::Backend {
 public:
  FlakyBackend(backend::Backend& inner, std::size_t bad_k, Errc code) : inner_(inner), bad_k_(bad_k), code_(code) {}
  std::string generate(const backend::GenerationRequest& r) override {
    if (r.shots.size() == bad_k_) throw Error(code_, "scripted failure");
    return inner_.generate(r);
  }
  anchor::EmbeddingVector embed(std::string_view t) override { return inner_.embed(t); }
  backend::Capabilities capabilities() const override { return inner_.capabilities(); }

 private:
  backend::Backend& inner_;
  std::size_t bad_k_;
  Errc code_;
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ANCHORLAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config file parsing, unknown keys and flag precedence") {
  const auto dir = scratch("cfg");
  write_text(dir / "run.cfg",
             "# comment\n"
             "bases = 8, 9\n"
             "k_grid = 0,1,4\n"
             "items = 20   # trailing comment\n"
             "seed = 5\n"
             "replicates = 3\n"
             "mock.9.rho = 7.5\n"
             "mock.9.decoy = random-digit\n"
             "sim.n = 10,20\n"
             "wire.model = some-model\n"
             "asymptote = free\n");
  ExperimentConfig c;
  apply_settings(c, read_kv_file(dir / "run.cfg"));
  CHECK(c.bases == std::vector<int>{8, 9});
  CHECK(c.k_grid == std::vector<int>{0, 1, 4});
  CHECK(c.items_per_cell == 20);
  CHECK(c.seeds == std::vector<std::uint64_t>{5, 6, 7});
  CHECK(c.mock.domains.at(9).rho == 7.5);
  CHECK(c.mock.domains.at(9).decoy == backend::DecoyMode::random_digit);
  CHECK(c.sim.n_values == std::vector<int>{10, 20});
  CHECK(c.wire.model == "some-model");
  CHECK(c.asymptote_mode == psy::AsymptoteMode::free);
  c.validate();

  // flags are applied after the file, so they win
  apply_settings(c, {{"items", "30"}, {"bases", "10"}});
  CHECK(c.items_per_cell == 30);
  CHECK(c.bases == std::vector<int>{10});

  CHECK(code_of([&] { apply_settings(c, {{"bogus", "1"}}); }) == Errc::invalid_config);
  CHECK(code_of([&] { apply_settings(c, {{"mock.8.colour", "1"}}); }) == Errc::invalid_config);
  CHECK(code_of([&] { apply_settings(c, {{"items", "many"}}); }) == Errc::invalid_config);
  CHECK(code_of([&] { apply_settings(c, {{"backend", "cloud"}}); }) == Errc::invalid_config);
  write_text(dir / "broken.cfg", "bases 8\n");
  CHECK(code_of([&] { read_kv_file(dir / "broken.cfg"); }) == Errc::invalid_config);
  CHECK(code_of([&] { read_kv_file(dir / "missing.cfg"); }) == Errc::invalid_config);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.k_grid = {0, 4, 2};
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
  c = small_config();
  c.items_per_cell = 251;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
  c = small_config();
  c.bases = {10, 11};
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);  // no mock entry for 11
  c = small_config();
  c.bootstrap = 50;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);

  // credentials stay out of the canonical form
  c = small_config();
  c.backend = BackendKind::wire;
  c.wire.base_url = "http://x";
  c.wire.model = "m";
  c.wire.api_key = "hunter2";
  CHECK(c.canonical().find("hunter2") == std::string::npos);
}

TEST_CASE("run_fewshot: determinism, budget and cell bookkeeping") {
  const auto cfg = small_config();
  backend::MockBackend mock(cfg.mock);
  CountingBackend counting(mock);
  const auto a = run_fewshot(cfg, counting);
  const auto b = run_fewshot(cfg, mock);
  CHECK(masked(a) == masked(b));
  CHECK(a.run_id == b.run_id);

  const long expected_calls = long(cfg.bases.size() * cfg.k_grid.size() * cfg.seeds.size()) * cfg.items_per_cell;
  CHECK(counting.calls == expected_calls);
  CHECK(long(a.items.size()) == expected_calls);

  const auto agg = a.aggregates();
  CHECK(agg.size() == cfg.bases.size() * cfg.k_grid.size());
  for (const auto& cell : agg) {
    CHECK(cell.n == cfg.items_per_cell * long(cfg.seeds.size()));
    CHECK(cell.accuracy >= 0.0);
    CHECK(cell.accuracy <= 1.0);
    long correct = 0;
    for (const auto& it : a.items)
      if (it.base == cell.base && it.k == cell.k) correct += it.correct;
    CHECK(cell.accuracy == double(correct) / double(cell.n));
  }
  CHECK(a.warnings.empty());
  CHECK_FALSE(a.exhausted);

  // the k = 0 cell has no exemplars and tracks the zero-shot rate
  for (const auto& cell : agg)
    if (cell.k == 0) {
      const double p = mock.correct_probability(cell.base, 0);
      CHECK(std::abs(cell.accuracy - p) < 4 * std::sqrt(p * (1 - p) / double(cell.n)) + 1e-9);
    }
}

TEST_CASE("run_fewshot: base order and parallelism change no cell") {
  auto cfg = small_config();
  backend::MockBackend mock(cfg.mock);
  const auto forward = run_fewshot(cfg, mock);
  cfg.bases = {9, 10, 8};
  cfg.parallel = 4;
  const auto permuted = run_fewshot(cfg, mock);
  CHECK(forward.aggregates().size() == permuted.aggregates().size());
  for (std::size_t i = 0; i < forward.aggregates().size(); ++i) {
    CHECK(forward.aggregates()[i].base == permuted.aggregates()[i].base);
    CHECK(forward.aggregates()[i].accuracy == permuted.aggregates()[i].accuracy);
  }
  auto key = [](const ItemRow& r) { return std::tuple{r.base, r.k, r.seed, r.item, r.response}; };
  std::vector<std::tuple<int, int, std::uint64_t, int, std::string>> x, y;
  for (const auto& r : forward.items) x.push_back(key(r));
  for (const auto& r : permuted.items) y.push_back(key(r));
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  CHECK(x == y);
}

TEST_CASE("run_fewshot: failing cells are excluded with a warning") {
  auto cfg = small_config();
  cfg.bases = {8};
  backend::MockBackend mock(cfg.mock);
  FlakyBackend flaky(mock, 2, Errc::transport);
  const auto rec = run_fewshot(cfg, flaky);
  CHECK(rec.warnings.size() == 1);
  CHECK_FALSE(rec.exhausted);
  for (const auto& cell : rec.aggregates()) CHECK(cell.k != 2);
  CHECK(rec.cells.size() == cfg.k_grid.size());
  const auto fits = fit_all(rec.aggregates(), cfg);
  CHECK(fits.fits.contains(8));

  FlakyBackend dead(mock, 4, Errc::backend_exhausted);
  CHECK(run_fewshot(cfg, dead).exhausted);

  // non-backend errors are programming errors and propagate
  FlakyBackend broken(mock, 1, Errc::invalid_argument);
  CHECK(code_of([&] { run_fewshot(cfg, broken); }) == Errc::invalid_argument);
}

TEST_CASE("persistence: replay reproduces aggregates exactly") {
  const auto cfg = small_config();
  backend::MockBackend mock(cfg.mock);
  Report report;
  report.run = run_fewshot(cfg, mock);
  report.aggregates = report.run->aggregates();
  report.fits = fit_all(report.aggregates, cfg).fits;
  const auto dir = scratch("replay");
  emit_report(report, dir);

  std::ifstream in(dir / "runrecord.jsonl");
  const auto back = read_runrecord(in);
  CHECK(masked(back) == masked(*report.run));
  CHECK(back.timestamp == report.run->timestamp);

  const auto replayed = replay(dir / "runrecord.jsonl");
  CHECK(aggregates_csv(replayed) == slurp(dir / "aggregates.csv"));
  CHECK(read_aggregates_csv(dir / "aggregates.csv").size() == replayed.size());

  // second emission from the same data is byte-identical
  const auto dir2 = scratch("replay2");
  Report again;
  again.aggregates = replayed;
  again.fits = fit_all(replayed, cfg).fits;
  emit_report(again, dir2);
  for (const char* f : {"aggregates.csv", "fits.csv", "plotdata.csv", "widths.csv"})
    CHECK_MESSAGE(slurp(dir / f) == slurp(dir2 / f), f);
}

TEST_CASE("emit_report: empty and single-cell reports") {
  const auto dir = scratch("empty");
  emit_report(Report{}, dir);
  CHECK(slurp(dir / "aggregates.csv") == "base,k,accuracy,n\n");
  CHECK(slurp(dir / "fits.csv") == psy::fit_csv_header() + "\n");
  CHECK(slurp(dir / "widths.csv") == "n,s_star,trials,success_rate,width\n");
  CHECK(slurp(dir / "plotdata.csv") == "series,base,k,accuracy\n");
  CHECK_FALSE(fs::exists(dir / "runrecord.jsonl"));
  CHECK_FALSE(fs::exists(dir / "comparison.csv"));

  Report one;
  one.aggregates.push_back({8, 2, 0.5, 10, true});
  CHECK(aggregates_csv(one.aggregates) == "base,k,accuracy,n\n8,2,0.5,10\n");

  write_text(dir / "blocker", "x");
  CHECK(code_of([&] { emit_report(Report{}, dir / "blocker" / "sub"); }) == Errc::io_failure);
}

TEST_CASE("fit_all recovers the mock k50 ordering") {
  ExperimentConfig cfg;
  cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7};
  backend::MockBackend mock(cfg.mock);
  const auto fits = fit_all(run_fewshot(cfg, mock).aggregates(), cfg);
  REQUIRE(fits.fits.size() == 3);
  CHECK(fits.fits.at(10).fit.k50 < fits.fits.at(8).fit.k50);
  CHECK(fits.fits.at(8).fit.k50 < fits.fits.at(9).fit.k50);
  CHECK(fits.fits.at(10).fit.extrapolated);

  cfg.bootstrap = 200;
  const auto boot = fit_all(run_fewshot(cfg, mock).aggregates(), cfg);
  REQUIRE(boot.fits.at(9).boot.has_value());
  CHECK(boot.fits.at(9).boot->k50.lo <= boot.fits.at(9).fit.k50);
  CHECK(boot.fits.at(9).boot->k50.hi >= boot.fits.at(9).fit.k50);
}

TEST_CASE("density probe") {
  ExperimentConfig cfg;
  backend::MockBackend mock(cfg.mock);
  const auto a = run_density_probe(cfg, mock);
  REQUIRE(a.rows.size() == 3);
  std::map<int, double> rho;
  for (const auto& r : a.rows) {
    CHECK(r.samples == 100);
    CHECK(std::abs(r.rho_mean / cfg.mock.domains.at(r.base).rho - 1.0) < 0.10);
    CHECK(std::abs(r.d_mean / cfg.mock.domains.at(r.base).d - 1.0) < 0.10);
    rho[r.base] = r.rho_mean;
  }
  CHECK(rho[10] > rho[8]);
  CHECK(std::abs(rho[8] - rho[9]) / rho[8] < 0.05);
  CHECK(a.pairs.size() == 3);

  const auto b = run_density_probe(cfg, mock);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].rho_samples == b.rows[i].rho_samples);
    CHECK(a.rows[i].d_samples == b.rows[i].d_samples);
  }

  // identical clusters in two bases: no effect
  cfg.bases = {8, 9};
  cfg.mock.domains[9] = cfg.mock.domains[8];
  backend::MockBackend twin(cfg.mock);
  const auto t = run_density_probe(cfg, twin);
  CHECK(std::abs(t.pairs[0].cohens_d_rho) < 0.4);
  CHECK(std::abs(t.pairs[0].cohens_d_dr) < 0.4);
}

TEST_CASE("density probe needs embeddings") {
  class NoEmbed : public backend::Backend {
   public:
    std::string generate(const backend::GenerationRequest&) override { return ""; }
    anchor::EmbeddingVector embed(std::string_view) override { throw Error(Errc::transport, "down"); }
    backend::Capabilities capabilities() const override { return {false, 0, "plain"}; }
  } plain;
  ExperimentConfig cfg;
  CHECK(code_of([&] { run_density_probe(cfg, plain); }) == Errc::backend_failure);

  class Broken : public backend::Backend {
   public:
    std::string generate(const backend::GenerationRequest&) override { return ""; }
    anchor::EmbeddingVector embed(std::string_view) override { throw Error(Errc::transport, "down"); }
    backend::Capabilities capabilities() const override { return {true, 0, "broken"}; }
  } broken;
  CHECK(code_of([&] { run_density_probe(cfg, broken); }) == Errc::too_few_samples);
}

TEST_CASE("threshold sweep") {
  SimSettings s;
  s.trials = 0;
  CHECK(code_of([&] { run_threshold_sweep(s); }) == Errc::invalid_config);

  s = SimSettings{};
  s.n_values = {100};
  s.trials = 400;
  s.grid_points = 61;
  const auto single = run_threshold_sweep(s);
  CHECK_FALSE(single.fit.has_value());
  CHECK_FALSE(single.notes.empty());
  CHECK(single.curves.size() == 1);
  CHECK(single.s_c == doctest::Approx(std::log(700.0) / 2));

  s.n_values = {25, 100, 400};
  const auto full = run_threshold_sweep(s, 2);
  REQUIRE(full.fit.has_value());
  CHECK(full.fit->slope < 0);
  CHECK(widths_csv(full).rfind("n,s_star,trials,success_rate,width\n25,", 0) == 0);
}

TEST_CASE("reference comparison") {
  const auto table = load_reference_thresholds(default_data_dir() / "reference_thresholds.csv");
  const auto& nine = table.lookup(9);
  CHECK(nine.k50 == 2.91);
  CHECK(nine.k50_sd == 0.18);
  CHECK(table.lookup(10).k50 == 0.28);
  CHECK(table.lookup(10).phase_width == 1.21);
  CHECK(table.lookup(8).k90 == 2.31);
  CHECK(code_of([&] { table.lookup(16); }) == Errc::unknown_base);

  std::map<int, FitOutcome> fits;
  psy::FitResult f;
  f.k50 = 2.91;
  f.k90 = 3.84;
  f.phase_width = 3.74;
  f.asymptote = 0.897;
  fits[9] = {f, std::nullopt};
  const auto rows = compare_to_reference(fits, table, {9, 8});
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].metric == "k50");
  CHECK(*rows[0].deviation_pct == 0.0);
  CHECK(*rows[1].deviation_pct == 0.0);
  CHECK(*rows[2].deviation_pct == 0.0);
  CHECK(std::abs(*rows[3].deviation_pct) < 1e-12);
  for (std::size_t i = 4; i < 8; ++i) {
    CHECK(rows[i].base == 8);
    CHECK_FALSE(rows[i].local.has_value());
  }
  CHECK(comparison_csv(rows).find("8,k50,1.83,0.12,absent,\n") != std::string::npos);
  CHECK(code_of([&] { compare_to_reference(fits, table, {12}); }) == Errc::unknown_base);

  const auto density = load_reference_density(default_data_dir() / "reference_density.csv");
  CHECK(density.size() == 3);
  const auto ranges = load_reference_ranges(default_data_dir() / "reference_interference.csv");
  REQUIRE(ranges.size() == 2);
  CHECK(ranges[0].lo == -28.7);
  CHECK(ranges[0].hi == -15.3);
}

TEST_CASE("interference csv ingestion") {
  const auto dir = scratch("interf");
  write_text(dir / "runs.csv",
             "trained_base,evaluated_base,acc_before,acc_after\n8,8,0.9,0.95\n8,9,0.8,0.6\n9,8,0.7,0.7\n9,9,0.5,0.6\n");
  const auto m = psy::interference_matrix(read_interference_csv(dir / "runs.csv"));
  CHECK(m.at(8, 9) == doctest::Approx(-20.0));
  CHECK(m.at(9, 8) == 0.0);
  write_text(dir / "bad.csv", "a,b\n1,2\n");
  CHECK(code_of([&] { read_interference_csv(dir / "bad.csv"); }) == Errc::io_failure);
}

TEST_CASE("command-line exit codes") {
  const auto dir = scratch("cli");
  const std::string out = " --out " + (dir / "o").string();
  CHECK(run_cli("") == 2);
  CHECK(run_cli("fewshot --no-such-flag") == 2);
  CHECK(run_cli("fewshot --items 0" + out) == 2);
  CHECK(run_cli("fewshot --bases 10 --items 20" + out) == 0);
  CHECK(fs::exists(dir / "o" / "runrecord.jsonl"));
  CHECK(fs::exists(dir / "o" / "comparison.csv"));
  CHECK(run_cli("report --input " + (dir / "o" / "runrecord.jsonl").string() + " --out " + (dir / "r").string()) == 0);
  CHECK(slurp(dir / "o" / "aggregates.csv") == slurp(dir / "r" / "aggregates.csv"));
  CHECK(run_cli("fit --input " + (dir / "o" / "aggregates.csv").string() + " --out " + (dir / "f").string()) == 0);
  CHECK(run_cli("report --input " + (dir / "nope.jsonl").string() + out) == 1);

  write_text(dir / "sim.cfg", "sim.trials = 200\nsim.grid_points = 41\nsim.n = 25,100,400\n");
  CHECK(run_cli("sim --config " + (dir / "sim.cfg").string() + out) == 0);
  CHECK(fs::exists(dir / "o" / "scaling.json"));
  write_text(dir / "sim0.cfg", "sim.trials = 0\n");
  CHECK(run_cli("sim --config " + (dir / "sim0.cfg").string() + out) == 2);

  write_text(dir / "wire.cfg",
             "backend = wire\nwire.base_url = http://127.0.0.1:1\nwire.model = m\nwire.max_retries = 0\n"
             "wire.backoff_ms = 0\nbases = 10\nk_grid = 0,1,2,4\nitems = 2\n");
  CHECK(run_cli("fewshot --config " + (dir / "wire.cfg").string() + out) == 3);
  CHECK(run_cli("probe --bases 10,8 --out " + (dir / "p").string()) == 0);
  CHECK(fs::exists(dir / "p" / "cohens_d.csv"));
}
