#pragma once
// Experiment orchestration: few-shot runs over the radix-addition benchmark,
// embedding density probes, posterior-simulation sweeps, comparison against
// published reference values, and report files.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "anchorlab/anchor_core.hpp"
#include "anchorlab/arith_data.hpp"
#include "anchorlab/backend.hpp"
#include "anchorlab/mock_backend.hpp"
#include "anchorlab/posterior_sim.hpp"
#include "anchorlab/psychometric.hpp"
#include "anchorlab/wire_backend.hpp"

namespace anchorlab::harness {

enum class BackendKind { mock, wire };

struct SimSettings {
  int m = 8;
  double tau = 1.0;
  double delta = 0.01;
  double noise_sigma = 1.0;
  double p_optimal = 0.95;
  std::vector<int> n_values{25, 100, 400, 1600};
  long trials = 2000;
  double span = 1.5;      // grid covers S_c - span .. S_c + span
  int grid_points = 301;
  std::uint64_t seed = 0;

  void validate() const;
  sim::SimConfig template_config() const;
};

struct ExperimentConfig {
  std::vector<int> bases{10, 8, 9};
  std::vector<int> k_grid{0, 1, 2, 4, 8, 16};
  int items_per_cell = 250;
  std::vector<std::uint64_t> seeds{0};  // one replicate per seed
  std::uint64_t data_seed = 2024;       // bundle synthesis
  BackendKind backend = BackendKind::mock;
  backend::MockRepositoryConfig mock = backend::calibrated_mock_config();
  backend::WireConfig wire;
  anchor::AnchorParams anchor_params;
  unsigned parallel = 1;
  double rate_limit = 0.0;  // requests per minute, wire only
  std::filesystem::path out_dir = "out";
  std::filesystem::path data_dir;  // empty: built-in data directory

  // fitting
  double floor = 0.0;
  psy::AsymptoteMode asymptote_mode = psy::AsymptoteMode::fixed;
  int bootstrap = 0;  // resamples; 0 skips intervals
  double level = 0.68;

  // density probe
  int probe_samples = 100;
  int probe_anchors = 8;

  SimSettings sim;

  // InvalidConfig on any violated constraint.
  void validate() const;
  // Stable text form of every setting that affects results (no credentials).
  std::string canonical() const;
  std::string digest() const;
};

std::filesystem::path default_data_dir();

std::unique_ptr<backend::Backend> make_backend(const ExperimentConfig& config);

// ---- few-shot runs -------------------------------------------------------

struct ItemRow {
  int base = 0;
  int k = 0;
  std::uint64_t seed = 0;  // replicate seed
  int item = 0;
  std::string prompt;
  std::string expected;
  std::string response;
  bool correct = false;
  double latency_ms = 0.0;
};

struct CellAggregate {
  int base = 0;
  int k = 0;
  double accuracy = 0.0;
  long n = 0;
  bool complete = true;
};

struct RunRecord {
  std::string run_id;
  std::string timestamp;
  std::string config_digest;
  std::string config_text;
  std::vector<ItemRow> items;
  std::vector<CellAggregate> cells;  // every attempted cell, complete or not
  std::vector<std::string> warnings;
  bool exhausted = false;  // some cell ran out of backend retries

  // Complete cells only, ordered by (base, k).
  std::vector<CellAggregate> aggregates() const;
};

// Cell accuracy = mean item correctness; cells in `skip` are left out.
std::vector<CellAggregate> aggregate_items(const std::vector<ItemRow>& items,
                                           const std::set<std::pair<int, int>>& skip = {});

RunRecord run_fewshot(const ExperimentConfig& config, backend::Backend& backend);

void write_runrecord(std::ostream& out, const RunRecord& record);
RunRecord read_runrecord(std::istream& in);

// Re-derives aggregates from the persisted item rows.
std::vector<CellAggregate> replay(const std::filesystem::path& runrecord_jsonl);

// ---- fitting -------------------------------------------------------------

struct FitOutcome {
  psy::FitResult fit;
  std::optional<psy::BootstrapResult> boot;
};

struct FitSet {
  std::map<int, FitOutcome> fits;
  std::vector<std::string> warnings;  // bases whose fit failed
};

psy::ShotCurve shot_curve(const std::vector<CellAggregate>& aggregates, int base);
FitSet fit_all(const std::vector<CellAggregate>& aggregates, const ExperimentConfig& config);

// ---- density probe -------------------------------------------------------

struct ProbeRow {
  int base = 0;
  double rho_mean = 0.0;
  double rho_sd = 0.0;
  double d_mean = 0.0;
  double d_sd = 0.0;
  int samples = 0;
  int failures = 0;
  std::vector<double> rho_samples;
  std::vector<double> d_samples;
};

struct ProbePair {
  int base_a = 0;
  int base_b = 0;
  double cohens_d_rho = 0.0;
  double cohens_d_dr = 0.0;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;
  std::vector<ProbePair> pairs;
};

ProbeReport run_density_probe(const ExperimentConfig& config, backend::Backend& backend);

// ---- simulation sweep ----------------------------------------------------

struct SweepCurve {
  int n = 0;
  sim::SuccessCurve curve;
  double width = 0.0;
};

struct ScalingReport {
  double s_c = 0.0;
  std::vector<SweepCurve> curves;
  std::optional<sim::ScalingFit> fit;  // absent with fewer than three n values
  std::vector<std::string> notes;
};

ScalingReport run_threshold_sweep(const SimSettings& settings, unsigned parallelism = 1);

// ---- reference comparison ------------------------------------------------

struct ReferenceThreshold {
  int base = 0;
  double k50 = 0, k50_sd = 0;
  double phase_width = 0, phase_width_sd = 0;
  double k90 = 0, k90_sd = 0;
  double accuracy = 0, accuracy_sd = 0;  // percent
};

struct ReferenceTable {
  std::vector<ReferenceThreshold> rows;
  // UnknownBase when absent.
  const ReferenceThreshold& lookup(int base) const;
};

ReferenceTable load_reference_thresholds(const std::filesystem::path& csv);

struct ReferenceDensity {
  int base = 0;
  double rho = 0, rho_sd = 0;
  double d_r = 0, d_r_sd = 0;
};
std::vector<ReferenceDensity> load_reference_density(const std::filesystem::path& csv);

struct ReferenceRange {
  std::string label;
  double lo = 0;
  double hi = 0;
};
std::vector<ReferenceRange> load_reference_ranges(const std::filesystem::path& csv);

struct CompareRow {
  int base = 0;
  std::string metric;
  double reference = 0;
  double reference_sd = 0;
  std::optional<double> local;
  std::optional<double> deviation_pct;
};

std::vector<CompareRow> compare_to_reference(const std::map<int, FitOutcome>& fits, const ReferenceTable& table,
                                             const std::vector<int>& bases);

// ---- report files --------------------------------------------------------

struct Report {
  std::optional<RunRecord> run;
  std::vector<CellAggregate> aggregates;
  std::map<int, FitOutcome> fits;
  std::optional<ScalingReport> scaling;
  std::optional<ProbeReport> probe;
  std::optional<psy::DeltaMatrix> interference;
  std::vector<CompareRow> comparison;
};

// Always writes aggregates.csv, fits.csv, widths.csv, plotdata.csv (headers
// only when empty); runrecord.jsonl, probe.csv, cohens_d.csv, scaling.json,
// delta.csv and comparison.csv when the report carries that section.
// IoFailure on write errors.
void emit_report(const Report& report, const std::filesystem::path& out_dir);

std::string aggregates_csv(const std::vector<CellAggregate>& aggregates);
std::string fits_csv(const std::map<int, FitOutcome>& fits);
std::string widths_csv(const std::optional<ScalingReport>& scaling);
std::string plotdata_csv(const std::vector<CellAggregate>& aggregates, const std::map<int, FitOutcome>& fits);
std::string comparison_csv(const std::vector<CompareRow>& rows);

std::vector<CellAggregate> read_aggregates_csv(const std::filesystem::path& csv);
std::vector<psy::InterferenceRun> read_interference_csv(const std::filesystem::path& csv);

// ---- config file ---------------------------------------------------------

// Flat "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);
// InvalidConfig on unknown keys or unparseable values.
void apply_settings(ExperimentConfig& config, const std::map<std::string, std::string>& settings);

}  // namespace anchorlab::harness
