// anchorlab: command-line front end for the few-shot benchmark, density
// probe, posterior-simulation sweep and reference comparison.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/harness.hpp"

namespace {

using namespace anchorlab;
using namespace anchorlab::harness;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitExhausted = 3;

struct Common {
  std::string config_file;
  std::string reference;
  std::map<std::string, std::string> flags;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "key = value configuration file");
  app->add_option("--reference", c.reference, "reference thresholds CSV (default: shipped data)");
  auto flag = [&](const char* name, const char* key, const char* help) {
    app->add_option_function<std::string>(name, [&c, key](const std::string& v) { c.flags[key] = v; }, help);
  };
  flag("--backend", "backend", "mock | wire");
  flag("--bases", "bases", "comma-separated bases");
  flag("--k-grid", "k_grid", "comma-separated shot counts");
  flag("--items", "items", "items per (base, k) cell");
  flag("--seed", "seed", "seed or comma-separated replicate seeds");
  flag("--replicates", "replicates", "number of consecutive replicate seeds");
  flag("--out", "out", "output directory");
  flag("--parallel", "parallel", "concurrent requests / worker threads");
  flag("--rate-limit", "rate_limit", "requests per minute (wire)");
  flag("--data-dir", "data_dir", "directory holding reference data files");
  flag("--bootstrap", "bootstrap", "bootstrap resamples (0 = none)");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_file.empty()) apply_settings(cfg, read_kv_file(c.config_file));
  apply_settings(cfg, c.flags);
  cfg.validate();
  return cfg;
}

std::filesystem::path data_dir(const ExperimentConfig& cfg) {
  return cfg.data_dir.empty() ? default_data_dir() : cfg.data_dir;
}

std::filesystem::path reference_path(const Common& c, const ExperimentConfig& cfg) {
  return c.reference.empty() ? data_dir(cfg) / "reference_thresholds.csv" : std::filesystem::path(c.reference);
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::vector<CompareRow> compare_known(const std::map<int, FitOutcome>& fits, const Common& c,
                                      const ExperimentConfig& cfg) {
  const auto path = reference_path(c, cfg);
  if (!std::filesystem::exists(path)) {
    std::cerr << "warning: no reference table at " << path << "\n";
    return {};
  }
  const auto table = load_reference_thresholds(path);
  std::vector<int> known;
  for (int b : cfg.bases) {
    try {
      table.lookup(b);
      known.push_back(b);
    } catch (const Error&) {
      std::cerr << "warning: base " << b << " has no reference row\n";
    }
  }
  return compare_to_reference(fits, table, known);
}

void print_fits(const std::map<int, FitOutcome>& fits) {
  for (const auto& [base, f] : fits) {
    std::printf("base %2d  k50 %.3f  k90 %.3f  width %.3f  asymptote %.3f%s\n", base, f.fit.k50, f.fit.k90,
                f.fit.phase_width, f.fit.asymptote, f.fit.extrapolated ? "  (k50 extrapolated)" : "");
  }
}

void print_comparison(const std::vector<CompareRow>& rows) {
  for (const auto& r : rows) {
    if (r.local)
      std::printf("base %2d  %-11s  local %8.3f  reference %7.3f +- %.3f  deviation %+.1f%%\n", r.base,
                  r.metric.c_str(), *r.local, r.reference, r.reference_sd, *r.deviation_pct);
    else
      std::printf("base %2d  %-11s  absent         reference %7.3f +- %.3f\n", r.base, r.metric.c_str(), r.reference,
                  r.reference_sd);
  }
}

int cmd_fewshot(const Common& c) {
  const auto cfg = load(c);
  auto backend = make_backend(cfg);
  Report report;
  report.run = run_fewshot(cfg, *backend);
  warn(report.run->warnings);
  report.aggregates = report.run->aggregates();
  auto fits = fit_all(report.aggregates, cfg);
  warn(fits.warnings);
  report.fits = fits.fits;
  report.comparison = compare_known(report.fits, c, cfg);
  emit_report(report, cfg.out_dir);
  print_fits(report.fits);
  print_comparison(report.comparison);
  std::printf("wrote %s\n", cfg.out_dir.string().c_str());
  return report.run->exhausted ? kExitExhausted : 0;
}

int cmd_probe(const Common& c) {
  const auto cfg = load(c);
  auto backend = make_backend(cfg);
  Report report;
  report.probe = run_density_probe(cfg, *backend);
  emit_report(report, cfg.out_dir);
  std::map<int, ReferenceDensity> refs;
  const auto ref_path = data_dir(cfg) / "reference_density.csv";
  if (std::filesystem::exists(ref_path))
    for (const auto& r : load_reference_density(ref_path)) refs[r.base] = r;
  for (const auto& r : report.probe->rows) {
    std::printf("base %2d  rho %.3f +- %.3f  d_r %.4f +- %.4f  (%d samples)", r.base, r.rho_mean, r.rho_sd, r.d_mean,
                r.d_sd, r.samples);
    if (refs.contains(r.base))
      std::printf("  reference rho %.2f +- %.2f, d_r %.2f +- %.2f", refs[r.base].rho, refs[r.base].rho_sd,
                  refs[r.base].d_r, refs[r.base].d_r_sd);
    std::printf("\n");
  }
  for (const auto& p : report.probe->pairs)
    std::printf("cohen's d  %d vs %d  rho %.3f  d_r %.3f\n", p.base_a, p.base_b, p.cohens_d_rho, p.cohens_d_dr);
  return 0;
}

int cmd_sim(const Common& c) {
  const auto cfg = load(c);
  Report report;
  report.scaling = run_threshold_sweep(cfg.sim, cfg.parallel);
  emit_report(report, cfg.out_dir);
  std::printf("S_c = %.4f\n", report.scaling->s_c);
  for (const auto& curve : report.scaling->curves) std::printf("n %5d  width %.5f\n", curve.n, curve.width);
  if (report.scaling->fit)
    std::printf("log-log slope %.4f  (r2 %.4f)\n", report.scaling->fit->slope, report.scaling->fit->r2);
  warn(report.scaling->notes);
  return 0;
}

int cmd_fit(const Common& c, const std::string& input) {
  const auto cfg = load(c);
  Report report;
  report.aggregates = read_aggregates_csv(input);
  auto fits = fit_all(report.aggregates, cfg);
  warn(fits.warnings);
  report.fits = fits.fits;
  emit_report(report, cfg.out_dir);
  print_fits(report.fits);
  return 0;
}

int cmd_compare(const Common& c, const std::string& input, const std::string& interference) {
  const auto cfg = load(c);
  Report report;
  if (!input.empty()) {
    report.aggregates = read_aggregates_csv(input);
    auto fits = fit_all(report.aggregates, cfg);
    warn(fits.warnings);
    report.fits = fits.fits;
    report.comparison = compare_known(report.fits, c, cfg);
    print_comparison(report.comparison);
  }
  if (!interference.empty()) {
    const auto runs = read_interference_csv(interference);
    report.interference = psy::interference_matrix(runs);
    const auto& m = *report.interference;
    for (std::size_t i = 0; i < m.trained_bases.size(); ++i)
      for (std::size_t j = 0; j < m.evaluated_bases.size(); ++j)
        std::printf("trained %2d  evaluated %2d  delta %+.1f pp\n", m.trained_bases[i], m.evaluated_bases[j],
                    m.delta[i][j]);
    const auto ranges = data_dir(cfg) / "reference_interference.csv";
    if (std::filesystem::exists(ranges))
      for (const auto& r : load_reference_ranges(ranges))
        std::printf("reference %-28s [%+.1f, %+.1f] pp\n", r.label.c_str(), r.lo, r.hi);
  }
  emit_report(report, cfg.out_dir);
  return 0;
}

int cmd_report(const Common& c, const std::string& input) {
  const auto cfg = load(c);
  Report report;
  report.aggregates = replay(input);
  auto fits = fit_all(report.aggregates, cfg);
  warn(fits.warnings);
  report.fits = fits.fits;
  report.comparison = compare_known(report.fits, c, cfg);
  emit_report(report, cfg.out_dir);
  print_fits(report.fits);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic-anchoring lab: few-shot thresholds, density probes and posterior simulation"};
  app.require_subcommand(1);

  Common common;
  std::string input, interference;

  auto* fewshot = app.add_subcommand("fewshot", "run the few-shot benchmark, fit curves, write reports");
  auto* probe = app.add_subcommand("probe", "measure pattern density and semantic distance per base");
  auto* sim = app.add_subcommand("sim", "posterior-simulation sweep and width scaling");
  auto* fit = app.add_subcommand("fit", "fit curves to an aggregates.csv");
  auto* compare = app.add_subcommand("compare", "compare fits with reference values; interference matrices");
  auto* report = app.add_subcommand("report", "rebuild reports from a persisted runrecord.jsonl");
  for (auto* sub : {fewshot, probe, sim, fit, compare, report}) add_common(sub, common);
  fit->add_option("--input", input, "aggregates.csv")->required();
  compare->add_option("--input", input, "aggregates.csv to fit and compare");
  compare->add_option("--interference", interference, "CSV of trained_base,evaluated_base,acc_before,acc_after");
  report->add_option("--input", input, "runrecord.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*fewshot) return cmd_fewshot(common);
    if (*probe) return cmd_probe(common);
    if (*sim) return cmd_sim(common);
    if (*fit) return cmd_fit(common, input);
    if (*compare) return cmd_compare(common, input, interference);
    if (*report) return cmd_report(common, input);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == Errc::invalid_config) return kExitConfig;
    if (e.code() == Errc::backend_exhausted) return kExitExhausted;
    return kExitOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
