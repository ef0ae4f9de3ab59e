#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/harness.hpp"

namespace anchorlab::harness {
namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error(Errc::io_failure, "write failed for " + path.string());
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path, const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (header) {
      if (trim(line) != expected_header)
        throw Error(Errc::io_failure, path.filename().string() + ": expected header '" + expected_header + "'");
      header = false;
      continue;
    }
    rows.push_back(split(line, ','));
  }
  return rows;
}

double to_num(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error(Errc::io_failure, "not a number: '" + s + "'");
  }
}

}  // namespace

std::string aggregates_csv(const std::vector<CellAggregate>& aggregates) {
  std::string out = "base,k,accuracy,n\n";
  for (const auto& c : aggregates)
    out += std::to_string(c.base) + "," + std::to_string(c.k) + "," + format_double(c.accuracy) + "," +
           std::to_string(c.n) + "\n";
  return out;
}

std::string fits_csv(const std::map<int, FitOutcome>& fits) {
  std::string out = psy::fit_csv_header() + "\n";
  for (const auto& [base, f] : fits) out += psy::fit_csv_row(base, f.fit, f.boot) + "\n";
  return out;
}

std::string widths_csv(const std::optional<ScalingReport>& scaling) {
  std::string out = "n,s_star,trials,success_rate,width\n";
  if (!scaling) return out;
  for (const auto& c : scaling->curves)
    for (const auto& p : c.curve.points)
      out += std::to_string(c.n) + "," + format_double(p.s_star) + "," + std::to_string(p.trials) + "," +
             format_double(p.success_rate) + "," + format_double(c.width) + "\n";
  return out;
}

std::string plotdata_csv(const std::vector<CellAggregate>& aggregates, const std::map<int, FitOutcome>& fits) {
  std::string out = "series,base,k,accuracy\n";
  std::map<int, int> k_max;
  for (const auto& c : aggregates) {
    out += "observed," + std::to_string(c.base) + "," + std::to_string(c.k) + "," + format_double(c.accuracy) + "\n";
    k_max[c.base] = std::max(k_max[c.base], c.k);
  }
  for (const auto& [base, f] : fits) {
    const int top = std::max(2, k_max.contains(base) ? k_max[base] : 16);
    const int steps = static_cast<int>(std::ceil(4 * std::log2(top)));
    for (int i = 0; i <= steps; ++i) {
      const double k = std::min<double>(top, std::exp2(i / 4.0));
      out += "fitted," + std::to_string(base) + "," + format_double(k) + "," +
             format_double(psy::fitted_accuracy(f.fit, k)) + "\n";
    }
  }
  return out;
}

std::string comparison_csv(const std::vector<CompareRow>& rows) {
  std::string out = "base,metric,reference,reference_sd,local,deviation_pct\n";
  for (const auto& r : rows)
    out += std::to_string(r.base) + "," + r.metric + "," + format_double(r.reference) + "," +
           format_double(r.reference_sd) + "," + (r.local ? format_double(*r.local) : "absent") + "," +
           opt(r.deviation_pct) + "\n";
  return out;
}

void emit_report(const Report& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create " + out_dir.string() + ": " + ec.message());

  if (report.run) {
    std::ostringstream jsonl;
    write_runrecord(jsonl, *report.run);
    write_file(out_dir / "runrecord.jsonl", jsonl.str());
  }
  write_file(out_dir / "aggregates.csv", aggregates_csv(report.aggregates));
  write_file(out_dir / "fits.csv", fits_csv(report.fits));
  write_file(out_dir / "widths.csv", widths_csv(report.scaling));
  write_file(out_dir / "plotdata.csv", plotdata_csv(report.aggregates, report.fits));

  if (report.probe) {
    std::string probe = "base,rho_mean,rho_sd,d_mean,d_sd,samples,failures\n";
    for (const auto& r : report.probe->rows)
      probe += std::to_string(r.base) + "," + format_double(r.rho_mean) + "," + format_double(r.rho_sd) + "," +
               format_double(r.d_mean) + "," + format_double(r.d_sd) + "," + std::to_string(r.samples) + "," +
               std::to_string(r.failures) + "\n";
    write_file(out_dir / "probe.csv", probe);
    std::string pairs = "base_a,base_b,cohens_d_rho,cohens_d_dr\n";
    for (const auto& p : report.probe->pairs)
      pairs += std::to_string(p.base_a) + "," + std::to_string(p.base_b) + "," + format_double(p.cohens_d_rho) + "," +
               format_double(p.cohens_d_dr) + "\n";
    write_file(out_dir / "cohens_d.csv", pairs);
  }
  if (report.scaling) {
    nlohmann::ordered_json j;
    j["s_c"] = report.scaling->s_c;
    j["widths"] = nlohmann::ordered_json::array();
    for (const auto& c : report.scaling->curves) j["widths"].push_back({{"n", c.n}, {"width", c.width}});
    if (report.scaling->fit) {
      j["slope"] = report.scaling->fit->slope;
      j["intercept"] = report.scaling->fit->intercept;
      j["r2"] = report.scaling->fit->r2;
    } else {
      j["slope"] = nullptr;
    }
    j["notes"] = report.scaling->notes;
    write_file(out_dir / "scaling.json", j.dump(2) + "\n");
  }
  if (report.interference) {
    write_file(out_dir / "delta.csv", psy::delta_csv(*report.interference));
    write_file(out_dir / "delta.json", psy::to_json(*report.interference) + "\n");
  }
  if (!report.comparison.empty()) write_file(out_dir / "comparison.csv", comparison_csv(report.comparison));
}

std::vector<CellAggregate> read_aggregates_csv(const std::filesystem::path& csv) {
  std::vector<CellAggregate> out;
  for (const auto& r : read_rows(csv, "base,k,accuracy,n")) {
    if (r.size() != 4) throw Error(Errc::io_failure, "aggregates row needs 4 fields");
    out.push_back({static_cast<int>(to_num(r[0])), static_cast<int>(to_num(r[1])), to_num(r[2]),
                   static_cast<long>(to_num(r[3])), true});
  }
  return out;
}

std::vector<psy::InterferenceRun> read_interference_csv(const std::filesystem::path& csv) {
  std::vector<psy::InterferenceRun> out;
  for (const auto& r : read_rows(csv, "trained_base,evaluated_base,acc_before,acc_after")) {
    if (r.size() != 4) throw Error(Errc::io_failure, "interference row needs 4 fields");
    out.push_back({static_cast<int>(to_num(r[0])), static_cast<int>(to_num(r[1])), to_num(r[2]), to_num(r[3])});
  }
  return out;
}

}  // namespace anchorlab::harness
