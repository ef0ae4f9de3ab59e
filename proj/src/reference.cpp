#include <fstream>

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/harness.hpp"

namespace anchorlab::harness {
namespace {

using Row = std::map<std::string, std::string>;

std::vector<Row> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::vector<std::string> header;
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = split(t, ',');
    if (header.empty()) {
      header = std::move(cells);
      continue;
    }
    if (cells.size() != header.size())
      throw Error(Errc::io_failure, path.filename().string() + ": row has " + std::to_string(cells.size()) +
                                        " fields, header has " + std::to_string(header.size()));
    Row r;
    for (std::size_t i = 0; i < header.size(); ++i) r[header[i]] = cells[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

double num(const Row& r, const std::string& key) {
  const auto it = r.find(key);
  if (it == r.end()) throw Error(Errc::io_failure, "missing column " + key);
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw Error(Errc::io_failure, "column " + key + ": not a number '" + it->second + "'");
  }
}

}  // namespace

const ReferenceThreshold& ReferenceTable::lookup(int base) const {
  for (const auto& r : rows)
    if (r.base == base) return r;
  throw Error(Errc::unknown_base, "no reference row for base " + std::to_string(base));
}

ReferenceTable load_reference_thresholds(const std::filesystem::path& csv) {
  ReferenceTable t;
  for (const auto& r : read_csv(csv))
    t.rows.push_back({static_cast<int>(num(r, "base")), num(r, "k50"), num(r, "k50_sd"), num(r, "phase_width"),
                      num(r, "phase_width_sd"), num(r, "k90"), num(r, "k90_sd"), num(r, "accuracy"),
                      num(r, "accuracy_sd")});
  return t;
}

std::vector<ReferenceDensity> load_reference_density(const std::filesystem::path& csv) {
  std::vector<ReferenceDensity> out;
  for (const auto& r : read_csv(csv))
    out.push_back({static_cast<int>(num(r, "base")), num(r, "rho"), num(r, "rho_sd"), num(r, "d_r"), num(r, "d_r_sd")});
  return out;
}

std::vector<ReferenceRange> load_reference_ranges(const std::filesystem::path& csv) {
  std::vector<ReferenceRange> out;
  for (const auto& r : read_csv(csv)) out.push_back({r.at("label"), num(r, "lo"), num(r, "hi")});
  return out;
}

std::vector<CompareRow> compare_to_reference(const std::map<int, FitOutcome>& fits, const ReferenceTable& table,
                                             const std::vector<int>& bases) {
  std::vector<CompareRow> out;
  for (int base : bases) {
    const auto& ref = table.lookup(base);
    const auto it = fits.find(base);
    const psy::FitResult* fit = it == fits.end() ? nullptr : &it->second.fit;
    auto add = [&](const char* metric, double reference, double sd, double (*get)(const psy::FitResult&)) {
      CompareRow row{base, metric, reference, sd, std::nullopt, std::nullopt};
      if (fit) {
        row.local = get(*fit);
        row.deviation_pct = 100.0 * (*row.local - reference) / reference;
      }
      out.push_back(row);
    };
    add("k50", ref.k50, ref.k50_sd, [](const psy::FitResult& f) { return f.k50; });
    add("phase_width", ref.phase_width, ref.phase_width_sd, [](const psy::FitResult& f) { return f.phase_width; });
    add("k90", ref.k90, ref.k90_sd, [](const psy::FitResult& f) { return f.k90; });
    // Published accuracy is read as the fitted upper asymptote, in percent.
    add("accuracy", ref.accuracy, ref.accuracy_sd, [](const psy::FitResult& f) { return 100.0 * f.asymptote; });
  }
  return out;
}

}  // namespace anchorlab::harness
