#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"
#include "anchorlab/harness.hpp"

namespace anchorlab::harness {
namespace {

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw Error(Errc::invalid_config, key + " = '" + value + "': expected " + want);
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad(key, v, "a number");
}

template <typename T>
T as_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad(key, v, "an integer");
  return out;
}

template <typename T>
std::vector<T> as_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& piece : split(v, ',')) out.push_back(as_int<T>(key, piece));
  return out;
}

}  // namespace

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_config, "cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::invalid_config, path.filename().string() + ":" + std::to_string(lineno) + ": missing '='");
    std::string key(trim(t.substr(0, eq)));
    if (key.empty())
      throw Error(Errc::invalid_config, path.filename().string() + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = std::string(trim(t.substr(eq + 1)));
  }
  return kv;
}

void apply_settings(ExperimentConfig& c, const std::map<std::string, std::string>& settings) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto dbl = [](double& field) -> Setter { return [&field](auto& k, auto& v) { field = as_double(k, v); }; };
  auto str = [](std::string& field) -> Setter { return [&field](auto&, auto& v) { field = v; }; };

  const std::map<std::string, Setter> simple = {
      {"bases", [&](auto& k, auto& v) { c.bases = as_list<int>(k, v); }},
      {"k_grid", [&](auto& k, auto& v) { c.k_grid = as_list<int>(k, v); }},
      {"items", [&](auto& k, auto& v) { c.items_per_cell = as_int<int>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seeds = as_list<std::uint64_t>(k, v); }},
      {"replicates",
       [&](auto& k, auto& v) {
         const int n = as_int<int>(k, v);
         if (n < 1) bad(k, v, "a positive count");
         const auto first = c.seeds.empty() ? 0 : c.seeds.front();
         c.seeds.clear();
         for (int i = 0; i < n; ++i) c.seeds.push_back(first + static_cast<std::uint64_t>(i));
       }},
      {"data_seed", [&](auto& k, auto& v) { c.data_seed = as_int<std::uint64_t>(k, v); }},
      {"backend",
       [&](auto& k, auto& v) {
         if (v == "mock") c.backend = BackendKind::mock;
         else if (v == "wire") c.backend = BackendKind::wire;
         else bad(k, v, "mock or wire");
       }},
      {"parallel", [&](auto& k, auto& v) { c.parallel = as_int<unsigned>(k, v); }},
      {"rate_limit", dbl(c.rate_limit)},
      {"out", [&](auto&, auto& v) { c.out_dir = v; }},
      {"data_dir", [&](auto&, auto& v) { c.data_dir = v; }},
      {"floor", dbl(c.floor)},
      {"asymptote",
       [&](auto& k, auto& v) {
         if (v == "fixed") c.asymptote_mode = psy::AsymptoteMode::fixed;
         else if (v == "free") c.asymptote_mode = psy::AsymptoteMode::free;
         else bad(k, v, "fixed or free");
       }},
      {"bootstrap", [&](auto& k, auto& v) { c.bootstrap = as_int<int>(k, v); }},
      {"level", dbl(c.level)},
      {"probe_samples", [&](auto& k, auto& v) { c.probe_samples = as_int<int>(k, v); }},
      {"probe_anchors", [&](auto& k, auto& v) { c.probe_anchors = as_int<int>(k, v); }},
      {"alpha", dbl(c.anchor_params.alpha)},
      {"beta", dbl(c.anchor_params.beta)},
      {"gamma", dbl(c.anchor_params.gamma)},
      {"mock.alpha", dbl(c.mock.params.alpha)},
      {"mock.beta", dbl(c.mock.params.beta)},
      {"mock.gamma", dbl(c.mock.params.gamma)},
      {"mock.embed_dim", [&](auto& k, auto& v) { c.mock.embed_dim = as_int<std::size_t>(k, v); }},
      {"mock.seed", [&](auto& k, auto& v) { c.mock.seed = as_int<std::uint64_t>(k, v); }},
      {"wire.name", str(c.wire.name)},
      {"wire.base_url", str(c.wire.base_url)},
      {"wire.chat_path", str(c.wire.chat_path)},
      {"wire.embeddings_path", str(c.wire.embeddings_path)},
      {"wire.model", str(c.wire.model)},
      {"wire.embedding_model", str(c.wire.embedding_model)},
      {"wire.api_key_env", str(c.wire.api_key_env)},
      {"wire.api_key", [&](auto&, auto& v) { c.wire.api_key = v; }},
      {"wire.shot_mode", [&](auto&, auto& v) { c.wire.shot_mode = backend::parse_shot_mode(v); }},
      {"wire.max_retries", [&](auto& k, auto& v) { c.wire.max_retries = as_int<int>(k, v); }},
      {"wire.backoff_ms", dbl(c.wire.backoff_initial_ms)},
      {"wire.backoff_factor", dbl(c.wire.backoff_factor)},
      {"wire.timeout_s", dbl(c.wire.timeout_s)},
      {"wire.max_context", [&](auto& k, auto& v) { c.wire.max_context = as_int<std::size_t>(k, v); }},
      {"sim.m", [&](auto& k, auto& v) { c.sim.m = as_int<int>(k, v); }},
      {"sim.tau", dbl(c.sim.tau)},
      {"sim.delta", dbl(c.sim.delta)},
      {"sim.noise_sigma", dbl(c.sim.noise_sigma)},
      {"sim.p_optimal", dbl(c.sim.p_optimal)},
      {"sim.n", [&](auto& k, auto& v) { c.sim.n_values = as_list<int>(k, v); }},
      {"sim.trials", [&](auto& k, auto& v) { c.sim.trials = as_int<long>(k, v); }},
      {"sim.span", dbl(c.sim.span)},
      {"sim.grid_points", [&](auto& k, auto& v) { c.sim.grid_points = as_int<int>(k, v); }},
      {"sim.seed", [&](auto& k, auto& v) { c.sim.seed = as_int<std::uint64_t>(k, v); }},
  };

  // "seed" before "replicates" so a replicate count extends the given seed.
  std::vector<std::pair<std::string, std::string>> ordered(settings.begin(), settings.end());
  std::stable_partition(ordered.begin(), ordered.end(), [](const auto& kv) { return kv.first != "replicates"; });

  for (const auto& [key, value] : ordered) {
    if (const auto it = simple.find(key); it != simple.end()) {
      it->second(key, value);
      continue;
    }
    // mock.<base>.rho | .d | .decoy
    const auto parts = split(key, '.');
    if (parts.size() == 3 && parts[0] == "mock") {
      const int base = as_int<int>(key, parts[1]);
      auto& dom = c.mock.domains[base];
      if (parts[2] == "rho") dom.rho = as_double(key, value);
      else if (parts[2] == "d") dom.d = as_double(key, value);
      else if (parts[2] == "decoy") dom.decoy = backend::parse_decoy_mode(value);
      else throw Error(Errc::invalid_config, "unknown key " + key);
      continue;
    }
    throw Error(Errc::invalid_config, "unknown key " + key);
  }
}

}  // namespace anchorlab::harness
