#pragma once

#include <gtu/bench.hpp>
#include <gtu/engine.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gtu {

// Flat dotted-key configuration: one `key = value` pair per line, `#` starts
// a comment. Values are scalars or comma-separated lists; per-asset keys
// broadcast a single scalar across the model dimension.
using ConfigMap = std::map<std::string, std::string>;

namespace cli_detail {

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "model.d",         "model.s0",        "model.r",         "model.eta",
      "model.sigma_min", "model.sigma_max", "model.rho_min",   "model.rho_max",
      "model.T",         "payoff.kind",     "payoff.lo",       "payoff.hi",
      "payoff.k1",       "payoff.k2",       "payoff.strike",   "payoff.monitors",
      "algo.N",          "algo.P",          "algo.M",          "algo.seed",
      "algo.kernel",     "algo.threads",    "algo.gpr_max_iters", "bench.steps",
      "output.path",     "output.format",
  };
  return keys;
}

inline bool key_known(const std::string& key) {
  const auto& keys = known_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.empty()) out.push_back("");
  return out;
}

inline double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + text + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + text +
                                "'");
  }
}

// Shortest decimal form that parses back to exactly the same double, so the
// canonical (hashed) text is both stable and readable.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace cli_detail

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = cli_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = cli_detail::trim(line.substr(0, eq));
    const std::string value = cli_detail::trim(line.substr(eq + 1));
    if (!cli_detail::key_known(key)) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" +
                                  key + "'");
    }
    if (value.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": key '" + key +
                                  "' has no value");
    }
    map[key] = value;
  }
  return map;
}

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline void apply_override(ConfigMap& map, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override '" + spec + "': expected key=value");
  }
  const std::string key = cli_detail::trim(spec.substr(0, eq));
  const std::string value = cli_detail::trim(spec.substr(eq + 1));
  if (!cli_detail::key_known(key)) {
    throw std::invalid_argument("override '" + spec + "': unknown key '" + key + "'");
  }
  if (value.empty()) throw std::invalid_argument("override '" + spec + "': empty value");
  map[key] = value;
}

// A fully resolved run request: the model, payoff and algorithm parameters
// for one or more (N, P) cells, plus output routing. `canonical` holds every
// known key with its effective value, which is what the config hash covers.
struct ResolvedRun {
  ModelSpec model;
  PayoffSpec payoff;
  AlgoParams algo;
  std::vector<int> n_list, p_list;
  int bench_steps = 2000;
  std::string out_path;    // empty: standard output
  std::string format;      // "csv" or "json"
  ConfigMap canonical;
};

inline ResolvedRun resolve_config(const ConfigMap& cfg, bool allow_lists) {
  using cli_detail::parse_double;
  using cli_detail::parse_int;
  auto get = [&](const char* key, const char* fallback) -> std::string {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
  };

  ResolvedRun run;
  const int d = static_cast<int>(parse_int("model.d", get("model.d", "2")));
  if (d < 1) throw std::invalid_argument("config key 'model.d': must be at least 1");

  auto vec = [&](const char* key, const char* fallback, long expect) {
    const std::vector<std::string> parts = cli_detail::split_list(get(key, fallback));
    if (parts.size() != 1 && static_cast<long>(parts.size()) != expect) {
      throw std::invalid_argument("config key '" + std::string(key) + "': expected 1 or " +
                                  std::to_string(expect) + " values, got " +
                                  std::to_string(parts.size()));
    }
    Eigen::VectorXd v(expect);
    for (long i = 0; i < expect; ++i) {
      v[i] = parse_double(key, parts[parts.size() == 1 ? 0 : i]);
    }
    return v;
  };

  run.model.d = d;
  run.model.s0 = vec("model.s0", "100", d);
  run.model.r = parse_double("model.r", get("model.r", "0"));
  run.model.eta = vec("model.eta", "0", d);
  run.model.sigma_min = vec("model.sigma_min", "0.1", d);
  run.model.sigma_max = vec("model.sigma_max", "0.2", d);
  run.model.rho_min = vec("model.rho_min", "-0.5", pair_count(d));
  run.model.rho_max = vec("model.rho_max", "0.5", pair_count(d));
  run.model.T = parse_double("model.T", get("model.T", "1"));

  const std::string kind = get("payoff.kind", "outperformer");
  if (kind == "outperformer") {
    run.payoff = PayoffSpec::outperformer();
  } else if (kind == "outperformer_spread") {
    run.payoff = PayoffSpec::outperformer_spread(parse_double("payoff.lo", get("payoff.lo", "0.9")),
                                                 parse_double("payoff.hi", get("payoff.hi", "1.1")));
  } else if (kind == "geo_call_spread") {
    run.payoff = PayoffSpec::geo_call_spread(parse_double("payoff.k1", get("payoff.k1", "90")),
                                             parse_double("payoff.k2", get("payoff.k2", "110")));
  } else if (kind == "geo_outperformer") {
    run.payoff = PayoffSpec::geo_outperformer();
  } else if (kind == "call_sharpe") {
    run.payoff = PayoffSpec::call_sharpe(
        parse_double("payoff.strike", get("payoff.strike", "100")),
        static_cast<int>(parse_int("payoff.monitors", get("payoff.monitors", "12"))));
  } else {
    throw std::invalid_argument("config key 'payoff.kind': unknown payoff '" + kind + "'");
  }

  auto int_list = [&](const char* key, const char* fallback) {
    std::vector<int> out;
    for (const std::string& part : cli_detail::split_list(get(key, fallback))) {
      out.push_back(static_cast<int>(parse_int(key, part)));
    }
    if (!allow_lists && out.size() != 1) {
      throw std::invalid_argument("config key '" + std::string(key) +
                                  "': lists are only accepted by the sweep command");
    }
    return out;
  };
  run.n_list = int_list("algo.N", "16");
  run.p_list = int_list("algo.P", "125");
  run.algo.time_steps = run.n_list.front();
  run.algo.grid_points = run.p_list.front();
  run.algo.branch_count = parse_int("algo.M", get("algo.M", "0"));
  run.algo.seed = static_cast<std::uint64_t>(parse_int("algo.seed", get("algo.seed", "12345")));
  run.algo.threads = static_cast<int>(parse_int("algo.threads", get("algo.threads", "0")));
  run.algo.gpr_max_iters =
      static_cast<int>(parse_int("algo.gpr_max_iters", get("algo.gpr_max_iters", "40")));

  const std::string kernel = get("algo.kernel", "auto");
  if (kernel == "auto") {
    run.algo.kernel = KernelChoice::Auto;
  } else if (kernel == "matern32") {
    run.algo.kernel = KernelChoice::Matern32;
  } else if (kernel == "matern32_ard") {
    run.algo.kernel = KernelChoice::Matern32Ard;
  } else {
    throw std::invalid_argument("config key 'algo.kernel': unknown kernel '" + kernel + "'");
  }

  run.bench_steps = static_cast<int>(parse_int("bench.steps", get("bench.steps", "2000")));
  if (run.bench_steps < 1) throw std::invalid_argument("config key 'bench.steps': must be >= 1");
  run.out_path = get("output.path", "");
  run.format = get("output.format", "csv");
  if (run.format != "csv" && run.format != "json") {
    throw std::invalid_argument("config key 'output.format': expected csv or json, got '" +
                                run.format + "'");
  }

  run.model.validate();
  run.payoff.validate(run.model);
  for (int n : run.n_list) {
    if (n < 1) throw std::invalid_argument("config key 'algo.N': steps must be >= 1");
  }
  for (int p : run.p_list) {
    if (p < 1) throw std::invalid_argument("config key 'algo.P': points must be >= 1");
  }
  AlgoParams probe = run.algo;
  probe.validate();

  auto joined_int = [](const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(xs[i]);
    }
    return s;
  };
  auto joined_vec = [](const Eigen::VectorXd& v) {
    std::string s;
    for (long i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += cli_detail::format_double(v[i]);
    }
    return s;
  };
  run.canonical["model.d"] = std::to_string(d);
  run.canonical["model.s0"] = joined_vec(run.model.s0);
  run.canonical["model.r"] = cli_detail::format_double(run.model.r);
  run.canonical["model.eta"] = joined_vec(run.model.eta);
  run.canonical["model.sigma_min"] = joined_vec(run.model.sigma_min);
  run.canonical["model.sigma_max"] = joined_vec(run.model.sigma_max);
  run.canonical["model.rho_min"] = joined_vec(run.model.rho_min);
  run.canonical["model.rho_max"] = joined_vec(run.model.rho_max);
  run.canonical["model.T"] = cli_detail::format_double(run.model.T);
  run.canonical["payoff.kind"] = kind;
  run.canonical["payoff.lo"] = cli_detail::format_double(run.payoff.lo);
  run.canonical["payoff.hi"] = cli_detail::format_double(run.payoff.hi);
  run.canonical["payoff.k1"] = cli_detail::format_double(run.payoff.k1);
  run.canonical["payoff.k2"] = cli_detail::format_double(run.payoff.k2);
  run.canonical["payoff.strike"] = cli_detail::format_double(run.payoff.strike);
  run.canonical["payoff.monitors"] = std::to_string(run.payoff.monitor_count);
  run.canonical["algo.N"] = joined_int(run.n_list);
  run.canonical["algo.P"] = joined_int(run.p_list);
  run.canonical["algo.M"] = std::to_string(run.algo.branch_count);
  run.canonical["algo.seed"] = std::to_string(run.algo.seed);
  run.canonical["algo.kernel"] = kernel;
  run.canonical["algo.gpr_max_iters"] = std::to_string(run.algo.gpr_max_iters);
  run.canonical["bench.steps"] = std::to_string(run.bench_steps);
  return run;
}

// FNV-1a over the sorted canonical `key=value` pairs. Thread count and output
// routing never change the priced quantity, so they stay out of the hash.
inline std::uint64_t config_hash(const ConfigMap& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [key, value] : canonical) {
    if (key == "algo.threads" || key.rfind("output.", 0) == 0) continue;
    feed(key);
    feed("=");
    feed(value);
    feed("\n");
  }
  return h;
}

inline std::string hash_string(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// One priced (N, P) cell plus the optional benchmark comparison.
struct CellResult {
  int n = 0, p = 0;
  PriceReport report;
  std::optional<double> bench_value;
};

inline long effective_branches(const ModelSpec& m, const PayoffSpec& payoff, const AlgoParams& a) {
  if (payoff.path_dependent()) return 2;
  if (a.branch_count == 0 || (m.d <= 24 && a.branch_count == (1L << m.d))) return 1L << m.d;
  return a.branch_count;
}

inline const char* payoff_name(PayoffKind kind) {
  switch (kind) {
    case PayoffKind::Outperformer: return "outperformer";
    case PayoffKind::OutperformerSpread: return "outperformer_spread";
    case PayoffKind::GeoCallSpread: return "geo_call_spread";
    case PayoffKind::GeoOutperformer: return "geo_outperformer";
    case PayoffKind::CallSharpe: return "call_sharpe";
  }
  return "unknown";
}

// Benchmark price from the matching one-dimensional reduction.
inline double bench_value(const ResolvedRun& run, const AlgoParams& cell_algo) {
  switch (run.payoff.kind) {
    case PayoffKind::Outperformer:
    case PayoffKind::OutperformerSpread: {
      Reduced1D red = numeraire_reduce(run.model, run.payoff);
      return uvm_tree_1d(red, run.bench_steps);
    }
    case PayoffKind::GeoCallSpread: {
      Reduced1D red = geo_reduce(run.model, run.payoff.k1, run.payoff.k2);
      return uvm_tree_1d(red, run.bench_steps);
    }
    case PayoffKind::GeoOutperformer:
      return geo_outperformer_benchmark(run.model, cell_algo);
    case PayoffKind::CallSharpe:
      throw std::invalid_argument(
          "bench: the path-dependent payoff has no one-asset reduction to compare against");
  }
  throw std::invalid_argument("bench: unknown payoff");
}

inline std::string render_csv(const std::string& mode, const ResolvedRun& run,
                              const std::vector<CellResult>& cells, std::uint64_t hash) {
  std::string out = "mode,payoff,d,N,P,M,seed,value,config_hash";
  const bool with_bench = !cells.empty() && cells.front().bench_value.has_value();
  if (with_bench) out += ",bench_value,abs_gap,rel_gap";
  out += "\n";
  char buf[256];
  for (const CellResult& cell : cells) {
    AlgoParams a = run.algo;
    a.time_steps = cell.n;
    a.grid_points = cell.p;
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%d,%d,%ld,%llu,%.10g,%s", mode.c_str(),
                  payoff_name(run.payoff.kind), run.model.d, cell.n, cell.p,
                  effective_branches(run.model, run.payoff, a),
                  static_cast<unsigned long long>(run.algo.seed), cell.report.value,
                  hash_string(hash).c_str());
    out += buf;
    if (with_bench) {
      const double bench = *cell.bench_value;
      const double gap = cell.report.value - bench;
      std::snprintf(buf, sizeof(buf), ",%.10g,%.10g,%.10g", bench, gap,
                    bench != 0.0 ? gap / bench : 0.0);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline std::string render_json(const std::string& mode, const ResolvedRun& run,
                               const std::vector<CellResult>& cells, std::uint64_t hash) {
  nlohmann::ordered_json doc;
  doc["mode"] = mode;
  doc["payoff"] = payoff_name(run.payoff.kind);
  doc["config"] = run.canonical;
  doc["config_hash"] = hash_string(hash);
  doc["results"] = nlohmann::ordered_json::array();
  for (const CellResult& cell : cells) {
    nlohmann::ordered_json res;
    res["N"] = cell.n;
    res["P"] = cell.p;
    res["value"] = cell.report.value;
    res["root"] = {
        {"sigma", std::vector<double>(cell.report.root_point.sigma.begin(),
                                      cell.report.root_point.sigma.end())},
        {"rho", std::vector<double>(cell.report.root_point.rho.begin(),
                                    cell.report.root_point.rho.end())},
        {"iterations", cell.report.root_iterations},
    };
    res["steps"] = nlohmann::ordered_json::array();
    for (const StepReport& s : cell.report.steps) {
      res["steps"].push_back({
          {"step", s.step},
          {"points", s.points},
          {"mean_sqp_iterations", s.mean_sqp_iterations},
          {"gpr",
           {{"input_dim", s.gpr_input_dim},
            {"signal_std", s.gpr_signal_std},
            {"noise_std", s.gpr_noise_std},
            {"lml", s.gpr_lml},
            {"length_scales", s.gpr_length_scales}}},
      });
    }
    if (cell.bench_value) {
      const double bench = *cell.bench_value;
      const double gap = cell.report.value - bench;
      res["bench"] = {{"value", bench},
                      {"abs_gap", gap},
                      {"rel_gap", bench != 0.0 ? gap / bench : 0.0}};
    }
    doc["results"].push_back(std::move(res));
  }
  return doc.dump(2) + "\n";
}

// Prices every (N, P) cell of the request. Wall-clock timings go to `timings`
// only; the rendered output stays byte-stable for a fixed config and seed.
inline std::vector<CellResult> execute_cells(const std::string& mode, const ResolvedRun& run,
                                             std::ostream& timings) {
  std::vector<CellResult> cells;
  for (int n : run.n_list) {
    for (int p : run.p_list) {
      CellResult cell;
      cell.n = n;
      cell.p = p;
      AlgoParams a = run.algo;
      a.time_steps = n;
      a.grid_points = p;
      cell.report = price(run.model, run.payoff, a);
      if (mode == "bench") cell.bench_value = bench_value(run, a);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "[timing] cell N=%d P=%d %.2fs\n", n, p,
                    cell.report.seconds);
      timings << buf;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// Runs one subcommand against a parsed configuration. Returns the process
// exit code: 0 on success, 2 for configuration errors, 3 for runtime
// failures inside the pricing engine.
inline int run_command(const std::string& mode, const ConfigMap& cfg, std::ostream& timings) {
  ResolvedRun run;
  try {
    if (mode != "price" && mode != "sweep" && mode != "bench") {
      throw std::invalid_argument("unknown command '" + mode + "'");
    }
    run = resolve_config(cfg, mode == "sweep");
    if (mode == "bench" && run.payoff.kind == PayoffKind::CallSharpe) {
      throw std::invalid_argument(
          "bench: the path-dependent payoff has no one-asset reduction to compare against");
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::vector<CellResult> cells;
  try {
    cells = execute_cells(mode, run, timings);
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }

  const std::uint64_t hash = config_hash(run.canonical);
  const std::string body = run.format == "json" ? render_json(mode, run, cells, hash)
                                                : render_csv(mode, run, cells, hash);
  if (run.out_path.empty()) {
    std::cout << body;
  } else {
    std::ofstream out(run.out_path, std::ios::binary);
    if (!out) {
      std::cerr << "config error: cannot write output file '" << run.out_path << "'\n";
      return 2;
    }
    out << body;
  }
  return 0;
}

}  // namespace gtu
