#include "mfcoulomb/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "mfcoulomb/chaos.hpp"
#include "mfcoulomb/io.hpp"
#include "mfcoulomb/pde.hpp"
#include "mfcoulomb/rng.hpp"
#include "mfcoulomb/sde.hpp"
#include "mfcoulomb/weakform.hpp"

#ifndef MFC_VERSION
#define MFC_VERSION "dev"
#endif

namespace mfc::runner {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::simulate: return "simulate";
    case Experiment::pde_solve: return "pde_solve";
    case Experiment::weakform_scan: return "weakform_scan";
    case Experiment::chaos_scan: return "chaos_scan";
    case Experiment::noncollision_scan: return "noncollision_scan";
    case Experiment::calibrate_estimators: return "calibrate_estimators";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double num(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v);
  } catch (const InputError&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
}

std::uint64_t count(const std::string& key, const std::string& v) {
  const double d = num(key, v);
  if (!(d >= 0.0) || d != std::floor(d) || d > 9.0e15) throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(d);
}

bool flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v)) {
    const auto dash = item.find('-', 1);
    if (dash != std::string::npos) {
      const std::uint64_t a = count("seeds", item.substr(0, dash));
      const std::uint64_t b = count("seeds", item.substr(dash + 1));
      if (b < a || b - a > 1000000) throw ConfigError("config key 'seeds': bad range '" + item + "'");
      for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
    } else {
      out.push_back(count("seeds", item));
    }
  }
  return out;
}

Experiment parse_experiment(const std::string& v) {
  for (Experiment e : {Experiment::simulate, Experiment::pde_solve, Experiment::weakform_scan, Experiment::chaos_scan,
                       Experiment::noncollision_scan, Experiment::calibrate_estimators}) {
    if (to_string(e) == v) return e;
  }
  throw ConfigError("config key 'experiment': unknown kind '" + v + "'");
}

bool simulates(Experiment e) {
  return e == Experiment::simulate || e == Experiment::weakform_scan || e == Experiment::chaos_scan ||
         e == Experiment::noncollision_scan;
}

}  // namespace

InitialDensity parse_density(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = trim(spec.substr(0, colon));
  const std::string arg = colon == std::string::npos ? "" : trim(spec.substr(colon + 1));
  try {
    if (kind == "gaussian") return InitialDensity::gaussian(arg.empty() ? 1.0 : num("rho0", arg));
    if (kind == "uniform_ball") return InitialDensity::uniform_ball(arg.empty() ? 1.0 : num("rho0", arg));
    if (kind == "table") {
      const std::string text = io::read_file(arg);
      RadialTableDensity t;
      std::stringstream ss(text);
      std::string line;
      while (std::getline(ss, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto parts = split_list(line);
        if (parts.size() != 2) throw ConfigError("rho0 table: expected 'r,rho' rows in " + arg);
        t.r.push_back(num("rho0", parts[0]));
        t.rho.push_back(num("rho0", parts[1]));
      }
      return InitialDensity(t);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const IoError& e) {
    throw ConfigError(std::string("rho0 table: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(std::string("rho0: ") + e.what());
  }
  throw ConfigError("config key 'rho0': unknown density '" + spec + "' (gaussian:s, uniform_ball:R, table:path)");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
  }
  if (!kv.count("schema_version")) throw ConfigError("config: missing schema_version");
  for (const auto& [key, v] : kv) {
    if (key == "schema_version") cfg.schema_version = static_cast<int>(count(key, v));
    else if (key == "experiment") cfg.experiment = parse_experiment(v);
    else if (key == "N") {
      cfg.n_ladder.clear();
      for (const auto& s : split_list(v)) cfg.n_ladder.push_back(count(key, s));
    } else if (key == "epsilon") {
      cfg.eps_ladder.clear();
      for (const auto& s : split_list(v)) cfg.eps_ladder.push_back(num(key, s));
    } else if (key == "dt") cfg.dt = num(key, v);
    else if (key == "T") cfg.t_end = num(key, v);
    else if (key == "outputs") cfg.outputs = count(key, v);
    else if (key == "rho0") cfg.rho0 = v;
    else if (key == "seeds") cfg.seeds = parse_seeds(v);
    else if (key == "kernel") {
      if (v == "direct") cfg.method = kernel::SumMethod::direct;
      else if (v == "tree") cfg.method = kernel::SumMethod::tree;
      else throw ConfigError("config key 'kernel': expected direct or tree, got '" + v + "'");
    } else if (key == "theta") cfg.theta = num(key, v);
    else if (key == "output_dir") cfg.output_dir = v;
    else if (key == "entropy") cfg.entropy = flag(key, v);
    else if (key == "fisher") cfg.fisher = flag(key, v);
    else if (key == "write_positions") cfg.write_positions = flag(key, v);
    else if (key == "pde_cells") cfg.pde_cells = count(key, v);
    else if (key == "pde_radius") cfg.pde_radius = num(key, v);
    else if (key == "pde_interaction") cfg.pde_interaction = flag(key, v);
    else if (key == "directions") cfg.directions = count(key, v);
    else if (key == "gap_epsilons") {
      for (const auto& s : split_list(v)) cfg.gap_epsilons.push_back(num(key, s));
    } else if (key == "threshold_factor") cfg.threshold_factor = num(key, v);
    else if (key == "samples") cfg.samples = count(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  for (const auto& [key, v] : kv) {
    if (key == "output_dir") continue;  // where results go does not change them
    cfg.canonical_text += key + "=" + v + "\n";
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

double effective_dt(const ExperimentConfig& cfg) {
  if (cfg.dt > 0.0) return cfg.dt;
  const double e = *std::min_element(cfg.eps_ladder.begin(), cfg.eps_ladder.end());
  return sde::default_dt(e);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.schema_version != kSchemaVersion) {
    throw ConfigError("config: schema_version " + std::to_string(cfg.schema_version) + " unsupported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  if (cfg.n_ladder.empty()) throw ConfigError("config key 'N': empty");
  for (auto n : cfg.n_ladder) {
    if (n < 1) throw ConfigError("config key 'N': must be >= 1");
  }
  if (cfg.eps_ladder.empty()) throw ConfigError("config key 'epsilon': empty");
  for (double e : cfg.eps_ladder) {
    if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("config key 'epsilon': must be finite and > 0");
  }
  if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end)) throw ConfigError("config key 'T': must be finite and >= 0");
  if (cfg.outputs < 1) throw ConfigError("config key 'outputs': must be >= 1");
  if (cfg.dt < 0.0 || !std::isfinite(cfg.dt)) throw ConfigError("config key 'dt': must be finite and > 0");
  if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
    throw ConfigError("config key 'seeds': seeds must be distinct");
  }
  if (!(cfg.theta > 0.0 && cfg.theta <= 1.0)) throw ConfigError("config key 'theta': must be in (0, 1]");
  parse_density(cfg.rho0);
  if (simulates(cfg.experiment) && cfg.dt > 0.0) {
    for (double e : cfg.eps_ladder) {
      const double cap = sde::default_dt(e);
      if (cfg.dt > cap * (1.0 + 1e-12)) {
        throw ConfigError("config key 'dt': dt = " + io::format_double(cfg.dt) +
                          " violates the step rule dt <= pi*eps^3 = " + io::format_double(cap) +
                          " for eps = " + io::format_double(e));
      }
    }
  }
  if (cfg.experiment == Experiment::pde_solve || cfg.experiment == Experiment::chaos_scan) {
    if (cfg.pde_cells < 16) throw ConfigError("config key 'pde_cells': must be >= 16");
    if (cfg.pde_radius < 0.0) throw ConfigError("config key 'pde_radius': must be >= 0");
  }
  if (cfg.experiment == Experiment::chaos_scan) {
    if (cfg.seeds.size() < 8) throw ConfigError("chaos_scan: pair covariance needs at least 8 seeds");
    if (cfg.directions < 1) throw ConfigError("config key 'directions': must be >= 1");
    for (auto n : cfg.n_ladder) {
      if (n < 2) throw ConfigError("chaos_scan: N must be >= 2");
    }
  }
  for (double e : cfg.gap_epsilons) {
    if (!(e > 0.0)) throw ConfigError("config key 'gap_epsilons': must be > 0");
  }
  if (cfg.experiment == Experiment::noncollision_scan) {
    if (!(cfg.threshold_factor > 0.0)) throw ConfigError("config key 'threshold_factor': must be > 0");
    if (cfg.n_ladder.front() < 2) throw ConfigError("noncollision_scan: N must be >= 2");
  }
  if (cfg.experiment == Experiment::calibrate_estimators && cfg.samples < 1000) {
    throw ConfigError("config key 'samples': must be >= 1000");
  }
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const InputError*>(&e)) return 2;
  return 3;
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, n))));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed) {
        const std::size_t k = next++;
        if (k >= n) return;
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

Band band(std::vector<double> values) {
  Band b;
  if (values.empty()) return b;
  b.median = stats::quantile(values, 0.5);
  b.lo = stats::quantile(values, 0.25);
  b.hi = stats::quantile(values, 0.75);
  const auto ms = stats::mean_se(values);
  b.mean = ms.mean;
  b.se = ms.se;
  return b;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<stats::DiagnosticsRow>>& per_seed) {
  std::vector<AggregateRow> out;
  if (per_seed.empty()) return out;
  std::size_t rows = per_seed.front().size();
  for (const auto& s : per_seed) rows = std::min(rows, s.size());
  for (std::size_t r = 0; r < rows; ++r) {
    AggregateRow a;
    a.t = per_seed.front()[r].t;
    auto col = [&](auto member) {
      std::vector<double> v;
      for (const auto& s : per_seed) v.push_back(s[r].*member);
      a.columns.push_back(band(std::move(v)));
    };
    col(&stats::DiagnosticsRow::energy);
    col(&stats::DiagnosticsRow::energy_mollified);
    col(&stats::DiagnosticsRow::entropy_est);
    col(&stats::DiagnosticsRow::fisher_est);
    col(&stats::DiagnosticsRow::m2);
    col(&stats::DiagnosticsRow::min_dist);
    col(&stats::DiagnosticsRow::martingale);
    col(&stats::DiagnosticsRow::work);
    out.push_back(std::move(a));
  }
  return out;
}

std::string Criterion::to_json() const {
  json j;
  j["id"] = id;
  j["name"] = name;
  j["measured"] = measured;
  j["threshold"] = threshold;
  j["relation"] = relation;
  j["pass"] = pass;
  j["detail"] = detail;
  return j.dump();
}

Criterion Criterion::from_json(const std::string& line) {
  const json j = json::parse(line);
  Criterion c;
  c.id = j.at("id").get<int>();
  c.name = j.at("name").get<std::string>();
  c.measured = j.at("measured").is_null() ? std::nan("") : j.at("measured").get<double>();
  c.threshold = j.at("threshold").is_null() ? std::nan("") : j.at("threshold").get<double>();
  c.relation = j.value("relation", "");
  c.pass = j.at("pass").get<bool>();
  c.detail = j.value("detail", "");
  return c;
}

namespace {

std::string tag(double v) { return io::format_double(v); }

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {}
  void write(const std::string& name, const std::string& contents) {
    io::write_file(dir_ / name, contents);
    note(name);
  }
  void start_jsonl(const std::string& name) {
    io::write_file(dir_ / name, "");
    note(name);
  }
  void append(const std::string& name, const std::string& line) { io::append_line(dir_ / name, line); }
  const std::vector<std::string>& files() const { return files_; }

 private:
  void note(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }
  fs::path dir_;
  std::vector<std::string> files_;
};

sde::SimulationSpec sim_spec(const ExperimentConfig& cfg, std::size_t n, double eps, std::uint64_t seed) {
  sde::SimulationSpec s;
  s.rho0 = parse_density(cfg.rho0);
  s.n = n;
  s.epsilon = eps;
  s.dt = effective_dt(cfg);
  s.t_end = cfg.t_end;
  s.outputs = cfg.outputs;
  s.seed = seed;
  s.pairwise.method = cfg.method;
  s.pairwise.theta = cfg.theta;
  s.diagnostics.entropy = cfg.entropy;
  s.diagnostics.fisher = cfg.fisher;
  return s;
}

std::vector<std::uint64_t> shifted(const ExperimentConfig& cfg, const RunOptions& opt) {
  std::vector<std::uint64_t> s = cfg.seeds;
  for (auto& v : s) v += opt.seed_offset;
  return s;
}

std::string diag_csv(const std::vector<stats::DiagnosticsRow>& rows) {
  std::string out = stats::diagnostics_header() + "\n";
  for (const auto& r : rows) out += stats::to_csv(r) + "\n";
  return out;
}

std::string positions_csv(const sde::Trajectory& tr) {
  std::string out = "t,i,x,y,z\n";
  for (const auto& f : tr.frames) {
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      out += tag(f.t) + "," + std::to_string(i) + "," + tag(f.positions[i].x) + "," + tag(f.positions[i].y) + "," +
             tag(f.positions[i].z) + "\n";
    }
  }
  return out;
}

void run_simulate(const ExperimentConfig& cfg, const RunOptions& opt, Writer& w) {
  const auto seeds = shifted(cfg, opt);
  for (std::size_t n : cfg.n_ladder) {
    for (double eps : cfg.eps_ladder) {
      std::vector<std::string> diag(seeds.size()), pos(seeds.size());
      parallel_for(seeds.size(), opt.workers, [&](std::size_t k) {
        const auto res = sde::simulate(sim_spec(cfg, n, eps, seeds[k]));
        diag[k] = diag_csv(res.diagnostics);
        if (cfg.write_positions) pos[k] = positions_csv(res.trajectory);
      });
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        const std::string stem = "N" + std::to_string(n) + "_eps" + tag(eps) + "_seed" + std::to_string(seeds[k]);
        w.write("diag_" + stem + ".csv", diag[k]);
        if (cfg.write_positions) w.write("positions_" + stem + ".csv", pos[k]);
      }
    }
  }
}

pde::GridParams grid_of(const ExperimentConfig& cfg) {
  pde::GridParams g;
  g.cells = cfg.pde_cells;
  g.outer_radius = cfg.pde_radius;
  g.outputs = cfg.outputs;
  g.step.interaction = cfg.pde_interaction;
  return g;
}

void run_pde(const ExperimentConfig& cfg, Writer& w) {
  const auto series = pde::solve(parse_density(cfg.rho0), cfg.t_end, grid_of(cfg));
  const auto& f0 = series.frames.front();
  std::string s = "t";
  for (std::size_t k = 0; k < f0.cells(); ++k) s += "," + tag(f0.center(k));
  s += "\n";
  for (const auto& f : series.frames) {
    s += tag(f.t);
    for (double v : f.rho) s += "," + tag(v);
    s += "\n";
  }
  w.write("pde_series.csv", s);
  std::string sum = "t,mass,energy,entropy,fisher,l2,leakage\n";
  double drift = 0.0;
  for (std::size_t k = 0; k < series.frames.size(); ++k) {
    const double m = series.frames[k].mass();
    drift = std::max(drift, std::abs(m - f0.mass()));
    sum += tag(series.frames[k].t) + "," + tag(m) + "," + tag(series.energy[k]) + "," + tag(series.entropy[k]) + "," +
           tag(series.fisher[k]) + "," + tag(series.l2[k]) + "," + tag(series.leakage[k]) + "\n";
  }
  w.write("pde_summary.csv", sum);
  json j;
  j["kind"] = "pde";
  j["cells"] = cfg.pde_cells;
  j["outer_radius"] = f0.outer_radius();
  j["T"] = cfg.t_end;
  j["steps"] = series.steps;
  j["interaction"] = cfg.pde_interaction;
  j["max_mass_drift"] = drift;
  j["mild_residual"] = pde::mild_residual(series);
  w.start_jsonl("pde.jsonl");
  w.append("pde.jsonl", j.dump());
}

std::vector<weakform::TestFunction> weak_functions() {
  auto fns = weakform::test_battery(1.0);
  fns.push_back(weakform::TestFunction::constant(1.0));
  fns.push_back(weakform::TestFunction::linear({0.3, -0.2, 0.5}, 0.1));
  return fns;
}

void run_weakform(const ExperimentConfig& cfg, const RunOptions& opt, Writer& w) {
  const auto seeds = shifted(cfg, opt);
  const auto fns = weak_functions();
  w.start_jsonl("weakform.jsonl");
  std::string summary = "N,epsilon,median_abs_K\n";
  for (double eps : cfg.eps_ladder) {
    std::vector<double> ns, meds;
    for (std::size_t n : cfg.n_ladder) {
      std::vector<std::vector<std::string>> rows(seeds.size());
      std::vector<std::vector<double>> absk(seeds.size());
      parallel_for(seeds.size(), opt.workers, [&](std::size_t k) {
        auto spec = sim_spec(cfg, n, eps, seeds[k]);
        spec.diagnostics.enabled = false;
        spec.record_martingale = false;
        const auto res = sde::simulate(spec);
        const auto& tr = res.trajectory;
        const double t = tr.frames.back().t;
        for (std::size_t f = 0; f < fns.size(); ++f) {
          const auto rep = weakform::weak_residual(tr, fns[f], kernel::KernelSpec(eps), t);
          rows[k].push_back(rep.to_json());
          if (f < 5) absk[k].push_back(std::abs(rep.value));
        }
        for (double ge : cfg.gap_epsilons) {
          for (std::size_t f = 0; f < 5; ++f) {
            json j;
            j["kind"] = "mollification_gap";
            j["N"] = n;
            j["sim_epsilon"] = eps;
            j["epsilon"] = ge;
            j["seed"] = seeds[k];
            j["phi"] = fns[f].describe();
            j["gap"] = weakform::residual_gap(tr, fns[f], std::nullopt, kernel::KernelSpec(ge), t);
            rows[k].push_back(j.dump());
          }
        }
      });
      std::vector<double> all;
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        for (const auto& r : rows[k]) w.append("weakform.jsonl", r);
        all.insert(all.end(), absk[k].begin(), absk[k].end());
      }
      const double med = stats::median(all);
      summary += std::to_string(n) + "," + tag(eps) + "," + tag(med) + "\n";
      ns.push_back(static_cast<double>(n));
      meds.push_back(med);
    }
    if (ns.size() >= 2 && std::all_of(meds.begin(), meds.end(), [](double v) { return v > 0.0; })) {
      json j;
      j["kind"] = "weakform_slope";
      j["epsilon"] = eps;
      j["slope"] = stats::loglog_slope(ns, meds);
      w.append("weakform.jsonl", j.dump());
    }
  }
  w.write("weakform_summary.csv", summary);
}

void run_chaos(const ExperimentConfig& cfg, const RunOptions& opt, Writer& w) {
  const auto seeds = shifted(cfg, opt);
  auto grid = grid_of(cfg);
  grid.outputs = 1;
  const auto series = pde::solve(parse_density(cfg.rho0), cfg.t_end, grid);
  const auto& ref = series.frames.back();
  const auto dirs = chaos::directions(cfg.directions, 0x5eed);
  const auto fns = weakform::test_battery(1.0);
  const double eps = cfg.eps_ladder.front();
  w.start_jsonl("chaos.jsonl");
  std::string summary = "N,t,radial_ks_median,sliced_w1_median,pair_cov_median_abs\n";
  for (std::size_t n : cfg.n_ladder) {
    std::vector<Positions> finals(seeds.size());
    std::vector<double> ks(seeds.size()), sw(seeds.size());
    parallel_for(seeds.size(), opt.workers, [&](std::size_t k) {
      auto spec = sim_spec(cfg, n, eps, seeds[k]);
      spec.diagnostics.enabled = false;
      spec.record_martingale = false;
      spec.outputs = 1;
      spec.dt = effective_dt(cfg);
      auto res = sde::simulate(spec);
      finals[k] = std::move(res.trajectory.frames.back().positions);
      ks[k] = chaos::radial_ks(finals[k], ref);
      sw[k] = chaos::sliced_w1(finals[k], ref, dirs);
    });
    chaos::ChaosReport rep;
    rep.n = n;
    rep.t = cfg.t_end;
    rep.seeds = seeds.size();
    rep.radial_ks = stats::median(ks);
    rep.sliced_w1 = stats::median(sw);
    std::vector<double> absc;
    for (const auto& phi : fns) {
      const auto pc = chaos::pair_covariance(finals, phi);
      rep.pair_cov.push_back(pc.estimate);
      rep.pair_cov_se.push_back(pc.se);
      absc.push_back(std::abs(pc.estimate));
    }
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      json j;
      j["kind"] = "chaos_seed";
      j["N"] = n;
      j["seed"] = seeds[k];
      j["radial_ks"] = ks[k];
      j["sliced_w1"] = sw[k];
      w.append("chaos.jsonl", j.dump());
    }
    w.append("chaos.jsonl", rep.to_json());
    summary += std::to_string(n) + "," + tag(cfg.t_end) + "," + tag(rep.radial_ks) + "," + tag(rep.sliced_w1) + "," +
               tag(stats::median(absc)) + "\n";
  }
  w.write("chaos_summary.csv", summary);
}

void run_noncollision(const ExperimentConfig& cfg, const RunOptions& opt, Writer& w) {
  const auto seeds = shifted(cfg, opt);
  const std::size_t n = cfg.n_ladder.front();
  w.start_jsonl("noncollision.jsonl");
  std::string summary = "epsilon,hits,seeds,p,lo,hi\n";
  for (double eps : cfg.eps_ladder) {
    std::vector<int> hit(seeds.size());
    std::vector<double> when(seeds.size());
    parallel_for(seeds.size(), opt.workers, [&](std::size_t k) {
      auto spec = sim_spec(cfg, n, eps, seeds[k]);
      spec.diagnostics.enabled = false;
      spec.record_martingale = false;
      spec.monitor_min_distance = true;
      spec.stop_below = cfg.threshold_factor * eps;
      const auto res = sde::simulate(spec);
      const auto tau = sde::stopping_time(res.trajectory, cfg.threshold_factor * eps);
      hit[k] = tau.has_value();
      when[k] = tau.value_or(std::nan(""));
    });
    std::size_t hits = 0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      hits += hit[k];
      json j;
      j["kind"] = "noncollision_seed";
      j["epsilon"] = eps;
      j["seed"] = seeds[k];
      j["hit"] = hit[k] != 0;
      if (hit[k]) j["tau"] = when[k];
      w.append("noncollision.jsonl", j.dump());
    }
    const auto ci = stats::wilson_interval(hits, seeds.size());
    json j;
    j["kind"] = "noncollision";
    j["N"] = n;
    j["epsilon"] = eps;
    j["dt"] = effective_dt(cfg);
    j["hits"] = hits;
    j["seeds"] = seeds.size();
    j["p"] = static_cast<double>(hits) / static_cast<double>(seeds.size());
    j["lo"] = ci.lo;
    j["hi"] = ci.hi;
    w.append("noncollision.jsonl", j.dump());
    summary += tag(eps) + "," + std::to_string(hits) + "," + std::to_string(seeds.size()) + "," +
               tag(j["p"].get<double>()) + "," + tag(ci.lo) + "," + tag(ci.hi) + "\n";
  }
  w.write("noncollision_summary.csv", summary);
}

void run_calibration(const ExperimentConfig& cfg, const RunOptions& opt, Writer& w) {
  const std::uint64_t seed = cfg.seeds.front() + opt.seed_offset;
  const std::size_t m = cfg.samples;
  Positions gauss(m), cube(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto g = rng::normal3(seed, i, 0, rng::Purpose::auxiliary);
    gauss[i] = {g[0], g[1], g[2]};
    const auto u = rng::uniform_pair(seed, i, 1, rng::Purpose::auxiliary);
    const auto v = rng::uniform_pair(seed, i, 2, rng::Purpose::auxiliary);
    cube[i] = {u[0], u[1], v[0]};
  }
  Positions gauss2 = gauss;
  for (auto& p : gauss2) p *= 2.0;
  const double h1 = stats::entropy_knn(gauss);
  const double h2 = stats::entropy_knn(gauss2);
  struct Row {
    std::string name;
    double estimate, target, tol;
    bool relative;
  };
  const std::vector<Row> rows{
      {"gaussian_entropy", h1, -1.5 * std::log(2.0 * kPi * std::exp(1.0)), 0.02, true},
      {"uniform_cube_entropy", stats::entropy_knn(cube), 0.0, 0.05, false},
      {"gaussian_entropy_shift", h2 - h1, -3.0 * std::log(2.0), 0.03, true},
      {"gaussian_fisher", stats::fisher_kde(gauss), 3.0, 0.10, true},
      {"gaussian2_fisher", stats::fisher_kde(gauss2), 0.75, 0.10, true},
      {"gaussian_m2", stats::second_moment(gauss), 3.0, 0.01, true},
  };
  w.start_jsonl("calibration.jsonl");
  for (const auto& r : rows) {
    const double err = r.relative ? std::abs(r.estimate - r.target) / std::abs(r.target) : std::abs(r.estimate - r.target);
    json j;
    j["kind"] = "calibration";
    j["name"] = r.name;
    j["samples"] = m;
    j["estimate"] = r.estimate;
    j["target"] = r.target;
    j["tolerance"] = r.tol;
    j["relative"] = r.relative;
    j["pass"] = err <= r.tol;
    w.append("calibration.jsonl", j.dump());
  }
}

}  // namespace

RunSummary run(const ExperimentConfig& cfg, const RunOptions& options) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  RunSummary sum;
  sum.directory = options.out.empty() ? fs::path(cfg.output_dir) : options.out;
  std::error_code ec;
  fs::create_directories(sum.directory, ec);
  if (ec) throw IoError("cannot create output directory " + sum.directory.string() + ": " + ec.message());
  Writer w(sum.directory);
  switch (cfg.experiment) {
    case Experiment::simulate: run_simulate(cfg, options, w); break;
    case Experiment::pde_solve: run_pde(cfg, w); break;
    case Experiment::weakform_scan: run_weakform(cfg, options, w); break;
    case Experiment::chaos_scan: run_chaos(cfg, options, w); break;
    case Experiment::noncollision_scan: run_noncollision(cfg, options, w); break;
    case Experiment::calibrate_estimators: run_calibration(cfg, options, w); break;
  }
  sum.files = w.files();
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json m;
  m["schema_version"] = cfg.schema_version;
  m["experiment"] = to_string(cfg.experiment);
  m["config_hash"] = io::fnv1a_hex(cfg.canonical_text);
  m["code_version"] = MFC_VERSION;
  m["wall_time_seconds"] = sum.wall_seconds;
  m["workers"] = options.workers;
  m["seed_offset"] = options.seed_offset;
  m["files"] = sum.files;
  io::write_file(sum.directory / "manifest.json", m.dump(2) + "\n");
  return sum;
}

namespace {

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::stringstream ss(io::read_file(p));
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<json> jsonl(const fs::path& p) {
  std::vector<json> out;
  for (const auto& l : lines_of(p)) {
    try {
      out.push_back(json::parse(l));
    } catch (const json::exception&) {
      // A truncated last line from an interrupted run is skipped.
    }
  }
  return out;
}

bool report_diagnostics(const fs::path& dir, std::ostream& out) {
  static const std::regex re(R"(diag_(N\d+_eps[^_]+)_seed(\d+)\.csv)");
  std::map<std::string, std::map<std::uint64_t, fs::path>> groups;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) groups[m[1]][std::stoull(m[2])] = e.path();
  }
  for (const auto& [group, files] : groups) {
    std::vector<std::vector<stats::DiagnosticsRow>> per_seed;
    for (const auto& [seed, path] : files) {
      auto lines = lines_of(path);
      std::vector<stats::DiagnosticsRow> rows;
      for (std::size_t k = 1; k < lines.size(); ++k) rows.push_back(stats::diagnostics_from_csv(lines[k]));
      per_seed.push_back(std::move(rows));
    }
    const auto agg = aggregate(per_seed);
    std::string s = "t";
    const auto& cols = stats::diagnostics_columns();
    for (std::size_t c = 1; c < cols.size(); ++c) s += "," + cols[c] + "_median," + cols[c] + "_lo," + cols[c] + "_hi";
    s += "\n";
    for (const auto& row : agg) {
      s += tag(row.t);
      for (const auto& b : row.columns) s += "," + tag(b.median) + "," + tag(b.lo) + "," + tag(b.hi);
      s += "\n";
    }
    io::write_file(dir / ("summary_" + group + ".csv"), s);
    out << "diagnostics " << group << ": " << files.size() << " seeds, " << agg.size() << " times -> summary_" << group
        << ".csv\n";
    if (!agg.empty()) {
      const auto& last = agg.back();
      out << "  t=" << tag(last.t) << " energy median " << tag(last.columns[0].median) << " [" << tag(last.columns[0].lo)
          << ", " << tag(last.columns[0].hi) << "]\n";
    }
  }
  return !groups.empty();
}

bool report_weakform(const fs::path& dir, std::ostream& out) {
  const fs::path p = dir / "weakform.jsonl";
  if (!fs::exists(p)) return false;
  std::map<std::pair<double, std::size_t>, std::vector<double>> k_abs;
  std::map<double, std::vector<double>> gaps;
  for (const auto& j : jsonl(p)) {
    const std::string kind = j.value("kind", "");
    if (kind == "weak_residual" && j.value("phi", "").rfind("gaussian_bump", 0) == 0) {
      k_abs[{j["epsilon"].get<double>(), j["N"].get<std::size_t>()}].push_back(std::abs(j["value"].get<double>()));
    } else if (kind == "mollification_gap") {
      gaps[j["epsilon"].get<double>()].push_back(std::abs(j["gap"].get<double>()));
    }
  }
  std::string s = "kind,epsilon,N,median_abs\n";
  out << "weak-form residual (median |K| over seeds and test functions)\n";
  for (const auto& [key, v] : k_abs) {
    const double med = stats::median(v);
    out << "  eps=" << tag(key.first) << " N=" << key.second << " median|K|=" << tag(med) << "\n";
    s += "residual," + tag(key.first) + "," + std::to_string(key.second) + "," + tag(med) + "\n";
  }
  for (auto it = gaps.rbegin(); it != gaps.rend(); ++it) {
    const double med = stats::median(it->second);
    out << "  gap eps'=" << tag(it->first) << " median|K - K_eps|=" << tag(med) << "\n";
    s += "gap," + tag(it->first) + ",," + tag(med) + "\n";
  }
  io::write_file(dir / "weakform_report.csv", s);
  return true;
}

bool report_kinds(const fs::path& dir, const std::string& file, const std::set<std::string>& kinds, std::ostream& out) {
  const fs::path p = dir / file;
  if (!fs::exists(p)) return false;
  out << file << "\n";
  for (const auto& j : jsonl(p)) {
    if (kinds.count(j.value("kind", ""))) out << "  " << j.dump() << "\n";
  }
  return true;
}

bool report_acceptance(const fs::path& dir, std::ostream& out) {
  const fs::path p = dir / "acceptance.jsonl";
  if (!fs::exists(p)) return false;
  std::map<int, Criterion> crit;
  for (const auto& l : lines_of(p)) {
    try {
      const auto c = Criterion::from_json(l);
      crit[c.id] = c;
    } catch (const std::exception&) {
    }
  }
  std::string s = "id,name,measured,relation,threshold,pass\n";
  out << "acceptance criteria\n";
  for (const auto& [id, c] : crit) {
    s += std::to_string(id) + "," + c.name + "," + tag(c.measured) + "," + c.relation + "," + tag(c.threshold) + "," +
         (c.pass ? "pass" : "FAIL") + "\n";
    out << "  " << std::setw(2) << id << "  " << std::left << std::setw(28) << c.name << std::right << "  measured "
        << tag(c.measured) << " " << c.relation << " " << tag(c.threshold) << "  " << (c.pass ? "PASS" : "FAIL") << "\n";
  }
  io::write_file(dir / "acceptance_table.csv", s);
  return true;
}

}  // namespace

void report(const fs::path& dir, std::ostream& out) {
  if (!fs::is_directory(dir)) throw ConfigError("report: results directory " + dir.string() + " does not exist");
  bool any = false;
  any |= report_diagnostics(dir, out);
  any |= report_weakform(dir, out);
  any |= report_kinds(dir, "chaos.jsonl", {"chaos"}, out);
  any |= report_kinds(dir, "noncollision.jsonl", {"noncollision"}, out);
  any |= report_kinds(dir, "calibration.jsonl", {"calibration"}, out);
  any |= report_kinds(dir, "pde.jsonl", {"pde"}, out);
  any |= report_acceptance(dir, out);
  if (!any) throw ConfigError("report: no results found in " + dir.string());
}

}  // namespace mfc::runner
