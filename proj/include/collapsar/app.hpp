#pragma once

// Command-line orchestration: JSON run configs, the run pipeline with its exit-code contract, and
// golden regression over a corpus of stored configs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "collapsar/error.hpp"
#include "collapsar/invariants.hpp"
#include "collapsar/inviscid.hpp"
#include "collapsar/io.hpp"
#include "collapsar/ode_engine.hpp"
#include "collapsar/radial_pde.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/shadow.hpp"
#include "collapsar/types.hpp"

namespace collapsar::app {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { kPass = 0, kCheckFailure = 2, kBreakdown = 3, kConfigError = 4 };

enum class Mode { Selfsim, Invariants, ShadowSweep, Inviscid, Pde, All };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Selfsim: return "selfsim";
    case Mode::Invariants: return "invariants";
    case Mode::ShadowSweep: return "shadow-sweep";
    case Mode::Inviscid: return "inviscid";
    case Mode::Pde: return "pde";
    case Mode::All: return "all";
  }
  return "unknown";
}

struct ConfigIssue {
  std::string field;
  std::string message;
};

class ConfigInvalid : public Error {
 public:
  explicit ConfigInvalid(std::vector<ConfigIssue> issues)
      : Error(ErrorCode::ConfigError, summarize(issues)), issues_(std::move(issues)) {}
  ConfigInvalid(std::string field, std::string message)
      : ConfigInvalid(std::vector<ConfigIssue>{{std::move(field), std::move(message)}}) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<ConfigIssue>& issues) {
    std::string s = "invalid configuration";
    for (const auto& i : issues) s += "; " + i.field + ": " + i.message;
    return s;
  }
  std::vector<ConfigIssue> issues_;
};

struct SweepSection {
  std::vector<double> eps;
  double y_end = 1.0;
  double t = 1.0;
  double slope_tol = 0.1;
  double max_fit_residual = 0.05;
};

struct InviscidSection {
  InviscidState start;
  InviscidConfig config;
  std::optional<SonicClass> expect;
};

struct PdeSection {
  PdeConfig config;
  std::vector<double> checkpoints;
  double deviation_factor = 5.0;
};

struct RunConfig {
  Mode mode = Mode::Selfsim;
  PressureFlag pressure;
  std::optional<PhysicalInit> init;
  std::optional<SimilarityState> start;
  IntegratorConfig integrator;
  SuiteOptions suite;
  std::vector<std::string> checks;  // empty: the mode's defaults
  std::optional<SweepSection> sweep;
  std::optional<InviscidSection> inviscid;
  std::optional<PdeSection> pde;
  std::string output_dir = "collapsar_out";
  std::string title;

  bool needs_trace() const { return mode != Mode::ShadowSweep && mode != Mode::Inviscid; }

  SimilarityState start_state() const { return start ? *start : map_initial(*init); }
};

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = {"H_negative", "W_bound",     "R_monotone",
                                                 "decay_bound", "gap",        "asymptotics",
                                                 "W_below_minus_one_until_yd", "exact_solution"};
  return names;
}

namespace detail {

class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void issue(std::string field, std::string message) { issues.push_back({std::move(field), std::move(message)}); }

  void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        issue(join(path, key), "unknown key");
      }
    }
  }

  bool object(const json& parent, const std::string& path, const char* key, const json*& out) {
    out = nullptr;
    if (!parent.contains(key)) return false;
    const auto& v = parent.at(key);
    if (!v.is_object()) {
      issue(join(path, key), "expected an object");
      return false;
    }
    out = &v;
    return true;
  }

  std::optional<double> number(const json& obj, const std::string& path, const char* key, bool required = false) {
    if (!obj.contains(key)) {
      if (required) issue(join(path, key), "required number missing");
      return std::nullopt;
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) {
      issue(join(path, key), "expected a number");
      return std::nullopt;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      issue(join(path, key), "must be finite");
      return std::nullopt;
    }
    return d;
  }

  std::optional<double> positive(const json& obj, const std::string& path, const char* key, bool required = false) {
    auto d = number(obj, path, key, required);
    if (d && !(*d > 0.0)) {
      issue(join(path, key), "must be > 0, got " + io::fmt17(*d));
      return std::nullopt;
    }
    return d;
  }

  std::optional<std::int64_t> integer(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) {
      issue(join(path, key), "expected an integer");
      return std::nullopt;
    }
    return v.get<std::int64_t>();
  }

  std::optional<std::string> string(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj.at(key);
    if (!v.is_string()) {
      issue(join(path, key), "expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::vector<double> numbers(const json& obj, const std::string& path, const char* key) {
    std::vector<double> out;
    if (!obj.contains(key)) return out;
    const auto& v = obj.at(key);
    if (!v.is_array()) {
      issue(join(path, key), "expected an array of numbers");
      return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        issue(join(path, key) + "[" + std::to_string(i) + "]", "expected a finite number");
        continue;
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

inline std::optional<Mode> parse_mode(const std::string& s) {
  for (auto m : {Mode::Selfsim, Mode::Invariants, Mode::ShadowSweep, Mode::Inviscid, Mode::Pde, Mode::All}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses and validates a run config; every problem found is reported with its field path.
inline RunConfig parse_config(const json& j) {
  detail::Reader rd;
  RunConfig cfg;
  if (!j.is_object()) throw ConfigInvalid("", "configuration must be a JSON object");
  rd.only_keys(j, "",
               {"mode", "pressure", "init", "start", "integrator", "suite", "checks", "sweep", "inviscid", "pde",
                "output_dir", "title", "description"});

  if (auto m = rd.string(j, "", "mode")) {
    if (auto mode = detail::parse_mode(*m)) {
      cfg.mode = *mode;
    } else {
      rd.issue("mode", "unknown mode '" + *m + "'");
    }
  } else if (!j.contains("mode")) {
    rd.issue("mode", "required string missing");
  }

  if (auto a = rd.integer(j, "", "pressure")) {
    if (*a == 0 || *a == 1) {
      cfg.pressure = PressureFlag(static_cast<int>(*a));
    } else {
      rd.issue("pressure", "must be 0 or 1");
    }
  } else if (!j.contains("pressure")) {
    rd.issue("pressure", "required integer missing");
  }

  const json* sec = nullptr;
  if (rd.object(j, "", "init", sec)) {
    rd.only_keys(*sec, "init", {"eps", "v_tilde", "v1_tilde", "d1"});
    PhysicalInit init;
    const auto eps = rd.number(*sec, "init", "eps", true);
    const auto v = rd.number(*sec, "init", "v_tilde", true);
    const auto v1 = rd.number(*sec, "init", "v1_tilde", true);
    const auto d1 = rd.number(*sec, "init", "d1", true);
    if (eps && !(*eps > 0.0)) rd.issue("init.eps", "must be > 0, got " + io::fmt17(*eps));
    if (v && !(*v < 0.0)) rd.issue("init.v_tilde", "must be < 0, got " + io::fmt17(*v));
    if (v1 && !(*v1 < 0.0)) rd.issue("init.v1_tilde", "must be < 0, got " + io::fmt17(*v1));
    if (d1 && !(*d1 > 0.0)) rd.issue("init.d1", "must be > 0, got " + io::fmt17(*d1));
    if (eps && v && v1 && d1) {
      init = {*v, *v1, *d1, *eps};
      if (!init.violation()) cfg.init = init;
    }
  }
  if (rd.object(j, "", "start", sec)) {
    rd.only_keys(*sec, "start", {"y", "W", "Wp", "R"});
    const auto y = rd.positive(*sec, "start", "y", true);
    const auto W = rd.number(*sec, "start", "W", true);
    const auto Wp = rd.number(*sec, "start", "Wp", true);
    const auto R = rd.number(*sec, "start", "R", true);
    if (R && *R < 0.0) rd.issue("start.R", "must be >= 0");
    if (y && W && Wp && R && *R >= 0.0) cfg.start = SimilarityState{*y, *W, *Wp, *R};
  }
  if (j.contains("init") && j.contains("start")) rd.issue("start", "give either init or start, not both");

  if (rd.object(j, "", "integrator", sec)) {
    rd.only_keys(*sec, "integrator", {"rel_tol", "abs_tol", "h_init", "h_max", "y_end", "max_steps"});
    auto& ic = cfg.integrator;
    if (auto v = rd.positive(*sec, "integrator", "rel_tol")) ic.rel_tol = *v;
    if (auto v = rd.positive(*sec, "integrator", "abs_tol")) ic.abs_tol = *v;
    if (auto v = rd.positive(*sec, "integrator", "h_init")) ic.h_init = *v;
    if (auto v = rd.positive(*sec, "integrator", "h_max")) ic.h_max = *v;
    if (auto v = rd.positive(*sec, "integrator", "y_end")) ic.y_end = *v;
    if (auto v = rd.integer(*sec, "integrator", "max_steps")) {
      if (*v > 0) {
        ic.max_steps = *v;
      } else {
        rd.issue("integrator.max_steps", "must be > 0");
      }
    }
  }

  if (rd.object(j, "", "suite", sec)) {
    rd.only_keys(*sec, "suite", {"tail_fraction", "tol_W", "tol_R", "tol_Wy"});
    if (auto v = rd.positive(*sec, "suite", "tail_fraction")) {
      if (*v < 1.0) {
        cfg.suite.tail_fraction = *v;
      } else {
        rd.issue("suite.tail_fraction", "must be < 1");
      }
    }
    if (auto v = rd.positive(*sec, "suite", "tol_W")) cfg.suite.tol_W = *v;
    if (auto v = rd.positive(*sec, "suite", "tol_R")) cfg.suite.tol_R = *v;
    if (auto v = rd.positive(*sec, "suite", "tol_Wy")) cfg.suite.tol_Wy = *v;
  }

  if (j.contains("checks")) {
    const auto& c = j.at("checks");
    if (!c.is_array()) {
      rd.issue("checks", "expected an array of check names");
    } else {
      for (std::size_t i = 0; i < c.size(); ++i) {
        const std::string field = "checks[" + std::to_string(i) + "]";
        if (!c[i].is_string()) {
          rd.issue(field, "expected a string");
          continue;
        }
        const auto name = c[i].get<std::string>();
        const auto& known = check_names();
        if (std::find(known.begin(), known.end(), name) == known.end()) {
          rd.issue(field, "unknown check '" + name + "'");
        } else {
          cfg.checks.push_back(name);
        }
      }
    }
  }

  if (rd.object(j, "", "sweep", sec)) {
    rd.only_keys(*sec, "sweep", {"eps", "y_end", "t", "slope_tol", "max_fit_residual"});
    SweepSection sw;
    sw.eps = rd.numbers(*sec, "sweep", "eps");
    if (sw.eps.size() < 3) rd.issue("sweep.eps", "need at least three values");
    for (std::size_t i = 0; i < sw.eps.size(); ++i) {
      if (!(sw.eps[i] > 0.0)) rd.issue("sweep.eps[" + std::to_string(i) + "]", "must be > 0");
      if (i > 0 && !(sw.eps[i] < sw.eps[i - 1])) {
        rd.issue("sweep.eps[" + std::to_string(i) + "]", "values must strictly decrease");
      }
    }
    if (auto v = rd.positive(*sec, "sweep", "y_end")) sw.y_end = *v;
    if (auto v = rd.positive(*sec, "sweep", "t")) sw.t = *v;
    if (auto v = rd.positive(*sec, "sweep", "slope_tol")) sw.slope_tol = *v;
    if (auto v = rd.positive(*sec, "sweep", "max_fit_residual")) sw.max_fit_residual = *v;
    cfg.sweep = sw;
  }

  if (rd.object(j, "", "inviscid", sec)) {
    rd.only_keys(*sec, "inviscid",
                 {"start", "y_end", "rel_tol", "abs_tol", "locator_tol", "lp_tol", "approach_switch", "expect"});
    InviscidSection iv;
    const json* st = nullptr;
    if (rd.object(*sec, "inviscid", "start", st)) {
      rd.only_keys(*st, "inviscid.start", {"y", "W", "R"});
      const auto y = rd.positive(*st, "inviscid.start", "y", true);
      const auto W = rd.number(*st, "inviscid.start", "W", true);
      const auto R = rd.number(*st, "inviscid.start", "R", true);
      if (R && *R < 0.0) rd.issue("inviscid.start.R", "must be >= 0");
      if (y && W && R) iv.start = {*y, *W, *R};
    } else if (!sec->contains("start")) {
      rd.issue("inviscid.start", "required object missing");
    }
    if (auto v = rd.positive(*sec, "inviscid", "y_end")) iv.config.y_end = *v;
    if (auto v = rd.positive(*sec, "inviscid", "rel_tol")) iv.config.rel_tol = *v;
    if (auto v = rd.positive(*sec, "inviscid", "abs_tol")) iv.config.abs_tol = *v;
    if (auto v = rd.positive(*sec, "inviscid", "locator_tol")) iv.config.locator_tol = *v;
    if (auto v = rd.positive(*sec, "inviscid", "lp_tol")) iv.config.lp_tol = *v;
    if (auto v = rd.positive(*sec, "inviscid", "approach_switch")) iv.config.approach_switch = *v;
    if (auto e = rd.string(*sec, "inviscid", "expect")) {
      if (*e == to_string(SonicClass::LarsonPenstonCandidate)) {
        iv.expect = SonicClass::LarsonPenstonCandidate;
      } else if (*e == to_string(SonicClass::BlowUp)) {
        iv.expect = SonicClass::BlowUp;
      } else {
        rd.issue("inviscid.expect", "must be LarsonPenstonCandidate or BlowUp");
      }
    }
    if (iv.start.y > 0.0 && !(iv.config.y_end > iv.start.y)) rd.issue("inviscid.y_end", "must exceed start.y");
    cfg.inviscid = iv;
  }

  if (rd.object(j, "", "pde", sec)) {
    rd.only_keys(*sec, "pde", {"cells", "cfl", "tau_end", "y_min", "y_max", "core", "checkpoints", "deviation_factor"});
    PdeSection pd;
    if (auto v = rd.integer(*sec, "pde", "cells")) {
      if (*v >= 16) {
        pd.config.cells = static_cast<std::size_t>(*v);
      } else {
        rd.issue("pde.cells", "must be >= 16");
      }
    }
    if (auto v = rd.positive(*sec, "pde", "cfl")) {
      if (*v <= 0.9) {
        pd.config.cfl = *v;
      } else {
        rd.issue("pde.cfl", "must lie in (0, 0.9]");
      }
    }
    if (auto v = rd.number(*sec, "pde", "tau_end")) {
      if (*v >= 0.0) {
        pd.config.tau_end = *v;
      } else {
        rd.issue("pde.tau_end", "must be >= 0");
      }
    }
    if (auto v = rd.positive(*sec, "pde", "y_min")) pd.config.y_min = *v;
    if (auto v = rd.positive(*sec, "pde", "y_max")) pd.config.y_max = *v;
    if (auto v = rd.number(*sec, "pde", "core")) pd.config.core = *v;
    pd.checkpoints = rd.numbers(*sec, "pde", "checkpoints");
    if (auto v = rd.positive(*sec, "pde", "deviation_factor")) pd.deviation_factor = *v;
    if (pd.config.y_min && pd.config.y_max && !(*pd.config.y_max > *pd.config.y_min)) {
      rd.issue("pde.y_max", "must exceed pde.y_min");
    }
    cfg.pde = pd;
  }

  if (auto v = rd.string(j, "", "output_dir")) cfg.output_dir = *v;
  if (auto v = rd.string(j, "", "title")) cfg.title = *v;

  // Cross-field requirements.
  const bool have_trace_start = j.contains("init") || j.contains("start");
  if (cfg.needs_trace() && !have_trace_start) rd.issue("init", "mode needs init or start");
  if ((cfg.mode == Mode::ShadowSweep) && !cfg.sweep) rd.issue("sweep", "shadow-sweep mode needs a sweep section");
  if (cfg.sweep && !j.contains("init")) rd.issue("init", "a sweep needs physical init data");
  if (cfg.mode == Mode::Inviscid && !cfg.inviscid) rd.issue("inviscid", "inviscid mode needs an inviscid section");
  if (cfg.mode == Mode::Pde && !cfg.pde) cfg.pde = PdeSection{};
  if (cfg.start || cfg.init) {
    const double y0 = cfg.start ? cfg.start->y : cfg.init->eps;
    if (!(cfg.integrator.y_end > y0)) rd.issue("integrator.y_end", "must exceed the start coordinate");
  }

  if (!rd.issues.empty()) throw ConfigInvalid(std::move(rd.issues));
  return cfg;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("", std::string("JSON parse error: ") + e.what());
  }
  return parse_config(j);
}

struct RunOptions {
  std::optional<unsigned> jobs;
  std::optional<std::string> output;
  std::optional<double> y_end;
  bool plots = true;
};

struct RunResult {
  int exit_code = kPass;
  std::vector<CheckReport> checks;
  std::vector<std::string> breakdowns;
  fs::path output_dir;
};

/// W = -1 and R = 2/y^2 to near machine precision (A = 1 exact solution).
inline CheckReport check_exact_solution(const SolutionTrace& trace, double tol_W = 1e-8, double tol_R = 1e-6) {
  CheckReport rep;
  rep.name = "exact_solution";
  double worst_W = 0.0, worst_R = 0.0;
  for (const auto& s : trace.samples) {
    const double eW = std::abs(s.W + 1.0);
    const double exact = 2.0 / (s.y * s.y);
    const double eR = std::abs(s.R - exact) / exact;
    worst_W = std::max(worst_W, eW);
    worst_R = std::max(worst_R, eR);
    const double m = std::min(tol_W - eW, tol_R - eR);
    rep.margin_min = rep.margin_min ? std::min(*rep.margin_min, m) : m;
    if (!(m > 0.0) && !rep.first_violation) rep.first_violation = Violation{s, m};
  }
  rep.passed = !rep.first_violation.has_value();
  char buf[128];
  std::snprintf(buf, sizeof buf, "max|W+1|=%.3g, max rel|R-2/y^2|=%.3g", worst_W, worst_R);
  rep.note = buf;
  return rep;
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + p.string());
}

template <class Fn>
void write_with(const fs::path& p, Fn&& fn) {
  std::ostringstream os;
  fn(os);
  write_text(p, os.str());
}

inline CheckReport slope_check(const std::string& name, const std::optional<ScalingFit>& fit, double expected,
                               double tol, double max_residual) {
  CheckReport rep;
  rep.name = name;
  if (!fit) {
    rep.passed = false;
    rep.note = "no fit (fewer than three completed sweep members)";
    return rep;
  }
  const double m = std::min(tol - std::abs(fit->slope - expected), max_residual - fit->fit_residual);
  rep.margin_min = m;
  rep.passed = m >= 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "slope=%.6f expected=%.1f+-%.2f fit_residual=%.3g", fit->slope, expected, tol,
                fit->fit_residual);
  rep.note = buf;
  return rep;
}

inline std::string eps_dir_name(std::size_t index, double eps) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "eps_%02zu_%.3g", index, eps);
  return buf;
}

inline std::string tau_file_name(double tau) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "field_tau_%.4f.csv", tau);
  return buf;
}

inline std::vector<CheckReport> selected_checks(const SolutionTrace& trace, const RunConfig& cfg) {
  std::vector<std::string> wanted = cfg.checks;
  if (wanted.empty()) {
    if (cfg.mode == Mode::Selfsim || cfg.mode == Mode::Pde) return {};
    wanted.assign(check_names().begin(), check_names().end() - 1);  // the suite
  }
  std::vector<CheckReport> out;
  const bool any_suite = std::any_of(wanted.begin(), wanted.end(), [](const auto& n) { return n != "exact_solution"; });
  if (any_suite) {
    for (auto& r : run_suite(trace, cfg.suite)) {
      if (std::find(wanted.begin(), wanted.end(), r.name) != wanted.end()) out.push_back(std::move(r));
    }
  }
  if (std::find(wanted.begin(), wanted.end(), "exact_solution") != wanted.end()) {
    out.push_back(check_exact_solution(trace));
  }
  return out;
}

}  // namespace detail

/// Executes a validated config. Artifacts go to the output directory; the exit code follows the
/// contract 0 pass, 2 check failure, 3 integration breakdown.
inline RunResult execute(RunConfig cfg, const RunOptions& opt, std::ostream& log) {
  RunResult res;
  if (opt.y_end) cfg.integrator.y_end = *opt.y_end;
  res.output_dir = opt.output ? fs::path(*opt.output) : fs::path(cfg.output_dir);
  fs::create_directories(res.output_dir);
  const auto& dir = res.output_dir;
  const std::string title = cfg.title.empty() ? std::string("collapsar ") + std::string(to_string(cfg.mode))
                                              : cfg.title;

  std::optional<SolutionTrace> trace;
  if (cfg.needs_trace()) {
    if (cfg.start || cfg.init) {
      const double y0 = cfg.start_state().y;
      if (!(cfg.integrator.y_end > y0)) {
        throw ConfigInvalid("--y-end", "must exceed the start coordinate " + io::fmt17(y0));
      }
    }
    trace = integrate(cfg.start_state(), cfg.pressure, cfg.integrator);
    detail::write_with(dir / "trace.csv", [&](std::ostream& os) { io::write_trace_csv(os, *trace); });
    detail::write_text(dir / "events.json", io::events_json(*trace).dump(2) + "\n");
    if (opt.plots) {
      detail::write_with(dir / "plot.svg", [&](std::ostream& os) { io::write_profile_svg(os, *trace, title); });
    }
    log << "trace: " << trace->size() << " samples on [" << io::fmt17(trace->y_begin()) << ", "
        << io::fmt17(trace->y_end()) << "], termination " << to_string(trace->termination) << "\n";
    if (trace->termination != Termination::ReachedEnd) {
      res.breakdowns.push_back("integration stopped early: " + std::string(to_string(trace->termination)) +
                               " at y=" + io::fmt17(trace->y_end()));
    }
    auto reports = detail::selected_checks(*trace, cfg);
    res.checks.insert(res.checks.end(), reports.begin(), reports.end());
  }

  const bool run_sweep = cfg.sweep && (cfg.mode == Mode::ShadowSweep || cfg.mode == Mode::All);
  if (run_sweep) {
    SweepOptions so;
    so.t = cfg.sweep->t;
    so.y_end = cfg.sweep->y_end;
    so.integrator = cfg.integrator;
    so.jobs = opt.jobs.value_or(1);
    so.keep_traces = true;
    const auto sweep = admissibility_scaling(*cfg.init, cfg.sweep->eps, cfg.pressure, so);
    detail::write_with(dir / "scaling.csv", [&](std::ostream& os) { io::write_sweep_csv(os, sweep); });
    json sj;
    sj["aborted"] = sweep.aborted;
    if (sweep.u1) sj["u1"] = io::to_json(*sweep.u1);
    if (sweep.rho1) sj["rho1"] = io::to_json(*sweep.rho1);
    if (sweep.mass) sj["mass_residual"] = io::to_json(*sweep.mass);
    if (sweep.momentum) sj["momentum_residual"] = io::to_json(*sweep.momentum);
    detail::write_text(dir / "scaling.json", sj.dump(2) + "\n");
    for (std::size_t i = 0; i < sweep.traces.size(); ++i) {
      const auto sub = dir / "sweep" / detail::eps_dir_name(i, cfg.sweep->eps[i]);
      fs::create_directories(sub);
      detail::write_with(sub / "trace.csv", [&](std::ostream& os) { io::write_trace_csv(os, sweep.traces[i]); });
      detail::write_text(sub / "events.json", io::events_json(sweep.traces[i]).dump(2) + "\n");
    }
    log << "sweep: " << sweep.points.size() << " of " << cfg.sweep->eps.size() << " members completed\n";
    if (sweep.aborted) res.breakdowns.push_back("a sweep member did not reach its y_end");
    const double tol = cfg.sweep->slope_tol, fr = cfg.sweep->max_fit_residual;
    res.checks.push_back(detail::slope_check("scaling_mass_residual", sweep.mass, 2.0, tol, fr));
    res.checks.push_back(detail::slope_check("scaling_momentum_residual", sweep.momentum, 1.0, tol, fr));
    res.checks.push_back(detail::slope_check("scaling_u1", sweep.u1, 1.0, tol, fr));
    res.checks.push_back(detail::slope_check("scaling_rho1", sweep.rho1, -1.0, tol, fr));
  }

  const bool run_inviscid = cfg.inviscid && (cfg.mode == Mode::Inviscid || cfg.mode == Mode::All);
  if (run_inviscid) {
    const auto r = integrate_inviscid(cfg.inviscid->start, cfg.pressure, cfg.inviscid->config);
    detail::write_with(dir / "inviscid_trace.csv", [&](std::ostream& os) { io::write_inviscid_csv(os, r.trace); });
    json sj;
    sj["termination"] = std::string(to_string(r.trace.termination));
    sj["sonic"] = r.sonic ? io::to_json(*r.sonic) : json(nullptr);
    detail::write_text(dir / "sonic.json", sj.dump(2) + "\n");
    if (!r.sonic && r.trace.termination != Termination::ReachedEnd) {
      res.breakdowns.push_back("inviscid integration stopped early: " +
                               std::string(to_string(r.trace.termination)));
    }
    CheckReport loc;
    loc.name = "sonic_located";
    if (r.sonic) {
      loc.margin_min = cfg.inviscid->config.locator_tol - r.sonic->sonic_residual;
      loc.passed = *loc.margin_min >= 0.0;
      loc.located_y = r.sonic->y_bar;
      loc.note = "classification " + std::string(to_string(r.sonic->classification));
    } else {
      loc.applicable = false;
      loc.note = "skipped: no sonic point before y_end";
    }
    res.checks.push_back(loc);
    if (cfg.inviscid->expect) {
      CheckReport cls;
      cls.name = "sonic_classification";
      cls.passed = r.sonic && r.sonic->classification == *cfg.inviscid->expect;
      cls.note = "expected " + std::string(to_string(*cfg.inviscid->expect)) + ", got " +
                 (r.sonic ? std::string(to_string(r.sonic->classification)) : std::string("no sonic point"));
      res.checks.push_back(cls);
    }
  }

  const bool run_pde = cfg.pde && (cfg.mode == Mode::Pde || cfg.mode == Mode::All);
  if (run_pde && trace && trace->termination == Termination::ReachedEnd) {
    const auto pde_dir = dir / "pde";
    fs::create_directories(pde_dir);
    std::vector<io::DeviationRow> rows;
    try {
      const auto probe = stationarity_probe(*trace, cfg.pde->config, cfg.pde->checkpoints, [&](const RadialField& f) {
        rows.push_back({f.tau, deviation(f, *trace)});
        detail::write_with(pde_dir / detail::tau_file_name(f.tau), [&](std::ostream& os) { io::write_field_csv(os, f); });
      });
      detail::write_with(dir / "pde_deviation.csv", [&](std::ostream& os) { io::write_deviation_csv(os, rows); });
      CheckReport st;
      st.name = "pde_stationarity";
      st.margin_min = cfg.pde->deviation_factor - probe.ratio;
      st.passed = *st.margin_min >= 0.0;
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "final L2=%.6g, reference=%.6g (interpolation %.6g, discretization %.6g), ratio=%.4g, "
                    "distance to discrete steady state=%.3g, steps=%zu",
                    probe.final.l2, probe.reference, probe.interpolation.l2,
                    probe.discretization ? probe.discretization->l2 : NAN, probe.ratio, probe.distance_to_steady,
                    probe.steps);
      st.note = buf;
      res.checks.push_back(st);
      CheckReport cl;
      cl.name = "pde_no_clipping";
      cl.passed = probe.clip_count == 0;
      cl.note = "clipped nodes: " + std::to_string(probe.clip_count);
      res.checks.push_back(cl);
      log << "pde: " << st.note << "\n";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite && e.code() != ErrorCode::CflViolation) throw;
      res.breakdowns.push_back(std::string("pde evolution failed: ") + e.what());
    }
  }

  json cj;
  cj["passed"] = all_passed(res.checks);
  cj["checks"] = io::to_json(res.checks);
  detail::write_text(dir / "checks.json", cj.dump(2) + "\n");
  for (const auto& c : res.checks) {
    log << (c.passed ? (c.applicable ? "PASS " : "SKIP ") : "FAIL ") << c.name;
    if (!c.note.empty()) log << "  (" << c.note << ")";
    log << "\n";
  }

  if (!res.breakdowns.empty()) {
    res.exit_code = kBreakdown;
  } else if (!all_passed(res.checks)) {
    res.exit_code = kCheckFailure;
  }
  json diag;
  diag["exit_code"] = res.exit_code;
  diag["status"] = res.exit_code == kPass ? "pass" : (res.exit_code == kBreakdown ? "breakdown" : "check_failure");
  diag["errors"] = res.breakdowns;
  detail::write_text(dir / "diagnostics.json", diag.dump(2) + "\n");
  return res;
}

inline json config_error_json(const ConfigInvalid& e) {
  json d;
  d["exit_code"] = static_cast<int>(kConfigError);
  d["status"] = "config_error";
  d["errors"] = json::array();
  for (const auto& i : e.issues()) d["errors"].push_back({{"field", i.field}, {"message", i.message}});
  return d;
}

/// `collapsar run`: loads, validates and executes a config. Config problems give exit 4 and a JSON
/// diagnostic on err (and in the output directory when one is known).
inline int run(const fs::path& config_path, const RunOptions& opt, std::ostream& log, std::ostream& err) {
  try {
    auto cfg = load_config(config_path);
    return execute(std::move(cfg), opt, log).exit_code;
  } catch (const ConfigInvalid& e) {
    const auto d = config_error_json(e);
    err << d.dump(2) << "\n";
    if (opt.output) {
      std::error_code ec;
      fs::create_directories(*opt.output, ec);
      if (!ec) {
        std::ofstream(fs::path(*opt.output) / "diagnostics.json") << d.dump(2) << "\n";
      }
    }
    return kConfigError;
  } catch (const Error& e) {
    json d{{"exit_code", static_cast<int>(kBreakdown)}, {"status", "breakdown"},
           {"errors", json::array({{{"code", std::string(to_string(e.code()))}, {"message", e.what()}}})}};
    err << d.dump(2) << "\n";
    return kBreakdown;
  }
}

// ---- golden regression ----

struct RegressionEntry {
  std::string name;
  bool matched = true;
  std::vector<std::string> mismatches;
};

struct RegressionReport {
  std::vector<RegressionEntry> entries;
  bool all_matched() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.matched; });
  }
};

inline json regression_json(const RegressionReport& r) {
  json j;
  j["matched"] = r.all_matched();
  j["entries"] = json::array();
  for (const auto& e : r.entries) j["entries"].push_back({{"name", e.name}, {"matched", e.matched}, {"mismatches", e.mismatches}});
  return j;
}

/// What a corpus entry records: termination, events in order and the suite's pass/fail verdicts.
template <class Rhs>
json golden_observation(const RunConfig& cfg, Rhs&& system) {
  const auto trace = integrate(cfg.start_state(), cfg.pressure, cfg.integrator, system);
  json obs;
  obs["termination"] = std::string(to_string(trace.termination));
  obs["events"] = json::array();
  for (const auto& e : trace.events) obs["events"].push_back({{"kind", std::string(to_string(e.kind))}, {"y", e.y_star}});
  obs["checks"] = json::object();
  for (const auto& r : run_suite(trace, cfg.suite)) obs["checks"][r.name] = r.passed;
  obs["W_start"] = trace.front().W;
  return obs;
}

namespace detail {

inline std::vector<fs::path> corpus_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigInvalid("corpus", "corpus directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigInvalid("corpus", "no .json entries in " + dir.string());
  return files;
}

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(p.filename().string(), std::string("JSON parse error: ") + e.what());
  }
}

inline std::vector<std::string> compare_observation(const json& expected, const json& got, double rel_tol) {
  std::vector<std::string> out;
  if (expected.at("termination") != got.at("termination")) {
    out.push_back("termination: expected " + expected.at("termination").get<std::string>() + ", got " +
                  got.at("termination").get<std::string>());
  }
  const auto& ee = expected.at("events");
  const auto& ge = got.at("events");
  if (ee.size() != ge.size()) {
    out.push_back("event count: expected " + std::to_string(ee.size()) + ", got " + std::to_string(ge.size()));
  }
  for (std::size_t i = 0; i < std::min(ee.size(), ge.size()); ++i) {
    const auto ek = ee[i].at("kind").get<std::string>(), gk = ge[i].at("kind").get<std::string>();
    const double ey = ee[i].at("y").get<double>(), gy = ge[i].at("y").get<double>();
    if (ek != gk) {
      out.push_back("event " + std::to_string(i) + ": expected " + ek + ", got " + gk);
    } else if (std::abs(ey - gy) > rel_tol * std::abs(ey)) {
      out.push_back("event " + std::to_string(i) + " (" + ek + "): expected y=" + io::fmt17(ey) +
                    ", got y=" + io::fmt17(gy));
    }
  }
  for (const auto& [name, passed] : expected.at("checks").items()) {
    if (!got.at("checks").contains(name)) {
      out.push_back("check " + name + ": missing");
    } else if (got.at("checks").at(name) != passed) {
      out.push_back("check " + name + ": expected " + (passed.get<bool>() ? "pass" : "fail") + ", got " +
                    (got.at("checks").at(name).get<bool>() ? "pass" : "fail"));
    }
  }
  return out;
}

}  // namespace detail

/// Re-runs every corpus entry ({config, expected, rel_tol?}) with the given right-hand side and
/// compares against the stored expectations.
template <class Rhs>
RegressionReport golden_regression(const fs::path& corpus_dir, Rhs&& system) {
  RegressionReport rep;
  for (const auto& file : detail::corpus_files(corpus_dir)) {
    const auto entry = detail::read_json(file);
    RegressionEntry re;
    re.name = file.stem().string();
    if (!entry.contains("config") || !entry.contains("expected")) {
      throw ConfigInvalid(file.filename().string(), "entry needs config and expected");
    }
    const auto cfg = parse_config(entry.at("config"));
    const double rel_tol = entry.value("rel_tol", 1e-6);
    const auto got = golden_observation(cfg, system);
    re.mismatches = detail::compare_observation(entry.at("expected"), got, rel_tol);
    re.matched = re.mismatches.empty();
    rep.entries.push_back(std::move(re));
  }
  return rep;
}

inline RegressionReport golden_regression(const fs::path& corpus_dir) {
  return golden_regression(corpus_dir, SimilarityRhs{});
}

/// Rewrites the expected block of every entry from a fresh run.
inline void bless_corpus(const fs::path& corpus_dir) {
  for (const auto& file : detail::corpus_files(corpus_dir)) {
    auto entry = detail::read_json(file);
    const auto cfg = parse_config(entry.at("config"));
    entry["expected"] = golden_observation(cfg, SimilarityRhs{});
    detail::write_text(file, entry.dump(2) + "\n");
  }
}

/// `collapsar regress`: exit 0 when every entry matches, 2 on mismatch, 4 for a bad corpus.
template <class Rhs>
int regress(const fs::path& corpus_dir, Rhs&& system, std::ostream& log, std::ostream& err) {
  try {
    const auto rep = golden_regression(corpus_dir, system);
    log << regression_json(rep).dump(2) << "\n";
    return rep.all_matched() ? kPass : kCheckFailure;
  } catch (const ConfigInvalid& e) {
    err << config_error_json(e).dump(2) << "\n";
    return kConfigError;
  }
}

inline int regress(const fs::path& corpus_dir, std::ostream& log, std::ostream& err) {
  return regress(corpus_dir, SimilarityRhs{}, log, err);
}

}  // namespace collapsar::app
