#pragma once

#include "melnikov/config.hpp"
#include "melnikov/melnikov.hpp"
#include "melnikov/models.hpp"
#include "melnikov/splitting.hpp"
#include "melnikov/zerofind.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace melnikov::cli {

enum Exit : int { ok = 0, usage = 1, unconverged = 2 };

using Json = nlohmann::ordered_json;

/// A rectangular result: CSV columns plus the JSON view of the same rows.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // numbers already formatted
  Json records = Json::array();
};

struct Output {
  int status = Exit::ok;
  Json meta = Json::object();
  Table table;
  Json certificates = Json::array();
  std::string error;  // set with status = usage
};

inline const std::map<std::string, std::vector<std::string>>& model_parameters() {
  static const std::map<std::string, std::vector<std::string>> p{
      {"duffing-oscillator", {"alpha", "g0"}},
      {"holmes-marsden", {"I0", "q_c", "a2", "a3", "delta"}},
      {"rtbp-mcgehee", {"rho0", "T"}},
  };
  return p;
}

/// Validates names and ranges, then builds the model.
inline Model build_model(const ModelConfig& mc) {
  const auto& known = model_parameters();
  const auto it = known.find(mc.id);
  if (it == known.end()) fail(ErrorKind::invalid_argument, "unknown model id: '" + mc.id + "'");
  for (const auto& [k, v] : mc.params) {
    if (std::find(it->second.begin(), it->second.end(), k) == it->second.end()) {
      fail(ErrorKind::invalid_argument, mc.id + ": unknown parameter " + k);
    }
    if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, mc.id + ": parameter " + k + " is not finite");
  }
  auto positive = [&](const std::string& k) {
    if (auto p = mc.params.find(k); p != mc.params.end() && !(p->second > 0.0)) {
      fail(ErrorKind::invalid_argument, mc.id + ": " + k + " must be positive");
    }
  };
  for (const char* k : {"alpha", "g0", "rho0", "T", "delta"}) positive(k);
  if (auto p = mc.params.find("I0"); p != mc.params.end() && p->second < 0.0) {
    fail(ErrorKind::invalid_argument, "holmes-marsden: I0 must be nonnegative");
  }
  Model m = make_model(mc.id, mc.params);
  if (mc.h0 && std::abs(*mc.h0 - m.h0) > 1e-9 * std::max(1.0, std::abs(m.h0))) {
    fail(ErrorKind::invalid_argument, mc.id + ": model.h0 = " + format_number(*mc.h0) +
                                          " does not match the energy of the loop, " + format_number(m.h0));
  }
  return m;
}

namespace detail {

inline std::string class_name(const MelnikovEvaluation& ev) { return to_string(ev.convergence.kind); }

inline void add_row(Table& t, const std::vector<std::pair<std::string, double>>& num,
                    const std::vector<std::pair<std::string, std::string>>& text = {},
                    std::size_t text_at = std::string::npos) {
  std::vector<std::string> row;
  Json rec = Json::object();
  std::size_t i = 0;
  auto put_text = [&] {
    for (const auto& [k, v] : text) {
      row.push_back(v);
      rec[k] = v;
    }
  };
  for (const auto& [k, v] : num) {
    if (i++ == text_at) put_text();
    row.push_back(format_number(v));
    rec[k] = std::isfinite(v) ? Json(v) : Json(format_number(v));
  }
  if (text_at >= num.size()) put_text();
  t.rows.push_back(std::move(row));
  t.records.push_back(std::move(rec));
}

inline Table scan_table(const ScanResult& sc) {
  Table t;
  t.header = {"phase", "M", "err", "class", "T", "Tstar"};
  for (std::size_t k = 0; k < sc.phases.size(); ++k) {
    const auto& ev = sc.values[k];
    add_row(t, {{"phase", sc.phases[k]}, {"M", ev.value}, {"err", ev.error}, {"T", ev.T}, {"Tstar", ev.Tstar}},
            {{"class", sc.usable(k) ? class_name(ev) : std::string("failed")}}, 3);
  }
  return t;
}

inline Json scan_meta(const ScanResult& sc) {
  Json j;
  j["converged"] = sc.converged;
  j["max_abs_M"] = sc.max_abs();
  j["failures"] = sc.failures;
  return j;
}

/// Uniform phase in [0, 2 pi) from the top 53 bits, stable across platforms.
inline double seeded_phase(std::mt19937_64& rng) {
  return kTwoPi * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Json trace_json(const std::vector<std::pair<int, double>>& p) {
  Json a = Json::array();
  for (const auto& [j, v] : p) a.push_back({{"j", j}, {"value", v}});
  return a;
}

}  // namespace detail

inline Output cmd_scan(const RunConfig& c, const Model& m, bool zeros) {
  Output o;
  const ScanResult sc = scan(m, c.N, c.tol);
  o.table = detail::scan_table(sc);
  o.meta["scan"] = detail::scan_meta(sc);
  if (!sc.converged) o.status = Exit::unconverged;
  if (zeros) {
    const ZeroSearch zs = find_zeros(sc, m, c.tol);
    for (const auto& z : zs.certificates) {
      o.certificates.push_back({{"phase", z.phase},
                                {"residual", z.residual},
                                {"derivative", z.derivative},
                                {"margin", z.margin},
                                {"method", to_string(z.method)},
                                {"bracket", {z.bracket_lo, z.bracket_hi}}});
    }
    o.meta["notes"] = zs.notes;
    const MarginSummary ms = margin_report(zs.certificates, sc);
    if (!zs.certificates.empty()) {
      o.meta["min_margin"] = ms.min_margin;
      o.meta["min_abs_M_away_from_zeros"] = ms.min_abs_away;
    }
  }
  return o;
}

/// Analytic M' against central differences of M at grid and seeded phases.
inline Output cmd_derivative(const RunConfig& c, const Model& m) {
  Output o;
  o.table.header = {"phase", "dM", "err", "fd", "rel"};
  std::vector<double> phases;
  for (int k = 0; k < c.N; ++k) phases.push_back(kTwoPi * k / c.N);
  std::mt19937_64 rng(c.seed);
  for (int k = 0; k < c.checks; ++k) phases.push_back(detail::seeded_phase(rng));
  const double h = 1e-4;
  double worst = 0.0;
  for (double ph : phases) {
    const MelnikovEvaluation d = melnikov_derivative(m.family, m.sys, ph, c.tol);
    const MelnikovEvaluation mp = melnikov_autonomous(m.family(ph + h), m.sys, {}, c.tol);
    const MelnikovEvaluation mm = melnikov_autonomous(m.family(ph - h), m.sys, {}, c.tol);
    const double fd = (mp.value - mm.value) / (2.0 * h);
    const double rel = std::abs(d.value - fd) / std::max(std::abs(d.value), 1e-300);
    if (std::abs(d.value) > 1e-3) worst = std::max(worst, rel);
    if (!d.converged || !mp.converged || !mm.converged) o.status = Exit::unconverged;
    detail::add_row(o.table, {{"phase", ph}, {"dM", d.value}, {"err", d.error}, {"fd", fd}, {"rel", rel}});
  }
  o.meta["max_rel_where_abs_dM_gt_1e-3"] = worst;
  o.meta["fd_step"] = h;
  return o;
}

inline Output cmd_splitting(const RunConfig& c, const Model& m) {
  Output o;
  const SplittingReport r = measure_splitting(m, c.phase, c.eps);
  o.table.header = {"eps", "dF_over_eps", "M", "diff", "energy_residual"};
  for (std::size_t i = 0; i < r.eps.size(); ++i) {
    detail::add_row(o.table, {{"eps", r.eps[i]},
                              {"dF_over_eps", r.delta_f_over_eps[i]},
                              {"M", r.prediction},
                              {"diff", r.delta_f_over_eps[i] - r.prediction},
                              {"energy_residual", r.energy_residuals[i]}});
  }
  o.meta["phase"] = r.phase;
  o.meta["prediction"] = r.prediction;
  o.meta["prediction_error"] = r.prediction_error;
  o.meta["order"] = std::isfinite(r.order) ? Json(r.order) : Json(format_number(r.order));
  return o;
}

/// Partial-integral traces, conservation drifts and the tail audit.
inline Output cmd_diagnostics(const RunConfig& c, const Model& m) {
  Output o;
  o.table.header = {"section", "key", "index", "value"};
  auto row = [&](const std::string& sec, const std::string& key, double idx, double v) {
    detail::add_row(o.table, {{"index", idx}, {"value", v}}, {{"section", sec}, {"key", key}}, 0);
  };
  const HomoclinicOrbit orbit = m.family(c.phase);
  const ConvergenceClass cls = classify_convergence(orbit, m.sys);
  o.meta["class"] = to_string(cls.kind);
  o.meta["reason"] = to_string(cls.reason);
  const double dh = orbit_drift(orbit, m.sys.H0), dfv = orbit_drift(orbit, m.sys.F);
  o.meta["drift_H0"] = dh;
  o.meta["drift_F"] = dfv;
  row("drift", "H0", 0, dh);
  row("drift", "F", 0, dfv);

  if (orbit.decay.kind == DecayKind::exponential && orbit.omega > 0.0) {
    TruncationPolicy pol;
    pol.mode = TruncationMode::matched;
    pol.j_min = 1;
    pol.j_max = 15;
    pol.stop_early = false;
    const bool accel = orbit.limit.circle_coords.size() == 1;
    const auto matched = partial_integrals(orbit, m.sys, pol, c.tol, accel);
    pol.mismatched = true;
    const auto other = partial_integrals(orbit, m.sys, pol, c.tol, accel);
    const std::string other_name = cls.absolute() ? "plain" : "mismatched";
    for (const auto& [j, v] : matched) row("trace", "matched", j, v);
    for (const auto& [j, v] : other) row("trace", other_name, j, v);
    const double sm = spread_of(matched, 4), so = spread_of(other, 4);
    o.meta["spread_matched_j5_15"] = sm;
    o.meta["spread_" + other_name + "_j5_15"] = so;
    o.meta["trace_gap"] = std::abs(matched.back().second - other.back().second);
    o.meta["traces"] = {{"matched", detail::trace_json(matched)}, {other_name, detail::trace_json(other)}};
  }
  const MelnikovEvaluation ev = melnikov_autonomous(orbit, m.sys, {}, c.tol);
  o.meta["M"] = ev.value;
  o.meta["err"] = ev.error;
  o.meta["tail"] = {{"upper_T", ev.upper_tail.T},
                    {"upper_bound", ev.upper_tail.bound},
                    {"upper_correction", ev.upper_tail.correction},
                    {"lower_T", ev.lower_tail.T},
                    {"lower_bound", ev.lower_tail.bound},
                    {"lower_correction", ev.lower_tail.correction},
                    {"bound_total", ev.tail_bound},
                    {"half_tol", 0.5 * c.tol}};
  row("tail", "upper_bound", ev.upper_tail.T, ev.upper_tail.bound);
  row("tail", "lower_bound", ev.lower_tail.T, ev.lower_tail.bound);
  row("tail", "bound_total", 0, ev.tail_bound);
  if (!ev.converged) o.status = Exit::unconverged;
  return o;
}

inline std::string render_csv(const Output& o) {
  std::ostringstream s;
  for (std::size_t i = 0; i < o.table.header.size(); ++i) s << (i ? "," : "") << o.table.header[i];
  s << '\n';
  for (const auto& r : o.table.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s << (i ? "," : "") << r[i];
    s << '\n';
  }
  return s.str();
}

inline std::string render_json(const Output& o) {
  Json j;
  j["meta"] = o.meta;
  j["records"] = o.table.records;
  j["certificates"] = o.certificates;
  return j.dump(2) + "\n";
}

/// Validates the config and executes its command. Nothing is written here.
inline Output execute(const RunConfig& c) {
  Output o;
  try {
    if (!known_commands().count(c.command)) fail(ErrorKind::invalid_argument, "unknown command: '" + c.command + "'");
    if (c.format != "csv" && c.format != "json") fail(ErrorKind::invalid_argument, "format must be csv or json");
    if ((c.command == "scan" || c.command == "zeros") && c.N < 8) fail(ErrorKind::invalid_argument, "run.N must be at least 8");
    if (c.command == "derivative" && c.N < 0) fail(ErrorKind::invalid_argument, "run.N must be nonnegative");
    if (c.checks < 0) fail(ErrorKind::invalid_argument, "run.checks must be nonnegative");
    if (!(c.tol > 0.0)) fail(ErrorKind::invalid_argument, "run.tol must be positive");
    const Model m = build_model(c.model);
    try {
      if (c.command == "scan") o = cmd_scan(c, m, false);
      if (c.command == "zeros") o = cmd_scan(c, m, true);
      if (c.command == "derivative") o = cmd_derivative(c, m);
      if (c.command == "verify-splitting") o = cmd_splitting(c, m);
      if (c.command == "diagnostics") o = cmd_diagnostics(c, m);
    } catch (const Error& e) {
      // Refusals are usage errors; numerical failures count as unconverged.
      const bool refusal = e.kind() == ErrorKind::invalid_argument || e.kind() == ErrorKind::rejected;
      o = Output{};
      o.status = refusal ? Exit::usage : Exit::unconverged;
      o.error = e.what();
      if (refusal) return o;
    }
  } catch (const std::exception& e) {
    o = Output{};
    o.status = Exit::usage;
    o.error = e.what();
    return o;
  }
  Json meta = Json::object();
  meta["command"] = c.command;
  meta["model"] = c.model.id;
  meta["params"] = c.model.params;
  meta["N"] = c.N;
  meta["tol"] = c.tol;
  meta["seed"] = c.seed;
  meta["status"] = o.status;
  if (!o.error.empty()) meta["error"] = o.error;
  for (auto& [k, v] : o.meta.items()) meta[k] = v;
  o.meta = std::move(meta);
  return o;
}

/// Executes and writes the artifact; returns the exit status.
inline int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Output o = execute(c);
  if (o.status == Exit::usage) {
    err << "error: " << o.error << '\n';
    return o.status;
  }
  if (!o.error.empty()) err << "warning: " << o.error << '\n';
  const std::string text = c.format == "json" ? render_json(o) : render_csv(o);
  if (c.out.empty()) {
    out << text;
  } else {
    std::ofstream f(c.out, std::ios::binary);
    if (!f) {
      err << "error: cannot write " << c.out << '\n';
      return Exit::usage;
    }
    f << text;
    if (!f) {
      err << "error: write failed for " << c.out << '\n';
      return Exit::usage;
    }
  }
  return o.status;
}

/// `melnikov <command> --config <path> [--out <path>] [--format csv|json]`
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Melnikov function scans, zero certificates and splitting checks"};
  std::string command, config_path, out_path, format;
  app.add_option("command", command, "scan | zeros | derivative | verify-splitting | diagnostics")->required();
  app.add_option("--config", config_path, "flat key = value config file")->required();
  app.add_option("--out", out_path, "output file (default: standard output)");
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return Exit::ok;
    }
    err << "error: " << e.what() << '\n' << app.help();
    return Exit::usage;
  }
  RunConfig c;
  try {
    std::ifstream f(config_path);
    if (!f) fail(ErrorKind::invalid_argument, "cannot read config " + config_path);
    std::stringstream buf;
    buf << f.rdbuf();
    c = parse_config(buf.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return Exit::usage;
  }
  if (!c.command.empty() && c.command != command) {
    err << "error: config says run.command = " << c.command << " but the command line says " << command << '\n';
    return Exit::usage;
  }
  c.command = command;
  if (!out_path.empty()) c.out = out_path;
  if (!format.empty()) c.format = format;
  return run(c, out, err);
}

}  // namespace melnikov::cli
