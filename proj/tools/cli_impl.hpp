#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cica/cica.hpp"

namespace cica::cli {

using nlohmann::json;

// exit codes: 0 ok, 2 format, 3 dimension, 4 fingerprint, 5 non-convergence
struct nonconvergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOpts {
  std::uint64_t seed = 1;
  int threads = 0;
  bool strict = false;
  std::string format = "csv";
};

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_csv(const std::string& path) { return read_data_csv(path); }

inline void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw format_error("cannot open for writing: " + path);
  f << text;
}

inline std::vector<int> parse_int_list(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw CLI::ValidationError("empty integer list: " + spec);
  return out;
}

/// "a:b" inclusive range or "a:b:step"
inline std::vector<int> parse_range(const std::string& spec) {
  std::vector<int> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(std::stoi(tok));
  if (parts.size() < 2 || parts.size() > 3)
    throw CLI::ValidationError("expected a:b or a:b:step, got " + spec);
  const int step = parts.size() == 3 ? parts[2] : 1;
  if (step <= 0) throw CLI::ValidationError("range step must be positive");
  std::vector<int> out;
  for (int v = parts[0]; v <= parts[1]; v += step) out.push_back(v);
  if (out.empty()) throw CLI::ValidationError("empty range: " + spec);
  return out;
}

inline SketchKind parse_kind(const std::string& s) {
  if (s == "gaussian") return SketchKind::gaussian;
  if (s == "srht") return SketchKind::srht;
  throw CLI::ValidationError("unknown operator kind: " + s);
}

inline SketchMode parse_mode(const std::string& s) {
  if (s == "whitened") return SketchMode::whitened;
  if (s == "unwhitened") return SketchMode::unwhitened;
  throw CLI::ValidationError("unknown sketch mode: " + s);
}

// ---------------------------------------------------------------------------
// sketch

inline int cmd_sketch(const GlobalOpts& g, const std::string& input, const std::string& mode_s,
                      const std::string& kind_s, int m, const std::string& out) {
  const Matrix data = read_data_auto(input);
  const int n = int(data.cols());
  const SketchMode mode = parse_mode(mode_s);
  const SketchKind kind = parse_kind(kind_s);
  const SketchOperator op = SketchOperator::make(kind, m, n, g.seed);
  const Matrix centered = center_columns(data);
  const SketchVector sv = sketch_stream(op, centered, mode);
  save_sketch(out, sv);
  const double ratio = double(op.p()) / double(m);
  std::printf("n=%d m=%d p=%d N=%llu ratio=%.6g\n", n, m, op.p(),
              static_cast<unsigned long long>(sv.sample_count), ratio);
  return 0;
}

// ---------------------------------------------------------------------------
// merge

inline int cmd_merge(const std::string& a_path, const std::string& b_path,
                     const std::string& out) {
  const SketchVector a = load_sketch(a_path);
  const SketchVector b = load_sketch(b_path);
  save_sketch(out, merge(a, b));
  std::printf("merged N=%llu\n",
              static_cast<unsigned long long>(a.sample_count + b.sample_count));
  return 0;
}

// ---------------------------------------------------------------------------
// solve

inline json solve_to_json(const SolveResult& r, const SketchVector& sv, const std::string& solver,
                          double wall_s, const std::optional<Matrix>& p_hat,
                          const Matrix& m_hat) {
  json j;
  j["schema"] = "cica.solve.v1";
  j["timestamp"] = iso_timestamp();
  j["wall_time_s"] = wall_s;
  j["solver"] = solver;
  j["sketch"] = {{"mode", to_string(sv.mode)},
                 {"kind", to_string(sv.fingerprint.kind)},
                 {"n", sv.fingerprint.n},
                 {"m", sv.fingerprint.m},
                 {"seed", sv.fingerprint.seed},
                 {"sample_count", sv.sample_count}};
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual_history.back();
  j["residual_history"] = r.residual_history;
  j["restart_used"] = r.restart_used;
  j["Q"] = matrix_to_json(r.q_hat);
  j["S"] = std::vector<double>(r.s_hat.kappa().data(),
                               r.s_hat.kappa().data() + r.s_hat.kappa().size());
  if (p_hat) j["P"] = matrix_to_json(*p_hat);
  j["M"] = matrix_to_json(m_hat);
  return j;
}

inline int cmd_solve(const GlobalOpts& g, const std::string& sketch_path,
                     const std::string& solver, int restarts, int components, double tol,
                     int max_outer, const std::string& projector, const std::string& out) {
  const SketchVector sv = load_sketch(sketch_path);
  const SketchOperator op = SketchOperator::make(sv.fingerprint.kind, int(sv.fingerprint.m),
                                                 int(sv.fingerprint.n), sv.fingerprint.seed);
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult result;
  std::optional<Matrix> p_hat;
  Matrix m_hat;

  if (sv.mode == SketchMode::unwhitened) {
    if (solver != "ipg")
      throw std::invalid_argument("unwhitened sketches are solved with --solver ipg");
    IpgConfig cfg;
    cfg.tol = tol;
    cfg.max_outer = max_outer;
    cfg.restarts = restarts;
    cfg.restart_seed = g.seed;
    cfg.projector = projector == "alternating" ? ProjectorKind::alternating : ProjectorKind::proxy;
    const int nc = components > 0 ? components : int(sv.fingerprint.n);
    auto u = ipg_solve_unwhitened(op, sv, nc, cfg);
    result = std::move(u.base);
    p_hat = std::move(u.p_hat);
    m_hat = std::move(u.m_hat);
  } else if (solver == "ipg") {
    IpgConfig cfg;
    cfg.tol = tol;
    cfg.max_outer = max_outer;
    cfg.restarts = restarts;
    cfg.restart_seed = g.seed;
    cfg.projector = projector == "alternating" ? ProjectorKind::alternating : ProjectorKind::proxy;
    result = ipg_solve(op, sv.y, cfg);
    m_hat = result.q_hat;
  } else if (solver == "asd") {
    AsdConfig cfg;
    cfg.tol = tol;
    cfg.max_outer = max_outer;
    cfg.restarts = restarts;
    cfg.restart_seed = g.seed;
    result = asd_solve(op, sv.y, cfg);
    m_hat = result.q_hat;
  } else {
    throw std::invalid_argument("unknown solver: " + solver);
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const json j = solve_to_json(result, sv, solver, wall, p_hat, m_hat);
  write_text(out, j.dump(2) + "\n");
  if (g.strict && !result.converged)
    throw nonconvergence_error("solver did not reach the requested tolerance");
  return 0;
}

// ---------------------------------------------------------------------------
// fit

inline int cmd_fit(const GlobalOpts& g, const std::string& data_path, int n,
                   const std::string& solver, const std::string& mode_s,
                   const std::string& kind_s, int m, bool no_whiten, double tol, int max_outer,
                   int restarts, const std::string& out, const std::string& components_out) {
  const Matrix data = read_data_auto(data_path);
  const auto t0 = std::chrono::steady_clock::now();
  json j;
  j["schema"] = "cica.fit.v1";
  j["timestamp"] = iso_timestamp();
  j["solver"] = solver;
  j["n"] = n;

  Matrix m_hat;
  Matrix q_hat;
  Matrix unmix;  // n x d, recovered sources are x_centered * unmix^T

  if (solver == "comon") {
    const MixingEstimate est = baseline_comon_fit(data, n);
    m_hat = est.m;
    q_hat = est.q;
    unmix = est.q.transpose() * est.whitener->p_pinv;
    j["converged"] = est.diagnostics.converged;
    j["iterations"] = est.diagnostics.iterations;
    j["residual"] = est.diagnostics.residual;
    j["S"] = std::vector<double>(est.s.kappa().data(), est.s.kappa().data() + n);
    j["P"] = matrix_to_json(est.whitener->p);
  } else if (parse_mode(mode_s) == SketchMode::unwhitened) {
    if (solver != "ipg")
      throw std::invalid_argument("unwhitened fits are solved with --solver ipg");
    const int d = int(data.cols());
    const SketchOperator op = SketchOperator::make(parse_kind(kind_s), m, d, g.seed);
    const SketchVector sv = sketch_stream(op, center_columns(data), SketchMode::unwhitened);
    IpgConfig cfg;
    cfg.tol = tol;
    cfg.max_outer = max_outer;
    cfg.restarts = restarts;
    cfg.restart_seed = g.seed;
    auto u = ipg_solve_unwhitened(op, sv, n, cfg);
    m_hat = u.m_hat;
    q_hat = u.base.q_hat;
    unmix = (u.m_hat.transpose() * u.m_hat).ldlt().solve(u.m_hat.transpose());
    j["converged"] = u.base.converged;
    j["iterations"] = u.base.iterations;
    j["residual"] = u.base.residual_history.back();
    j["S"] = std::vector<double>(u.base.s_hat.kappa().data(), u.base.s_hat.kappa().data() + n);
    j["P"] = matrix_to_json(u.p_hat);
  } else {
    FitOptions fo;
    fo.solver = solver == "asd" ? SolverId::asd : SolverId::ipg;
    if (solver != "asd" && solver != "ipg") throw std::invalid_argument("unknown solver: " + solver);
    fo.op = {parse_kind(kind_s), m, g.seed};
    fo.whiten = !no_whiten;
    fo.ipg.tol = tol;
    fo.ipg.max_outer = max_outer;
    fo.ipg.restarts = restarts;
    fo.ipg.restart_seed = g.seed;
    fo.asd.tol = tol;
    fo.asd.max_outer = max_outer;
    fo.asd.restarts = restarts;
    fo.asd.restart_seed = g.seed;
    const MixingEstimate est = cica_fit(data, n, fo);
    m_hat = est.m;
    q_hat = est.q;
    unmix = est.whitener ? Matrix(est.q.transpose() * est.whitener->p_pinv)
                         : Matrix(est.q.transpose());
    j["converged"] = est.diagnostics.converged;
    j["iterations"] = est.diagnostics.iterations;
    j["residual"] = est.diagnostics.residual;
    j["S"] = std::vector<double>(est.s.kappa().data(), est.s.kappa().data() + n);
    if (est.whitener) j["P"] = matrix_to_json(est.whitener->p);
  }
  j["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  j["Q"] = matrix_to_json(q_hat);
  j["M"] = matrix_to_json(m_hat);
  write_text(out, j.dump(2) + "\n");
  if (!components_out.empty()) {
    const Matrix comp = center_columns(data) * unmix.transpose();
    write_data_csv(components_out, comp);
  }
  if (g.strict && !j["converged"].get<bool>())
    throw nonconvergence_error("fit did not reach the requested tolerance");
  return 0;
}

// ---------------------------------------------------------------------------
// phase transition

inline int cmd_phase_transition(const GlobalOpts& g, const std::string& n_spec,
                                const std::string& m_spec, bool marks, int trials,
                                const std::string& solver, const std::string& kind_s,
                                bool paper_scale, const std::string& out) {
  PhaseTransitionOptions opt;
  opt.seed = g.seed;
  opt.threads = g.threads;
  opt.trials = trials;
  opt.solver = solver == "asd" ? SolverId::asd : SolverId::ipg;
  opt.kind = parse_kind(kind_s);
  if (paper_scale) {
    opt.n_values = parse_range("2:10");
    opt.m_values = parse_range("2:700:8");
    opt.trials = 250;
  } else {
    opt.n_values = parse_range(n_spec);
    if (marks || m_spec.empty()) {
      opt.m_values.clear();
      opt.marks_only = marks;
    } else {
      opt.m_values = parse_range(m_spec);
    }
  }
  const auto cells = run_phase_transition(opt);

  std::ostringstream os;
  if (g.format == "json") {
    json rows = json::array();
    for (const auto& c : cells)
      rows.push_back({{"n", c.n},
                      {"m", c.m},
                      {"trials", c.trials},
                      {"successes", c.successes},
                      {"prob", c.prob},
                      {"ref_half", c.ref_half},
                      {"ref_1x", c.ref_1x},
                      {"ref_2x", c.ref_2x},
                      {"ref_p", c.ref_p}});
    json j = {{"schema", "cica.phase_transition.v1"},
              {"timestamp", iso_timestamp()},
              {"rows", rows}};
    os << j.dump(2) << "\n";
  } else {
    os << "# schema=cica.phase_transition.v1\n";
    os << "# generated_at=" << iso_timestamp() << "\n";
    os << "n,m,trials,successes,prob,ref_half,ref_1x,ref_2x,ref_p\n";
    char line[160];
    for (const auto& c : cells) {
      std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.6g,%d,%d,%d,%d\n", c.n, c.m, c.trials,
                    c.successes, c.prob, c.ref_half, c.ref_1x, c.ref_2x, c.ref_p);
      os << line;
    }
  }
  write_text(out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// efficiency

inline int cmd_efficiency(const GlobalOpts& g, int n, long long n_samples,
                          const std::string& m_list, int trials, const std::string& solver,
                          const std::string& kind_s, const std::string& out) {
  EfficiencyOptions opt;
  opt.n = n;
  opt.n_samples = n_samples;
  opt.m_values = parse_int_list(m_list);
  opt.trials = trials;
  opt.seed = g.seed;
  opt.threads = g.threads;
  opt.solver = solver == "asd" ? SolverId::asd : SolverId::ipg;
  opt.kind = parse_kind(kind_s);
  const auto rows = run_efficiency(opt);

  std::ostringstream os;
  if (g.format == "json") {
    json jr = json::array();
    for (const auto& r : rows)
      jr.push_back({{"m", r.m},
                    {"e", r.e},
                    {"trials", r.trials},
                    {"var_full", r.var_full},
                    {"var_sketch", r.var_sketch}});
    json j = {{"schema", "cica.efficiency.v1"}, {"timestamp", iso_timestamp()}, {"rows", jr}};
    os << j.dump(2) << "\n";
  } else {
    os << "# schema=cica.efficiency.v1\n";
    os << "# generated_at=" << iso_timestamp() << "\n";
    os << "m,e,trials,var_full,var_sketch\n";
    char line[160];
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%d,%.6g,%d,%.8g,%.8g\n", r.m, r.e, r.trials, r.var_full,
                    r.var_sketch);
      os << line;
    }
  }
  write_text(out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// amari

inline int cmd_amari(const GlobalOpts& g, const std::string& truth_path,
                     const std::string& est_path) {
  const Matrix mt = matrix_from_csv(truth_path);
  const Matrix mh = matrix_from_csv(est_path);
  const double d = amari_error(mt, mh);
  if (g.format == "json") {
    json j = {{"schema", "cica.amari.v1"}, {"amari", d}};
    std::cout << j.dump() << "\n";
  } else {
    std::printf("%.12g\n", d);
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"compressive ICA: sketch 4th order cumulant structure and recover mixing matrices"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "master seed for all randomness");
  app.add_option("--threads", g.threads, "worker threads for experiments (0 = hardware)");
  app.add_flag("--strict", g.strict, "exit 5 when a solver does not converge");
  app.add_option("--format", g.format, "output format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  // sketch
  auto* sk = app.add_subcommand("sketch", "compress a data file into a sketch");
  std::string sk_in, sk_mode = "whitened", sk_kind = "gaussian", sk_out;
  int sk_m = 0;
  sk->add_option("input", sk_in, "data file (CSV or CIDM)")->required();
  sk->add_option("--mode", sk_mode, "whitened or unwhitened");
  sk->add_option("--kind", sk_kind, "gaussian or srht");
  sk->add_option("--m", sk_m, "sketch size")->required();
  sk->add_option("--out", sk_out, "output sketch file")->required();

  // merge
  auto* mg = app.add_subcommand("merge", "combine two sketches of the same operator");
  std::string mg_a, mg_b, mg_out;
  mg->add_option("a", mg_a)->required();
  mg->add_option("b", mg_b)->required();
  mg->add_option("--out", mg_out)->required();

  // solve
  auto* sv = app.add_subcommand("solve", "recover a mixing estimate from a sketch file");
  std::string sv_in, sv_solver = "ipg", sv_out = "-", sv_projector = "proxy";
  int sv_restarts = 0, sv_components = 0, sv_max_outer = 500;
  double sv_tol = 1e-10;
  sv->add_option("sketch", sv_in)->required();
  sv->add_option("--solver", sv_solver, "ipg or asd");
  sv->add_option("--restarts", sv_restarts);
  sv->add_option("--components", sv_components, "components for unwhitened sketches");
  sv->add_option("--tol", sv_tol, "stop when the squared residual falls below this");
  sv->add_option("--max-outer", sv_max_outer);
  sv->add_option("--projector", sv_projector, "proxy or alternating");
  sv->add_option("--out", sv_out, "output JSON path ('-' for stdout)");

  // fit
  auto* ft = app.add_subcommand("fit", "end-to-end fit on a data file");
  std::string ft_in, ft_solver = "ipg", ft_mode = "whitened", ft_kind = "gaussian";
  std::string ft_out = "-", ft_components;
  int ft_n = 0, ft_m = 0, ft_max_outer = 500, ft_restarts = 0;
  double ft_tol = 1e-10;
  bool ft_no_whiten = false;
  ft->add_option("input", ft_in)->required();
  ft->add_option("--n", ft_n, "number of independent components")->required();
  ft->add_option("--solver", ft_solver, "ipg, asd or comon (full-cumulant baseline)");
  ft->add_option("--mode", ft_mode, "whitened or unwhitened");
  ft->add_option("--kind", ft_kind, "gaussian or srht");
  ft->add_option("--m", ft_m, "sketch size (ignored by comon)");
  ft->add_flag("--no-whiten", ft_no_whiten, "treat the input as already whitened");
  ft->add_option("--tol", ft_tol);
  ft->add_option("--max-outer", ft_max_outer);
  ft->add_option("--restarts", ft_restarts);
  ft->add_option("--out", ft_out, "output JSON path ('-' for stdout)");
  ft->add_option("--components-out", ft_components, "write recovered sources to this CSV");

  // phase-transition
  auto* pt = app.add_subcommand("phase-transition", "recovery probability over (n, m) cells");
  std::string pt_n = "2:5", pt_m, pt_solver = "ipg", pt_kind = "gaussian", pt_out;
  int pt_trials = 50;
  bool pt_marks = false, pt_paper = false;
  pt->add_option("--n-range", pt_n, "a:b or a:b:step");
  pt->add_option("--m-range", pt_m, "a:b or a:b:step (omit to use per-n reference marks)");
  pt->add_flag("--m-marks", pt_marks, "only m = ceil(n(n+1)/2) and m = 2n(n+1) per n");
  pt->add_option("--trials", pt_trials);
  pt->add_option("--solver", pt_solver, "ipg or asd");
  pt->add_option("--kind", pt_kind);
  pt->add_flag("--paper-scale", pt_paper, "trials=250, n up to 10, m up to 700 (slow)");
  pt->add_option("--out", pt_out, "output CSV path")->required();

  // efficiency
  auto* ef = app.add_subcommand("efficiency", "relative efficiency against the full-cumulant baseline");
  std::string ef_mlist = "60,100,150,250", ef_solver = "ipg", ef_kind = "gaussian", ef_out;
  int ef_n = 6, ef_trials = 100;
  long long ef_samples = 1000;
  ef->add_option("--n", ef_n);
  ef->add_option("--N", ef_samples, "samples per trial");
  ef->add_option("--m-list", ef_mlist, "comma separated sketch sizes");
  ef->add_option("--trials", ef_trials);
  ef->add_option("--solver", ef_solver);
  ef->add_option("--kind", ef_kind);
  ef->add_option("--out", ef_out, "output CSV path")->required();

  // amari
  auto* am = app.add_subcommand("amari", "Amari error between two mixing matrices (CSV)");
  std::string am_truth, am_est;
  am->add_option("truth", am_truth)->required();
  am->add_option("estimate", am_est)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sk->parsed()) return cmd_sketch(g, sk_in, sk_mode, sk_kind, sk_m, sk_out);
    if (mg->parsed()) return cmd_merge(mg_a, mg_b, mg_out);
    if (sv->parsed())
      return cmd_solve(g, sv_in, sv_solver, sv_restarts, sv_components, sv_tol, sv_max_outer,
                       sv_projector, sv_out);
    if (ft->parsed())
      return cmd_fit(g, ft_in, ft_n, ft_solver, ft_mode, ft_kind, ft_m, ft_no_whiten, ft_tol,
                     ft_max_outer, ft_restarts, ft_out, ft_components);
    if (pt->parsed())
      return cmd_phase_transition(g, pt_n, pt_m, pt_marks, pt_trials, pt_solver, pt_kind,
                                  pt_paper, pt_out);
    if (ef->parsed())
      return cmd_efficiency(g, ef_n, ef_samples, ef_mlist, ef_trials, ef_solver, ef_kind, ef_out);
    if (am->parsed()) return cmd_amari(g, am_truth, am_est);
  } catch (const nonconvergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const fingerprint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const dimension_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace cica::cli
