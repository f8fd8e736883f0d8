#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "cica/pipeline.hpp"

namespace cica {

/// index-parallel loop; results must be written to per-index slots so the
/// outcome is independent of scheduling
template <class F>
inline void parallel_for(int begin, int end, int threads, F&& body) {
  if (end <= begin) return;
  if (threads < 1) threads = int(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min(threads, end - begin);
  if (threads == 1) {
    for (int i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<int> next(begin);
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= end) return;
        body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// phase transition: noiseless recovery probability over (n, m) cells

struct PhaseCell {
  int n = 0;
  int m = 0;
  int trials = 0;
  int successes = 0;
  double prob = 0.0;
  // reference sketch sizes for this n
  int ref_half = 0;  // ceil(n(n+1)/2)
  int ref_1x = 0;    // n(n+1)
  int ref_2x = 0;    // 2n(n+1)
  int ref_p = 0;     // C(n+3,4)
};

struct PhaseTransitionOptions {
  std::vector<int> n_values = {2, 3, 4, 5};
  std::vector<int> m_values;      // explicit grid; empty -> use marks per n
  bool marks_only = false;        // true: only m = ceil(n(n+1)/2) and 2n(n+1)
  int trials = 50;
  std::uint64_t seed = 1;
  int threads = 0;                // 0 = hardware
  SolverId solver = SolverId::ipg;
  double success_threshold = 1e-6;
  SketchKind kind = SketchKind::gaussian;
  IpgConfig ipg = make_exact_ipg();
  AsdConfig asd = make_exact_asd();

  static IpgConfig make_exact_ipg() {
    IpgConfig c;
    c.tol = 1e-24;  // noiseless instances: iterate down to the fp floor
    c.max_outer = 1000;
    c.restarts = 2;
    return c;
  }
  static AsdConfig make_exact_asd() {
    AsdConfig c;
    c.tol = 1e-24;
    c.max_outer = 2000;
    c.restarts = 2;
    return c;
  }
};

inline int model_dim_half(int n) { return (n * (n + 1) + 1) / 2; }
inline int tensor_dof(int n) {
  return int(std::llround(double(n + 3) * (n + 2) * (n + 1) * n / 24.0));
}

/// one noiseless trial: population Laplace cumulant under a Haar mixing,
/// sketched and inverted; success if the Amari error clears the threshold
inline bool phase_trial(int n, int m, std::uint64_t cell_seed, const PhaseTransitionOptions& opt) {
  const Matrix q_true = random_orthogonal(n, rng::derive(cell_seed, 1));
  const SymmetricTensor4 z_true = population_cumulant_laplace(n, q_true);
  const SketchOperator op = SketchOperator::make(opt.kind, m, n, rng::derive(cell_seed, 2));
  const Vector y = op.apply(z_true);
  Matrix q_hat;
  if (opt.solver == SolverId::ipg) {
    IpgConfig cfg = opt.ipg;
    cfg.restart_seed = rng::derive(cell_seed, 3);
    q_hat = ipg_solve(op, y, cfg).q_hat;
  } else {
    AsdConfig cfg = opt.asd;
    cfg.restart_seed = rng::derive(cell_seed, 3);
    q_hat = asd_solve(op, y, cfg).q_hat;
  }
  return amari_error(q_true, q_hat) <= opt.success_threshold;
}

inline std::vector<PhaseCell> run_phase_transition(const PhaseTransitionOptions& opt) {
  std::vector<PhaseCell> cells;
  for (int n : opt.n_values) {
    std::vector<int> ms = opt.m_values;
    if (ms.empty()) {
      ms = {model_dim_half(n), 2 * n * (n + 1)};
      if (!opt.marks_only) ms.insert(ms.begin() + 1, n * (n + 1));
    }
    for (int m : ms) {
      PhaseCell c;
      c.n = n;
      c.m = m;
      c.trials = opt.trials;
      c.ref_half = model_dim_half(n);
      c.ref_1x = n * (n + 1);
      c.ref_2x = 2 * n * (n + 1);
      c.ref_p = tensor_dof(n);
      cells.push_back(c);
    }
  }
  // flatten (cell, trial) into one parallel index space
  const int trials = opt.trials;
  std::vector<std::uint8_t> outcome(cells.size() * std::size_t(trials), 0);
  parallel_for(0, int(cells.size()) * trials, opt.threads, [&](int idx) {
    const int ci = idx / trials;
    const int t = idx % trials;
    const auto& c = cells[std::size_t(ci)];
    const std::uint64_t cell_seed =
        rng::derive(rng::derive(rng::derive(opt.seed, std::uint64_t(c.n)), std::uint64_t(c.m)),
                    std::uint64_t(t));
    outcome[std::size_t(idx)] = phase_trial(c.n, c.m, cell_seed, opt) ? 1 : 0;
  });
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    int s = 0;
    for (int t = 0; t < trials; ++t) s += outcome[ci * std::size_t(trials) + std::size_t(t)];
    cells[ci].successes = s;
    cells[ci].prob = trials > 0 ? double(s) / trials : 0.0;
  }
  return cells;
}

// ---------------------------------------------------------------------------
// statistical efficiency: variance of the full-cumulant baseline over the
// variance of the sketched estimate, on a shared set of Monte Carlo draws

struct EfficiencyRow {
  int m = 0;
  double e = 0.0;
  int trials = 0;
  double var_full = 0.0;
  double var_sketch = 0.0;
};

struct EfficiencyOptions {
  int n = 6;
  Eigen::Index n_samples = 1000;
  std::vector<int> m_values = {60, 100, 150, 250};
  int trials = 100;
  std::uint64_t seed = 1;
  int threads = 0;
  SolverId solver = SolverId::ipg;
  SketchKind kind = SketchKind::gaussian;
  IpgConfig ipg = make_noisy_ipg();
  AsdConfig asd;

  static IpgConfig make_noisy_ipg() {
    IpgConfig c;
    c.tol = 1e-12;  // finite-sample sketches never fit exactly; stop on stall
    c.max_outer = 300;
    return c;
  }
};

/// per-trial sources: each component drawn from a random member of the
/// source cocktail, mixed through one fixed matrix
inline std::vector<SourceId> efficiency_sources(int n, std::uint64_t trial_seed) {
  const auto& pool = source_cocktail();
  rng::Counter pick(rng::derive(trial_seed, 0xC0CA));
  std::vector<SourceId> ids(static_cast<std::size_t>(n));
  for (auto& id : ids) id = pool[std::size_t(pick.next_below(pool.size()))];
  return ids;
}

inline std::vector<EfficiencyRow> run_efficiency(const EfficiencyOptions& opt) {
  const int n = opt.n;
  const Matrix m_true = random_mixing(n, n, rng::derive(opt.seed, 0xF17ED), 100.0);
  const int k = int(opt.m_values.size());
  std::vector<double> err_full(std::size_t(opt.trials), 0.0);
  std::vector<double> err_sketch(std::size_t(opt.trials) * std::size_t(k), 0.0);

  parallel_for(0, opt.trials, opt.threads, [&](int t) {
    const std::uint64_t ts = rng::derive(opt.seed, 1000 + std::uint64_t(t));
    const auto ids = efficiency_sources(n, ts);
    const Matrix s = sample_sources(ids, opt.n_samples, rng::derive(ts, 5));
    const Matrix x = s * m_true.transpose();

    const MixingEstimate fd = baseline_comon_fit(x, n);
    err_full[std::size_t(t)] = amari_error(m_true, fd.m);

    for (int mi = 0; mi < k; ++mi) {
      FitOptions fo;
      fo.solver = opt.solver;
      fo.op = {opt.kind, opt.m_values[std::size_t(mi)], rng::derive(ts, 100 + std::uint64_t(mi))};
      fo.ipg = opt.ipg;
      fo.asd = opt.asd;
      const MixingEstimate est = cica_fit(x, n, fo);
      err_sketch[std::size_t(t) * std::size_t(k) + std::size_t(mi)] =
          amari_error(m_true, est.m);
    }
  });

  std::vector<EfficiencyRow> rows;
  for (int mi = 0; mi < k; ++mi) {
    std::vector<double> col(std::size_t(opt.trials));
    for (int t = 0; t < opt.trials; ++t)
      col[std::size_t(t)] = err_sketch[std::size_t(t) * std::size_t(k) + std::size_t(mi)];
    EfficiencyRow r;
    r.m = opt.m_values[std::size_t(mi)];
    r.trials = opt.trials;
    r.e = relative_efficiency(err_full, col);
    // stash the raw variances as well; they make the CSV self-explanatory
    const auto var = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= double(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      return ss / double(v.size() - 1);
    };
    r.var_full = var(err_full);
    r.var_sketch = var(col);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// finite-sample decay of the sketch error

/// log-log slope of ||A(Z_hat_N) - A(Z)||_2 against N for one seed;
/// the population scaling argument predicts -1/2
inline double finite_sample_slope(int n, const std::vector<Eigen::Index>& n_samples,
                                  std::uint64_t seed) {
  const Matrix q = random_orthogonal(n, rng::derive(seed, 7));
  const SymmetricTensor4 z_pop = population_cumulant_laplace(n, q);
  const SketchOperator op =
      SketchOperator::make(SketchKind::gaussian, 2 * n * (n + 1), n, rng::derive(seed, 8));
  const Vector y_pop = op.apply(z_pop);
  std::vector<double> lx, ly;
  const std::vector<SourceId> ids(std::size_t(n), SourceId::laplace);
  for (Eigen::Index big_n : n_samples) {
    const Matrix s = sample_sources(ids, big_n, rng::derive(seed, std::uint64_t(big_n)));
    const Matrix z = s * q.transpose();
    const SketchVector sv = sketch_stream(op, z, SketchMode::whitened);
    lx.push_back(std::log10(double(big_n)));
    ly.push_back(std::log10((sv.y - y_pop).norm()));
  }
  // least-squares slope
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= double(lx.size());
  my /= double(ly.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

}  // namespace cica
