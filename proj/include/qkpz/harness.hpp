#pragma once

// Experiment configuration, deterministic ensemble runner and the
// Monte Carlo experiments (exact mean, moments, convergence to the SHE,
// martingale fields).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "qkpz/errors.hpp"
#include "qkpz/identities.hpp"
#include "qkpz/io.hpp"
#include "qkpz/kernel.hpp"
#include "qkpz/process.hpp"
#include "qkpz/qcore.hpp"
#include "qkpz/rng.hpp"
#include "qkpz/she.hpp"
#include "qkpz/stats.hpp"
#include "qkpz/transform.hpp"

namespace qkpz {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string preset = "custom";
  Model model = Model::asep;
  double spin = 0.5;
  std::vector<double> eps{4e-2, 1e-2, 2.5e-3};
  int L = 0; // 0: chosen per eps
  Boundary boundary = Boundary::closed;
  double ring_half_width = 1.0; // periodic runs: L = ring_half_width / eps_j
  double T_bar = 0.5;
  std::vector<double> times{0.5}; // macroscopic observation times
  InitialKind initial = InitialKind::flat_pairing;
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  double she_dx = 0.05;
  std::size_t she_replicas = 0; // 0: same as replicas
  int bootstrap = 200;
  std::string test_function = "gaussian_bump";
  double test_width = 0.1;
  int snapshots = 1000; // time-integration intervals (martingale fields)
  double holder_time = 0.5;
  std::vector<double> distances{1, 2, 4, 8, 16};            // lattice units
  std::vector<double> lags{0.005, 0.01, 0.02, 0.04, 0.08};  // macroscopic
  std::vector<double> step_times{0.01, 0.03, 0.1, 0.3, 0.5}; // macroscopic
  std::uint64_t max_jumps = 0; // per replica; 0: unlimited

  KeyValues to_key_values() const {
    KeyValues kv;
    kv["preset"] = preset;
    kv["model"] = to_string(model);
    kv["spin"] = fmt(spin);
    kv["eps"] = format_double_list(eps);
    kv["L"] = std::to_string(L);
    kv["boundary"] = to_string(boundary);
    kv["ring_half_width"] = fmt(ring_half_width);
    kv["T_bar"] = fmt(T_bar);
    kv["times"] = format_double_list(times);
    kv["initial"] = to_string(initial);
    kv["replicas"] = std::to_string(replicas);
    kv["seed"] = std::to_string(seed);
    kv["output_dir"] = output_dir;
    kv["she_dx"] = fmt(she_dx);
    kv["she_replicas"] = std::to_string(she_replicas);
    kv["bootstrap"] = std::to_string(bootstrap);
    kv["test_function"] = test_function;
    kv["test_width"] = fmt(test_width);
    kv["snapshots"] = std::to_string(snapshots);
    kv["holder_time"] = fmt(holder_time);
    kv["distances"] = format_double_list(distances);
    kv["lags"] = format_double_list(lags);
    kv["step_times"] = format_double_list(step_times);
    kv["max_jumps"] = std::to_string(max_jumps);
    return kv;
  }

  std::string to_text() const { return format_key_values(to_key_values()); }

  /// Text that identifies the experiment (output_dir excluded).
  std::string canonical_text() const {
    KeyValues kv = to_key_values();
    kv.erase("output_dir");
    return format_key_values(kv);
  }

  static ExperimentConfig from_key_values(const KeyValues& kv) {
    ExperimentConfig c;
    auto num = [](const std::string& k, const std::string& v) {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw DomainError("bad value for " + k + ": '" + v + "'");
      return d;
    };
    auto uint = [](const std::string& k, const std::string& v) {
      std::size_t used = 0;
      const unsigned long long u = std::stoull(v, &used);
      if (used != v.size() || v.front() == '-') throw DomainError("bad value for " + k + ": '" + v + "'");
      return static_cast<std::uint64_t>(u);
    };
    for (const auto& [k, v] : kv) {
      try {
        if (k == "preset") c.preset = v;
        else if (k == "model") c.model = model_from_string(v);
        else if (k == "spin") c.spin = num(k, v);
        else if (k == "eps") c.eps = parse_double_list(v);
        else if (k == "L") c.L = static_cast<int>(num(k, v));
        else if (k == "boundary") c.boundary = boundary_from_string(v);
        else if (k == "ring_half_width") c.ring_half_width = num(k, v);
        else if (k == "T_bar") c.T_bar = num(k, v);
        else if (k == "times") c.times = parse_double_list(v);
        else if (k == "initial") c.initial = initial_kind_from_string(v);
        else if (k == "replicas") c.replicas = uint(k, v);
        else if (k == "seed") c.seed = uint(k, v);
        else if (k == "output_dir") c.output_dir = v;
        else if (k == "she_dx") c.she_dx = num(k, v);
        else if (k == "she_replicas") c.she_replicas = uint(k, v);
        else if (k == "bootstrap") c.bootstrap = static_cast<int>(num(k, v));
        else if (k == "test_function") c.test_function = v;
        else if (k == "test_width") c.test_width = num(k, v);
        else if (k == "snapshots") c.snapshots = static_cast<int>(num(k, v));
        else if (k == "holder_time") c.holder_time = num(k, v);
        else if (k == "distances") c.distances = parse_double_list(v);
        else if (k == "lags") c.lags = parse_double_list(v);
        else if (k == "step_times") c.step_times = parse_double_list(v);
        else if (k == "max_jumps") c.max_jumps = uint(k, v);
        else throw DomainError("unknown config key '" + k + "'");
      } catch (const std::invalid_argument&) {
        throw DomainError("bad value for " + k + ": '" + v + "'");
      } catch (const std::out_of_range&) {
        throw DomainError("value out of range for " + k + ": '" + v + "'");
      }
    }
    return c;
  }

  static ExperimentConfig from_text(std::string_view text) { return from_key_values(parse_key_values(text)); }

  std::size_t she_count() const { return she_replicas ? she_replicas : replicas; }
  SimOptions sim_options() const {
    SimOptions o;
    o.engine = model == Model::asep ? Engine::uniformized : Engine::gillespie;
    if (max_jumps) o.max_jumps = max_jumps;
    return o;
  }
};

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.to_text() == b.to_text();
}

/// Distance a disturbance from a closed wall travels by time t: a ballistic
/// front moving at j sinh(-ln q) plus a diffusive margin 2 sqrt(t). The step
/// profile is jammed near the walls, so only the diffusive part counts there.
inline int minimum_safe_L(const QParameters& p, InitialKind kind, double t, int window) {
  const double v = kind == InitialKind::step ? 0.0 : p.spin * std::sinh(-p.log_q);
  return window + static_cast<int>(std::ceil(v * t + 2.0 * std::sqrt(t)));
}

inline int even_ceil(double x) {
  auto n = static_cast<int>(std::llround(x));
  if (n < 1) n = 1;
  return n % 2 ? n + 1 : n;
}

/// Lattice half-length for one eps. Periodic: ring of macroscopic half-width
/// ring_half_width (even, so the alternating flat profile closes up).
/// Closed: max(400, 8/eps_j) unless given, and checked for boundary safety
/// at the central half-window.
inline int lattice_half_length(const ExperimentConfig& cfg, const QParameters& p,
                               const ScalingParameters& s, double T_end) {
  const double t = T_end / (s.eps_j * s.eps_j);
  if (cfg.boundary == Boundary::periodic) {
    const int L = cfg.L > 0 ? cfg.L : even_ceil(cfg.ring_half_width / s.eps_j);
    if (L % 2) throw DomainError("periodic lattice needs an even half-length");
    return L;
  }
  int L = cfg.L;
  if (L <= 0) {
    L = std::max(400, static_cast<int>(std::ceil(8.0 / s.eps_j)));
    while (minimum_safe_L(p, cfg.initial, t, L / 2) > L) L *= 2;
  }
  if (minimum_safe_L(p, cfg.initial, t, L / 2) > L)
    throw DomainError("L = " + std::to_string(L) + " is too small for boundary safety at t = " + fmt(t) +
                      " (need " + std::to_string(minimum_safe_L(p, cfg.initial, t, L / 2)) + ")");
  return L;
}

inline void validate(const ExperimentConfig& c) {
  if (c.eps.empty()) throw DomainError("eps list is empty");
  for (double e : c.eps)
    if (!(e >= kMinEpsilon && e <= kMaxEpsilon)) throw DomainError("eps out of range: " + fmt(e));
  if (!(c.T_bar > 0.0) || c.T_bar > 1.0) throw DomainError("T_bar must lie in (0, 1]");
  for (double t : c.times)
    if (!(t > 0.0) || t > c.T_bar) throw DomainError("observation times must lie in (0, T_bar]");
  if (c.replicas < 2) throw StatisticalPowerError("need at least two replicas");
  if (!(c.ring_half_width > 0.0) || !(c.she_dx > 0.0)) throw DomainError("invalid widths");
  if (c.boundary == Boundary::periodic && c.initial == InitialKind::step)
    throw DomainError("step initial data needs the closed segment");
  if (c.bootstrap < 10) throw DomainError("bootstrap needs >= 10 resamples");
}

// ---------------------------------------------------------------------------
// Ensemble runner

/// results[i] = f(i) for i < n, computed on `threads` workers. Output order
/// and content do not depend on the thread count.
template <class F>
auto run_ensemble(std::size_t n, unsigned threads, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<R> out(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        out[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Stream id of replica r in part `part` at eps index e.
inline std::uint64_t replica_stream(std::uint64_t part, std::uint64_t e, std::uint64_t r) {
  return (part << 48) | (e << 40) | r;
}

/// Advances one replica through increasing times.
class Evolver {
public:
  Evolver(Configuration c, const QParameters& p, const SimOptions& opt) : c_(std::move(c)), p_(p), opt_(opt) {
    if (opt.engine == Engine::uniformized) sampler_.emplace(c_, p_);
    jumps0_ = c_.jumps;
  }
  const Configuration& advance(double t, RngStream& rng) {
    if (sampler_) {
      sampler_->advance_to(t, rng);
      if (sampler_->jumps() - jumps0_ > opt_.max_jumps) throw BudgetError("jump budget exceeded");
      sampler_->write_to(c_);
      c_.time = t;
    } else {
      SimOptions o = opt_;
      if (o.max_jumps != std::numeric_limits<std::uint64_t>::max()) o.max_jumps -= std::min(o.max_jumps, c_.jumps - jumps0_);
      simulate_until(c_, p_, t, {}, rng, o);
    }
    return c_;
  }
  const Configuration& config() const { return c_; }

private:
  Configuration c_;
  QParameters p_;
  SimOptions opt_;
  std::optional<UniformizedSampler> sampler_;
  std::uint64_t jumps0_ = 0;
};

inline Configuration starting_configuration(const ExperimentConfig& cfg, const QParameters& p, int L,
                                            RngStream& rng) {
  return initial_condition(cfg.initial, L, p, &rng, {}, cfg.boundary);
}

/// Sites pooled as equivalent under the ring symmetry: same parity as 0 for
/// half-odd j (period-2 initial profile), every site otherwise.
inline int pooling_stride(const QParameters& p, InitialKind kind) {
  return (kind == InitialKind::flat_pairing && p.twice_spin % 2 == 1) ? 2 : 1;
}

struct Estimate {
  double value = 0.0;
  double stderr = 0.0;
};

inline nlohmann::json to_json(const Estimate& e) { return {{"value", e.value}, {"stderr", e.stderr}}; }

/// ||X||_{2n} = (E X^{2n})^{1/2n} with a delta-method standard error.
inline Estimate lp_norm(std::span<const double> v, int n) {
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::pow(v[i], 2 * n);
  const Summary s = summarize(w);
  const double m = std::max(s.mean, 0.0);
  const double norm = std::pow(m, 1.0 / (2 * n));
  const double se = m > 0.0 ? s.stderr_mean * norm / (2.0 * n * m) : 0.0;
  return {norm, se};
}

/// Norm from per-replica averages of X^{2n} (pooled sites).
inline Estimate lp_norm_from_moments(std::span<const double> moments, int n) {
  const Summary s = summarize(moments);
  const double m = std::max(s.mean, 0.0);
  const double norm = std::pow(m, 1.0 / (2 * n));
  return {norm, m > 0.0 ? s.stderr_mean * norm / (2.0 * n * m) : 0.0};
}

/// E[A] - mu^2 with B (E B = mu known exactly) as a control variate for A.
inline Estimate control_variate_variance(std::span<const double> A, std::span<const double> B, double mu) {
  const Summary sa = summarize(A), sb = summarize(B);
  std::vector<double> cov(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) cov[i] = (A[i] - sa.mean) * (B[i] - sb.mean);
  const double c = sa.n > 1 ? pairwise_sum(cov) / static_cast<double>(sa.n - 1) : 0.0;
  const double beta = sb.variance > 0.0 ? c / sb.variance : 0.0;
  std::vector<double> r(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) r[i] = A[i] - beta * (B[i] - mu);
  const Summary sr = summarize(r);
  return {sr.mean - mu * mu, sr.stderr_mean};
}

struct Artifacts {
  std::vector<ManifestEntry> files;
  void add(std::string name, std::string data) { files.push_back({std::move(name), std::move(data)}); }
  const std::string* find(const std::string& name) const {
    for (const auto& f : files)
      if (f.name == name) return &f.data;
    return nullptr;
  }
};

/// Writes every artifact plus config.txt and MANIFEST into cfg.output_dir.
inline void write_artifacts(const ExperimentConfig& cfg, Artifacts a) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::string config_text = cfg.canonical_text();
  a.add("config.txt", config_text);
  for (const auto& f : a.files) write_file((std::filesystem::path(cfg.output_dir) / f.name).string(), f.data);
  write_file((std::filesystem::path(cfg.output_dir) / "MANIFEST").string(),
             manifest_text(config_text, cfg.seed, a.files));
}

// ---------------------------------------------------------------------------
// Exact-mean experiment: ensemble mean of Z_t vs p_t * Z_0

struct MeanExperimentRow {
  double epsilon = 0.0;
  int L = 0;
  double t = 0.0;
  long x_lo = 0, x_hi = 0;
  MeanTestResult test;
};

struct MeanExperimentReport {
  std::vector<MeanExperimentRow> rows;
  bool passed(double z_max = 4.0, double frac = 0.95) const {
    for (const auto& r : rows)
      if (!r.test.passed(z_max, frac)) return false;
    return !rows.empty();
  }
};

/// Window: central half of the lattice (|x| <= L/2) at the last observation time.
inline MeanExperimentReport run_mean_experiment(const ExperimentConfig& cfg, unsigned threads = 1) {
  validate(cfg);
  if (cfg.model != Model::asep) throw DomainError("the exact-mean oracle covers ASEP initial profiles");
  MeanExperimentReport rep;
  const double T = cfg.times.back();
  for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
    const auto [p, s] = weak_asymmetry(cfg.eps[e], cfg.spin, cfg.model);
    const int L = lattice_half_length(cfg, p, s, T);
    const double t = T / (s.eps_j * s.eps_j);
    const long lo = -(L / 2), hi = L / 2;
    const SimOptions opt = cfg.sim_options();
    auto samples = run_ensemble(cfg.replicas, threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, replica_stream(1, e, r));
      Evolver ev(starting_configuration(cfg, p, L, rng), p, opt);
      return gartner_window(ev.advance(t, rng), p, static_cast<int>(lo), static_cast<int>(hi));
    });
    const auto oracle = mean_oracle(cfg.initial, p, t, lo, hi);
    rep.rows.push_back({cfg.eps[e], L, t, lo, hi, martingale_mean_test(samples, oracle)});
  }
  return rep;
}

inline Artifacts mean_artifacts(const MeanExperimentReport& rep) {
  Artifacts a;
  std::string csv = "eps,t,x,mean,stderr,oracle,z\n";
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    for (long x = r.x_lo; x <= r.x_hi; ++x) {
      const auto i = static_cast<std::size_t>(x - r.x_lo);
      const double se = r.test.stderr_mean[i];
      csv += fmt(r.epsilon) + "," + fmt(r.t) + "," + std::to_string(x) + "," + fmt(r.test.mean[i]) + "," +
             fmt(se) + "," + fmt(r.test.oracle[i]) + "," +
             fmt(se > 0 ? (r.test.mean[i] - r.test.oracle[i]) / se : 0.0) + "\n";
    }
    j.push_back({{"eps", r.epsilon},
                 {"L", r.L},
                 {"t", r.t},
                 {"replicas", r.test.replicas},
                 {"max_abs_z", r.test.max_abs_z},
                 {"fraction_within_2", r.test.fraction_within_2},
                 {"passed", r.test.passed()}});
  }
  a.add("mean.csv", csv);
  a.add("mean.json", nlohmann::json{{"experiment", "mean"}, {"rows", j}}.dump(2) + "\n");
  return a;
}

// ---------------------------------------------------------------------------
// Convergence to the SHE: one-point statistics of Z^eps_T(0)

struct DecileTable {
  std::vector<double> value, stderr;
};

inline DecileTable decile_table(std::span<const double> v, int resamples, RngStream& rng) {
  return {deciles(v), bootstrap_decile_stderr(v, resamples, rng)};
}

struct ConvergenceRow {
  double epsilon = 0.0;
  int L = 0;
  double t = 0.0;
  std::size_t replicas = 0;
  Estimate mean;            // Z^eps_T(0), or Z* for step data
  double mean_oracle = 0.0; // p_t * Z_0 at 0
  double mean_z = 0.0;
  Estimate variance;        // pooled, control variate (flat) or plain (step)
  double variance_she = 0.0;
  Estimate gap;             // |variance - variance_she|
  DecileTable deciles;
};

struct SheReference {
  double dx = 0.0, x_max = 0.0, period = 0.0;
  std::size_t replicas = 0;
  Estimate mean;
  double mean_exact = 0.0;
  Estimate variance;
  double variance_exact = NAN; // torus Volterra value (flat data only)
  DecileTable deciles;
  double clip_rate = 0.0;
};

struct ConvergenceReport {
  double T = 0.0;
  InitialKind initial = InitialKind::flat_pairing;
  std::vector<ConvergenceRow> rows;
  SheReference she; // at the smallest eps
  std::vector<Estimate> decile_gaps; // smallest eps
  bool gaps_decreasing = false;
};

inline double she_dx_for(double x_max, double target) {
  const double n = std::max(2.0, std::round(x_max / target));
  return x_max / n;
}

inline SheReference run_she_reference(const ExperimentConfig& cfg, double T, double period, bool flat,
                                      unsigned threads) {
  SheReference ref;
  SheConfig sc;
  if (flat) {
    sc.boundary = SheBoundary::periodic;
    sc.x_max = 0.5 * period;
  } else {
    sc.boundary = SheBoundary::dirichlet;
    sc.x_max = std::max(1.0, 8.0 * std::sqrt(T));
  }
  // a delta start needs cells well below the spread sqrt(T)
  sc.dx = she_dx_for(sc.x_max, flat ? cfg.she_dx : std::min(cfg.she_dx, 0.1 * std::sqrt(T)));
  ref.dx = sc.dx;
  ref.x_max = sc.x_max;
  ref.period = flat ? period : INFINITY;
  ref.replicas = cfg.she_count();
  struct Out {
    double z0 = 0.0, a = 0.0, b = 0.0, clip = 0.0;
  };
  const std::vector<double> times{T};
  auto res = run_ensemble(ref.replicas, threads, [&](std::size_t r) {
    RngStream rng(cfg.seed, replica_stream(7, 0, r));
    SHEGrid g = make_she_grid(sc, flat ? SheInitial::flat : SheInitial::delta);
    const auto snap = she_solve(g, times, rng);
    const auto& Z = snap.back().Z;
    Out o;
    const auto i0 = static_cast<std::size_t>(std::llround(sc.x_max / sc.dx));
    o.z0 = Z[i0];
    if (flat) {
      for (double z : Z) {
        o.a += z * z;
        o.b += z;
      }
      o.a /= static_cast<double>(Z.size());
      o.b /= static_cast<double>(Z.size());
    }
    o.clip = g.clip_rate();
    return o;
  });
  std::vector<double> z0(res.size()), A(res.size()), B(res.size()), clip(res.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    z0[i] = res[i].z0;
    A[i] = res[i].a;
    B[i] = res[i].b;
    clip[i] = res[i].clip;
  }
  const Summary s0 = summarize(z0);
  ref.mean = {s0.mean, s0.stderr_mean};
  ref.mean_exact = flat ? 1.0 : 1.0 / std::sqrt(2.0 * std::numbers::pi * T);
  if (flat) {
    ref.variance = control_variate_variance(A, B, 1.0);
    ref.variance_exact = volterra_moment(T, 1e-3, period).at(T) - 1.0;
  } else {
    ref.variance = {s0.variance, variance_stderr(z0)};
  }
  RngStream brng(cfg.seed, replica_stream(8, 0, 0));
  ref.deciles = decile_table(z0, cfg.bootstrap, brng);
  ref.clip_rate = summarize(clip).mean;
  return ref;
}

/// Flat data run on the periodic ring and compare with the SHE on the torus
/// of the same macroscopic period; step data run on the closed segment and
/// compare Z* with the delta-started SHE.
inline ConvergenceReport run_convergence_experiment(const ExperimentConfig& cfg, unsigned threads = 1) {
  validate(cfg);
  if (cfg.eps.size() < 3 && cfg.preset == "convergence")
    throw DomainError("convergence experiment needs >= 3 values of eps");
  if (cfg.model != Model::asep) throw DomainError("convergence experiment covers ASEP");
  const bool flat = cfg.initial == InitialKind::flat_pairing;
  if (!flat && cfg.initial != InitialKind::step) throw DomainError("convergence needs flat or step data");
  if (flat && cfg.boundary != Boundary::periodic) throw DomainError("flat convergence runs on the ring");
  ConvergenceReport rep;
  rep.T = cfg.times.back();
  rep.initial = cfg.initial;
  const double T = rep.T;
  double smallest = INFINITY, smallest_period = 0.0;
  std::size_t smallest_idx = 0;
  for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
    const auto [p, s] = weak_asymmetry(cfg.eps[e], cfg.spin, cfg.model);
    const int L = lattice_half_length(cfg, p, s, T);
    const double t = T / (s.eps_j * s.eps_j);
    const int stride = pooling_stride(p, cfg.initial);
    const double norm = flat ? 1.0 : 1.0 / (2.0 * std::sqrt(s.epsilon));
    const SimOptions opt = cfg.sim_options();
    struct Out {
      double z0 = 0.0, a = 0.0, b = 0.0;
    };
    auto res = run_ensemble(cfg.replicas, threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, replica_stream(2, e, r));
      Evolver ev(starting_configuration(cfg, p, L, rng), p, opt);
      const Configuration& c = ev.advance(t, rng);
      Out o;
      if (flat) {
        const auto z = gartner_window(c, p, -L, L - 1);
        int k = 0;
        for (int x = 0; x < 2 * L; x += stride) {
          const double v = z[static_cast<std::size_t>((x + L) % (2 * L))];
          o.a += v * v;
          o.b += v;
          ++k;
        }
        o.a /= k;
        o.b /= k;
        o.z0 = z[static_cast<std::size_t>(L)];
      } else {
        o.z0 = norm * gartner_window(c, p, 0, 0)[0];
      }
      return o;
    });
    std::vector<double> z0(res.size()), A(res.size()), B(res.size());
    for (std::size_t i = 0; i < res.size(); ++i) {
      z0[i] = res[i].z0;
      A[i] = res[i].a;
      B[i] = res[i].b;
    }
    ConvergenceRow row;
    row.epsilon = cfg.eps[e];
    row.L = L;
    row.t = t;
    row.replicas = res.size();
    const Summary s0 = summarize(z0);
    row.mean = {s0.mean, s0.stderr_mean};
    row.mean_oracle = norm * mean_oracle(cfg.initial, p, t, 0, 0)[0];
    row.mean_z = s0.stderr_mean > 0 ? (s0.mean - row.mean_oracle) / s0.stderr_mean : 0.0;
    if (flat) {
      row.variance = control_variate_variance(A, B, row.mean_oracle);
      const double period = 2.0 * L * s.eps_j;
      row.variance_she = volterra_moment(T, 1e-3, period).at(T) - 1.0;
      if (cfg.eps[e] < smallest) smallest_period = period;
    } else {
      row.variance = {s0.variance, variance_stderr(z0)};
      row.variance_she = NAN; // filled from the SHE ensemble below
    }
    RngStream brng(cfg.seed, replica_stream(3, e, 0));
    row.deciles = decile_table(z0, cfg.bootstrap, brng);
    if (cfg.eps[e] < smallest) {
      smallest = cfg.eps[e];
      smallest_idx = e;
    }
    rep.rows.push_back(std::move(row));
  }
  rep.she = run_she_reference(cfg, T, smallest_period, flat, threads);
  for (auto& row : rep.rows) {
    if (!flat) row.variance_she = rep.she.variance.value;
    const double she_se = flat ? 0.0 : rep.she.variance.stderr;
    row.gap = {std::abs(row.variance.value - row.variance_she), std::hypot(row.variance.stderr, she_se)};
  }
  const auto& dz = rep.rows[smallest_idx].deciles;
  for (std::size_t k = 0; k < dz.value.size(); ++k)
    rep.decile_gaps.push_back({dz.value[k] - rep.she.deciles.value[k], std::hypot(dz.stderr[k], rep.she.deciles.stderr[k])});
  // rows in the order of decreasing eps
  std::vector<const ConvergenceRow*> order;
  for (const auto& r : rep.rows) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->epsilon > b->epsilon; });
  rep.gaps_decreasing = order.size() >= 2;
  for (std::size_t i = 1; i < order.size(); ++i) rep.gaps_decreasing &= order[i]->gap.value < order[i - 1]->gap.value;
  return rep;
}

inline Artifacts convergence_artifacts(const ConvergenceReport& rep) {
  Artifacts a;
  std::string csv = "eps,L,t,replicas,mean,mean_stderr,mean_oracle,variance,variance_stderr,variance_she,gap,gap_stderr\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    csv += fmt(r.epsilon) + "," + std::to_string(r.L) + "," + fmt(r.t) + "," + std::to_string(r.replicas) + "," +
           fmt(r.mean.value) + "," + fmt(r.mean.stderr) + "," + fmt(r.mean_oracle) + "," + fmt(r.variance.value) +
           "," + fmt(r.variance.stderr) + "," + fmt(r.variance_she) + "," + fmt(r.gap.value) + "," +
           fmt(r.gap.stderr) + "\n";
    rows.push_back({{"eps", r.epsilon},
                    {"L", r.L},
                    {"t", r.t},
                    {"mean", to_json(r.mean)},
                    {"mean_oracle", r.mean_oracle},
                    {"mean_z", r.mean_z},
                    {"variance", to_json(r.variance)},
                    {"variance_she", r.variance_she},
                    {"gap", to_json(r.gap)},
                    {"deciles", r.deciles.value},
                    {"deciles_stderr", r.deciles.stderr}});
  }
  std::string dcsv = "decile,particle,particle_stderr,she,she_stderr,gap,gap_stderr\n";
  for (std::size_t k = 0; k < rep.decile_gaps.size(); ++k) {
    const ConvergenceRow* r = &rep.rows.front();
    for (const auto& x : rep.rows)
      if (x.epsilon < r->epsilon) r = &x;
    dcsv += fmt(0.1 * static_cast<double>(k + 1)) + "," + fmt(r->deciles.value[k]) + "," +
            fmt(r->deciles.stderr[k]) + "," + fmt(rep.she.deciles.value[k]) + "," + fmt(rep.she.deciles.stderr[k]) +
            "," + fmt(rep.decile_gaps[k].value) + "," + fmt(rep.decile_gaps[k].stderr) + "\n";
  }
  nlohmann::json she{{"dx", rep.she.dx},
                     {"x_max", rep.she.x_max},
                     {"replicas", rep.she.replicas},
                     {"mean", to_json(rep.she.mean)},
                     {"mean_exact", rep.she.mean_exact},
                     {"variance", to_json(rep.she.variance)},
                     {"clip_rate", rep.she.clip_rate},
                     {"deciles", rep.she.deciles.value},
                     {"deciles_stderr", rep.she.deciles.stderr}};
  if (std::isfinite(rep.she.variance_exact)) {
    she["variance_exact"] = rep.she.variance_exact;
    she["period"] = rep.she.period;
  }
  a.add("convergence.csv", csv);
  a.add("deciles.csv", dcsv);
  a.add("convergence.json", nlohmann::json{{"experiment", "convergence"},
                                           {"T", rep.T},
                                           {"initial", to_string(rep.initial)},
                                           {"rows", rows},
                                           {"she", she},
                                           {"gaps_decreasing", rep.gaps_decreasing}}
                                    .dump(2) + "\n");
  return a;
}

// ---------------------------------------------------------------------------
// Moment estimates

struct NormRow {
  double epsilon = 0.0;
  double T = 0.0;
  Estimate norm2, norm4; // ||Z_t(x)||_2, ||Z_t(x)||_4 (pooled sites)
};

struct HolderRow {
  double separation = 0.0; // eps_j |x - x'| or eps_j^2 |t - t'|
  Estimate norm2, norm4;
};

struct StepNormRow {
  double T = 0.0, t = 0.0;
  Estimate norm2, norm4;  // ||Z*_t(0)||
  double scaled2 = 0.0;   // ||Z*_t(0)||_2 sqrt(eps^2 t)
  double scaled4 = 0.0;
};

struct MomentReport {
  double epsilon = 0.0; // Hölder and step rows use the first eps
  std::vector<NormRow> uniform;
  double uniform_constant = 0.0; // smallest C with ||Z||_2n in [1/C, C]
  std::vector<HolderRow> spatial, temporal;
  double spatial_slope2 = 0.0, spatial_slope4 = 0.0;
  double temporal_slope2 = 0.0, temporal_slope4 = 0.0;
  std::vector<StepNormRow> step;
  double step_ratio2 = 0.0, step_ratio4 = 0.0; // max/min of the scaled norms
};

/// Flat data on the ring: norms at cfg.times, spatial increments at
/// holder_time over cfg.distances, temporal increments over cfg.lags. Step data
/// on the closed segment at cfg.step_times.
inline MomentReport run_moment_experiment(const ExperimentConfig& base, unsigned threads = 1) {
  validate(base);
  if (base.replicas < 200) throw StatisticalPowerError("n = 2 norms need >= 200 replicas");
  if (base.model != Model::asep) throw DomainError("moment experiment covers ASEP");
  MomentReport rep;
  rep.epsilon = base.eps.front();
  ExperimentConfig flat = base;
  flat.initial = InitialKind::flat_pairing;
  flat.boundary = Boundary::periodic;
  const SimOptions opt = base.sim_options();
  const double H = base.holder_time;
  if (!(H > 0.0) || H > base.T_bar) throw DomainError("holder_time must lie in (0, T_bar]");
  double cmax = 1.0;
  for (std::size_t e = 0; e < base.eps.size(); ++e) {
    const auto [p, s] = weak_asymmetry(base.eps[e], base.spin, base.model);
    const double ej2 = s.eps_j * s.eps_j;
    const int L = lattice_half_length(flat, p, s, base.T_bar);
    const int stride = pooling_stride(p, flat.initial);
    const bool holder = e == 0;
    // all event times, macroscopic
    std::vector<double> ev_times(base.times.begin(), base.times.end());
    if (holder) {
      ev_times.push_back(H);
      for (double lag : base.lags) {
        if (!(lag > 0.0) || lag >= H) throw DomainError("lags must lie in (0, holder_time)");
        ev_times.push_back(H - lag);
      }
    }
    std::sort(ev_times.begin(), ev_times.end());
    ev_times.erase(std::unique(ev_times.begin(), ev_times.end()), ev_times.end());
    auto index_of = [&](double T) {
      return static_cast<std::size_t>(std::lower_bound(ev_times.begin(), ev_times.end(), T) - ev_times.begin());
    };
    for (double d : base.distances)
      if (!(d >= 1.0) || d != std::floor(d) || d >= L) throw DomainError("distances must be integers in [1, L)");
    struct Out {
      std::vector<double> m2, m4; // per observation time
      std::vector<double> s2, s4; // per distance
      std::vector<double> t2, t4; // per lag
    };
    auto res = run_ensemble(base.replicas, threads, [&](std::size_t r) {
      RngStream rng(base.seed, replica_stream(4, e, r));
      Evolver ev(starting_configuration(flat, p, L, rng), p, opt);
      std::vector<std::vector<double>> fields;
      for (double T : ev_times) fields.push_back(gartner_window(ev.advance(T / ej2, rng), p, -L, L - 1));
      auto at = [&](const std::vector<double>& z, int x) { return z[static_cast<std::size_t>(((x + L) % (2 * L) + 2 * L) % (2 * L))]; };
      Out o;
      auto pool = [&](auto&& g, double& a2, double& a4) {
        a2 = a4 = 0.0;
        int k = 0;
        for (int x = 0; x < 2 * L; x += stride) {
          const double v = g(x);
          a2 += v * v;
          a4 += v * v * v * v;
          ++k;
        }
        a2 /= k;
        a4 /= k;
      };
      for (double T : base.times) {
        const auto& z = fields[index_of(T)];
        double a2, a4;
        pool([&](int x) { return at(z, x); }, a2, a4);
        o.m2.push_back(a2);
        o.m4.push_back(a4);
      }
      if (holder) {
        const auto& z = fields[index_of(H)];
        for (double d : base.distances) {
          const int di = static_cast<int>(d);
          double a2, a4;
          pool([&](int x) { return at(z, x + di) - at(z, x); }, a2, a4);
          o.s2.push_back(a2);
          o.s4.push_back(a4);
        }
        for (double lag : base.lags) {
          const auto& zo = fields[index_of(H - lag)];
          double a2, a4;
          pool([&](int x) { return at(z, x) - at(zo, x); }, a2, a4);
          o.t2.push_back(a2);
          o.t4.push_back(a4);
        }
      }
      return o;
    });
    auto column = [&](auto member, std::size_t k) {
      std::vector<double> v(res.size());
      for (std::size_t i = 0; i < res.size(); ++i) v[i] = (res[i].*member)[k];
      return v;
    };
    for (std::size_t k = 0; k < base.times.size(); ++k) {
      NormRow row{base.eps[e], base.times[k], lp_norm_from_moments(column(&Out::m2, k), 1),
                  lp_norm_from_moments(column(&Out::m4, k), 2)};
      for (double v : {row.norm2.value, row.norm4.value}) cmax = std::max({cmax, v, 1.0 / v});
      rep.uniform.push_back(row);
    }
    if (holder) {
      std::vector<double> sx, sy2, sy4;
      for (std::size_t k = 0; k < base.distances.size(); ++k) {
        HolderRow h{s.eps_j * base.distances[k], lp_norm_from_moments(column(&Out::s2, k), 1),
                    lp_norm_from_moments(column(&Out::s4, k), 2)};
        rep.spatial.push_back(h);
        sx.push_back(h.separation);
        sy2.push_back(h.norm2.value);
        sy4.push_back(h.norm4.value);
      }
      rep.spatial_slope2 = log_log_slope(sx, sy2);
      rep.spatial_slope4 = log_log_slope(sx, sy4);
      std::vector<double> tx, ty2, ty4;
      for (std::size_t k = 0; k < base.lags.size(); ++k) {
        HolderRow h{base.lags[k], lp_norm_from_moments(column(&Out::t2, k), 1),
                    lp_norm_from_moments(column(&Out::t4, k), 2)};
        rep.temporal.push_back(h);
        tx.push_back(h.separation);
        ty2.push_back(h.norm2.value);
        ty4.push_back(h.norm4.value);
      }
      rep.temporal_slope2 = log_log_slope(tx, ty2);
      rep.temporal_slope4 = log_log_slope(tx, ty4);
    }
  }
  rep.uniform_constant = cmax;

  // step data: ||Z*_t(0)||_2n sqrt(eps^2 t)
  ExperimentConfig step = base;
  step.initial = InitialKind::step;
  step.boundary = Boundary::closed;
  const auto [p, s] = weak_asymmetry(base.eps.front(), base.spin, base.model);
  std::vector<double> st(base.step_times.begin(), base.step_times.end());
  std::sort(st.begin(), st.end());
  if (st.empty()) return rep;
  const double ej2 = s.eps_j * s.eps_j;
  for (double T : st)
    if (T / ej2 < 1.0 / std::sqrt(s.epsilon)) throw DomainError("step times must satisfy t >= eps^-1/2");
  const int L = lattice_half_length(step, p, s, st.back());
  const double norm = 1.0 / (2.0 * std::sqrt(s.epsilon));
  auto res = run_ensemble(base.replicas, threads, [&](std::size_t r) {
    RngStream rng(base.seed, replica_stream(5, 0, r));
    Evolver ev(starting_configuration(step, p, L, rng), p, opt);
    std::vector<double> z;
    for (double T : st) z.push_back(norm * gartner_window(ev.advance(T / ej2, rng), p, 0, 0)[0]);
    return z;
  });
  double lo2 = INFINITY, hi2 = 0.0, lo4 = INFINITY, hi4 = 0.0;
  for (std::size_t k = 0; k < st.size(); ++k) {
    std::vector<double> v(res.size());
    for (std::size_t i = 0; i < res.size(); ++i) v[i] = res[i][k];
    StepNormRow row;
    row.T = st[k];
    row.t = st[k] / ej2;
    row.norm2 = lp_norm(v, 1);
    row.norm4 = lp_norm(v, 2);
    const double f = std::sqrt(s.epsilon * s.epsilon * row.t);
    row.scaled2 = row.norm2.value * f;
    row.scaled4 = row.norm4.value * f;
    lo2 = std::min(lo2, row.scaled2);
    hi2 = std::max(hi2, row.scaled2);
    lo4 = std::min(lo4, row.scaled4);
    hi4 = std::max(hi4, row.scaled4);
    rep.step.push_back(row);
  }
  rep.step_ratio2 = hi2 / lo2;
  rep.step_ratio4 = hi4 / lo4;
  return rep;
}

inline Artifacts moment_artifacts(const MomentReport& rep) {
  Artifacts a;
  std::string csv = "kind,eps,separation,norm2,norm2_stderr,norm4,norm4_stderr\n";
  for (const auto& r : rep.uniform)
    csv += "uniform," + fmt(r.epsilon) + "," + fmt(r.T) + "," + fmt(r.norm2.value) + "," + fmt(r.norm2.stderr) +
           "," + fmt(r.norm4.value) + "," + fmt(r.norm4.stderr) + "\n";
  for (const auto& r : rep.spatial)
    csv += "spatial," + fmt(rep.epsilon) + "," + fmt(r.separation) + "," + fmt(r.norm2.value) + "," +
           fmt(r.norm2.stderr) + "," + fmt(r.norm4.value) + "," + fmt(r.norm4.stderr) + "\n";
  for (const auto& r : rep.temporal)
    csv += "temporal," + fmt(rep.epsilon) + "," + fmt(r.separation) + "," + fmt(r.norm2.value) + "," +
           fmt(r.norm2.stderr) + "," + fmt(r.norm4.value) + "," + fmt(r.norm4.stderr) + "\n";
  for (const auto& r : rep.step)
    csv += "step," + fmt(rep.epsilon) + "," + fmt(r.T) + "," + fmt(r.norm2.value) + "," + fmt(r.norm2.stderr) +
           "," + fmt(r.norm4.value) + "," + fmt(r.norm4.stderr) + "\n";
  a.add("moments.csv", csv);
  a.add("moments.json", nlohmann::json{{"experiment", "moments"},
                                       {"eps", rep.epsilon},
                                       {"uniform_constant", rep.uniform_constant},
                                       {"spatial_slope", {{"n1", rep.spatial_slope2}, {"n2", rep.spatial_slope4}}},
                                       {"temporal_slope", {{"n1", rep.temporal_slope2}, {"n2", rep.temporal_slope4}}},
                                       {"step_scaled_ratio", {{"n1", rep.step_ratio2}, {"n2", rep.step_ratio4}}}}
                                .dump(2) + "\n");
  return a;
}

// ---------------------------------------------------------------------------
// Martingale fields N^eps_T(phi) and the key term R2

struct MartingaleRow {
  double epsilon = 0.0;
  int L = 0;
  double t = 0.0;
  std::size_t replicas = 0;
  Estimate N;           // E N^eps_T(phi)
  double N_z = 0.0;     // E N / stderr
  Estimate N_sq;        // E N^2
  Estimate bracket;     // E <N>_T
  Estimate R2_sq;       // E R2^2
  Estimate Q, R1, R2, R3;
  double halving_change = 0.0; // rms(N - N_coarse) / rms(N)
  double max_grad_ratio = 0.0;
};

struct MartingaleReport {
  double T = 0.0;
  std::vector<MartingaleRow> rows;
  bool R2_decreasing = false;
  bool mean_passed(double z = 4.0) const {
    for (const auto& r : rows)
      if (std::abs(r.N_z) > z) return false;
    return !rows.empty();
  }
};

inline MartingaleReport run_martingale_experiment(const ExperimentConfig& cfg, unsigned threads = 1) {
  validate(cfg);
  if (cfg.model != Model::asep) throw DomainError("martingale experiment covers ASEP");
  if (cfg.snapshots < 4 || cfg.snapshots % 2) throw DomainError("snapshots must be even and >= 4");
  const TestFunction phi = test_function_from_string(cfg.test_function, cfg.test_width);
  MartingaleReport rep;
  rep.T = cfg.times.back();
  const double T = rep.T;
  for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
    const auto [p, s] = weak_asymmetry(cfg.eps[e], cfg.spin, cfg.model);
    const int L = lattice_half_length(cfg, p, s, T);
    const double t = T / (s.eps_j * s.eps_j);
    const SimOptions opt = cfg.sim_options();
    auto res = run_ensemble(cfg.replicas, threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, replica_stream(6, e, r));
      Evolver ev(starting_configuration(cfg, p, L, rng), p, opt);
      MicroFieldAccumulator acc(p, s, phi, L);
      acc.add(ev.config());
      for (int k = 1; k <= cfg.snapshots; ++k) acc.add(ev.advance(t * k / cfg.snapshots, rng));
      return acc.finish();
    });
    auto col = [&](auto member) {
      std::vector<double> v(res.size());
      for (std::size_t i = 0; i < res.size(); ++i) v[i] = res[i].*member;
      return v;
    };
    auto est = [](const std::vector<double>& v) {
      const Summary s = summarize(v);
      return Estimate{s.mean, s.stderr_mean};
    };
    MartingaleRow row;
    row.epsilon = cfg.eps[e];
    row.L = L;
    row.t = t;
    row.replicas = res.size();
    const auto N = col(&MicroFields::N);
    row.N = est(N);
    row.N_z = row.N.stderr > 0 ? row.N.value / row.N.stderr : 0.0;
    std::vector<double> nsq(N.size()), r2sq(N.size()), dif(N.size());
    const auto R2 = col(&MicroFields::R2);
    for (std::size_t i = 0; i < N.size(); ++i) {
      nsq[i] = N[i] * N[i];
      r2sq[i] = R2[i] * R2[i];
      const double d = N[i] - res[i].N_coarse;
      dif[i] = d * d;
    }
    row.N_sq = est(nsq);
    row.bracket = est(col(&MicroFields::bracket));
    row.R2_sq = est(r2sq);
    row.Q = est(col(&MicroFields::Q));
    row.R1 = est(col(&MicroFields::R1));
    row.R2 = est(R2);
    row.R3 = est(col(&MicroFields::R3));
    const double rms_n = std::sqrt(summarize(nsq).mean);
    row.halving_change = rms_n > 0 ? std::sqrt(summarize(dif).mean) / rms_n : 0.0;
    for (const auto& f : res) row.max_grad_ratio = std::max(row.max_grad_ratio, f.max_grad_ratio);
    rep.rows.push_back(row);
  }
  std::vector<const MartingaleRow*> order;
  for (const auto& r : rep.rows) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->epsilon > b->epsilon; });
  rep.R2_decreasing = order.size() >= 2;
  for (std::size_t i = 1; i < order.size(); ++i) rep.R2_decreasing &= order[i]->R2_sq.value < order[i - 1]->R2_sq.value;
  return rep;
}

inline Artifacts martingale_artifacts(const MartingaleReport& rep) {
  Artifacts a;
  std::string csv = "eps,L,t,replicas,N,N_stderr,N_sq,N_sq_stderr,bracket,bracket_stderr,R2_sq,R2_sq_stderr,"
                    "Q,R1,R2,R3,halving_change\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    csv += fmt(r.epsilon) + "," + std::to_string(r.L) + "," + fmt(r.t) + "," + std::to_string(r.replicas) + "," +
           fmt(r.N.value) + "," + fmt(r.N.stderr) + "," + fmt(r.N_sq.value) + "," + fmt(r.N_sq.stderr) + "," +
           fmt(r.bracket.value) + "," + fmt(r.bracket.stderr) + "," + fmt(r.R2_sq.value) + "," +
           fmt(r.R2_sq.stderr) + "," + fmt(r.Q.value) + "," + fmt(r.R1.value) + "," + fmt(r.R2.value) + "," +
           fmt(r.R3.value) + "," + fmt(r.halving_change) + "\n";
    rows.push_back({{"eps", r.epsilon},
                    {"N", to_json(r.N)},
                    {"N_z", r.N_z},
                    {"N_sq", to_json(r.N_sq)},
                    {"bracket", to_json(r.bracket)},
                    {"R2_sq", to_json(r.R2_sq)},
                    {"Q", to_json(r.Q)},
                    {"R1", to_json(r.R1)},
                    {"R2", to_json(r.R2)},
                    {"R3", to_json(r.R3)},
                    {"halving_change", r.halving_change},
                    {"max_grad_ratio", r.max_grad_ratio}});
  }
  a.add("martingale.csv", csv);
  a.add("martingale.json",
        nlohmann::json{{"experiment", "martingale"}, {"T", rep.T}, {"rows", rows}, {"R2_decreasing", rep.R2_decreasing}}
                .dump(2) + "\n");
  return a;
}

// ---------------------------------------------------------------------------
// Presets

/// Named starting points; command-line flags override individual fields.
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "mean") {
    c.eps = {1e-2};
    c.initial = InitialKind::step;
    c.replicas = 10000;
  } else if (name == "convergence") {
    c.boundary = Boundary::periodic;
    c.ring_half_width = 0.75;
    c.she_dx = 0.025;
    c.replicas = 10000;
  } else if (name == "step-convergence") {
    c.initial = InitialKind::step;
    c.eps = {1e-2, 1e-3};
    c.T_bar = 0.002;
    c.times = {0.002};
    c.she_dx = 0.05;
  } else if (name == "moments") {
    c.eps = {1e-2};
    c.boundary = Boundary::periodic;
    c.T_bar = 1.0;
    c.times = {0.25, 0.5, 1.0};
    c.replicas = 4000;
  } else if (name == "martingale") {
    c.eps = {1e-2};
    c.boundary = Boundary::periodic;
    c.replicas = 10000;
  } else if (name != "custom") {
    throw DomainError("unknown preset '" + name + "'");
  }
  return c;
}

inline Artifacts run_experiment(const ExperimentConfig& cfg, unsigned threads = 1) {
  const std::string& k = cfg.preset;
  if (k == "mean") return mean_artifacts(run_mean_experiment(cfg, threads));
  if (k == "convergence" || k == "step-convergence") return convergence_artifacts(run_convergence_experiment(cfg, threads));
  if (k == "moments") return moment_artifacts(run_moment_experiment(cfg, threads));
  if (k == "martingale") return martingale_artifacts(run_martingale_experiment(cfg, threads));
  throw DomainError("preset '" + k + "' has no runner");
}

} // namespace qkpz
