#pragma once

// State and continuous-time dynamics of ASEP(q,j) and ASIP(q,k).
// Closed segment: sites {-L, ..., L}, bonds x = -L..L-1 joining x and x+1,
// nothing crosses the ends. Ring: sites {-L, ..., L-1}, bond L-1 joins
// L-1 and -L. Both have 2L bonds; bond x sits at index x + L.

#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qkpz/errors.hpp"
#include "qkpz/qcore.hpp"
#include "qkpz/rng.hpp"
#include "qkpz/stats.hpp"

namespace qkpz {

enum class Boundary { closed, periodic };

inline std::string to_string(Boundary b) { return b == Boundary::closed ? "closed" : "periodic"; }

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "closed") return Boundary::closed;
  if (s == "periodic" || s == "ring") return Boundary::periodic;
  throw DomainError("unknown boundary '" + s + "'");
}

struct Configuration {
  Model model = Model::asep;
  Boundary boundary = Boundary::closed;
  int L = 0;
  std::vector<std::int32_t> occupancy; // occupancy[x + L] = particle count at x
  std::int64_t flow = 0;                // h_t(0): net left-going crossings of bond (0,1)
  double time = 0.0;
  std::uint64_t jumps = 0;

  int first_site() const { return -L; }
  int last_site() const { return boundary == Boundary::closed ? L : L - 1; }
  int num_sites() const { return boundary == Boundary::closed ? 2 * L + 1 : 2 * L; }
  int num_bonds() const { return 2 * L; }
  bool contains(int x) const { return x >= -L && x <= last_site(); }
  /// Index of the right end of bond index b.
  int right_of(int b) const { return b + 1 == num_sites() ? 0 : b + 1; }

  std::int32_t count(int x) const {
    if (!contains(x)) throw RangeError("site " + std::to_string(x) + " off the lattice");
    return occupancy[static_cast<std::size_t>(x + L)];
  }

  std::int64_t particles() const {
    std::int64_t n = 0;
    for (auto c : occupancy) n += c;
    return n;
  }
};

/// Centred occupation variable eta(x).
inline double eta(const Configuration& c, int x, const QParameters& p) {
  return c.count(x) + p.eta_offset();
}

struct BondRates {
  double plus = 0.0;  // x -> x+1
  double minus = 0.0; // x+1 -> x
  double total() const { return plus + minus; }
};

/// ASEP(q,j) rates from the occupation counts n_x, n_{x+1} in {0, ..., 2j}.
/// Written in counts, [j + eta]_q = [n]_q, so every exponent is an integer.
inline BondRates asep_pair_rates(int nx, int nx1, const QParameters& p) {
  const int tj = p.twice_spin;
  const double lq = p.log_q;
  const double pref = 1.0 / (2.0 * q_number_log(tj, lq));
  BondRates r;
  r.plus = pref * std::exp((nx - nx1 - (tj + 1)) * lq) * q_number_log(nx, lq) *
           q_number_log(tj - nx1, lq);
  r.minus = pref * std::exp((nx - nx1 + (tj + 1)) * lq) * q_number_log(tj - nx, lq) *
            q_number_log(nx1, lq);
  return r;
}

/// ASIP(q,k) rates from occupation counts n_x, n_{x+1} >= 0.
inline BondRates asip_pair_rates(int nx, int nx1, const QParameters& p) {
  const double k2 = 2.0 * p.spin;
  const double lq = p.log_q;
  const double pref = 1.0 / (2.0 * q_number_log(k2, lq));
  BondRates r;
  r.plus = pref * std::exp((nx - nx1 + (k2 - 1.0)) * lq) * q_number_log(nx, lq) *
           q_number_log(k2 + nx1, lq);
  r.minus = pref * std::exp((nx - nx1 - (k2 - 1.0)) * lq) * q_number_log(k2 + nx, lq) *
            q_number_log(nx1, lq);
  return r;
}

/// Centred-variable rate formula for a real spin j. With j > 0 this is
/// ASEP(q,j); substituting j = -k yields ASIP(q,k) with eta = count + k.
inline BondRates centered_rates(double j, double eta_x, double eta_x1, double log_q) {
  const double pref = 1.0 / (2.0 * q_number_log(2.0 * j, log_q));
  BondRates r;
  r.plus = pref * std::exp((eta_x - eta_x1 - (2.0 * j + 1.0)) * log_q) *
           q_number_log(j + eta_x, log_q) * q_number_log(j - eta_x1, log_q);
  r.minus = pref * std::exp((eta_x - eta_x1 + (2.0 * j + 1.0)) * log_q) *
            q_number_log(j - eta_x, log_q) * q_number_log(j + eta_x1, log_q);
  return r;
}

/// ASIP rates in the centred form c^{+-} = q^{eta(x)-eta(x+1) +- (2k-1)}
/// [eta(x) -+ k]_q [eta(x+1) +- k]_q / (2[2k]_q).
inline BondRates asip_centered_rates(double k, double eta_x, double eta_x1, double log_q) {
  const double pref = 1.0 / (2.0 * q_number_log(2.0 * k, log_q));
  BondRates r;
  r.plus = pref * std::exp((eta_x - eta_x1 + (2.0 * k - 1.0)) * log_q) *
           q_number_log(eta_x - k, log_q) * q_number_log(eta_x1 + k, log_q);
  r.minus = pref * std::exp((eta_x - eta_x1 - (2.0 * k - 1.0)) * log_q) *
            q_number_log(eta_x + k, log_q) * q_number_log(eta_x1 - k, log_q);
  return r;
}

namespace detail {
inline void check_bond(const Configuration& c, int x) {
  if (x < -c.L || x >= c.L) throw RangeError("bond " + std::to_string(x) + " off the lattice");
}
inline int right_count(const Configuration& c, int x) {
  return c.occupancy[static_cast<std::size_t>(c.right_of(x + c.L))];
}
} // namespace detail

inline BondRates rates_asep(const Configuration& c, int x, const QParameters& p) {
  if (p.model != Model::asep || c.model != Model::asep)
    throw DomainError("rates_asep called on a non-ASEP model");
  detail::check_bond(c, x);
  return asep_pair_rates(c.count(x), detail::right_count(c, x), p);
}

inline BondRates rates_asip(const Configuration& c, int x, const QParameters& p) {
  if (p.model != Model::asip || c.model != Model::asip)
    throw DomainError("rates_asip called on a non-ASIP model");
  detail::check_bond(c, x);
  return asip_pair_rates(c.count(x), detail::right_count(c, x), p);
}

inline BondRates bond_rates(const Configuration& c, int x, const QParameters& p) {
  return p.model == Model::asep ? rates_asep(c, x, p) : rates_asip(c, x, p);
}

/// Rate lookup used by the samplers. ASEP rates take (2j+1)^2 values and are
/// tabulated; ASIP rates are evaluated on demand.
class RateEvaluator {
public:
  explicit RateEvaluator(const QParameters& p) : params_(p) {
    if (p.model == Model::asep) {
      stride_ = p.twice_spin + 1;
      table_.resize(static_cast<std::size_t>(stride_ * stride_));
      for (int a = 0; a < stride_; ++a)
        for (int b = 0; b < stride_; ++b) table_[a * stride_ + b] = asep_pair_rates(a, b, p);
    }
  }

  BondRates operator()(int nx, int nx1) const {
    if (stride_ > 0) return table_[static_cast<std::size_t>(nx * stride_ + nx1)];
    return asip_pair_rates(nx, nx1, params_);
  }

  const QParameters& params() const { return params_; }

private:
  QParameters params_;
  int stride_ = 0;
  std::vector<BondRates> table_;
};

/// Per-bond rates with a Fenwick (binary indexed) tree over bond totals:
/// O(log n) point update and O(log n) weighted selection.
class BondRateIndex {
public:
  BondRateIndex() = default;
  explicit BondRateIndex(std::size_t bonds) : rates_(bonds), tree_(bonds + 1, 0.0) {
    mask_ = 1;
    while (mask_ * 2 <= bonds) mask_ *= 2;
  }

  std::size_t size() const { return rates_.size(); }
  const BondRates& rates(std::size_t b) const { return rates_[b]; }
  double total() const { return total_; }

  void set(std::size_t b, BondRates r) {
    if (!std::isfinite(r.plus) || !std::isfinite(r.minus) || r.plus < 0.0 || r.minus < 0.0)
      throw OverflowError("non-finite or negative bond rate");
    const double delta = r.total() - rates_[b].total();
    rates_[b] = r;
    if (delta != 0.0) {
      for (std::size_t i = b + 1; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
      total_ += delta;
    }
    if (++updates_ >= kRebuildInterval) rebuild();
  }

  /// Recompute the tree and the cached total from the stored rates.
  void rebuild() {
    const std::size_t n = rates_.size();
    std::fill(tree_.begin(), tree_.end(), 0.0);
    for (std::size_t i = 1; i <= n; ++i) {
      tree_[i] += rates_[i - 1].total();
      const std::size_t parent = i + (i & (~i + 1));
      if (parent <= n) tree_[parent] += tree_[i];
    }
    total_ = brute_force_total();
    updates_ = 0;
  }

  double brute_force_total() const {
    std::vector<double> t(rates_.size());
    for (std::size_t i = 0; i < rates_.size(); ++i) t[i] = rates_[i].total();
    return pairwise_sum(t);
  }

  /// Bond b with prefix(b) <= target < prefix(b+1); target in [0, total).
  std::size_t find(double target) const {
    std::size_t pos = 0;
    for (std::size_t step = mask_; step != 0; step >>= 1) {
      const std::size_t next = pos + step;
      if (next < tree_.size() && tree_[next] <= target) {
        pos = next;
        target -= tree_[next];
      }
    }
    // Rounding can land past the end or on an empty bond; fall back to the
    // nearest bond with positive rate.
    if (pos >= rates_.size()) pos = rates_.size() - 1;
    if (rates_[pos].total() <= 0.0) {
      std::size_t lo = pos;
      while (lo > 0 && rates_[lo].total() <= 0.0) --lo;
      if (rates_[lo].total() > 0.0) return lo;
      std::size_t hi = pos;
      while (hi + 1 < rates_.size() && rates_[hi].total() <= 0.0) ++hi;
      return hi;
    }
    return pos;
  }

private:
  static constexpr std::uint64_t kRebuildInterval = 1u << 20;
  std::vector<BondRates> rates_;
  std::vector<double> tree_;
  std::size_t mask_ = 0;
  std::uint64_t updates_ = 0;
  double total_ = 0.0;
};

inline BondRateIndex build_rate_index(const Configuration& c, const RateEvaluator& eval) {
  BondRateIndex index(static_cast<std::size_t>(c.num_bonds()));
  for (int b = 0; b < c.num_bonds(); ++b) {
    const BondRates r = eval(c.occupancy[b], c.occupancy[c.right_of(b)]);
    if (!std::isfinite(r.plus) || !std::isfinite(r.minus))
      throw OverflowError("non-finite rate at bond " + std::to_string(b - c.L));
    index.set(static_cast<std::size_t>(b), r);
  }
  index.rebuild();
  return index;
}

inline BondRateIndex build_rate_index(const Configuration& c, const QParameters& p) {
  return build_rate_index(c, RateEvaluator(p));
}

struct JumpEvent {
  double time_increment = 0.0;
  int bond = 0;       // site x of bond (x, x+1)
  int direction = 0;  // +1: x -> x+1, -1: x+1 -> x
};

struct StepOptions {
  int asip_cap = 64; // ASIP occupancy cap; reaching it aborts the run
};

/// Draw the next event from the superposition of bond clocks. Returns
/// nullopt in an absorbing state (total rate zero).
inline std::optional<JumpEvent> propose_jump(const Configuration& c, const BondRateIndex& index,
                                             RngStream& rng) {
  const double R = index.total();
  if (!(R > 0.0)) return std::nullopt;
  JumpEvent ev;
  ev.time_increment = rng.exponential(R);
  const std::size_t b = index.find(rng.uniform() * R);
  const BondRates& r = index.rates(b);
  ev.bond = static_cast<int>(b) - c.L;
  ev.direction = rng.uniform() * r.total() < r.plus ? +1 : -1;
  return ev;
}

/// Move one particle across the event's bond, update the flow counter and
/// refresh the rates of the three bonds touching the two changed sites.
inline void apply_jump(Configuration& c, BondRateIndex& index, const RateEvaluator& eval,
                       const JumpEvent& ev, const StepOptions& opt = {}) {
  const int b = ev.bond + c.L;
  const auto left = static_cast<std::size_t>(b);
  const auto right = static_cast<std::size_t>(c.right_of(b));
  const std::size_t from = ev.direction > 0 ? left : right;
  const std::size_t to = ev.direction > 0 ? right : left;
  if (c.occupancy[from] <= 0) throw std::logic_error("jump from an empty site");
  --c.occupancy[from];
  ++c.occupancy[to];
  if (c.model == Model::asep) {
    assert(c.occupancy[to] <= eval.params().twice_spin);
  } else if (c.occupancy[to] >= opt.asip_cap) {
    throw BudgetError("ASIP occupancy reached the cap " + std::to_string(opt.asip_cap) +
                      " at site " + std::to_string(static_cast<int>(to) - c.L));
  }
  if (ev.bond == 0) c.flow -= ev.direction;
  c.time += ev.time_increment;
  ++c.jumps;
  const int n = c.num_bonds();
  for (int k = -1; k <= 1; ++k) {
    int nb = b + k;
    if (c.boundary == Boundary::periodic) nb = (nb + n) % n;
    else if (nb < 0 || nb >= n) continue;
    index.set(static_cast<std::size_t>(nb), eval(c.occupancy[nb], c.occupancy[c.right_of(nb)]));
  }
}

/// One Gillespie step: draw, apply, return the event (nullopt if absorbing).
inline std::optional<JumpEvent> step(Configuration& c, BondRateIndex& index,
                                     const RateEvaluator& eval, RngStream& rng,
                                     const StepOptions& opt = {}) {
  auto ev = propose_jump(c, index, rng);
  if (ev) apply_jump(c, index, eval, *ev, opt);
  return ev;
}

/// Uniformized sampler for ASEP. Every bond carries a Poisson clock of rate
/// Lambda = max over local states of c+ + c-; at a ring the jump is right with
/// probability c+/Lambda, left with c-/Lambda, otherwise nothing happens.
/// This samples the same Markov chain as the Gillespie engine without any
/// logarithm per event. Acceptance thresholds are held as 32-bit fractions,
/// so each rate is represented to within 2^-33 * Lambda.
class UniformizedSampler {
public:
  UniformizedSampler(const Configuration& c, const QParameters& p)
      : L_(c.L), boundary_(c.boundary), flow_(c.flow), time_(c.time), jumps_(c.jumps) {
    if (p.model != Model::asep) throw DomainError("uniformized sampler requires ASEP");
    stride_ = p.twice_spin + 1;
    occ_.assign(c.occupancy.begin(), c.occupancy.end());
    std::vector<BondRates> tab(static_cast<std::size_t>(stride_ * stride_));
    lambda_ = 0.0;
    for (int a = 0; a < stride_; ++a)
      for (int b = 0; b < stride_; ++b) {
        tab[a * stride_ + b] = asep_pair_rates(a, b, p);
        lambda_ = std::max(lambda_, tab[a * stride_ + b].total());
      }
    th_plus_.resize(tab.size());
    th_total_.resize(tab.size());
    for (std::size_t s = 0; s < tab.size(); ++s) {
      th_plus_[s] = static_cast<std::uint64_t>(std::llround(tab[s].plus / lambda_ * 0x1.0p32));
      th_total_[s] =
          static_cast<std::uint64_t>(std::llround(tab[s].total() / lambda_ * 0x1.0p32));
    }
  }

  double bond_clock_rate() const { return lambda_; }
  double time() const { return time_; }
  std::uint64_t jumps() const { return jumps_; }
  std::int64_t flow() const { return flow_; }

  /// Run the dynamics up to absolute time t (>= current time).
  void advance_to(double t, RngStream& rng) {
    if (t <= time_) return;
    const auto nbonds = static_cast<std::uint64_t>(2 * L_);
    if (nbonds == 0) {
      time_ = t;
      return;
    }
    std::uint64_t proposals = rng.poisson(static_cast<double>(nbonds) * lambda_ * (t - time_));
    const auto bond0 = static_cast<std::uint64_t>(L_);
    const auto nsites = static_cast<std::uint64_t>(occ_.size());
    std::uint8_t* occ = occ_.data();
    const std::uint64_t* tp = th_plus_.data();
    const std::uint64_t* tt = th_total_.data();
    const auto stride = static_cast<unsigned>(stride_);
    const std::uint64_t t32 = (0x100000000ULL - nbonds) % nbonds;
    std::int64_t flow = flow_;
    std::uint64_t jumps = jumps_;
    while (proposals-- > 0) {
      const std::uint64_t r = rng.next();
      const std::uint64_t u = r & 0xffffffffULL;
      std::uint64_t m = (r >> 32) * nbonds;
      // Lemire's unbiased reduction of the high half; the low half stays
      // independent of the accepted bond.
      if ((m & 0xffffffffULL) < nbonds)
        while ((m & 0xffffffffULL) < t32) m = (rng.next() >> 32) * nbonds;
      const std::uint64_t b = m >> 32;
      const std::uint64_t b1 = b + 1 == nsites ? 0 : b + 1;
      const unsigned s = occ[b] * stride + occ[b1];
      const int right = u < tp[s];
      const int left = (u >= tp[s]) & (u < tt[s]);
      const int d = right - left;
      occ[b] = static_cast<std::uint8_t>(occ[b] - d);
      occ[b1] = static_cast<std::uint8_t>(occ[b1] + d);
      flow -= (b == bond0) ? d : 0;
      jumps += static_cast<std::uint64_t>(d != 0);
    }
    flow_ = flow;
    jumps_ = jumps;
    time_ = t;
  }

  void write_to(Configuration& c) const {
    c.L = L_;
    c.boundary = boundary_;
    c.occupancy.assign(occ_.begin(), occ_.end());
    c.flow = flow_;
    c.time = time_;
    c.jumps = jumps_;
  }

  std::span<const std::uint8_t> occupancy() const { return occ_; }

private:
  int L_ = 0;
  Boundary boundary_ = Boundary::closed;
  int stride_ = 0;
  std::vector<std::uint8_t> occ_;
  std::vector<std::uint64_t> th_plus_, th_total_;
  double lambda_ = 0.0;
  std::int64_t flow_ = 0;
  double time_ = 0.0;
  std::uint64_t jumps_ = 0;
};

enum class Engine { gillespie, uniformized };

struct SimOptions {
  Engine engine = Engine::gillespie;
  std::uint64_t max_jumps = std::numeric_limits<std::uint64_t>::max();
  int asip_cap = 64;
};

struct Trajectory {
  QParameters params;
  std::vector<Configuration> snapshots; // one per requested sample time
  std::uint64_t jump_count = 0;
  double wall_seconds = 0.0; // metadata only; never written to artifacts
};

/// Run from `c` (modified in place) to t_end, recording the state at each
/// sample time. The state at t is the state after the last jump at or before t.
inline Trajectory simulate_until(Configuration& c, const QParameters& p, double t_end,
                                 std::span<const double> sample_times, RngStream& rng,
                                 const SimOptions& opt = {}) {
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] > t_end || sample_times[i] < c.time)
      throw DomainError("sample times must lie in [t0, t_end]");
    if (i > 0 && sample_times[i] < sample_times[i - 1])
      throw DomainError("sample times must be sorted");
  }
  const auto start = std::chrono::steady_clock::now();
  Trajectory traj;
  traj.params = p;
  const std::uint64_t jumps0 = c.jumps;
  auto budget_check = [&](std::uint64_t jumps) {
    if (jumps - jumps0 > opt.max_jumps) throw BudgetError("jump budget exceeded");
  };

  if (opt.engine == Engine::uniformized) {
    UniformizedSampler sampler(c, p);
    for (double ts : sample_times) {
      sampler.advance_to(ts, rng);
      budget_check(sampler.jumps());
      sampler.write_to(c);
      traj.snapshots.push_back(c);
      traj.snapshots.back().time = ts;
    }
    sampler.advance_to(t_end, rng);
    budget_check(sampler.jumps());
    sampler.write_to(c);
    c.time = t_end;
  } else {
    const RateEvaluator eval(p);
    BondRateIndex index = build_rate_index(c, eval);
    const StepOptions sopt{opt.asip_cap};
    std::size_t next = 0;
    for (;;) {
      auto ev = propose_jump(c, index, rng);
      const double t_next = ev ? c.time + ev->time_increment : INFINITY;
      while (next < sample_times.size() && sample_times[next] < t_next) {
        traj.snapshots.push_back(c);
        traj.snapshots.back().time = sample_times[next];
        ++next;
      }
      if (t_next > t_end) break;
      apply_jump(c, index, eval, *ev, sopt);
      budget_check(c.jumps);
    }
    c.time = t_end;
  }
  traj.jump_count = c.jumps - jumps0;
  traj.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return traj;
}

enum class InitialKind { step, flat_pairing, bernoulli_product, custom };

inline InitialKind initial_kind_from_string(const std::string& s) {
  if (s == "step") return InitialKind::step;
  if (s == "flat" || s == "flat_pairing") return InitialKind::flat_pairing;
  if (s == "bernoulli" || s == "bernoulli_product") return InitialKind::bernoulli_product;
  if (s == "custom") return InitialKind::custom;
  throw DomainError("unknown initial condition '" + s + "'");
}

inline std::string to_string(InitialKind k) {
  switch (k) {
  case InitialKind::step: return "step";
  case InitialKind::flat_pairing: return "flat_pairing";
  case InitialKind::bernoulli_product: return "bernoulli_product";
  case InitialKind::custom: return "custom";
  }
  return "?";
}

/// Occupation count of the deterministic initial profiles at any x in Z.
/// flat_pairing: eta = 0 for integer j; for half-odd j, eta = +1/2 on even
/// and -1/2 on odd sites, so |h_0| <= 1/2. ASIP: count 0 everywhere.
inline int deterministic_count(InitialKind kind, const QParameters& p, long x) {
  if (p.model == Model::asip) {
    if (kind == InitialKind::flat_pairing) return 0;
    throw DomainError("ASIP supports only flat, bernoulli and custom initial data");
  }
  const int tj = p.twice_spin;
  switch (kind) {
  case InitialKind::step: return x <= 0 ? tj : 0;
  case InitialKind::flat_pairing:
    if (tj % 2 == 0) return tj / 2;
    return (x % 2 == 0) ? (tj + 1) / 2 : (tj - 1) / 2;
  default: throw DomainError("initial condition is not deterministic");
  }
}

inline Configuration initial_condition(InitialKind kind, int L, const QParameters& p,
                                       RngStream* rng = nullptr,
                                       std::span<const std::int32_t> custom = {},
                                       Boundary boundary = Boundary::closed) {
  if (L < 1) throw DomainError("lattice half-width L must be >= 1");
  if (kind == InitialKind::step && boundary == Boundary::periodic)
    throw DomainError("step initial data needs the closed segment");
  Configuration c;
  c.model = p.model;
  c.boundary = boundary;
  c.L = L;
  c.occupancy.resize(static_cast<std::size_t>(c.num_sites()));
  switch (kind) {
  case InitialKind::step:
  case InitialKind::flat_pairing:
    for (int x = -L; x <= c.last_site(); ++x) c.occupancy[x + L] = deterministic_count(kind, p, x);
    break;
  case InitialKind::bernoulli_product: {
    if (!rng) throw DomainError("bernoulli_product needs a random stream");
    const std::uint64_t levels = p.model == Model::asep ? p.twice_spin + 1 : 2;
    for (auto& o : c.occupancy) o = static_cast<std::int32_t>(rng->below(levels));
    break;
  }
  case InitialKind::custom:
    if (custom.size() != c.occupancy.size())
      throw DomainError("custom profile must have one entry per site");
    for (std::size_t i = 0; i < custom.size(); ++i) {
      if (custom[i] < 0 || (p.model == Model::asep && custom[i] > p.twice_spin))
        throw DomainError("custom occupation out of range");
      c.occupancy[i] = custom[i];
    }
    break;
  }
  return c;
}

} // namespace qkpz
