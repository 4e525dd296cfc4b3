// qkpz command-line front end: verify, simulate, kernel, she, experiment.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "qkpz/harness.hpp"

using namespace qkpz;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kFailed = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

QParameters make_params(const std::string& model, double spin, std::optional<double> q,
                        std::optional<double> eps) {
  const Model m = model_from_string(model);
  if (q && eps) throw UsageError("give --q or --eps, not both");
  if (eps) return weak_asymmetry(*eps, spin, m).first;
  const double qq = q.value_or(0.9);
  if (m == Model::asip) return QParameters::asip(spin, qq);
  const auto twice = static_cast<int>(std::lround(2.0 * spin));
  if (std::abs(2.0 * spin - twice) > 1e-12) throw UsageError("ASEP needs j in {1/2, 1, 3/2, ...}");
  return QParameters::asep(twice, qq);
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_file(out, text);
}

// --------------------------------------------------------------------------

struct VerifyArgs {
  std::string model = "asep";
  double spin = 0.5;
  std::vector<double> qs{0.3, 0.6, 0.9, 0.99};
  std::string cases = "exhaustive";
  std::string identity = "all";
  double tol = 1e-12;
  std::uint64_t seed = 1;
  std::string out;
};

int run_verify(const VerifyArgs& a) {
  std::size_t n = 0;
  if (a.cases != "exhaustive") {
    try {
      n = std::stoull(a.cases);
    } catch (const std::exception&) {
      throw UsageError("--cases takes 'exhaustive' or a count");
    }
    if (n == 0) throw UsageError("--cases count must be positive");
  }
  if (a.cases == "exhaustive" && a.model == "asip") n = 10000;
  json reports = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.qs.size(); ++i) {
    const QParameters p = make_params(a.model, a.spin, a.qs[i], std::nullopt);
    RngStream rng(a.seed, i);
    std::vector<IdentityReport> reps;
    if (a.identity == "drift" || a.identity == "all") reps.push_back(verify_drift_identity(p, n, rng));
    if (a.identity == "bracket" || a.identity == "all") reps.push_back(verify_bracket_exact(p, n, rng));
    if (a.identity == "gradient" || a.identity == "all") {
      IdentityReport g;
      g.identity = "gradient";
      g.params = params_json(p);
      const std::size_t snaps = n ? n : 1000;
      for (std::size_t k = 0; k < snaps; ++k) {
        const Configuration c = initial_condition(InitialKind::bernoulli_product, 16, p, &rng);
        const GradientCheck gc = check_gradient_identities(c, p);
        g.record(gc.max_rel_residual, gc.max_rel_residual);
      }
      reps.push_back(g);
    }
    if (reps.empty()) throw UsageError("unknown --identity '" + a.identity + "'");
    for (const auto& r : reps) {
      worst = std::max(worst, r.max_rel_residual);
      reports.push_back(r.to_json());
    }
  }
  json out{{"reports", reports}, {"tolerance", a.tol}, {"max_rel_residual", worst}, {"passed", worst <= a.tol}};
  emit(out.dump(2) + "\n", a.out);
  return worst <= a.tol ? kOk : kFailed;
}

// --------------------------------------------------------------------------

struct SimulateArgs {
  std::string model = "asep";
  double spin = 0.5;
  std::optional<double> q, eps;
  int L = 50;
  std::string boundary = "closed";
  std::string ic = "step";
  double t_end = 10.0;
  int samples = 10;
  std::uint64_t seed = 1, stream = 0;
  std::string engine = "gillespie";
  std::string format = "csv";
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  const QParameters p = make_params(a.model, a.spin, a.q, a.eps);
  if (a.samples < 1) throw UsageError("--samples must be >= 1");
  RngStream rng(a.seed, a.stream);
  Configuration c = initial_condition(initial_kind_from_string(a.ic), a.L, p, &rng, {}, boundary_from_string(a.boundary));
  std::vector<double> times;
  for (int k = 0; k <= a.samples; ++k) times.push_back(a.t_end * k / a.samples);
  SimOptions opt;
  if (a.engine == "uniformized") opt.engine = Engine::uniformized;
  else if (a.engine != "gillespie") throw UsageError("--engine takes gillespie or uniformized");
  const Trajectory tr = simulate_until(c, p, a.t_end, times, rng, opt);
  if (a.format == "csv") emit(trajectory_csv(tr), a.out);
  else if (a.format == "binary") {
    if (a.out.empty() || a.out == "-") throw UsageError("binary output needs --out FILE");
    write_file(a.out, encode_frames(tr, a.seed, a.stream));
  } else throw UsageError("--format takes csv or binary");
  return kOk;
}

// --------------------------------------------------------------------------

struct KernelArgs {
  std::vector<double> times{1.0};
  long x_max = 0;
  std::string identity;
  double T = 1e3;
  double s = 0.0, sp = 0.0;
  std::vector<long> y{0}, yp{0};
  double T_max = 2e4;
  std::string out;
};

int run_kernel(const KernelArgs& a) {
  if (a.identity.empty()) {
    std::string csv = "t,x,p\n";
    for (double t : a.times) {
      const HeatKernelTable k = heat_kernel(t, a.x_max);
      const long xm = a.x_max > 0 ? a.x_max : k.x_max;
      for (long x = -xm; x <= xm; ++x) csv += fmt(t) + "," + std::to_string(x) + "," + fmt(k.at(x)) + "\n";
    }
    emit(csv, a.out);
    return kOk;
  }
  json j;
  if (a.identity == "zero") {
    const auto r = identity_zero(a.T);
    j = {{"identity", "zero"}, {"T", a.T}, {"value", r.value}, {"error_estimate", r.error_estimate}};
  } else if (a.identity == "one") {
    const auto r = identity_one(a.T);
    j = {{"identity", "one"}, {"T", a.T}, {"truncated", r.truncated}, {"tail", r.tail}, {"total", r.total()},
         {"passed", r.total() < 1.0}};
  } else if (a.identity == "general") {
    if (a.y.size() != a.yp.size()) throw UsageError("--y and --yp need the same dimension");
    const int d = static_cast<int>(a.y.size());
    const auto r = identity_general(a.s, a.sp, a.y, a.yp, d, a.T_max);
    j = {{"identity", "general"}, {"d", d}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"truncated", r.truncated},
         {"tail", r.tail}, {"quad_error", r.quad_error}, {"abs_residual", std::abs(r.lhs - r.rhs)}};
  } else {
    throw UsageError("--identity takes zero, one or general");
  }
  emit(j.dump(2) + "\n", a.out);
  return kOk;
}

// --------------------------------------------------------------------------

struct SheArgs {
  std::string ic = "flat";
  double dx = 0.05;
  double x_max = 6.0;
  std::string boundary = "dirichlet";
  double T = 0.5;
  int samples = 1;
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::string out;
};

int run_she(const SheArgs& a) {
  if (a.n < 2) throw UsageError("--n must be >= 2");
  SheConfig sc;
  sc.dx = a.dx;
  sc.x_max = a.x_max;
  if (a.boundary == "periodic") sc.boundary = SheBoundary::periodic;
  else if (a.boundary != "dirichlet") throw UsageError("--boundary takes dirichlet or periodic");
  std::vector<double> times;
  for (int k = 1; k <= a.samples; ++k) times.push_back(a.T * k / a.samples);
  const SheInitial ic = she_initial_from_string(a.ic);
  auto runs = run_ensemble(a.n, 1, [&](std::size_t r) {
    RngStream rng(a.seed, r);
    SHEGrid g = make_she_grid(sc, ic);
    return she_solve(g, times, rng);
  });
  const SHEGrid shape = make_she_grid(sc, ic);
  std::string csv = "T,X,mean,variance,stderr\n";
  std::vector<double> col(a.n);
  for (std::size_t k = 0; k < times.size(); ++k)
    for (std::size_t i = 0; i < shape.X.size(); ++i) {
      for (std::size_t r = 0; r < a.n; ++r) col[r] = runs[r][k].Z[i];
      const Summary s = summarize(col);
      csv += fmt(times[k]) + "," + fmt(shape.X[i]) + "," + fmt(s.mean) + "," + fmt(s.variance) + "," +
             fmt(s.stderr_mean) + "\n";
    }
  emit(csv, a.out);
  return kOk;
}

// --------------------------------------------------------------------------

struct ExperimentArgs {
  std::string preset = "custom";
  std::string config;
  std::vector<double> eps;
  std::optional<std::size_t> n, she_n;
  std::optional<std::uint64_t> seed;
  std::optional<int> L;
  std::optional<double> T;
  std::string out;
  unsigned threads = 1;
  bool print_config = false;
};

int run_experiment_cmd(const ExperimentArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? preset_config(a.preset) : ExperimentConfig::from_text(read_file(a.config));
  if (!a.config.empty() && a.preset != "custom") cfg.preset = a.preset;
  if (!a.eps.empty()) cfg.eps = a.eps;
  if (a.n) cfg.replicas = *a.n;
  if (a.she_n) cfg.she_replicas = *a.she_n;
  if (a.seed) cfg.seed = *a.seed;
  if (a.L) cfg.L = *a.L;
  if (a.T) {
    cfg.T_bar = *a.T;
    cfg.times = {*a.T};
  }
  if (!a.out.empty()) cfg.output_dir = a.out;
  else if (a.config.empty()) cfg.output_dir = "qkpz-out/" + cfg.preset;
  validate(cfg);
  if (a.print_config) {
    std::cout << cfg.to_text();
    return kOk;
  }
  const Artifacts art = run_experiment(cfg, a.threads);
  write_artifacts(cfg, art);
  std::cout << "wrote " << art.files.size() + 2 << " files to " << cfg.output_dir << "\n";
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"q-deformed exclusion/inclusion processes, Gartner transform and SHE comparison"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "check drift, bracket and gradient identities; JSON report");
  verify->add_option("--model", va.model, "asep or asip")->check(CLI::IsMember({"asep", "asip"}));
  verify->add_option("--j,--k", va.spin, "spin j (ASEP) or k (ASIP)");
  verify->add_option("--q", va.qs, "asymmetry values (comma separated)")->delimiter(',');
  verify->add_option("--cases", va.cases, "exhaustive or a sample count");
  verify->add_option("--identity", va.identity, "drift, bracket, gradient or all");
  verify->add_option("--tol", va.tol, "relative tolerance");
  verify->add_option("--seed", va.seed);
  verify->add_option("--out", va.out, "output file (default stdout)");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "run one trajectory; CSV or QKPZ1 frames");
  sim->add_option("--model", sa.model)->check(CLI::IsMember({"asep", "asip"}));
  sim->add_option("--j,--k", sa.spin);
  sim->add_option("--q", sa.q);
  sim->add_option("--eps", sa.eps, "weak asymmetry: q = exp(-sqrt(eps))");
  sim->add_option("--L", sa.L, "lattice half-length");
  sim->add_option("--boundary", sa.boundary)->check(CLI::IsMember({"closed", "periodic"}));
  sim->add_option("--ic", sa.ic, "step, flat, bernoulli");
  sim->add_option("--t-end", sa.t_end);
  sim->add_option("--samples", sa.samples, "number of equally spaced snapshots after t = 0");
  sim->add_option("--seed", sa.seed);
  sim->add_option("--stream", sa.stream);
  sim->add_option("--engine", sa.engine, "gillespie or uniformized");
  sim->add_option("--format", sa.format, "csv or binary");
  sim->add_option("--out", sa.out);

  KernelArgs ka;
  auto* ker = app.add_subcommand("kernel", "heat kernel tables and kernel identities");
  ker->add_option("--t", ka.times, "times (comma separated)")->delimiter(',');
  ker->add_option("--x-max", ka.x_max);
  ker->add_option("--identity", ka.identity, "zero, one or general");
  ker->add_option("--T", ka.T, "upper time for the zero/one identities");
  ker->add_option("--s", ka.s);
  ker->add_option("--sp", ka.sp);
  ker->add_option("--y", ka.y)->delimiter(',');
  ker->add_option("--yp", ka.yp)->delimiter(',');
  ker->add_option("--T-max", ka.T_max);
  ker->add_option("--out", ka.out);

  SheArgs ha;
  auto* she = app.add_subcommand("she", "stochastic heat equation ensemble; CSV T,X,mean,variance,stderr");
  she->add_option("--ic", ha.ic, "flat or delta")->check(CLI::IsMember({"flat", "delta"}));
  she->add_option("--dx", ha.dx);
  she->add_option("--x-max", ha.x_max);
  she->add_option("--boundary", ha.boundary);
  she->add_option("--T", ha.T);
  she->add_option("--samples", ha.samples);
  she->add_option("--n", ha.n, "replicas");
  she->add_option("--seed", ha.seed);
  she->add_option("--out", ha.out);

  ExperimentArgs ea;
  auto* exp = app.add_subcommand("experiment", "Monte Carlo experiments; CSV, JSON and MANIFEST");
  exp->add_option("--preset", ea.preset, "mean, convergence, step-convergence, moments, martingale");
  exp->add_option("--config", ea.config, "key = value config file");
  exp->add_option("--eps", ea.eps)->delimiter(',');
  exp->add_option("--n", ea.n, "replicas");
  exp->add_option("--she-n", ea.she_n, "SHE replicas");
  exp->add_option("--seed", ea.seed);
  exp->add_option("--L", ea.L);
  exp->add_option("--T", ea.T, "macroscopic observation time");
  exp->add_option("--out", ea.out, "output directory");
  exp->add_option("--threads", ea.threads);
  exp->add_flag("--print-config", ea.print_config, "print the resolved config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*verify) return run_verify(va);
    if (*sim) return run_simulate(sa);
    if (*ker) return run_kernel(ka);
    if (*she) return run_she(ha);
    if (*exp) return run_experiment_cmd(ea);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
