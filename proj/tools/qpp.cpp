#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "qpp/qpp.hpp"
#include "qpp/scenario.hpp"

namespace fs = std::filesystem;
using namespace qpp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 3;

struct Options {
  std::string out_dir = ".";
  bool quiet = false;
  std::string config;
  std::string csv;
  std::string hamiltonian;
  long grid = 0;
  long samples = 0;
};

unsigned thread_count() {
  const char* env = std::getenv("QPP_NUM_THREADS");
  if (env && *env) {
    long n = 0;
    std::string s(env);
    auto r = std::from_chars(s.data(), s.data() + s.size(), n);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || n < 1)
      throw ConfigError("QPP_NUM_THREADS: expected a positive integer, got '" + s + "'");
    return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

struct KeyValues {
  std::vector<std::pair<std::string, std::string>> items;
  void add(const std::string& k, const std::string& v) { items.emplace_back(k, v); }
  void add(const std::string& k, double v) { items.emplace_back(k, io::num(v)); }
  std::string text() const {
    std::string s;
    for (const auto& [k, v] : items) s += k + "=" + v + "\n";
    return s;
  }
};

void require_run_inputs(const Scenario& s) {
  if (!s.property) throw ConfigError(s.source + ":0: missing required key 'property.kind'");
  if (!s.initial) throw ConfigError(s.source + ":0: missing required key 'initial.bloch'");
}

std::string trajectory_csv(const SimulationResult& r) {
  std::ostringstream os;
  const bool qubit = r.dim == 2;
  if (qubit) {
    os << "t,vx,vy,vz,f,purity,hx,hy,hz,hnorm\n";
  } else {
    os << "t";
    for (int j = 1; j <= r.dim * r.dim - 1; ++j) os << ",v" << j;
    os << ",f,purity,hnorm\n";
  }
  for (const auto& smp : r.samples) {
    os << io::num(smp.t) << ',' << io::join(smp.v) << ',' << io::num(smp.f) << ',' << io::num(smp.purity) << ',';
    if (qubit) os << io::join(smp.control.h) << ',';
    os << io::num(smp.control.norm()) << '\n';
  }
  return os.str();
}

KeyValues run_summary(const std::string& command, const Scenario& s, const SimulationResult& r, double wall) {
  KeyValues kv;
  auto pred = analytic_prediction(s, *s.initial);
  double t_sim = r.termination == Termination::Breakdown ? r.t_event : std::numeric_limits<double>::infinity();
  kv.add("command", command);
  kv.add("channel", to_string(s.spec.kind));
  kv.add("property", s.property_kind);
  kv.add("policy", to_string(s.policy.mode));
  kv.add("termination", to_string(r.termination));
  if (!r.reason.empty()) kv.add("reason", r.reason);
  kv.add("t_end", r.samples.back().t);
  kv.add("t_b_simulated", t_sim);
  if (pred) {
    kv.add("t_b_analytic", pred->t_b);
    kv.add("formula_id", pred->formula_id);
    kv.add("reachability", to_string(pred->reachability));
    if (pred->finite() && std::isfinite(t_sim))
      kv.add("relative_gap", std::abs(t_sim - pred->t_b) / pred->t_b);
    else
      kv.add("relative_gap", "n/a");
  } else {
    kv.add("t_b_analytic", "n/a");
    kv.add("formula_id", "n/a");
    kv.add("reachability", "n/a");
    kv.add("relative_gap", "n/a");
  }
  kv.add("max_f_drift", r.max_f_drift());
  kv.add("max_constraint_residual", r.max_constraint_residual);
  kv.add("h_max", r.h_max);
  kv.add("final_state", io::join(r.final().v));
  kv.add("samples", std::to_string(r.samples.size()));
  kv.add("wall_time_s", wall);
  return kv;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_run(const Options& o, bool with_trajectory) {
  auto t0 = std::chrono::steady_clock::now();
  Scenario s = load_scenario(o.config);
  require_run_inputs(s);
  SimulationResult r = simulate_tracked(*s.property, s.D, *s.initial, s.policy, s.integrator);
  KeyValues kv = run_summary(with_trajectory ? "simulate" : "breakdown", s, r, seconds_since(t0));
  if (with_trajectory) io::write_atomic(fs::path(o.out_dir) / s.out_trajectory, trajectory_csv(r));
  io::write_atomic(fs::path(o.out_dir) / s.out_summary, kv.text());
  if (!o.quiet) std::cout << kv.text();
  return kExitOk;
}

std::string reachability_label(const Scenario& s, const StateVector& sv) {
  if (!s.qubit() || !s.property) return "n/a";
  try {
    if (s.property_kind == "coherence") {
      if (s.policy.mode == PolicyMode::Alpha2Steering)
        return coherence_stable_reachability(s.spec, sv).reachable ? "stable_reachable" : "finite_breakdown";
      return to_string(tb_coherence(s.spec, sv).reachability);
    }
    if (s.property_kind == "fidelity") {
      Vec3 w = to_vec3(*s.property->reference);
      if (std::abs(w.norm() - 1.0) <= 1e-12) return to_string(tb_fidelity(s.spec, sv, w).reachability);
    }
  } catch (const Error&) {
  }
  return "n/a";
}

int cmd_landscape(const Options& o) {
  Scenario s = load_scenario(o.config);
  if (!s.qubit()) throw ConfigError(s.source + ":0: landscape is defined for qubits (system.dim=2)");
  long n = o.grid > 0 ? o.grid : s.grid;
  if (n < 2) throw ConfigError("--grid: must be >= 2");
  if (static_cast<double>(n) * n * n > 1e6) throw ConfigError("--grid: " + std::to_string(n) + "^3 exceeds 1e6 points");
  unsigned threads = thread_count();

  const double step = 2.0 / static_cast<double>(n - 1);
  std::vector<Vec3> pts;
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      for (long k = 0; k < n; ++k) {
        Vec3 v(-1.0 + step * i, -1.0 + step * j, -1.0 + step * k);
        if (v.norm() <= 1.0 + 1e-12) pts.push_back(v);
      }

  std::optional<double> f0;
  if (s.property && s.initial) f0 = s.property->eval(s.initial->as(s.property->convention).coords);
  const Mat3 R = s.D.R;
  const Vec3 c = to_vec3(s.D.c);

  std::vector<std::string> rows(pts.size());
  parallel_for(pts.size(), threads, [&](std::size_t idx) {
    const Vec3& v = pts[idx];
    Vec vv = v;
    double pd = v.dot(R * v + c);
    double band = s.stable_band >= 0 ? s.stable_band : 0.25 * step * ((R + R.transpose()) * v + c).norm();
    bool stable = std::abs(pd) <= band;
    bool brk = false, level = false;
    StateVector sv = StateVector::bloch(vv);
    if (s.property) {
      Vec fv = sv.as(s.property->convention).coords;
      if (s.property->domain_ok(fv)) {
        try {
          brk = breakdown_membership(*s.property, s.D, sv);
          if (f0) {
            double lb = s.level_band >= 0 ? s.level_band : 0.5 * step * s.property->grad(fv).norm();
            level = std::abs(s.property->eval(fv) - *f0) <= lb;
          }
        } catch (const Error&) {
        }
      }
    }
    rows[idx] = io::join(vv) + ',' + (stable ? "1" : "0") + ',' + (brk ? "1" : "0") + ',' + (level ? "1" : "0") +
                ',' + reachability_label(s, sv) + '\n';
  });

  std::string out = "vx,vy,vz,stable,breakdown,on_level_set,reachability\n";
  for (const auto& r : rows) out += r;
  io::write_atomic(fs::path(o.out_dir) / s.out_landscape, out);
  if (!o.quiet) std::cout << "points=" << pts.size() << "\nlocus=" << to_string(stable_locus(s.D).kind) << "\n";
  return kExitOk;
}

CMat random_density(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  CMat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = cplx(nd(rng), nd(rng));
  CMat rho = g * g.adjoint();
  return rho / rho.trace().real();
}

int cmd_classify(const Options& o) {
  Scenario s = load_scenario(o.config);
  if (!s.property) throw ConfigError(s.source + ":0: missing required key 'property.kind'");
  long n = o.samples > 0 ? o.samples : s.samples;
  if (n > 10000000) throw ConfigError("--samples: at most 1e7");
  unsigned threads = thread_count();

  // States are drawn up front so the output does not depend on the thread count.
  std::mt19937_64 rng(s.seed);
  OperatorBasis basis = build_nice_basis(s.dim);
  std::vector<StateVector> states;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (static_cast<long>(states.size()) < n) {
    if (s.qubit()) {
      Vec3 v(u(rng), u(rng), u(rng));
      if (v.norm() <= 1.0) states.push_back(StateVector::bloch(Vec(v)));
    } else {
      states.push_back(to_state_vector(random_density(s.dim, rng), basis, Convention::Coherence));
    }
  }

  std::vector<PropertyClass> cls(states.size());
  std::vector<char> stable(states.size(), 0);
  std::vector<std::string> err(states.size());
  auto terms = s.spec.lindblad_terms();
  parallel_for(states.size(), threads, [&](std::size_t i) {
    const StateVector& sv = states[i];
    try {
      if (s.qubit()) {
        cls[i] = classify_at(*s.property, s.D, sv, s.classify_tol);
        stable[i] = is_stable_point(s.D, sv);
      } else {
        CMat rho = density_unchecked(sv, basis);
        cls[i] = classify_general(gradient_operator(*s.property, sv, basis), terms, rho, s.classify_tol);
        stable[i] = is_stable_point(terms, rho);
      }
    } catch (const Error& e) {
      err[i] = e.what();
    }
  });

  std::ostringstream os;
  if (s.qubit()) {
    os << "vx,vy,vz";
  } else {
    for (int j = 1; j <= s.dim * s.dim - 1; ++j) os << (j > 1 ? "," : "") << 'v' << j;
  }
  os << ",class,alignment,collinearity,stable\n";
  long counts[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < states.size(); ++i) {
    os << io::join(states[i].coords) << ',';
    if (!err[i].empty()) {
      ++counts[3];
      os << "undefined,nan,nan," << int(stable[i]) << '\n';
      continue;
    }
    ++counts[static_cast<int>(cls[i].kind)];
    os << to_string(cls[i].kind) << ',' << io::num(cls[i].alignment) << ',' << io::num(cls[i].collinearity) << ','
       << int(stable[i]) << '\n';
  }
  KeyValues kv;
  kv.add("command", "classify");
  kv.add("samples", std::to_string(states.size()));
  kv.add("trivially_controllable", std::to_string(counts[0]));
  kv.add("uncontrollable", std::to_string(counts[1]));
  kv.add("controllable", std::to_string(counts[2]));
  kv.add("undefined", std::to_string(counts[3]));
  io::write_atomic(fs::path(o.out_dir) / s.out_classify, os.str());
  io::write_atomic(fs::path(o.out_dir) / s.out_summary, kv.text());
  if (!o.quiet) std::cout << kv.text();
  return kExitOk;
}

ParamTrajectory read_path_csv(const std::string& path, int dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path + ":0: cannot open trajectory");
  std::string expect = "u";
  const int J = dim * dim - 1;
  if (dim == 2) {
    expect += ",vx,vy,vz";
  } else {
    for (int j = 1; j <= J; ++j) expect += ",v" + std::to_string(j);
  }
  ParamTrajectory l;
  l.dim = dim;
  l.convention = dim == 2 ? Convention::Bloch : Convention::Coherence;
  std::string line;
  int ln = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line != expect) throw ConfigError(path + ":" + std::to_string(ln) + ": expected header '" + expect + "'");
      header = true;
      continue;
    }
    if (io::trim(line).empty()) continue;
    auto parts = io::split(line, ',');
    if (static_cast<int>(parts.size()) != J + 1)
      throw ConfigError(path + ":" + std::to_string(ln) + ": expected " + std::to_string(J + 1) + " fields");
    Vec v(J);
    double u = 0;
    bool ok = io::parse_double(parts[0], u) && std::isfinite(u);
    for (int j = 0; ok && j < J; ++j) ok = io::parse_double(parts[j + 1], v(j)) && std::isfinite(v(j));
    if (!ok) throw ConfigError(path + ":" + std::to_string(ln) + ": bad number");
    if (!l.u.empty() && !(u > l.u.back()))
      throw ConfigError(path + ":" + std::to_string(ln) + ": u must be strictly increasing");
    l.u.push_back(u);
    l.states.push_back(v);
  }
  if (!header) throw ConfigError(path + ":1: empty trajectory file");
  if (l.u.size() < 2) throw ConfigError(path + ":" + std::to_string(ln) + ": need at least two rows");
  return l;
}

int cmd_check(const Options& o) {
  Scenario s = load_scenario(o.config);
  ParamTrajectory l = read_path_csv(o.csv, s.dim);
  if (!o.hamiltonian.empty() && !s.qubit())
    throw ConfigError("--hamiltonian: Hamiltonian export is available for qubits only");

  RealizabilityOptions opt;
  if (s.property) opt.property = &*s.property;
  RealizabilityReport rep = check_realizability(l, s.D, opt);

  KeyValues kv;
  kv.add("command", "check-trajectory");
  kv.add("realizable", rep.realizable ? "1" : "0");
  kv.add("asymptotic_endpoint", rep.asymptotic_endpoint ? "1" : "0");
  if (rep.first_violation) {
    kv.add("first_violation_u", rep.first_violation->u);
    kv.add("first_violation_reason", to_string(rep.first_violation->reason));
  } else {
    kv.add("first_violation_u", "none");
    kv.add("first_violation_reason", "none");
  }
  double cmin = std::numeric_limits<double>::infinity();
  for (const auto& [u, cv] : rep.c_samples)
    if (std::isfinite(cv)) cmin = std::min(cmin, cv);
  kv.add("min_c", cmin);

  std::string hcsv;
  if (rep.realizable) {
    TimedTrajectory tt = reparameterize(l, s.D, rep);
    kv.add("final_time", tt.asymptotic ? std::numeric_limits<double>::infinity() : tt.final_time);
    kv.add("last_finite_time", tt.t.back());
    if (!o.hamiltonian.empty()) {
      auto fields = trajectory_control(tt, s.D);
      std::ostringstream os;
      os << "t,u,vx,vy,vz,hx,hy,hz,hnorm\n";
      for (std::size_t i = 0; i < tt.t.size(); ++i)
        os << io::num(tt.t[i]) << ',' << io::num(tt.u[i]) << ',' << io::join(tt.states[i]) << ','
           << io::join(fields[i].h) << ',' << io::num(fields[i].norm()) << '\n';
      hcsv = os.str();

      SynthesisPolicy pol;
      pol.mode = PolicyMode::TrajectoryPrescribed;
      pol.path = tt;
      IntegratorConfig cfg = s.integrator;
      cfg.t_max = tt.t.back();
      ControlLaw law = make_control_law(coherence_property(), s.D, StateVector::bloch(tt.states.front()), pol);
      RunOptions ro;
      ro.detect_breakdown = false;
      ro.detect_stable = false;
      SimulationResult sim = integrate_controlled(s.D, tt.states.front(), law, cfg, ro);
      kv.add("reintegration_endpoint_deviation", (sim.final().v - tt.states.back()).norm());
    }
  }
  io::write_atomic(fs::path(o.out_dir) / s.out_report, kv.text());
  if (!hcsv.empty()) io::write_atomic(fs::path(o.out_dir) / o.hamiltonian, hcsv);
  if (!o.quiet) std::cout << kv.text();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qpp: property-preserving control of open quantum systems"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--out-dir", o.out_dir, "Directory for output files")->default_val(".");
  app.add_flag("--quiet", o.quiet, "Suppress stdout summaries");

  auto* sim = app.add_subcommand("simulate", "Integrate the tracked dynamics");
  sim->add_option("config", o.config)->required();
  auto* brk = app.add_subcommand("breakdown", "Compare simulated and closed-form breakdown times");
  brk->add_option("config", o.config)->required();
  auto* land = app.add_subcommand("landscape", "Tabulate stable and breakdown sets on a grid");
  land->add_option("config", o.config)->required();
  land->add_option("--grid", o.grid, "Points per axis");
  auto* chk = app.add_subcommand("check-trajectory", "Test whether a path can be followed");
  chk->add_option("csv", o.csv)->required();
  chk->add_option("config", o.config)->required();
  chk->add_option("--hamiltonian", o.hamiltonian, "Write the realizing field to this file in --out-dir");
  auto* cls = app.add_subcommand("classify", "Classify random states");
  cls->add_option("config", o.config)->required();
  cls->add_option("--samples", o.samples, "Number of states");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) return cmd_run(o, true);
    if (*brk) return cmd_run(o, false);
    if (*land) return cmd_landscape(o);
    if (*chk) return cmd_check(o);
    if (*cls) return cmd_classify(o);
  } catch (const ConfigError& e) {
    std::cerr << "qpp: invalid config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "qpp: error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "qpp: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
