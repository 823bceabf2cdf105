#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpp/breakdown.hpp"
#include "qpp/dynamics.hpp"
#include "qpp/io.hpp"

namespace qpp {

/// Invalid configuration; the message is already anchored as "file:line: ...".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parsed, validated run description.
struct Scenario {
  std::string source = "<config>";
  int dim = 2;
  ChannelSpec spec;
  Dissipator D;
  std::string property_kind;  // empty when absent
  std::optional<TargetProperty> property;
  std::optional<StateVector> initial;
  SynthesisPolicy policy;
  bool policy_set = false;
  IntegratorConfig integrator;
  std::string out_trajectory = "trajectory.csv";
  std::string out_summary = "summary.txt";
  std::string out_landscape = "landscape.csv";
  std::string out_classify = "classify.csv";
  std::string out_report = "realizability.txt";
  int grid = 21;
  double stable_band = -1;  // negative: quarter grid spacing times the rate gradient
  double level_band = -1;   // negative: half grid spacing times |grad f|
  long samples = 1000;
  double classify_tol = 1e-8;
  std::uint64_t seed = 12345;

  bool qubit() const { return dim == 2; }
};

namespace detail {

struct ConfigLine {
  int line = 0;
  std::string value;
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "system.dim",         "channel.kind",        "channel.gamma",      "channel.gamma1",
      "channel.gamma_d",    "channel.beta_delta",  "channel.levels",     "property.kind",
      "property.w",         "property.level",      "initial.bloch",      "initial.coherence",
      "policy.mode",        "policy.h_max",        "integrator.rtol",    "integrator.atol",
      "integrator.max_step", "integrator.t_max",   "integrator.stable_tol", "integrator.event_tol",
      "integrator.max_steps", "output.trajectory", "output.summary",     "output.landscape",
      "output.classify",    "output.report",       "landscape.grid",     "landscape.stable_band",
      "landscape.level_band", "classify.samples",  "classify.tol",       "seed"};
  return keys;
}

class ConfigReader {
 public:
  ConfigReader(std::string src, std::map<std::string, ConfigLine> kv) : src_(std::move(src)), kv_(std::move(kv)) {}

  bool has(const std::string& k) const { return kv_.count(k) > 0; }

  [[noreturn]] void fail(const std::string& k, const std::string& msg) const {
    auto it = kv_.find(k);
    int line = it == kv_.end() ? 0 : it->second.line;
    throw ConfigError(src_ + ":" + std::to_string(line) + ": " + k + ": " + msg);
  }

  std::string str(const std::string& k, const std::string& def) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return def;
    if (it->second.value.empty()) fail(k, "empty value");
    return it->second.value;
  }

  double real(const std::string& k, double def) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return def;
    double x;
    if (!io::parse_double(it->second.value, x)) fail(k, "expected a number, got '" + it->second.value + "'");
    return x;
  }

  long integer(const std::string& k, long def) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return def;
    const std::string& s = it->second.value;
    long x = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
      fail(k, "expected an integer, got '" + s + "'");
    return x;
  }

  Vec reals(const std::string& k, long n) const {
    auto it = kv_.find(k);
    auto parts = io::split(it->second.value, ',');
    if (static_cast<long>(parts.size()) != n)
      fail(k, "expected " + std::to_string(n) + " comma-separated numbers");
    Vec v(n);
    for (long i = 0; i < n; ++i)
      if (!io::parse_double(parts[i], v(i))) fail(k, "bad number '" + parts[i] + "'");
    return v;
  }

 private:
  std::string src_;
  std::map<std::string, ConfigLine> kv_;
};

inline ChannelKind channel_kind_of(const ConfigReader& c, const std::string& s) {
  if (s == "dephasing") return ChannelKind::Dephasing;
  if (s == "bit_flip") return ChannelKind::BitFlip;
  if (s == "bit_phase_flip") return ChannelKind::BitPhaseFlip;
  if (s == "depolarizing") return ChannelKind::Depolarizing;
  if (s == "relaxation") return ChannelKind::Relaxation;
  if (s == "relaxation_dephasing") return ChannelKind::RelaxationDephasing;
  c.fail("channel.kind", "unknown channel '" + s + "'");
}

inline PolicyMode policy_of(const ConfigReader& c, const std::string& s) {
  if (s == "minimal_alpha3") return PolicyMode::MinimalAlpha3;
  if (s == "fixed_p") return PolicyMode::FixedP;
  if (s == "alpha2_steering") return PolicyMode::Alpha2Steering;
  c.fail("policy.mode", "unknown policy '" + s + "'");
}

inline CMat basis_projector(int d, int i, int j) {
  CMat m = CMat::Zero(d, d);
  m(i, j) = 1.0;
  return m;
}

}  // namespace detail

/// Parse flat key=value text. Comments start with '#'.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<config>") {
  std::map<std::string, detail::ConfigLine> kv;
  std::istringstream is(text);
  std::string raw;
  int ln = 0;
  const auto& keys = detail::known_keys();
  while (std::getline(is, raw)) {
    ++ln;
    auto hash = raw.find('#');
    std::string line = io::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    auto eq = line.find('=');
    auto at = source + ":" + std::to_string(ln) + ": ";
    if (eq == std::string::npos) throw ConfigError(at + "expected key=value");
    std::string k = io::trim(line.substr(0, eq)), v = io::trim(line.substr(eq + 1));
    if (k.empty()) throw ConfigError(at + "missing key");
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError(at + "unknown key '" + k + "'");
    if (kv.count(k))
      throw ConfigError(at + "duplicate key '" + k + "' (first set on line " + std::to_string(kv[k].line) + ")");
    kv[k] = {ln, v};
  }
  detail::ConfigReader c(source, kv);
  Scenario s;
  s.source = source;

  long dim = c.integer("system.dim", 2);
  if (dim < 2 || dim > 16) c.fail("system.dim", "must be between 2 and 16");
  s.dim = static_cast<int>(dim);

  if (!c.has("channel.kind")) throw ConfigError(source + ":0: missing required key 'channel.kind'");
  std::string ck = c.str("channel.kind", "");
  try {
    if (s.qubit()) {
      if (c.has("channel.levels")) c.fail("channel.levels", "only used when system.dim > 2");
      ChannelKind k = detail::channel_kind_of(c, ck);
      s.spec.kind = k;
      s.spec.gamma = c.real("channel.gamma", 1.0);
      s.spec.gamma1 = c.real("channel.gamma1", 1.0);
      s.spec.gamma_d = c.real("channel.gamma_d", 0.0);
      s.spec.beta_delta = c.real("channel.beta_delta", 0.0);
    } else {
      if (ck != "level_dephasing" && ck != "level_decay")
        c.fail("channel.kind", "for system.dim > 2 use level_dephasing or level_decay");
      if (!c.has("channel.levels")) c.fail("channel.kind", "needs channel.levels=i,j");
      Vec lv = c.reals("channel.levels", 2);
      int i = static_cast<int>(lv(0)), j = static_cast<int>(lv(1));
      if (lv(0) != i || lv(1) != j || i < 0 || j < 0 || i >= s.dim || j >= s.dim || i == j)
        c.fail("channel.levels", "need two distinct level indices below system.dim");
      double g = c.real("channel.gamma", 1.0);
      CMat L = ck == "level_dephasing" ? CMat(detail::basis_projector(s.dim, i, i) - detail::basis_projector(s.dim, j, j))
                                       : detail::basis_projector(s.dim, i, j);
      s.spec = ChannelSpec::custom({{L, g}});
      s.spec.custom_dim = s.dim;
    }
    s.spec.validate();
  } catch (const Error& e) {
    c.fail("channel.kind", e.what());
  }
  s.D = builtin_dissipator(s.spec);

  OperatorBasis basis = build_nice_basis(s.dim);
  s.property_kind = c.str("property.kind", "");
  if (!s.property_kind.empty()) {
    const std::string& pk = s.property_kind;
    try {
      if (s.qubit() && pk == "coherence") {
        s.property = coherence_property();
      } else if (s.qubit() && pk == "fidelity") {
        if (!c.has("property.w")) c.fail("property.kind", "fidelity needs property.w");
        s.property = fidelity_property(to_vec3(c.reals("property.w", 3)));
      } else if (s.qubit() && pk == "custom-vz") {
        s.property = vz_property();
      } else if (s.qubit() && pk == "von_neumann") {
        s.property = von_neumann_property();
      } else if (pk == "purity") {
        s.property = purity_property(s.dim, s.qubit() ? Convention::Bloch : Convention::Coherence);
      } else if (pk == "population") {
        long lvl = c.integer("property.level", 0);
        if (lvl < 0 || lvl >= s.dim) c.fail("property.level", "level out of range");
        s.property = population_property(basis, static_cast<int>(lvl));
      } else {
        c.fail("property.kind", "unsupported property '" + pk + "' for system.dim=" + std::to_string(s.dim));
      }
    } catch (const Error& e) {
      c.fail(c.has("property.w") ? "property.w" : "property.kind", e.what());
    }
  }
  if (c.has("property.w") && s.property_kind != "fidelity") c.fail("property.w", "only used with fidelity");

  if (c.has("initial.bloch") && c.has("initial.coherence"))
    c.fail("initial.coherence", "give initial.bloch or initial.coherence, not both");
  std::string ikey = c.has("initial.bloch") ? "initial.bloch" : "initial.coherence";
  if (c.has(ikey)) {
    if (ikey == "initial.bloch" && !s.qubit()) c.fail(ikey, "initial.bloch is for qubits");
    long J = static_cast<long>(s.dim) * s.dim - 1;
    Vec v = c.reals(ikey, J);
    StateVector sv = ikey == "initial.bloch" ? StateVector::bloch(v) : StateVector::coherence(s.dim, v);
    try {
      from_state_vector(sv, basis);
    } catch (const Error& e) {
      c.fail(ikey, std::string("not a physical state: ") + e.what());
    }
    s.initial = sv.as(s.D.convention);
  }

  if (c.has("policy.mode")) {
    s.policy.mode = detail::policy_of(c, c.str("policy.mode", ""));
    s.policy_set = true;
    if (s.policy.mode == PolicyMode::FixedP && (!s.qubit() || s.property_kind != "fidelity"))
      c.fail("policy.mode", "fixed_p needs a qubit fidelity property");
    if (s.policy.mode == PolicyMode::Alpha2Steering &&
        (!s.qubit() || s.spec.kind != ChannelKind::BitFlip || s.property_kind != "coherence"))
      c.fail("policy.mode", "alpha2_steering needs bit_flip with coherence");
  }
  s.policy.h_max = c.real("policy.h_max", 0.0);
  if (!(s.policy.h_max >= 0.0)) c.fail("policy.h_max", "must be >= 0");

  IntegratorConfig& ic = s.integrator;
  ic.rtol = c.real("integrator.rtol", ic.rtol);
  ic.atol = c.real("integrator.atol", ic.atol);
  ic.max_step = c.real("integrator.max_step", ic.max_step);
  ic.t_max = c.real("integrator.t_max", ic.t_max);
  ic.stable_tol = c.real("integrator.stable_tol", ic.stable_tol);
  ic.event_tol = c.real("integrator.event_tol", ic.event_tol);
  ic.max_steps = c.integer("integrator.max_steps", ic.max_steps);
  ic.h_max = s.policy.h_max;
  try {
    ic.validate();
  } catch (const Error& e) {
    throw ConfigError(source + ":0: integrator: " + e.what());
  }

  s.out_trajectory = c.str("output.trajectory", s.out_trajectory);
  s.out_summary = c.str("output.summary", s.out_summary);
  s.out_landscape = c.str("output.landscape", s.out_landscape);
  s.out_classify = c.str("output.classify", s.out_classify);
  s.out_report = c.str("output.report", s.out_report);

  long grid = c.integer("landscape.grid", s.grid);
  if (grid < 2) c.fail("landscape.grid", "must be >= 2");
  s.grid = static_cast<int>(std::min(grid, 100001L));
  s.stable_band = c.real("landscape.stable_band", s.stable_band);
  s.level_band = c.real("landscape.level_band", s.level_band);
  s.samples = c.integer("classify.samples", s.samples);
  if (s.samples < 1) c.fail("classify.samples", "must be >= 1");
  s.classify_tol = c.real("classify.tol", s.classify_tol);
  if (!(s.classify_tol > 0)) c.fail("classify.tol", "must be > 0");
  long seed = c.integer("seed", static_cast<long>(s.seed));
  if (seed < 0) c.fail("seed", "must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path + ":0: cannot open config");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_scenario(ss.str(), path);
}

/// Closed-form breakdown prediction for the scenario's initial state, if one applies.
inline std::optional<BreakdownPrediction> analytic_prediction(const Scenario& s, const StateVector& v0) {
  if (!s.qubit() || !s.property) return std::nullopt;
  try {
    if (s.property_kind == "coherence" && s.policy.mode == PolicyMode::MinimalAlpha3)
      return tb_coherence(s.spec, v0);
    if (s.property_kind == "fidelity" && s.policy.mode == PolicyMode::FixedP) {
      Vec3 w = to_vec3(*s.property->reference);
      if (std::abs(w.norm() - 1.0) <= 1e-12) return tb_fidelity(s.spec, v0, w);
    }
  } catch (const Error&) {
  }
  return std::nullopt;
}

}  // namespace qpp
