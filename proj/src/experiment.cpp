#include "robinspec/experiment.hpp"

#include "robinspec/errors.hpp"
#include "robinspec/inversion.hpp"
#include "robinspec/oracle.hpp"
#include "robinspec/perturbation.hpp"
#include "robinspec/spectral.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace robinspec {

using nlohmann::json;
namespace fs = std::filesystem;

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Forward: return "forward";
    case Scenario::HadamardCheck: return "hadamard-check";
    case Scenario::Simplify: return "simplify";
    case Scenario::Recover: return "recover";
    case Scenario::EndToEnd: return "end-to-end";
    case Scenario::RecordOracle: return "record-oracle";
  }
  return "unknown";
}

namespace {

// ---------------------------------------------------------------------------
// Config parsing helpers
// ---------------------------------------------------------------------------

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ConfigError("missing required field '" + where + key + "'");
  return obj.at(key);
}

double number(const json& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError("field '" + name + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError("field '" + name + "' must be finite");
  return x;
}

int integer(const json& v, const std::string& name) {
  if (!v.is_number_integer()) throw ConfigError("field '" + name + "' must be an integer");
  return v.get<int>();
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& prefix) {
  if (!obj.contains(key)) return;
  const std::string name = prefix + key;
  if constexpr (std::is_same_v<T, int>) {
    out = integer(obj.at(key), name);
  } else if constexpr (std::is_same_v<T, double>) {
    out = number(obj.at(key), name);
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!obj.at(key).is_string()) throw ConfigError("field '" + name + "' must be a string");
    out = obj.at(key).get<std::string>();
  }
}

void positive(double v, const char* name) {
  if (!(v > 0.0)) throw ConfigError(std::string("field 'params.") + name + "' must be positive");
}

Scenario parse_scenario(const json& v) {
  if (!v.is_string()) throw ConfigError("field 'scenario' must be a string");
  const std::string s = v.get<std::string>();
  for (Scenario sc : {Scenario::Forward, Scenario::HadamardCheck, Scenario::Simplify,
                      Scenario::Recover, Scenario::EndToEnd, Scenario::RecordOracle})
    if (scenario_name(sc) == s) return sc;
  throw ConfigError("field 'scenario' has unknown value '" + s + "'");
}

DomainSpec parse_domain(const json& d) {
  if (!d.is_object()) throw ConfigError("field 'domain' must be an object");
  const json& kind = require(d, "kind", "domain.");
  if (kind == "interval") {
    return DomainSpec::interval(number(require(d, "length", "domain."), "domain.length"),
                                integer(require(d, "n", "domain."), "domain.n"));
  }
  if (kind == "rectangle") {
    return DomainSpec::rectangle(number(require(d, "a", "domain."), "domain.a"),
                                 number(require(d, "b", "domain."), "domain.b"),
                                 integer(require(d, "nx", "domain."), "domain.nx"),
                                 integer(require(d, "ny", "domain."), "domain.ny"));
  }
  throw ConfigError("field 'domain.kind' must be 'interval' or 'rectangle'");
}

ExperimentParams parse_params(const json& p) {
  ExperimentParams out;
  if (p.is_null()) return out;
  if (!p.is_object()) throw ConfigError("field 'params' must be an object");
  const std::string pre = "params.";
  read_opt(p, "K", out.K, pre);
  read_opt(p, "J", out.J, pre);
  read_opt(p, "bump_shape", out.bump_shape, pre);
  read_opt(p, "h", out.h, pre);
  read_opt(p, "reg", out.reg, pre);
  read_opt(p, "gap_tol", out.gap_tol, pre);
  read_opt(p, "zero_tol", out.zero_tol, pre);
  read_opt(p, "fit_window", out.fit_window, pre);
  read_opt(p, "dip_tol", out.dip_tol, pre);
  read_opt(p, "s0", out.s0, pre);
  read_opt(p, "schedule_steps", out.schedule_steps, pre);
  read_opt(p, "cauchy_tol", out.cauchy_tol, pre);
  read_opt(p, "k_max", out.k_max, pre);
  read_opt(p, "epsilon", out.epsilon, pre);
  read_opt(p, "budget", out.budget, pre);
  read_opt(p, "max_index", out.max_index, pre);
  read_opt(p, "hadamard_tol", out.hadamard_tol, pre);
  read_opt(p, "solver_tol", out.solver_tol, pre);
  read_opt(p, "oracle_extra", out.oracle_extra, pre);
  if (p.contains("max_trace_error"))
    out.max_trace_error = number(p.at("max_trace_error"), "params.max_trace_error");

  if (out.K < 0) throw ConfigError("field 'params.K' must be nonnegative");
  if (out.J < 1) throw ConfigError("field 'params.J' must be at least 1");
  if (out.bump_shape != "hat" && out.bump_shape != "smooth")
    throw ConfigError("field 'params.bump_shape' must be 'hat' or 'smooth'");
  if (out.h < 0.0) throw ConfigError("field 'params.h' must be nonnegative (0 selects the default)");
  positive(out.gap_tol, "gap_tol");
  positive(out.zero_tol, "zero_tol");
  positive(out.dip_tol, "dip_tol");
  positive(out.s0, "s0");
  positive(out.cauchy_tol, "cauchy_tol");
  positive(out.epsilon, "epsilon");
  positive(out.hadamard_tol, "hadamard_tol");
  positive(out.solver_tol, "solver_tol");
  if (out.fit_window < 2) throw ConfigError("field 'params.fit_window' must be at least 2");
  if (out.schedule_steps < 1) throw ConfigError("field 'params.schedule_steps' must be at least 1");
  if (out.k_max < 1) throw ConfigError("field 'params.k_max' must be at least 1");
  if (out.budget < 1) throw ConfigError("field 'params.budget' must be at least 1");
  if (out.max_index < 1) throw ConfigError("field 'params.max_index' must be at least 1");
  if (out.oracle_extra < 1) throw ConfigError("field 'params.oracle_extra' must be at least 1");
  return out;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

struct TraceRow {
  int k = 0;     // 1-based
  int node = 0;  // boundary position
  double arc = 0.0;
  std::optional<double> truth;
  std::optional<double> recovered;
};

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file: " + path.string());
  out << text;
  if (!out) throw Error("failed writing output file: " + path.string());
}

std::string traces_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out << "k,node,arc,true_trace,recovered_trace\n";
  for (const auto& r : rows) {
    out << r.k << ',' << r.node << ',' << fmt17(r.arc) << ',';
    if (r.truth) out << fmt17(*r.truth);
    out << ',';
    if (r.recovered) out << fmt17(*r.recovered);
    out << '\n';
  }
  return out.str();
}

json cluster_json(const std::vector<Cluster>& clusters) {
  json a = json::array();
  for (const auto& c : clusters)
    a.push_back({{"first", c.first + 1}, {"last", c.last + 1}, {"multiplicity", c.multiplicity()}});
  return a;
}

json entry_json(const BsdEntry& e) {
  json bands = json::array();
  for (const auto& b : e.bands)
    bands.push_back({{"first", b.first},
                     {"last", b.last},
                     {"dip", b.dip},
                     {"root", b.root},
                     {"order", b.order},
                     {"order_left", b.order_left},
                     {"order_right", b.order_right},
                     {"flip", b.flip}});
  return {{"k", e.index + 1},
          {"eigenvalue", e.eigenvalue},
          {"status", e.status},
          {"error", e.error},
          {"provenance", e.provenance},
          {"cluster", {e.cluster_first + 1, e.cluster_last + 1}},
          {"sign_ambiguous", e.sign_ambiguous},
          {"fit_residual", e.fit_residual},
          {"clipped_mass", e.clipped_mass},
          {"schedule", e.schedule},
          {"cauchy_history", e.history},
          {"zero_bands", bands},
          {"magnitude", to_json(e.magnitude)},
          {"trace", to_json(e.trace)}};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Scenario context
// ---------------------------------------------------------------------------

struct Context {
  const ExperimentConfig& cfg;
  std::shared_ptr<ForwardModel> model;
  BoundaryField omega0;
  std::optional<SigmaPatch> sigma;
  SolverOptions solver;

  json results = json::object();
  std::vector<TraceRow> traces;
  json per_k = json::array();
  std::vector<fs::path> extra_files;
  bool failed = false;

  const SigmaPatch& patch() const { return *sigma; }
  const BoundaryMesh& metric() const { return model->metric_boundary(); }

  BsdParams bsd_params() const {
    const ExperimentParams& p = cfg.params;
    BsdParams b;
    b.bump_count = p.J;
    b.bump_shape = p.bump_shape == "smooth" ? BumpShape::Smooth : BumpShape::Hat;
    b.magnitude.step = p.h;
    b.magnitude.reg = p.reg;
    b.s0 = p.s0;
    b.schedule_steps = p.schedule_steps;
    b.cluster.tol = p.cauchy_tol;
    b.sign.zero_tol = p.zero_tol;
    b.sign.fit_window = p.fit_window;
    b.sign.dip_tol = p.dip_tol;
    b.gap_tol = p.gap_tol;
    return b;
  }

  /// Oracle reporting at least `count` eigenvalues, forward or replayed.
  std::unique_ptr<SpectralOracle> make_oracle(int count) const {
    if (cfg.oracle_kind == "replay") {
      auto replay = std::make_unique<ReplayOracle>(
          load_replay_oracle(cfg.oracle_path, count, model->bmesh.size()));
      if (replay->boundary_size() != model->bmesh.size())
        throw ConfigError("replay oracle file does not match the domain's boundary size");
      if (replay->count() < count)
        throw ConfigError("replay oracle file reports fewer eigenvalues than the scenario needs");
      return replay;
    }
    return std::make_unique<ForwardOracle>(model, count, solver);
  }

  void add_bsd(const BoundarySpectralData& bsd, const BoundarySpectralData* truth) {
    json entries = json::array();
    for (std::size_t k = 0; k < bsd.entries.size(); ++k) {
      const BsdEntry& e = bsd.entries[k];
      entries.push_back(entry_json(e));
      per_k.push_back({{"k", e.index + 1}, {"status", e.status}});
      if (e.status != "ok") failed = true;
      for (int i = 0; i < bsd.sigma.size(); ++i) {
        TraceRow row{e.index + 1, bsd.sigma.first + i, bsd.arc(i), std::nullopt, std::nullopt};
        if (truth) row.truth = truth->entries[k].trace(i);
        if (e.trace.size() == bsd.sigma.size()) row.recovered = e.trace(i);
        traces.push_back(row);
      }
    }
    results["entries"] = entries;
    results["failures"] = bsd.failures();
    results["sigma"] = {{"first", bsd.sigma.first}, {"last", bsd.sigma.last}};
  }
};

void run_forward(Context& ctx) {
  const int K = ctx.cfg.params.K;
  if (K > ctx.model->mesh.size()) throw ConfigError("field 'params.K' exceeds the mesh size");
  const EigenSystem sys = ctx.model->solve(ctx.omega0, K, ctx.solver);
  ctx.results["eigenvalues"] = to_json(sys.values);
  ctx.results["residuals"] = to_json(sys.residuals);
  ctx.results["clusters"] = cluster_json(cluster_eigenvalues(sys.values, ctx.cfg.params.gap_tol));
  const BoundaryMesh& bm = ctx.metric();
  const int first = ctx.sigma ? ctx.sigma->first : 0;
  const int last = ctx.sigma ? ctx.sigma->last : bm.size() - 1;
  for (int k = 0; k < K; ++k) {
    ctx.per_k.push_back({{"k", k + 1}, {"status", "ok"}});
    const BoundaryField trace = boundary_trace(sys, k, bm);
    for (int p = first; p <= last; ++p)
      ctx.traces.push_back({k + 1, p, bm.arc(p), trace(p), std::nullopt});
  }
}

void run_hadamard(Context& ctx) {
  const ExperimentParams& p = ctx.cfg.params;
  auto oracle = ctx.make_oracle(p.max_index + 1);
  const EigenSystem sys = ctx.model->solve(ctx.omega0, p.max_index, ctx.solver);
  const BumpBasis bumps =
      bump_basis(ctx.metric(), ctx.patch(), p.J,
                 p.bump_shape == "smooth" ? BumpShape::Smooth : BumpShape::Hat);
  const HadamardReport rep = hadamard_check(sys, ctx.metric(), *oracle, ctx.omega0, bumps.bumps,
                                            p.max_index, p.h, p.hadamard_tol, p.gap_tol);
  json entries = json::array();
  for (const auto& e : rep.entries)
    entries.push_back({{"k", e.index + 1},
                       {"direction", e.direction + 1},
                       {"exact", e.exact},
                       {"fd", e.fd},
                       {"abs_error", e.abs_error},
                       {"rel_error", e.rel_error},
                       {"error_indicator", e.error_indicator},
                       {"status", e.status}});
  ctx.results["entries"] = entries;
  ctx.results["max_rel_error"] = rep.max_rel_error;
  ctx.results["flagged"] = rep.flagged;
  ctx.results["multiplicity"] = rep.multiplicity;
  ctx.results["eigenvalues"] = to_json(sys.values);
  for (int k = 0; k < sys.count(); ++k) {
    std::string status = "ok";
    for (const auto& e : rep.entries)
      if (e.index == k && (e.status == "flagged" || e.status == "multiplicity")) status = e.status;
    ctx.per_k.push_back({{"k", k + 1}, {"status", status}});
  }
  ctx.failed = rep.flagged > 0;
}

void run_simplify(Context& ctx) {
  const ExperimentParams& p = ctx.cfg.params;
  auto oracle = ctx.make_oracle(p.k_max + 1);
  SimplifyOptions opt;
  opt.k_max = p.k_max;
  opt.epsilon = p.epsilon;
  opt.seed = ctx.cfg.seed;
  opt.budget = p.budget;
  opt.gap_tol = p.gap_tol;
  const SimplifyResult res =
      simplify_spectrum(*oracle, ctx.omega0, ctx.model->bmesh, ctx.patch(), opt);
  json stages = json::array();
  for (const auto& s : res.stages) {
    json locked = json::array();
    for (std::size_t i = 0; i < s.locked.size(); ++i)
      locked.push_back({{"pair", {s.locked[i].index + 1, s.locked[i].index + 2}},
                        {"locked_gap", s.locked[i].gap},
                        {"gap_at_accept", s.gaps_at_accept[i]},
                        {"floor", s.floor_factor * s.locked[i].gap}});
    stages.push_back({{"stage", s.stage},
                      {"k", s.index + 1},
                      {"trials", s.trials},
                      {"amplitude", s.amplitude},
                      {"floor_factor", s.floor_factor},
                      {"locked", locked}});
  }
  ctx.results["omega"] = to_json(res.omega);
  ctx.results["eigenvalues"] = to_json(res.eigenvalues);
  ctx.results["stages"] = stages;
  ctx.results["distance"] = res.distance;
  ctx.results["unperturbed"] = res.unperturbed;
  for (int k = 0; k < p.k_max; ++k) ctx.per_k.push_back({{"k", k + 1}, {"status", "ok"}});
}

void run_recover(Context& ctx, bool with_truth) {
  const ExperimentParams& p = ctx.cfg.params;
  const int count = p.K + p.oracle_extra;
  auto oracle = ctx.make_oracle(count);
  const BsdParams params = ctx.bsd_params();
  const BoundarySpectralData bsd =
      assemble_bsd(*oracle, ctx.omega0, p.K, ctx.metric(), ctx.patch(), params);
  ctx.results["K"] = p.K;
  if (!with_truth) {
    ctx.add_bsd(bsd, nullptr);
    return;
  }
  const EigenSystem sys = ctx.model->solve(ctx.omega0, std::max(count, 1), ctx.solver);
  const BoundarySpectralData truth =
      reference_bsd(sys, p.K, ctx.metric(), ctx.patch(),
                    default_splitting_direction(ctx.metric(), ctx.patch()), p.gap_tol);
  ctx.add_bsd(bsd, &truth);
  const BsdComparison cmp = compare_bsd(bsd, truth);
  json rows = json::array();
  for (const auto& r : cmp.rows)
    rows.push_back({{"k", r.index + 1},
                    {"eigenvalue_abs_error", r.eigenvalue_abs},
                    {"eigenvalue_rel_error", r.eigenvalue_rel},
                    {"trace_error", r.trace_error}});
  ctx.results["comparison"] = {{"rows", rows},
                               {"max_trace_error", cmp.max_trace_error},
                               {"max_eigenvalue_rel_error", cmp.max_eigenvalue_rel}};
  if (p.max_trace_error && !(cmp.max_trace_error <= *p.max_trace_error)) ctx.failed = true;
}

void run_record(Context& ctx) {
  const ExperimentParams& p = ctx.cfg.params;
  ForwardOracle forward(ctx.model, p.K + p.oracle_extra, ctx.solver);
  RecordingOracle recorder(forward);
  const BoundarySpectralData bsd =
      assemble_bsd(recorder, ctx.omega0, p.K, ctx.metric(), ctx.patch(), ctx.bsd_params());
  const fs::path file = ctx.cfg.output_dir / ctx.cfg.oracle_file;
  write_oracle_file(file, recorder.records());
  ctx.extra_files.push_back(ctx.cfg.oracle_file);
  ctx.results["records"] = recorder.records().size();
  ctx.results["oracle_file"] = ctx.cfg.oracle_file;
  ctx.results["plan_failures"] = bsd.failures();
  for (const auto& e : bsd.entries) ctx.per_k.push_back({{"k", e.index + 1}, {"status", e.status}});
}

}  // namespace

// ---------------------------------------------------------------------------
// Fields from config
// ---------------------------------------------------------------------------

ScalarField field_from_json(const json& spec, const Mesh& mesh, const char* name) {
  const std::string where = std::string("fields.") + name;
  if (spec.is_number()) return constant_field(mesh, number(spec, where));
  if (spec.is_array()) {
    if (static_cast<int>(spec.size()) != mesh.size())
      throw ConfigError("field '" + where + "' must have one value per mesh node");
    ScalarField f(mesh.size());
    for (int i = 0; i < mesh.size(); ++i) f(i) = number(spec[i], where);
    return f;
  }
  if (!spec.is_object()) throw ConfigError("field '" + where + "' must be a preset object");
  if (spec.contains("values")) return field_from_json(spec.at("values"), mesh, name);
  const json& preset = require(spec, "preset", where + ".");
  if (preset == "constant")
    return constant_field(mesh, number(require(spec, "value", where + "."), where + ".value"));
  if (preset == "gaussian_bump") {
    const json& center = require(spec, "center", where + ".");
    if (!center.is_array() || static_cast<int>(center.size()) != mesh.dim)
      throw ConfigError("field '" + where + ".center' must list one coordinate per dimension");
    Eigen::VectorXd c(mesh.dim);
    for (int d = 0; d < mesh.dim; ++d) c(d) = number(center[d], where + ".center");
    const double width = number(require(spec, "width", where + "."), where + ".width");
    if (!(width > 0.0)) throw ConfigError("field '" + where + ".width' must be positive");
    return gaussian_field(mesh, c, width,
                          number(require(spec, "height", where + "."), where + ".height"));
  }
  throw ConfigError("field '" + where + ".preset' must be 'constant' or 'gaussian_bump'");
}

BoundaryField boundary_field_from_json(const json& spec, const BoundaryMesh& bmesh,
                                       const char* name) {
  const std::string where = std::string("fields.") + name;
  if (spec.is_number()) return constant_boundary(bmesh, number(spec, where));
  if (spec.is_array()) {
    if (static_cast<int>(spec.size()) != bmesh.size())
      throw ConfigError("field '" + where + "' must have one value per boundary node");
    BoundaryField f(bmesh.size());
    for (int i = 0; i < bmesh.size(); ++i) f(i) = number(spec[i], where);
    return f;
  }
  if (!spec.is_object()) throw ConfigError("field '" + where + "' must be a preset object");
  if (spec.contains("values")) return boundary_field_from_json(spec.at("values"), bmesh, name);
  const json& preset = require(spec, "preset", where + ".");
  if (preset == "constant")
    return constant_boundary(bmesh, number(require(spec, "value", where + "."), where + ".value"));
  if (preset == "gaussian_bump") {
    const double center = number(require(spec, "center", where + "."), where + ".center");
    const double width = number(require(spec, "width", where + "."), where + ".width");
    const double height = number(require(spec, "height", where + "."), where + ".height");
    if (!(width > 0.0)) throw ConfigError("field '" + where + ".width' must be positive");
    BoundaryField f(bmesh.size());
    for (int i = 0; i < bmesh.size(); ++i) {
      const double d = bmesh.arc(i) - center;
      f(i) = height * std::exp(-d * d / (2.0 * width * width));
    }
    return f;
  }
  throw ConfigError("field '" + where + ".preset' must be 'constant' or 'gaussian_bump'");
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  cfg.effective = doc;
  cfg.scenario = parse_scenario(require(doc, "scenario", ""));
  cfg.domain = parse_domain(require(doc, "domain", ""));
  if (doc.contains("fields")) {
    const json& f = doc.at("fields");
    if (!f.is_object()) throw ConfigError("field 'fields' must be an object");
    if (f.contains("q")) cfg.q = f.at("q");
    if (f.contains("c")) cfg.c = f.at("c");
    if (f.contains("omega0")) cfg.omega0 = f.at("omega0");
  }
  if (doc.contains("sigma")) {
    const json& s = doc.at("sigma");
    cfg.sigma = std::make_pair(number(require(s, "arc_start", "sigma."), "sigma.arc_start"),
                               number(require(s, "arc_end", "sigma."), "sigma.arc_end"));
  } else if (cfg.scenario != Scenario::Forward) {
    throw ConfigError("missing required field 'sigma' for scenario '" +
                      scenario_name(cfg.scenario) + "'");
  }
  cfg.params = parse_params(doc.contains("params") ? doc.at("params") : json());
  if (doc.contains("oracle")) {
    const json& o = doc.at("oracle");
    read_opt(o, "kind", cfg.oracle_kind, "oracle.");
    if (cfg.oracle_kind != "forward" && cfg.oracle_kind != "replay")
      throw ConfigError("field 'oracle.kind' must be 'forward' or 'replay'");
    if (cfg.oracle_kind == "replay") {
      const json& path = require(o, "path", "oracle.");
      if (!path.is_string()) throw ConfigError("field 'oracle.path' must be a string");
      cfg.oracle_path = path.get<std::string>();
      if (cfg.oracle_path.is_relative() && !base_dir.empty())
        cfg.oracle_path = base_dir / cfg.oracle_path;
    }
    read_opt(o, "output", cfg.oracle_file, "oracle.");
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned() && !doc.at("seed").is_number_integer())
      throw ConfigError("field 'seed' must be a nonnegative integer");
    if (doc.at("seed").is_number_integer() && doc.at("seed").get<long long>() < 0)
      throw ConfigError("field 'seed' must be a nonnegative integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string())
      throw ConfigError("field 'output_dir' must be a string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  }
  return cfg;
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_now();

  // Setup: everything here is a configuration problem.
  auto [mesh, bmesh] = build_mesh(cfg.domain);
  const ScalarField q = cfg.q.is_null() ? constant_field(mesh, 0.0) : field_from_json(cfg.q, mesh, "q");
  const ScalarField c = cfg.c.is_null() ? constant_field(mesh, 1.0) : field_from_json(cfg.c, mesh, "c");
  if (!(c.minCoeff() > 0.0)) throw ConfigError("field 'fields.c' must be strictly positive");
  BoundaryField omega0 = cfg.omega0.is_null() ? constant_boundary(bmesh, 0.0)
                                              : boundary_field_from_json(cfg.omega0, bmesh, "omega0");
  auto model = std::make_shared<ForwardModel>(std::move(mesh), std::move(bmesh), q, c);
  std::optional<SigmaPatch> sigma;
  if (cfg.sigma) {
    try {
      sigma = make_sigma(model->bmesh, cfg.sigma->first, cfg.sigma->second);
    } catch (const Error& e) {
      throw ConfigError(std::string("field 'sigma': ") + e.what());
    }
  }

  Context ctx{cfg, model, std::move(omega0), sigma, SolverOptions{}, json::object(), {},
              json::array(), {}, false};
  ctx.solver.tol = cfg.params.solver_tol;

  fs::create_directories(cfg.output_dir);
  std::string status = "ok";
  int exit_code = 0;
  try {
    switch (cfg.scenario) {
      case Scenario::Forward: run_forward(ctx); break;
      case Scenario::HadamardCheck: run_hadamard(ctx); break;
      case Scenario::Simplify: run_simplify(ctx); break;
      case Scenario::Recover: run_recover(ctx, false); break;
      case Scenario::EndToEnd: run_recover(ctx, true); break;
      case Scenario::RecordOracle: run_record(ctx); break;
    }
    if (ctx.failed) {
      status = "failed";
      exit_code = 1;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    status = error_name(e);
    exit_code = 1;
    ctx.results["error"] = {{"type", error_name(e)}, {"message", e.what()}};
  }
  ctx.results["scenario"] = scenario_name(cfg.scenario);
  ctx.results["status"] = status;

  write_text(cfg.output_dir / "results.json", ctx.results.dump(2) + "\n");
  write_text(cfg.output_dir / "traces.csv", traces_csv(ctx.traces));

  const std::string config_text = cfg.effective.dump();
  json files = json::array();
  std::vector<fs::path> names = {"results.json", "traces.csv"};
  names.insert(names.end(), ctx.extra_files.begin(), ctx.extra_files.end());
  for (const auto& name : names)
    files.push_back({{"path", name.string()}, {"bytes", fs::file_size(cfg.output_dir / name)}});
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  RunOutcome out;
  out.exit_code = exit_code;
  out.status = status;
  out.manifest = {{"version", kVersion},
                  {"scenario", scenario_name(cfg.scenario)},
                  {"config_hash", hex64(fnv1a(config_text.data(), config_text.size()))},
                  {"effective_config", cfg.effective},
                  {"started_at", started_at},
                  {"wall_clock_seconds", wall},
                  {"status", status},
                  {"exit_code", exit_code},
                  {"files", files},
                  {"per_k", ctx.per_k}};
  write_text(cfg.output_dir / "manifest.json", out.manifest.dump(2) + "\n");
  return out;
}

int run_command(const fs::path& config_path, const std::optional<fs::path>& output_dir,
                const std::optional<std::uint64_t>& seed, std::ostream& log) {
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path.string());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (output_dir) doc["output_dir"] = output_dir->string();
    if (seed) doc["seed"] = *seed;
    const ExperimentConfig cfg = parse_config(doc, config_path.parent_path());
    const RunOutcome out = run_experiment(cfg);
    log << "scenario " << scenario_name(cfg.scenario) << ": " << out.status << " (outputs in "
        << cfg.output_dir.string() << ")\n";
    if (out.exit_code != 0) {
      std::ifstream res(cfg.output_dir / "results.json");
      const json r = json::parse(res, nullptr, false);
      if (r.is_object() && r.contains("error"))
        log << "error: " << r["error"]["message"].get<std::string>() << '\n';
      if (r.is_object() && r.contains("entries"))
        for (const auto& e : r["entries"])
          if (e.contains("error") && !e["error"].get<std::string>().empty())
            log << "k = " << e["k"] << ": " << e["error"].get<std::string>() << '\n';
    }
    return out.exit_code;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace robinspec
