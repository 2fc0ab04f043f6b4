#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddc/deepc.hpp"
#include "ddc/hunt.hpp"
#include "ddc/io.hpp"
#include "ddc/mpc.hpp"
#include "ddc/rollout.hpp"
#include "ddc/vtvl.hpp"

namespace ddc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitSolverError = 3;
inline constexpr int kExitPeFailure = 4;
inline constexpr int kSchemaVersion = 1;

struct DataConfig {
  std::string path = "trajectory.csv";
  Index length = 300;
  Index hold_steps = 3;            // PRBS dwell per level
  double amplitude_scale = 0.2;    // fraction of each input box's half-width
  Vec amplitudes;                  // explicit per-channel levels; overrides the scale
  double equilibrium_x = 16.665;   // hover point for rocket data collection
  double equilibrium_y = 21.33;
};

struct SurrogateConfig {
  std::string kind = "vtvl";  // "vtvl" | "lti"
  std::string preset = "A";   // "A" | "B"
  VtvlParams vtvl;
  Mat a, b, c, d;  // lti matrices
};

struct PlantConfig {
  std::string kind = "vtvl";
  std::string preset = "A";
  bool fuel_burn = true;
  double burn_rate = 1e-3;
  VtvlParams vtvl;
  Mat a, b, c, d;
};

struct EvalConfig {
  int runs = 50;
  Index max_steps = 300;
  double spawn_x_lo = 6.67, spawn_x_hi = 26.66;
  double spawn_y_lo = 18.66, spawn_y_hi = 24.0;
  LandingSpec landing;
  std::string policy = "deepc";  // "deepc" | "mpc"
  bool write_traces = true;
};

struct CompareConfig {
  Vec lambda_a;  // tuned weights for the surrogate-A policy
  Vec lambda_b;
  std::string report_a;  // alternatively, tuning reports to read lambda_final from
  std::string report_b;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  HorizonSpec horizon{1, 10};
  Vec q_diag;
  Vec r_diag;
  Box u_box;
  Box y_box;
  Vec u_ref;  // per-step input reference; empty -> hover input (vtvl) or zeros
  Vec y_ref;  // per-step output reference; empty -> pad state (vtvl) or zeros
  HuntConfig hunt;
  DataConfig data;
  SurrogateConfig surrogate;
  PlantConfig plant;
  EvalConfig eval;
  CompareConfig compare;

  RunConfig() {
    q_diag = Vec(6);
    q_diag << 100.0, 10.0, 5.0, 1.0, 3000.0, 30.0;
    r_diag = Vec::Constant(3, 0.01);
    u_box.lower = Vec(3);
    u_box.lower << 0.0, 0.0, -0.26;
    u_box.upper = Vec(3);
    u_box.upper << 16118.5, 322.37, 0.26;
    y_box.lower = Vec(6);
    y_box.lower << 0.0, -kInf, 0.0, -kInf, -0.61, -kInf;
    y_box.upper = Vec(6);
    y_box.upper << 33.33, kInf, 26.66, kInf, 0.61, kInf;
    hunt.lambda_init = Vec(3);
    hunt.lambda_init << 50.0, 50.0, 1000.0;
  }
};

namespace detail {

inline void check_keys(const Json& j, const std::string& ctx,
                       std::initializer_list<const char*> allowed) {
  require(j.is_object(), ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    require(ok, "unknown key '" + it.key() + "' in " + ctx);
  }
}

inline Vec json_to_vec(const Json& j, const std::string& ctx) {
  require(j.is_array(), ctx + " must be an array");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), ctx + " entries must be numbers");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

// Bound arrays accept null entries meaning "unconstrained on this channel".
inline Vec json_to_bounds(const Json& j, const std::string& ctx, double inf_sign) {
  require(j.is_array(), ctx + " must be an array");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].is_null())
      v(static_cast<Index>(i)) = inf_sign * kInf;
    else {
      require(j[i].is_number(), ctx + " entries must be numbers or null");
      v(static_cast<Index>(i)) = j[i].get<double>();
    }
  }
  return v;
}

inline Json bounds_to_json(const Vec& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i)))
      arr.push_back(v(i));
    else
      arr.push_back(nullptr);
  }
  return arr;
}

inline Mat json_to_mat(const Json& j, const std::string& ctx) {
  require(j.is_array() && !j.empty(), ctx + " must be a nonempty array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j[0].size());
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    require(j[static_cast<std::size_t>(r)].is_array() &&
                static_cast<Index>(j[static_cast<std::size_t>(r)].size()) == cols,
            ctx + " rows must all have " + std::to_string(cols) + " entries");
    for (Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void parse_vtvl_params(const Json& j, const std::string& ctx, VtvlParams& p) {
  check_keys(j, ctx,
             {"m0", "l1", "l2", "inertia", "gravity", "dt", "burn_rate", "integrator"});
  bool explicit_inertia = j.contains("inertia");
  if (j.contains("m0")) p.m0 = j["m0"].get<double>();
  if (j.contains("l1")) p.l1 = j["l1"].get<double>();
  if (j.contains("l2")) p.l2 = j["l2"].get<double>();
  if (j.contains("gravity")) p.gravity = j["gravity"].get<double>();
  if (j.contains("dt")) p.dt = j["dt"].get<double>();
  if (j.contains("burn_rate")) p.burn_rate = j["burn_rate"].get<double>();
  if (j.contains("integrator")) {
    const std::string s = j["integrator"].get<std::string>();
    require(s == "rk4" || s == "euler", ctx + ".integrator must be rk4 or euler");
    p.integrator = s == "rk4" ? IntegratorKind::rk4 : IntegratorKind::euler;
  }
  if (explicit_inertia)
    p.inertia = j["inertia"].get<double>();
  else
    p.with_rod_inertia();
  p.validate();
}

inline Json vtvl_params_to_json(const VtvlParams& p) {
  Json j;
  j["m0"] = p.m0;
  j["l1"] = p.l1;
  j["l2"] = p.l2;
  j["inertia"] = p.inertia;
  j["gravity"] = p.gravity;
  j["dt"] = p.dt;
  j["burn_rate"] = p.burn_rate;
  j["integrator"] = p.integrator == IntegratorKind::rk4 ? "rk4" : "euler";
  return j;
}

}  // namespace detail

/// Parses and schema-validates a configuration document. Every key is
/// optional (defaults reproduce the rocket benchmark); unknown keys are
/// rejected so typos cannot silently fall back to defaults.
inline RunConfig parse_run_config(const Json& j) {
  using detail::check_keys;
  using detail::json_to_bounds;
  using detail::json_to_vec;
  RunConfig cfg;
  check_keys(j, "config",
             {"schema_version", "seed", "out_dir", "horizon", "cost", "constraints",
              "reference", "lambda", "hunt", "data", "surrogate", "plant", "evaluation",
              "compare"});
  if (j.contains("schema_version"))
    require(j["schema_version"].get<int>() == kSchemaVersion,
            "unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

  if (j.contains("horizon")) {
    const Json& h = j["horizon"];
    check_keys(h, "horizon", {"t_ini", "t_f"});
    if (h.contains("t_ini")) cfg.horizon.t_ini = h["t_ini"].get<Index>();
    if (h.contains("t_f")) cfg.horizon.t_f = h["t_f"].get<Index>();
    cfg.horizon.validate();
  }
  if (j.contains("cost")) {
    const Json& c = j["cost"];
    check_keys(c, "cost", {"q_diag", "r_diag"});
    if (c.contains("q_diag")) cfg.q_diag = json_to_vec(c["q_diag"], "cost.q_diag");
    if (c.contains("r_diag")) cfg.r_diag = json_to_vec(c["r_diag"], "cost.r_diag");
  }
  if (j.contains("constraints")) {
    const Json& c = j["constraints"];
    check_keys(c, "constraints", {"u_lower", "u_upper", "y_lower", "y_upper"});
    if (c.contains("u_lower")) cfg.u_box.lower = json_to_bounds(c["u_lower"], "u_lower", -1.0);
    if (c.contains("u_upper")) cfg.u_box.upper = json_to_bounds(c["u_upper"], "u_upper", 1.0);
    if (c.contains("y_lower")) cfg.y_box.lower = json_to_bounds(c["y_lower"], "y_lower", -1.0);
    if (c.contains("y_upper")) cfg.y_box.upper = json_to_bounds(c["y_upper"], "y_upper", 1.0);
  }
  if (j.contains("reference")) {
    const Json& r = j["reference"];
    check_keys(r, "reference", {"u", "y"});
    if (r.contains("u")) cfg.u_ref = json_to_vec(r["u"], "reference.u");
    if (r.contains("y")) cfg.y_ref = json_to_vec(r["y"], "reference.y");
  }
  if (j.contains("lambda")) {
    const Json& l = j["lambda"];
    check_keys(l, "lambda", {"init", "lower", "upper"});
    if (l.contains("init")) cfg.hunt.lambda_init = json_to_vec(l["init"], "lambda.init");
    if (l.contains("lower")) cfg.hunt.lambda_box.lower = json_to_vec(l["lower"], "lambda.lower");
    if (l.contains("upper")) cfg.hunt.lambda_box.upper = json_to_vec(l["upper"], "lambda.upper");
  }
  if (j.contains("hunt")) {
    const Json& h = j["hunt"];
    check_keys(h, "hunt",
               {"iterations", "rollout_steps", "batch", "grad_mode", "eta0", "eta_min",
                "eta_max", "grow", "shrink", "heldout_fraction", "failure_penalty", "parallel",
                "qp_tol", "qp_max_iters", "sc_margin"});
    if (h.contains("iterations")) cfg.hunt.n_iter = h["iterations"].get<int>();
    if (h.contains("rollout_steps")) cfg.hunt.n_steps = h["rollout_steps"].get<Index>();
    if (h.contains("batch")) cfg.hunt.batch = h["batch"].get<int>();
    if (h.contains("grad_mode")) {
      const std::string s = h["grad_mode"].get<std::string>();
      require(s == "analytic" || s == "fd", "hunt.grad_mode must be 'analytic' or 'fd'");
      cfg.hunt.grad_mode = s == "analytic" ? GradMode::analytic_forward
                                           : GradMode::finite_difference;
    }
    if (h.contains("eta0")) cfg.hunt.rprop.eta0 = h["eta0"].get<double>();
    if (h.contains("eta_min")) cfg.hunt.rprop.eta_min = h["eta_min"].get<double>();
    if (h.contains("eta_max")) cfg.hunt.rprop.eta_max = h["eta_max"].get<double>();
    if (h.contains("grow")) cfg.hunt.rprop.grow = h["grow"].get<double>();
    if (h.contains("shrink")) cfg.hunt.rprop.shrink = h["shrink"].get<double>();
    if (h.contains("heldout_fraction"))
      cfg.hunt.heldout_fraction = h["heldout_fraction"].get<double>();
    if (h.contains("failure_penalty"))
      cfg.hunt.failure_penalty = h["failure_penalty"].get<double>();
    if (h.contains("parallel")) cfg.hunt.parallel = h["parallel"].get<bool>();
    if (h.contains("qp_tol")) cfg.hunt.qp_tol = h["qp_tol"].get<double>();
    if (h.contains("qp_max_iters")) cfg.hunt.qp_max_iters = h["qp_max_iters"].get<int>();
    if (h.contains("sc_margin")) cfg.hunt.sc_margin = h["sc_margin"].get<double>();
  }
  if (j.contains("data")) {
    const Json& d = j["data"];
    check_keys(d, "data",
               {"path", "length", "hold_steps", "amplitude_scale", "amplitudes",
                "equilibrium_x", "equilibrium_y"});
    if (d.contains("path")) cfg.data.path = d["path"].get<std::string>();
    if (d.contains("length")) cfg.data.length = d["length"].get<Index>();
    if (d.contains("hold_steps")) cfg.data.hold_steps = d["hold_steps"].get<Index>();
    if (d.contains("amplitude_scale"))
      cfg.data.amplitude_scale = d["amplitude_scale"].get<double>();
    if (d.contains("amplitudes"))
      cfg.data.amplitudes = json_to_vec(d["amplitudes"], "data.amplitudes");
    if (d.contains("equilibrium_x")) cfg.data.equilibrium_x = d["equilibrium_x"].get<double>();
    if (d.contains("equilibrium_y")) cfg.data.equilibrium_y = d["equilibrium_y"].get<double>();
    require(cfg.data.length >= 1 && cfg.data.hold_steps >= 1,
            "data.length and data.hold_steps must be >= 1");
  }
  auto parse_model_block = [&](const Json& s, const std::string& ctx, std::string& kind,
                               std::string& preset, VtvlParams& vp, Mat& a, Mat& b, Mat& c,
                               Mat& d, bool plant_keys, PlantConfig* plant) {
    if (plant_keys)
      check_keys(s, ctx, {"kind", "preset", "vtvl", "lti", "fuel_burn", "burn_rate"});
    else
      check_keys(s, ctx, {"kind", "preset", "vtvl", "lti"});
    if (s.contains("kind")) kind = s["kind"].get<std::string>();
    require(kind == "vtvl" || kind == "lti", ctx + ".kind must be 'vtvl' or 'lti'");
    if (s.contains("preset")) preset = s["preset"].get<std::string>();
    require(preset == "A" || preset == "B", ctx + ".preset must be 'A' or 'B'");
    if (s.contains("vtvl")) detail::parse_vtvl_params(s["vtvl"], ctx + ".vtvl", vp);
    if (s.contains("lti")) {
      const Json& l = s["lti"];
      check_keys(l, ctx + ".lti", {"a", "b", "c", "d"});
      require(l.contains("a") && l.contains("b") && l.contains("c") && l.contains("d"),
              ctx + ".lti needs all of a, b, c, d");
      a = detail::json_to_mat(l["a"], ctx + ".lti.a");
      b = detail::json_to_mat(l["b"], ctx + ".lti.b");
      c = detail::json_to_mat(l["c"], ctx + ".lti.c");
      d = detail::json_to_mat(l["d"], ctx + ".lti.d");
    }
    if (plant_keys) {
      if (s.contains("fuel_burn")) plant->fuel_burn = s["fuel_burn"].get<bool>();
      if (s.contains("burn_rate")) plant->burn_rate = s["burn_rate"].get<double>();
    }
  };
  if (j.contains("surrogate"))
    parse_model_block(j["surrogate"], "surrogate", cfg.surrogate.kind, cfg.surrogate.preset,
                      cfg.surrogate.vtvl, cfg.surrogate.a, cfg.surrogate.b, cfg.surrogate.c,
                      cfg.surrogate.d, false, nullptr);
  if (j.contains("plant"))
    parse_model_block(j["plant"], "plant", cfg.plant.kind, cfg.plant.preset, cfg.plant.vtvl,
                      cfg.plant.a, cfg.plant.b, cfg.plant.c, cfg.plant.d, true, &cfg.plant);
  if (j.contains("evaluation")) {
    const Json& e = j["evaluation"];
    check_keys(e, "evaluation",
               {"runs", "max_steps", "spawn_x", "spawn_y", "landing", "policy",
                "write_traces"});
    if (e.contains("runs")) cfg.eval.runs = e["runs"].get<int>();
    if (e.contains("max_steps")) cfg.eval.max_steps = e["max_steps"].get<Index>();
    if (e.contains("spawn_x")) {
      const Vec v = json_to_vec(e["spawn_x"], "evaluation.spawn_x");
      require(v.size() == 2 && v(0) <= v(1), "evaluation.spawn_x must be [lo, hi]");
      cfg.eval.spawn_x_lo = v(0);
      cfg.eval.spawn_x_hi = v(1);
    }
    if (e.contains("spawn_y")) {
      const Vec v = json_to_vec(e["spawn_y"], "evaluation.spawn_y");
      require(v.size() == 2 && v(0) <= v(1), "evaluation.spawn_y must be [lo, hi]");
      cfg.eval.spawn_y_lo = v(0);
      cfg.eval.spawn_y_hi = v(1);
    }
    if (e.contains("landing")) {
      const Json& l = e["landing"];
      check_keys(l, "evaluation.landing",
                 {"pad_x", "pad_y", "touchdown_tol", "x_tol", "theta_tol", "vy_tol",
                  "divergence_bound"});
      if (l.contains("pad_x")) cfg.eval.landing.pad_x = l["pad_x"].get<double>();
      if (l.contains("pad_y")) cfg.eval.landing.pad_y = l["pad_y"].get<double>();
      if (l.contains("touchdown_tol"))
        cfg.eval.landing.touchdown_tol = l["touchdown_tol"].get<double>();
      if (l.contains("x_tol")) cfg.eval.landing.x_tol = l["x_tol"].get<double>();
      if (l.contains("theta_tol")) cfg.eval.landing.theta_tol = l["theta_tol"].get<double>();
      if (l.contains("vy_tol")) cfg.eval.landing.vy_tol = l["vy_tol"].get<double>();
      if (l.contains("divergence_bound"))
        cfg.eval.landing.divergence_bound = l["divergence_bound"].get<double>();
    }
    if (e.contains("policy")) {
      cfg.eval.policy = e["policy"].get<std::string>();
      require(cfg.eval.policy == "deepc" || cfg.eval.policy == "mpc",
              "evaluation.policy must be 'deepc' or 'mpc'");
    }
    if (e.contains("write_traces")) cfg.eval.write_traces = e["write_traces"].get<bool>();
    require(cfg.eval.runs >= 1 && cfg.eval.max_steps >= 1,
            "evaluation.runs and max_steps must be >= 1");
  }
  if (j.contains("compare")) {
    const Json& c = j["compare"];
    check_keys(c, "compare", {"lambda_a", "lambda_b", "report_a", "report_b"});
    if (c.contains("lambda_a")) cfg.compare.lambda_a = json_to_vec(c["lambda_a"], "lambda_a");
    if (c.contains("lambda_b")) cfg.compare.lambda_b = json_to_vec(c["lambda_b"], "lambda_b");
    if (c.contains("report_a")) cfg.compare.report_a = c["report_a"].get<std::string>();
    if (c.contains("report_b")) cfg.compare.report_b = c["report_b"].get<std::string>();
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

/// Serializes the complete effective configuration (defaults included).
inline Json run_config_to_json(const RunConfig& cfg) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["horizon"] = {{"t_ini", cfg.horizon.t_ini}, {"t_f", cfg.horizon.t_f}};
  j["cost"] = {{"q_diag", vec_to_json(cfg.q_diag)}, {"r_diag", vec_to_json(cfg.r_diag)}};
  j["constraints"] = {{"u_lower", detail::bounds_to_json(cfg.u_box.lower)},
                      {"u_upper", detail::bounds_to_json(cfg.u_box.upper)},
                      {"y_lower", detail::bounds_to_json(cfg.y_box.lower)},
                      {"y_upper", detail::bounds_to_json(cfg.y_box.upper)}};
  Json ref;
  if (cfg.u_ref.size() > 0) ref["u"] = vec_to_json(cfg.u_ref);
  if (cfg.y_ref.size() > 0) ref["y"] = vec_to_json(cfg.y_ref);
  if (!ref.is_null()) j["reference"] = ref;
  j["lambda"] = {{"init", vec_to_json(cfg.hunt.lambda_init)},
                 {"lower", vec_to_json(cfg.hunt.lambda_box.lower)},
                 {"upper", vec_to_json(cfg.hunt.lambda_box.upper)}};
  j["hunt"] = {{"iterations", cfg.hunt.n_iter},
               {"rollout_steps", cfg.hunt.n_steps},
               {"batch", cfg.hunt.batch},
               {"grad_mode",
                cfg.hunt.grad_mode == GradMode::analytic_forward ? "analytic" : "fd"},
               {"eta0", cfg.hunt.rprop.eta0},
               {"eta_min", cfg.hunt.rprop.eta_min},
               {"eta_max", cfg.hunt.rprop.eta_max},
               {"grow", cfg.hunt.rprop.grow},
               {"shrink", cfg.hunt.rprop.shrink},
               {"heldout_fraction", cfg.hunt.heldout_fraction},
               {"failure_penalty", cfg.hunt.failure_penalty},
               {"parallel", cfg.hunt.parallel},
               {"qp_tol", cfg.hunt.qp_tol},
               {"qp_max_iters", cfg.hunt.qp_max_iters},
               {"sc_margin", cfg.hunt.sc_margin}};
  j["data"] = {{"path", cfg.data.path},
               {"length", cfg.data.length},
               {"hold_steps", cfg.data.hold_steps},
               {"amplitude_scale", cfg.data.amplitude_scale},
               {"equilibrium_x", cfg.data.equilibrium_x},
               {"equilibrium_y", cfg.data.equilibrium_y}};
  if (cfg.data.amplitudes.size() > 0) j["data"]["amplitudes"] = vec_to_json(cfg.data.amplitudes);
  j["surrogate"] = {{"kind", cfg.surrogate.kind},
                    {"preset", cfg.surrogate.preset},
                    {"vtvl", detail::vtvl_params_to_json(cfg.surrogate.vtvl)}};
  if (cfg.surrogate.a.size() > 0)
    j["surrogate"]["lti"] = {{"a", detail::mat_to_json(cfg.surrogate.a)},
                             {"b", detail::mat_to_json(cfg.surrogate.b)},
                             {"c", detail::mat_to_json(cfg.surrogate.c)},
                             {"d", detail::mat_to_json(cfg.surrogate.d)}};
  j["plant"] = {{"kind", cfg.plant.kind},
                {"preset", cfg.plant.preset},
                {"fuel_burn", cfg.plant.fuel_burn},
                {"burn_rate", cfg.plant.burn_rate},
                {"vtvl", detail::vtvl_params_to_json(cfg.plant.vtvl)}};
  if (cfg.plant.a.size() > 0)
    j["plant"]["lti"] = {{"a", detail::mat_to_json(cfg.plant.a)},
                         {"b", detail::mat_to_json(cfg.plant.b)},
                         {"c", detail::mat_to_json(cfg.plant.c)},
                         {"d", detail::mat_to_json(cfg.plant.d)}};
  j["evaluation"] = {{"runs", cfg.eval.runs},
                     {"max_steps", cfg.eval.max_steps},
                     {"spawn_x", Json::array({cfg.eval.spawn_x_lo, cfg.eval.spawn_x_hi})},
                     {"spawn_y", Json::array({cfg.eval.spawn_y_lo, cfg.eval.spawn_y_hi})},
                     {"landing",
                      {{"pad_x", cfg.eval.landing.pad_x},
                       {"pad_y", cfg.eval.landing.pad_y},
                       {"touchdown_tol", cfg.eval.landing.touchdown_tol},
                       {"x_tol", cfg.eval.landing.x_tol},
                       {"theta_tol", cfg.eval.landing.theta_tol},
                       {"vy_tol", cfg.eval.landing.vy_tol},
                       {"divergence_bound", cfg.eval.landing.divergence_bound}}},
                     {"policy", cfg.eval.policy},
                     {"write_traces", cfg.eval.write_traces}};
  Json cmp;
  if (cfg.compare.lambda_a.size() > 0) cmp["lambda_a"] = vec_to_json(cfg.compare.lambda_a);
  if (cfg.compare.lambda_b.size() > 0) cmp["lambda_b"] = vec_to_json(cfg.compare.lambda_b);
  if (!cfg.compare.report_a.empty()) cmp["report_a"] = cfg.compare.report_a;
  if (!cfg.compare.report_b.empty()) cmp["report_b"] = cfg.compare.report_b;
  if (!cmp.is_null()) j["compare"] = cmp;
  return j;
}

namespace detail {

inline VtvlParams preset_params(const VtvlParams& base, const std::string& preset,
                                MassMode mode, double burn_rate) {
  VtvlParams p = preset == "B" ? vtvl_model_b(base) : vtvl_model_a(base);
  p.mass_mode = mode;
  p.burn_rate = burn_rate;
  return p;
}

struct BuiltPlant {
  std::unique_ptr<Model> model;
  Vec u_eq;       // equilibrium input for data collection / references
  Vec x_eq;       // physical equilibrium state at the data-collection point
  Vec state0_eq;  // full plant state at the equilibrium
};

inline BuiltPlant build_plant(const RunConfig& cfg) {
  BuiltPlant out;
  if (cfg.plant.kind == "lti") {
    require(cfg.plant.a.size() > 0, "plant.lti matrices are required for kind 'lti'");
    auto lti = std::make_unique<LtiModel>(cfg.plant.a, cfg.plant.b, cfg.plant.c, cfg.plant.d);
    out.u_eq = Vec::Zero(lti->input_dim());
    out.x_eq = Vec::Zero(lti->state_dim());
    out.state0_eq = out.x_eq;
    out.model = std::move(lti);
    return out;
  }
  VtvlParams p = preset_params(cfg.plant.vtvl, cfg.plant.preset,
                               cfg.plant.fuel_burn ? MassMode::fuel_burn : MassMode::constant,
                               cfg.plant.burn_rate);
  auto plant = std::make_unique<VtvlPlant>(p);
  out.u_eq = vtvl_hover_input(p);
  Vec x6(6);
  x6 << cfg.data.equilibrium_x, 0.0, cfg.data.equilibrium_y, 0.0, 0.0, 0.0;
  out.x_eq = x6;
  out.state0_eq = plant->initial_state(x6);
  out.model = std::move(plant);
  return out;
}

inline std::unique_ptr<SurrogateModel> build_surrogate(const RunConfig& cfg) {
  if (cfg.surrogate.kind == "lti") {
    require(cfg.surrogate.a.size() > 0, "surrogate.lti matrices are required for kind 'lti'");
    return std::make_unique<LtiModel>(cfg.surrogate.a, cfg.surrogate.b, cfg.surrogate.c,
                                      cfg.surrogate.d);
  }
  return std::make_unique<VtvlModel>(
      preset_params(cfg.surrogate.vtvl, cfg.surrogate.preset, MassMode::constant, 0.0));
}

inline Vec default_u_ref(const RunConfig& cfg, Index m) {
  if (cfg.u_ref.size() > 0) {
    require(cfg.u_ref.size() == m, "reference.u must have m entries");
    return cfg.u_ref;
  }
  if (cfg.plant.kind == "vtvl")
    return vtvl_hover_input(preset_params(cfg.plant.vtvl, cfg.plant.preset, MassMode::constant,
                                          0.0));
  return Vec::Zero(m);
}

inline Vec default_y_ref(const RunConfig& cfg, Index p) {
  if (cfg.y_ref.size() > 0) {
    require(cfg.y_ref.size() == p, "reference.y must have p entries");
    return cfg.y_ref;
  }
  if (cfg.plant.kind == "vtvl") {
    Vec y(6);
    y << cfg.eval.landing.pad_x, 0.0, cfg.eval.landing.pad_y, 0.0, 0.0, 0.0;
    return y;
  }
  return Vec::Zero(p);
}

inline Vec tile(const Vec& v, Index reps) {
  Vec out(v.size() * reps);
  for (Index k = 0; k < reps; ++k) out.segment(k * v.size(), v.size()) = v;
  return out;
}

inline DeepcPolicyConfig build_policy_config(const RunConfig& cfg, HankelPartition part) {
  const Index m = part.input_dim;
  const Index p = part.output_dim;
  require(cfg.q_diag.size() == p, "cost.q_diag must have p entries");
  require(cfg.r_diag.size() == m, "cost.r_diag must have m entries");
  DeepcPolicyConfig pc;
  pc.q_cost = cfg.q_diag.asDiagonal();
  pc.r_cost = cfg.r_diag.asDiagonal();
  const Vec u1 = default_u_ref(cfg, m);
  const Vec y1 = default_y_ref(cfg, p);
  pc.w_ref.resize((m + p) * part.horizon.t_f);
  pc.w_ref << tile(u1, part.horizon.t_f), tile(y1, part.horizon.t_f);
  pc.u_box = cfg.u_box;
  pc.y_box = cfg.y_box;
  pc.lambda = cfg.hunt.lambda_init;
  pc.part = std::move(part);
  pc.validate();
  return pc;
}

/// MPC baseline built from the configured surrogate preset, linearized at
/// hover over the landing pad so the deviation reference is zero.
inline MpcConfig build_mpc_config(const RunConfig& cfg, const std::string& preset) {
  require(cfg.surrogate.kind == "vtvl", "the MPC baseline requires a vtvl surrogate");
  const VtvlParams p = preset_params(cfg.surrogate.vtvl, preset, MassMode::constant, 0.0);
  Vec x_eq(6);
  x_eq << cfg.eval.landing.pad_x, 0.0, cfg.eval.landing.pad_y, 0.0, 0.0, 0.0;
  const Vec u_eq = vtvl_hover_input(p);
  const LinearizedModel lin = linearize_discretize(p, x_eq, u_eq, p.dt);
  MpcConfig mc;
  mc.model = lin.model;
  mc.q_cost = Mat(cfg.q_diag.asDiagonal());
  mc.r_cost = Mat(cfg.r_diag.asDiagonal());
  mc.t_f = cfg.horizon.t_f;
  mc.reference = default_y_ref(cfg, 6);
  mc.x_box = cfg.y_box;
  mc.u_box = cfg.u_box;
  mc.x_eq = x_eq;
  mc.u_eq = u_eq;
  mc.validate();
  return mc;
}

}  // namespace detail

/// Collects a PRBS probe trajectory from the configured plant, checks
/// persistency of excitation at order t_ini + t_f, and writes the CSV plus a
/// metadata sidecar. Returns a process exit code.
inline int cmd_generate_data(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const detail::BuiltPlant plant = detail::build_plant(cfg);
  const Index m = plant.model->input_dim();

  Vec amp;
  if (cfg.data.amplitudes.size() > 0) {
    require(cfg.data.amplitudes.size() == m, "data.amplitudes must have m entries");
    amp = cfg.data.amplitudes;
  } else {
    require(cfg.u_box.lower.size() == m, "constraints.u bounds must have m entries");
    amp.resize(m);
    for (Index c = 0; c < m; ++c) {
      require(std::isfinite(cfg.u_box.lower(c)) && std::isfinite(cfg.u_box.upper(c)),
              "PRBS amplitude needs finite input bounds on channel " + std::to_string(c) +
                  " (or explicit data.amplitudes)");
      amp(c) = cfg.data.amplitude_scale * 0.5 * (cfg.u_box.upper(c) - cfg.u_box.lower(c));
    }
  }

  SplitMix64 rng(derive_seed(cfg.seed, 0xDA7A));
  const Index t = cfg.data.length;
  Mat u(m, t), y(plant.model->output_dim(), t);
  Vec x = plant.state0_eq;
  Vec levels = Vec::Ones(m);
  for (Index i = 0; i < t; ++i) {
    if (i % cfg.data.hold_steps == 0)
      for (Index c = 0; c < m; ++c) levels(c) = rng.next() & 1 ? 1.0 : -1.0;
    const Vec ui = plant.u_eq + amp.cwiseProduct(levels);
    u.col(i) = ui;
    y.col(i) = plant.model->output(x, ui);
    x = plant.model->step(x, ui);
  }

  const Index order = cfg.horizon.depth();
  const PersistencyReport pe = check_persistent_excitation(u, order);
  Json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["result"] = {{"length", t},
                    {"hold_steps", cfg.data.hold_steps},
                    {"amplitudes", vec_to_json(amp)},
                    {"equilibrium_input", vec_to_json(plant.u_eq)},
                    {"pe_order", order},
                    {"pe_rank", pe.rank},
                    {"pe_required_rank", pe.required_rank},
                    {"persistently_exciting", pe.persistently_exciting},
                    {"seed", cfg.seed}};
  if (!pe.persistently_exciting) {
    log << "persistency of excitation failed: rank " << pe.rank << " < required "
        << pe.required_rank << " at order " << order << "\n";
    return kExitPeFailure;
  }
  const std::filesystem::path out = std::filesystem::path(cfg.out_dir) / cfg.data.path;
  write_trajectory_csv(out, RawTrajectory(u, y));
  write_text_atomic(out.string() + ".meta.json", meta.dump(2) + "\n");
  log << "wrote " << out.string() << " (" << t << " steps, PE rank " << pe.rank << "/"
      << pe.required_rank << ")\n";
  return kExitOk;
}

namespace detail {

inline Json wrap_report(Json result, double wall_ms) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["meta"] = {{"wall_ms", wall_ms},
               {"written_at", static_cast<std::int64_t>(std::time(nullptr))}};
  j["result"] = std::move(result);
  return j;
}

inline HankelPartition load_partition(const RunConfig& cfg) {
  const std::filesystem::path path = std::filesystem::path(cfg.out_dir) / cfg.data.path;
  const RawTrajectory traj = read_trajectory_csv(path);
  const PersistencyReport pe = check_persistent_excitation(traj.u, cfg.horizon.depth());
  if (!pe.persistently_exciting)
    throw PersistencyError("dataset " + path.string() + " is not persistently exciting at order " +
                          std::to_string(cfg.horizon.depth()) + " (rank " +
                          std::to_string(pe.rank) + "/" + std::to_string(pe.required_rank) + ")");
  return partition(traj, cfg.horizon);
}

}  // namespace detail

/// Runs the tuning loop on the configured surrogate and dataset; writes the
/// report JSON and the per-iteration trajectory CSV.
inline int cmd_tune(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const auto t0 = std::chrono::steady_clock::now();
  HankelPartition part = detail::load_partition(cfg);
  const DeepcPolicyConfig pc = detail::build_policy_config(cfg, std::move(part));
  const auto surrogate = detail::build_surrogate(cfg);
  HuntConfig hunt = cfg.hunt;
  hunt.seed = cfg.seed;
  const HuntReport report = tune(hunt, pc, *surrogate);
  const double wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const std::filesystem::path dir(cfg.out_dir);
  write_text_atomic(dir / "hunt_report.json",
                    detail::wrap_report(hunt_report_to_json(report), wall).dump(2) + "\n");
  write_text_atomic(dir / "hunt_trajectory.csv", hunt_trajectory_csv(report));
  log << "tuned lambda = [" << report.lambda_final.transpose() << "], held-out cost "
      << report.heldout_cost_initial << " -> " << report.heldout_cost_final << "\n";
  return kExitOk;
}

struct EvalRun {
  Vec spawn;
  double cost = 0.0;
  Index steps = 0;
  bool success = false;
  Termination termination = Termination::completed;
};

struct EvalSummary {
  std::string label;
  std::vector<EvalRun> runs;
  int success_count = 0;
  double success_rate = 0.0;
  double mean_cost_success = 0.0;  // Table-style: averaged over successful runs only
};

namespace detail {

/// Shared evaluation harness: k seeded spawns on the true plant.
inline EvalSummary evaluate_policy(const RunConfig& cfg, const std::string& label,
                                   const PolicyFn& policy, Index t_ini,
                                   const std::filesystem::path& trace_dir) {
  const BuiltPlant plant = detail::build_plant(cfg);
  require(cfg.plant.kind == "vtvl", "closed-loop evaluation expects the vtvl plant");
  const Index m = plant.model->input_dim();
  const Index p = plant.model->output_dim();
  const Vec u1 = default_u_ref(cfg, m);
  const Vec y1 = default_y_ref(cfg, p);
  Vec w_ref((m + p) * cfg.horizon.t_f);
  w_ref << tile(u1, cfg.horizon.t_f), tile(y1, cfg.horizon.t_f);
  const Mat q = Mat(cfg.q_diag.asDiagonal());
  const Mat r = Mat(cfg.r_diag.asDiagonal());
  const Vec u_hover = vtvl_hover_input(preset_params(cfg.plant.vtvl, cfg.plant.preset,
                                                     MassMode::constant, 0.0));

  EvalSummary sum;
  sum.label = label;
  sum.runs.resize(static_cast<std::size_t>(cfg.eval.runs));
  std::vector<ClosedLoopTrace> traces(sum.runs.size());

  auto one = [&](int k) {
    SplitMix64 rng(derive_seed(cfg.seed, 0xEA10 + static_cast<std::uint64_t>(k)));
    Vec spawn(6);
    spawn << rng.uniform(cfg.eval.spawn_x_lo, cfg.eval.spawn_x_hi), 0.0,
        rng.uniform(cfg.eval.spawn_y_lo, cfg.eval.spawn_y_hi), 0.0, 0.0, 0.0;
    InitialWindow wini{tile(u_hover, t_ini), tile(spawn, t_ini)};
    const Vec x0 = static_cast<const VtvlPlant&>(*plant.model).initial_state(spawn);
    RolloutOptions opts;
    opts.landing = &cfg.eval.landing;
    opts.initial_state = &x0;
    opts.record_trace = cfg.eval.write_traces;
    EvalRun run;
    run.spawn = spawn;
    try {
      ClosedLoopTrace trace = rollout(policy, *plant.model, wini, w_ref, cfg.eval.max_steps, q,
                                      r, opts);
      run.cost = trace.realized_cost;
      run.steps = static_cast<Index>(trace.steps.size());
      run.success = trace.success;
      run.termination = trace.termination;
      traces[static_cast<std::size_t>(k)] = std::move(trace);
    } catch (const std::runtime_error&) {
      run.termination = Termination::diverged;
    }
    sum.runs[static_cast<std::size_t>(k)] = std::move(run);
  };

  if (cfg.hunt.parallel && cfg.eval.runs > 1) {
    std::vector<std::future<void>> futs;
    futs.reserve(sum.runs.size());
    for (int k = 0; k < cfg.eval.runs; ++k)
      futs.push_back(std::async(std::launch::async, one, k));
    for (auto& f : futs) f.get();
  } else {
    for (int k = 0; k < cfg.eval.runs; ++k) one(k);
  }

  double cost_sum = 0.0;
  for (const auto& run : sum.runs)
    if (run.success) {
      ++sum.success_count;
      cost_sum += run.cost;
    }
  sum.success_rate = static_cast<double>(sum.success_count) /
                     static_cast<double>(cfg.eval.runs);
  sum.mean_cost_success =
      sum.success_count > 0 ? cost_sum / static_cast<double>(sum.success_count) : 0.0;

  if (cfg.eval.write_traces) {
    for (std::size_t k = 0; k < traces.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "run_%03zu.csv", k);
      write_text_atomic(trace_dir / name, trace_to_csv(traces[k]));
    }
  }
  return sum;
}

inline Json eval_summary_to_json(const EvalSummary& sum) {
  Json j;
  j["label"] = sum.label;
  j["success_count"] = sum.success_count;
  j["success_rate"] = sum.success_rate;
  j["mean_cost_success"] = sum.mean_cost_success;
  j["mean_cost_success_e3"] = sum.mean_cost_success / 1e3;
  Json runs = Json::array();
  for (const auto& run : sum.runs) {
    runs.push_back({{"spawn", vec_to_json(run.spawn)},
                    {"cost", run.cost},
                    {"steps", run.steps},
                    {"success", run.success},
                    {"termination", to_string(run.termination)}});
  }
  j["runs"] = std::move(runs);
  return j;
}

inline Vec lambda_from_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  require(j.contains("result") && j["result"].contains("lambda_final"),
          path.string() + " does not contain result.lambda_final");
  return vec_from_json(j["result"]["lambda_final"]);
}

}  // namespace detail

/// Evaluates one policy over k seeded spawns on the true plant.
/// model_override: "A"/"B" evaluates the MPC baseline for that preset; a path
/// evaluates the tuned weights stored in that report; empty follows the
/// config (evaluation.policy, lambda.init).
inline int cmd_eval(const RunConfig& cfg, const std::string& model_override = "",
                    std::ostream& log = std::cerr) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string label;
  PolicyFn policy;
  DeepcPolicyConfig pc;  // kept alive for the deepc closure
  MpcConfig mc;
  Vec lambda;

  const bool use_mpc = model_override == "A" || model_override == "B" ||
                       (model_override.empty() && cfg.eval.policy == "mpc");
  if (use_mpc) {
    const std::string preset = model_override.empty() ? cfg.surrogate.preset : model_override;
    mc = detail::build_mpc_config(cfg, preset);
    label = "mpc_" + preset;
    policy = [&mc](const InitialWindow& w) { return mpc_policy(mc, w.y_ini.tail(6)); };
  } else {
    lambda = model_override.empty() ? cfg.hunt.lambda_init
                                    : detail::lambda_from_report(model_override);
    HankelPartition part = detail::load_partition(cfg);
    pc = detail::build_policy_config(cfg, std::move(part));
    pc.lambda = lambda;
    pc.validate();
    label = "deepc";
    policy = [&pc](const InitialWindow& w) { return solve_policy(pc, w).u0; };
  }

  const std::filesystem::path dir(cfg.out_dir);
  const EvalSummary sum =
      detail::evaluate_policy(cfg, label, policy, cfg.horizon.t_ini, dir / ("traces_" + label));
  Json body = detail::eval_summary_to_json(sum);
  if (!use_mpc) body["lambda"] = vec_to_json(lambda);
  const double wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_text_atomic(dir / ("eval_" + label + ".json"),
                    detail::wrap_report(std::move(body), wall).dump(2) + "\n");
  log << label << ": success " << sum.success_count << "/" << cfg.eval.runs
      << ", mean cost over successes " << sum.mean_cost_success << "\n";
  return kExitOk;
}

/// Four-way comparison on the true plant: MPC with models A and B, and the
/// tuned data-driven policies for both weight sets.
inline int cmd_compare(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const auto t0 = std::chrono::steady_clock::now();
  Vec lambda_a = cfg.compare.lambda_a;
  Vec lambda_b = cfg.compare.lambda_b;
  if (!cfg.compare.report_a.empty()) lambda_a = detail::lambda_from_report(cfg.compare.report_a);
  if (!cfg.compare.report_b.empty()) lambda_b = detail::lambda_from_report(cfg.compare.report_b);
  require(lambda_a.size() == 3 && lambda_b.size() == 3,
          "compare needs lambda_a and lambda_b (arrays or report paths)");

  HankelPartition part = detail::load_partition(cfg);
  DeepcPolicyConfig pc_a = detail::build_policy_config(cfg, part);
  pc_a.lambda = lambda_a;
  DeepcPolicyConfig pc_b = detail::build_policy_config(cfg, std::move(part));
  pc_b.lambda = lambda_b;
  const MpcConfig mc_a = detail::build_mpc_config(cfg, "A");
  const MpcConfig mc_b = detail::build_mpc_config(cfg, "B");

  const std::filesystem::path dir(cfg.out_dir);
  std::vector<EvalSummary> rows;
  rows.push_back(detail::evaluate_policy(
      cfg, "mpc_A", [&](const InitialWindow& w) { return mpc_policy(mc_a, w.y_ini.tail(6)); },
      cfg.horizon.t_ini, dir / "traces_mpc_A"));
  rows.push_back(detail::evaluate_policy(
      cfg, "mpc_B", [&](const InitialWindow& w) { return mpc_policy(mc_b, w.y_ini.tail(6)); },
      cfg.horizon.t_ini, dir / "traces_mpc_B"));
  rows.push_back(detail::evaluate_policy(
      cfg, "deepc_A", [&](const InitialWindow& w) { return solve_policy(pc_a, w).u0; },
      cfg.horizon.t_ini, dir / "traces_deepc_A"));
  rows.push_back(detail::evaluate_policy(
      cfg, "deepc_B", [&](const InitialWindow& w) { return solve_policy(pc_b, w).u0; },
      cfg.horizon.t_ini, dir / "traces_deepc_B"));

  Json body;
  body["lambda_a"] = vec_to_json(lambda_a);
  body["lambda_b"] = vec_to_json(lambda_b);
  Json table = Json::array();
  std::string csv = "policy,success_pct,mean_cost_success_e3\n";
  for (const auto& row : rows) {
    table.push_back({{"policy", row.label},
                     {"success_rate", row.success_rate},
                     {"mean_cost_success_e3", row.mean_cost_success / 1e3}});
    csv += row.label + "," + detail::format_double(row.success_rate * 100.0) + "," +
           detail::format_double(row.mean_cost_success / 1e3) + "\n";
    log << row.label << ": success " << row.success_count << ", mean cost "
        << row.mean_cost_success << "\n";
  }
  body["table"] = std::move(table);
  const double wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_text_atomic(dir / "compare.json",
                    detail::wrap_report(std::move(body), wall).dump(2) + "\n");
  write_text_atomic(dir / "compare.csv", csv);
  return kExitOk;
}

}  // namespace ddc
