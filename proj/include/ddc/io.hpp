#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddc/hankel.hpp"
#include "ddc/hunt.hpp"
#include "ddc/rollout.hpp"

namespace ddc {

using Json = nlohmann::json;

/// I/O failure (missing file, malformed content); message carries the path
/// and, for parse errors, the line number.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

/// Writes content to path via a temporary file plus rename, so readers never
/// observe partial output and failures leave no file behind.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.good()) {
      out.close();
      fs::remove(tmp);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename to " + path.string() + " failed: " + ec.message());
  }
}

/// Trajectory CSV: header u0,..,u{m-1},y0,..,y{p-1}; one row per time step;
/// numbers at full precision.
inline std::string trajectory_to_csv(const RawTrajectory& traj) {
  std::string s;
  for (Index c = 0; c < traj.input_dim(); ++c) s += (c ? ",u" : "u") + std::to_string(c);
  for (Index c = 0; c < traj.output_dim(); ++c) s += ",y" + std::to_string(c);
  s += "\n";
  for (Index t = 0; t < traj.length(); ++t) {
    for (Index c = 0; c < traj.input_dim(); ++c) {
      if (c) s += ",";
      s += detail::format_double(traj.u(c, t));
    }
    for (Index c = 0; c < traj.output_dim(); ++c)
      s += "," + detail::format_double(traj.y(c, t));
    s += "\n";
  }
  return s;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const RawTrajectory& traj) {
  write_text_atomic(path, trajectory_to_csv(traj));
}

inline RawTrajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  Index m = 0, p = 0;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string expect_u = "u" + std::to_string(i);
    const std::string expect_y = "y" + std::to_string(i - static_cast<std::size_t>(m));
    if (p == 0 && header[i] == expect_u)
      ++m;
    else if (header[i] == expect_y)
      ++p;
    else
      throw IoError(path.string() + ": malformed header token '" + header[i] + "' at column " +
                    std::to_string(i + 1));
  }
  if (m == 0 || p == 0)
    throw IoError(path.string() + ": header must list u channels then y channels");

  std::vector<double> u_vals, y_vals;
  Index rows = 0;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto toks = detail::split_csv_line(line);
    if (static_cast<Index>(toks.size()) != m + p)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(m + p) + " fields, got " + std::to_string(toks.size()));
    for (Index c = 0; c < m + p; ++c) {
      const std::string& tok = toks[static_cast<std::size_t>(c)];
      // strtod instead of stod: stod throws on ERANGE even for benign
      // subnormal underflow, which full-precision round-trips must survive.
      errno = 0;
      char* endp = nullptr;
      const double v = std::strtod(tok.c_str(), &endp);
      const bool overflow = errno == ERANGE && (v == HUGE_VAL || v == -HUGE_VAL);
      if (tok.empty() || endp != tok.c_str() + tok.size() || overflow)
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok +
                      "'");
      (c < m ? u_vals : y_vals).push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw IoError(path.string() + ": no data rows");
  Mat u(m, rows), y(p, rows);
  for (Index t = 0; t < rows; ++t) {
    for (Index c = 0; c < m; ++c) u(c, t) = u_vals[static_cast<std::size_t>(t * m + c)];
    for (Index c = 0; c < p; ++c) y(c, t) = y_vals[static_cast<std::size_t>(t * p + c)];
  }
  return RawTrajectory(std::move(u), std::move(y));
}

inline Json vec_to_json(const Vec& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vec vec_from_json(const Json& arr) {
  Vec v(static_cast<Index>(arr.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

/// JSON body of a tuning report (the reproducible payload; the CLI wraps it
/// with schema/version metadata).
inline Json hunt_report_to_json(const HuntReport& rep) {
  Json j;
  j["lambda_final"] = vec_to_json(rep.lambda_final);
  j["heldout_cost_initial"] = rep.heldout_cost_initial;
  j["heldout_cost_final"] = rep.heldout_cost_final;
  j["train_indices"] = rep.train_indices;
  j["heldout_indices"] = rep.heldout_indices;
  j["total_degenerate_fallbacks"] = rep.total_degenerate_fallbacks;
  j["total_failed_rollouts"] = rep.total_failed_rollouts;
  Json iters = Json::array();
  for (const auto& it : rep.iterations) {
    Json ji;
    ji["lambda"] = vec_to_json(it.lambda);
    ji["window_indices"] = it.window_indices;
    ji["cost"] = it.cost;
    ji["cost_variance"] = it.cost_variance;
    ji["grad"] = vec_to_json(it.grad);
    ji["eta"] = vec_to_json(it.eta);
    ji["degenerate_fallbacks"] = it.degenerate_fallbacks;
    ji["failed_rollouts"] = it.failed_rollouts;
    iters.push_back(std::move(ji));
  }
  j["iterations"] = std::move(iters);
  return j;
}

/// Per-iteration trajectory as CSV for plotting.
inline std::string hunt_trajectory_csv(const HuntReport& rep) {
  std::string s =
      "iter,lambda0,lambda1,lambda2,cost,grad0,grad1,grad2,eta0,eta1,eta2,"
      "degenerate_fallbacks,failed_rollouts,wall_ms\n";
  for (std::size_t k = 0; k < rep.iterations.size(); ++k) {
    const auto& it = rep.iterations[k];
    s += std::to_string(k);
    for (Index i = 0; i < 3; ++i) s += "," + detail::format_double(it.lambda(i));
    s += "," + detail::format_double(it.cost);
    for (Index i = 0; i < 3; ++i) s += "," + detail::format_double(it.grad(i));
    for (Index i = 0; i < 3; ++i) s += "," + detail::format_double(it.eta(i));
    s += "," + std::to_string(it.degenerate_fallbacks);
    s += "," + std::to_string(it.failed_rollouts);
    s += "," + detail::format_double(it.wall_ms);
    s += "\n";
  }
  return s;
}

/// Trace CSV: t, state, input, output, stage cost.
inline std::string trace_to_csv(const ClosedLoopTrace& trace) {
  std::string s;
  if (trace.steps.empty()) return "t,stage_cost\n";
  const Index n = trace.steps[0].x.size();
  const Index m = trace.steps[0].u.size();
  const Index p = trace.steps[0].y.size();
  s = "t";
  for (Index i = 0; i < n; ++i) s += ",x" + std::to_string(i);
  for (Index i = 0; i < m; ++i) s += ",u" + std::to_string(i);
  for (Index i = 0; i < p; ++i) s += ",y" + std::to_string(i);
  s += ",stage_cost\n";
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& st = trace.steps[t];
    s += std::to_string(t);
    for (Index i = 0; i < n; ++i) s += "," + detail::format_double(st.x(i));
    for (Index i = 0; i < m; ++i) s += "," + detail::format_double(st.u(i));
    for (Index i = 0; i < p; ++i) s += "," + detail::format_double(st.y(i));
    s += "," + detail::format_double(st.stage_cost);
    s += "\n";
  }
  return s;
}

}  // namespace ddc
