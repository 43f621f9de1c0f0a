#pragma once

// CSV and JSON serialization for trajectories, Koopman models, sparse models
// and eigenfunctions. Requires nlohmann/json (json.hpp) on the include path.

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopmankit/control.hpp"
#include "koopmankit/dynamics.hpp"
#include "koopmankit/errors.hpp"
#include "koopmankit/identification.hpp"
#include "koopmankit/lifting.hpp"
#include "koopmankit/spectral.hpp"

namespace koopmankit::io {

using nlohmann::json;

/// 17 significant digits, shortest C representation.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Trajectory CSV: header t,x1,...,xn[,u | ,u1,...,uq], CRLF line endings.
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const std::string& state_prefix = "x") {
  traj.validate();
  const Eigen::Index q = traj.has_inputs() ? traj.inputs.rows() : 0;
  os << 't';
  for (Eigen::Index i = 0; i < traj.dim(); ++i) os << ',' << state_prefix << (i + 1);
  if (q == 1) os << ",u";
  for (Eigen::Index i = 0; q > 1 && i < q; ++i) os << ",u" << (i + 1);
  os << "\r\n";
  for (Eigen::Index k = 0; k < traj.size(); ++k) {
    os << format_double(traj.times(k));
    for (Eigen::Index i = 0; i < traj.dim(); ++i) os << ',' << format_double(traj.states(i, k));
    for (Eigen::Index i = 0; i < q; ++i) os << ',' << format_double(traj.inputs(i, k));
    os << "\r\n";
  }
}

namespace detail {
inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("csv: cannot parse number '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgument("csv: trailing characters in '" + s + "'");
  return v;
}
}  // namespace detail

[[nodiscard]] inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("csv: empty input");
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "t") throw InvalidArgument("csv: first column must be 't'");
  Eigen::Index n = 0;
  Eigen::Index q = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (!h.empty() && h[0] == 'u') {
      ++q;
    } else {
      if (q > 0) throw InvalidArgument("csv: state columns must precede input columns");
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("csv: no state columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw InvalidArgument("csv: row has " + std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(detail::parse_double(c));
    rows.push_back(std::move(row));
  }
  const auto count = static_cast<Eigen::Index>(rows.size());
  Trajectory traj;
  traj.times.resize(count);
  traj.states.resize(n, count);
  if (q > 0) traj.inputs.resize(q, count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    traj.times(k) = r[0];
    for (Eigen::Index i = 0; i < n; ++i) traj.states(i, k) = r[static_cast<std::size_t>(1 + i)];
    for (Eigen::Index i = 0; i < q; ++i) traj.inputs(i, k) = r[static_cast<std::size_t>(1 + n + i)];
  }
  require_finite(traj.states, "csv");
  traj.validate();
  return traj;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

[[nodiscard]] inline json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

[[nodiscard]] inline Mat matrix_from_json(const json& j) {
  if (!j.is_array()) throw InvalidArgument("json: matrix must be an array of rows");
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) throw InvalidArgument("json: ragged matrix");
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  require_finite(m, "json matrix");
  return m;
}

[[nodiscard]] inline json vector_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

[[nodiscard]] inline json complex_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

[[nodiscard]] inline Complex complex_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("json: complex value must be [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

[[nodiscard]] inline json observable_to_json(const Observable& o) {
  if (o.is_monomial()) return json(o.exponents);
  return json(o.label());
}

[[nodiscard]] inline Observable observable_from_json(const json& j, std::size_t dim) {
  if (j.is_array()) {
    auto e = j.get<Exponents>();
    if (e.size() != dim) throw InvalidArgument("json: observable exponent length mismatch");
    return Observable::monomial(std::move(e));
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    const std::string prefix = "exp(-1/x";
    if (s.rfind(prefix, 0) == 0 && s.back() == ')') {
      const std::string idx = s.substr(prefix.size(), s.size() - prefix.size() - 1);
      const int v = std::stoi(idx);
      if (v < 1 || static_cast<std::size_t>(v) > dim) throw InvalidArgument("json: observable variable out of range");
      return Observable::exp_neg_inv(static_cast<std::size_t>(v - 1));
    }
    throw InvalidArgument("json: unknown named observable '" + s + "'");
  }
  throw InvalidArgument("json: observable must be an exponent list or a name");
}

[[nodiscard]] inline json library_to_json(const ObservableLibrary& lib) {
  json obs = json::array();
  for (const auto& o : lib.observables()) obs.push_back(observable_to_json(o));
  return {{"dim", lib.dim()}, {"observables", obs}};
}

[[nodiscard]] inline ObservableLibrary library_from_json(const json& j) {
  const auto dim = j.at("dim").get<std::size_t>();
  std::vector<Observable> obs;
  for (const auto& o : j.at("observables")) obs.push_back(observable_from_json(o, dim));
  return {dim, std::move(obs)};
}

// ---------------------------------------------------------------------------
// KoopmanModel: {time_kind, dim, observables, K, state_rows[, coordinates]}
// ---------------------------------------------------------------------------

[[nodiscard]] inline json to_json(const KoopmanModel& m) {
  m.validate();
  json j = library_to_json(m.library);
  j["time_kind"] = to_string(m.time_kind);
  j["K"] = matrix_to_json(m.K);
  j["state_rows"] = m.state_rows;
  if (m.has_coordinates()) j["coordinates"] = matrix_to_json(m.coordinates);
  return j;
}

[[nodiscard]] inline KoopmanModel koopman_model_from_json(const json& j) {
  static const std::vector<std::string> allowed = {"time_kind", "dim", "observables", "K", "state_rows", "coordinates"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) throw InvalidArgument("json: unknown key '" + key + "'");
  }
  KoopmanModel m;
  m.library = library_from_json(j);
  m.time_kind = time_kind_from_string(j.at("time_kind").get<std::string>());
  m.K = matrix_from_json(j.at("K"));
  m.state_rows = j.at("state_rows").get<std::vector<std::size_t>>();
  if (j.contains("coordinates")) m.coordinates = matrix_from_json(j.at("coordinates"));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// SparseModel: {library, threshold, time_kind, rows: [{target, terms: [{observable, coeff}]}]}
// ---------------------------------------------------------------------------

[[nodiscard]] inline json to_json(const SparseModel& s) {
  s.validate();
  json rows = json::array();
  const auto targets = s.target_labels();
  for (Eigen::Index k = 0; k < s.xi_t.rows(); ++k) {
    json terms = json::array();
    for (Eigen::Index c = 0; c < s.xi_t.cols(); ++c) {
      if (!s.mask(k, c)) continue;
      terms.push_back({{"observable", s.library[static_cast<std::size_t>(c)].label()}, {"coeff", s.xi_t(k, c)}});
    }
    rows.push_back({{"target", targets[static_cast<std::size_t>(k)]}, {"terms", terms}});
  }
  return {{"library", library_to_json(s.library)},
          {"threshold", s.threshold},
          {"time_kind", to_string(s.time_kind)},
          {"rows", rows}};
}

[[nodiscard]] inline SparseModel sparse_model_from_json(const json& j) {
  SparseModel s;
  s.library = library_from_json(j.at("library"));
  s.threshold = j.at("threshold").get<double>();
  s.time_kind = time_kind_from_string(j.at("time_kind").get<std::string>());
  const json& rows = j.at("rows");
  const auto n_out = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(s.library.size());
  s.xi_t = Mat::Zero(n_out, m);
  s.mask = Mask::Constant(n_out, m, false);
  for (Eigen::Index k = 0; k < n_out; ++k) {
    for (const auto& term : rows[static_cast<std::size_t>(k)].at("terms")) {
      const auto label = term.at("observable").get<std::string>();
      const auto idx = s.library.find_label(label);
      if (!idx) throw InvalidArgument("json: term observable '" + label + "' not in library");
      s.xi_t(k, static_cast<Eigen::Index>(*idx)) = term.at("coeff").get<double>();
      s.mask(k, static_cast<Eigen::Index>(*idx)) = true;
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Eigenfunction: {eigenvalue: [re, im], coeffs: [[re, im], ...], library[, coordinates]}
// ---------------------------------------------------------------------------

[[nodiscard]] inline json to_json(const Eigenfunction& e) {
  json coeffs = json::array();
  for (Eigen::Index i = 0; i < e.coeffs.size(); ++i) coeffs.push_back(complex_to_json(e.coeffs(i)));
  json j = {{"eigenvalue", complex_to_json(e.eigenvalue)},
            {"coeffs", coeffs},
            {"library", library_to_json(e.library)},
            {"time_kind", to_string(e.time_kind)}};
  if (e.coordinates.size() > 0) j["coordinates"] = matrix_to_json(e.coordinates);
  return j;
}

[[nodiscard]] inline Eigenfunction eigenfunction_from_json(const json& j) {
  Eigenfunction e;
  e.eigenvalue = complex_from_json(j.at("eigenvalue"));
  const json& c = j.at("coeffs");
  e.coeffs.resize(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) e.coeffs(static_cast<Eigen::Index>(i)) = complex_from_json(c[i]);
  e.library = library_from_json(j.at("library"));
  e.time_kind = time_kind_from_string(j.at("time_kind").get<std::string>());
  if (j.contains("coordinates")) e.coordinates = matrix_from_json(j.at("coordinates"));
  return e;
}

// ---------------------------------------------------------------------------
// Comparison report: {params, gains, cost_ratio, J_lqr, J_kooc, trajectories}
// ---------------------------------------------------------------------------

[[nodiscard]] inline json to_json(const ComparisonReport& r, const json& params, const json& trajectory_files) {
  json gains = {{"lqr", matrix_to_json(r.lqr_gain)},
                {"kooc", matrix_to_json(r.kooc.gain)},
                {"kooc_observables", r.kooc.model.library.labels()}};
  return {{"params", params},
          {"gains", gains},
          {"cost_ratio", r.cost_ratio},
          {"J_lqr", r.j_lqr(r.j_lqr.size() - 1)},
          {"J_kooc", r.j_kooc(r.j_kooc.size() - 1)},
          {"script_convention", {{"cost_ratio", r.script_ratio},
                                 {"J_lqr", r.j_lqr_script(r.j_lqr_script.size() - 1)},
                                 {"J_kooc", r.j_kooc_script(r.j_kooc_script.size() - 1)}}},
          {"dropped_input_terms", r.dropped_input_terms},
          {"lifted_model", to_json(r.kooc.model)},
          {"trajectories", trajectory_files}};
}

// ---------------------------------------------------------------------------
// Experiment configuration: {experiment, params, io, seed}
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;                // registry system name
  std::map<std::string, double> params;  // overrides of command defaults
  std::string io;                        // output directory; empty keeps the command default
  long long seed = 0;                    // reserved
};

[[nodiscard]] inline ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "experiment") {
      if (!value.is_string()) throw InvalidArgument("config: 'experiment' must be a string");
      c.experiment = value.get<std::string>();
    } else if (key == "params") {
      if (!value.is_object()) throw InvalidArgument("config: 'params' must be an object");
      for (const auto& [name, v] : value.items()) {
        if (!v.is_number()) throw InvalidArgument("config: parameter '" + name + "' must be a number");
        c.params[name] = v.get<double>();
      }
    } else if (key == "io") {
      if (!value.is_string()) throw InvalidArgument("config: 'io' must be a string");
      c.io = value.get<std::string>();
    } else if (key == "seed") {
      if (!value.is_number_integer()) throw InvalidArgument("config: 'seed' must be an integer");
      c.seed = value.get<long long>();
    } else {
      throw InvalidArgument("config: unknown key '" + key + "'");
    }
  }
  return c;
}

[[nodiscard]] inline json to_json(const ExperimentConfig& c) {
  return {{"experiment", c.experiment}, {"params", c.params}, {"io", c.io}, {"seed", c.seed}};
}

}  // namespace koopmankit::io
