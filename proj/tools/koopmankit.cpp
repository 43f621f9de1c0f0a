// koopmankit command-line front end: simulate | identify | spectral | control.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koopmankit/koopmankit.hpp"

namespace fs = std::filesystem;
namespace kk = koopmankit;
using kk::io::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNotStabilizable = 4;

struct Settings {
  std::string system;
  std::optional<double> mu;
  std::optional<double> lambda;
  std::optional<double> r;
  std::vector<std::string> x0;
  std::vector<int> ranks;
  std::optional<double> t_end;
  double dt = 0.01;
  std::string out = "koopmankit-out";
  std::string config;
  bool gnuplot = false;

  std::vector<std::string> inputs;
  bool generate = false;
  std::string time_kind;
  int d_max = 2;
  double threshold = 0.025;
  int max_rounds = 8;
  bool sparse_refit = false;

  std::string model;
  std::string named_observable;

  double q = 1.0;
  double rcost = 1.0;
};

// Files written by the current command, relative to the output directory.
class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void text(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << content;
    files_.push_back(name);
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void trajectory(const std::string& name, const kk::Trajectory& traj, const std::string& prefix = "x") {
    std::ostringstream os;
    kk::io::write_trajectory_csv(os, traj, prefix);
    text(name, os.str());
  }

  void table(const std::string& name, const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\r\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << kk::io::format_double(row[i]);
      os << "\r\n";
    }
    text(name, os.str());
  }

  [[nodiscard]] const std::vector<std::string>& files() const { return files_; }
  [[nodiscard]] const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

kk::Vec parse_point(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw kk::InvalidArgument("cannot parse initial condition '" + s + "'");
    }
  }
  if (v.empty()) throw kk::InvalidArgument("empty initial condition");
  return Eigen::Map<kk::Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string format_point(const kk::Vec& x) {
  std::string s;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? "," : "") + kk::io::format_double(x(i));
  return s;
}

kk::Params system_params(const Settings& s) {
  kk::Params p;
  if (s.mu) p["mu"] = *s.mu;
  if (s.lambda) p["lambda"] = *s.lambda;
  if (s.r) p["r"] = *s.r;
  return p;
}

std::vector<kk::Vec> default_initial_conditions(const kk::PolySystem& sys) {
  if (sys.name == "logistic" || sys.name == "center-manifold") return {kk::Vec::Constant(1, 0.5)};
  if (sys.name == "kooc-demo" || sys.name == "limitation") return {kk::Vec{{-5.0, 5.0}}};
  return {kk::Vec{{1.5, -1.0}}, kk::Vec{{1.0, -1.0}}, kk::Vec{{2.0, -1.0}}};
}

std::vector<kk::Vec> initial_conditions(const Settings& s, const kk::PolySystem& sys,
                                        const std::vector<kk::Vec>& defaults) {
  std::vector<kk::Vec> out;
  for (const auto& p : s.x0) out.push_back(parse_point(p));
  if (out.empty()) out = defaults;
  for (const auto& x : out) {
    if (static_cast<std::size_t>(x.size()) != sys.dim()) {
      throw kk::InvalidArgument("initial condition '" + format_point(x) + "' has dimension " + std::to_string(x.size()) +
                                ", system '" + sys.name + "' has " + std::to_string(sys.dim()));
    }
  }
  return out;
}

// Continuous systems: horizon in time units; discrete systems: number of steps.
kk::Trajectory run(const kk::PolySystem& sys, const kk::Vec& x0, double t_end, double dt) {
  if (sys.time_kind == kk::TimeKind::Continuous) return kk::integrate(sys, x0, t_end, dt);
  return kk::iterate(sys, x0, static_cast<Eigen::Index>(std::llround(t_end)));
}

double default_horizon(const kk::PolySystem& sys) { return sys.time_kind == kk::TimeKind::Continuous ? 10.0 : 20.0; }

json params_json(const kk::PolySystem& sys) {
  json p = json::object();
  for (const auto& [k, v] : sys.params) p[k] = v;
  return p;
}

kk::Trajectory lifted_trajectory(const kk::KoopmanModel& model, const kk::Vec& x0, const kk::Trajectory& like) {
  const Eigen::Index steps = like.size() - 1;
  const double dt = steps > 0 ? (like.times(steps) - like.times(0)) / static_cast<double>(steps) : 1.0;
  kk::Trajectory out;
  out.times = like.times;
  out.states = kk::propagate(model, kk::lift_state(model, x0), steps, model.time_kind == kk::TimeKind::Continuous ? dt : 1.0);
  return out;
}

kk::Trajectory project(const kk::KoopmanModel& model, const kk::Trajectory& lifted) {
  kk::Trajectory out;
  out.times = lifted.times;
  out.states.resize(static_cast<Eigen::Index>(model.state_rows.size()), lifted.size());
  for (std::size_t i = 0; i < model.state_rows.size(); ++i) {
    out.states.row(static_cast<Eigen::Index>(i)) = lifted.states.row(static_cast<Eigen::Index>(model.state_rows[i]));
  }
  return out;
}

// Surface over a rectangular parameter grid, one row per grid node.
std::vector<std::vector<double>> surface(double a0, double a1, double b0, double b1, int n,
                                         const std::function<std::vector<double>(double, double)>& point) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < n; ++i) {
    const double a = a0 + (a1 - a0) * i / (n - 1);
    for (int j = 0; j < n; ++j) rows.push_back(point(a, b0 + (b1 - b0) * j / (n - 1)));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

void carleman_tables(const Settings& s, const kk::PolySystem& sys, const std::vector<kk::Vec>& xs, Output& out,
                     json& summary) {
  const bool center = sys.name == "center-manifold";
  std::vector<int> ranks = s.ranks;
  if (ranks.empty()) ranks = center ? std::vector<int>{4, 8, 12} : std::vector<int>{5};
  for (int rank : ranks) {
    if (rank < 1) throw kk::InvalidArgument("rank must be positive");
  }
  json tables = json::array();
  for (std::size_t c = 0; c < xs.size(); ++c) {
    const double x0 = xs[c](0);
    double t_end = s.t_end.value_or(center ? (x0 > 0.0 ? 0.95 / x0 : 10.0) : 20.0);
    if (center && x0 > 0.0 && t_end >= 1.0 / x0) {
      throw kk::InvalidArgument("t-end must precede the escape time 1/x0 = " + kk::io::format_double(1.0 / x0));
    }
    const double dt = center ? s.dt : 1.0;
    const auto steps = static_cast<Eigen::Index>(std::llround(t_end / dt));

    std::function<kk::Vec(double)> exact;
    if (center) {
      exact = [x0](double t) { return kk::Vec::Constant(1, x0 / (1.0 - x0 * t)); };
    } else {
      // Exact iteration of the map, cached by step index.
      auto orbit = std::make_shared<std::vector<double>>(1, x0);
      exact = [orbit, &sys](double t) {
        const auto k = static_cast<std::size_t>(std::llround(t));
        while (orbit->size() <= k) orbit->push_back(kk::eval_field(sys, kk::Vec::Constant(1, orbit->back()))(0));
        return kk::Vec::Constant(1, (*orbit)[k]);
      };
    }

    std::vector<std::string> header = {center ? "t" : "n", "exact"};
    std::vector<kk::Mat> paths;
    std::vector<std::vector<double>> horizons;
    for (int rank : ranks) {
      const kk::KoopmanModel model = center ? kk::carleman_center(rank) : kk::carleman_logistic(sys.params.at("r"), rank);
      header.push_back("rank" + std::to_string(rank));
      paths.push_back(kk::propagate(model, kk::lift_state(model, xs[c]), steps, dt));
      horizons.push_back({static_cast<double>(rank), kk::prediction_horizon(model, xs[c], exact, t_end, dt)});
    }
    std::vector<std::vector<double>> rows;
    for (Eigen::Index k = 0; k <= steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      std::vector<double> row = {t, exact(t)(0)};
      for (const auto& p : paths) row.push_back(p(0, k));
      rows.push_back(std::move(row));
    }
    const std::string tag = std::to_string(c + 1);
    out.table("truncation_" + tag + ".csv", header, rows);
    out.table("horizon_" + tag + ".csv", {"rank", "horizon"}, horizons);
    json h = json::array();
    for (const auto& row : horizons) h.push_back({{"rank", static_cast<int>(row[0])}, {"horizon", row[1]}});
    tables.push_back({{"x0", x0}, {"t_end", t_end}, {"horizons", h}});
  }
  summary["truncations"] = tables;
}

void write_simulate_gnuplot(Output& out, const kk::PolySystem& sys, std::size_t count, bool lifted, bool surfaces) {
  std::ostringstream gp;
  gp << "set datafile separator ','\nset key autotitle columnhead\n";
  if (surfaces) {
    gp << "set xlabel 'y1'\nset ylabel 'y2'\nset zlabel 'y3'\nsplot 'surface_red.csv' using 1:2:3 with points lc rgb 'red' pt 7 ps 0.3, \\\n"
          "      'surface_blue.csv' using 1:2:3 with points lc rgb 'blue' pt 7 ps 0.3, \\\n"
          "      'surface_green.csv' using 1:2:3 with points lc rgb 'green' pt 7 ps 0.3";
    for (std::size_t i = 1; i <= count; ++i) gp << ", \\\n      'lifted_" << i << ".csv' using 2:3:4 with lines lw 2";
    gp << "\n";
  } else {
    gp << "set xlabel 't'\nplot ";
    for (std::size_t i = 1; i <= count; ++i) {
      for (std::size_t v = 0; v < sys.dim(); ++v) {
        gp << (i == 1 && v == 0 ? "" : ", \\\n     ") << "'trajectory_" << i << ".csv' using 1:" << v + 2 << " with lines";
        if (lifted) gp << ", 'projection_" << i << ".csv' using 1:" << v + 2 << " with points pt 6 ps 0.3";
      }
    }
    gp << "\n";
  }
  out.text("plot.gp", gp.str());
}

int cmd_simulate(const Settings& s, Output& out) {
  const kk::PolySystem sys = kk::builtin(s.system.empty() ? "quad-manifold" : s.system, system_params(s));
  const auto xs = initial_conditions(s, sys, default_initial_conditions(sys));
  json summary = {{"command", "simulate"}, {"system", sys.name}, {"params", params_json(sys)}};

  const bool carleman = sys.name == "center-manifold" || sys.name == "logistic";
  if (!s.ranks.empty() && !carleman) throw kk::InvalidArgument("--rank applies to center-manifold and logistic only");

  if (carleman) {
    carleman_tables(s, sys, xs, out, summary);
  } else {
    const double t_end = s.t_end.value_or(default_horizon(sys));
    const auto lift = kk::closed_lift(sys);
    json runs = json::array();
    for (std::size_t c = 0; c < xs.size(); ++c) {
      const std::string tag = std::to_string(c + 1);
      const kk::Trajectory traj = run(sys, xs[c], t_end, s.dt);
      out.trajectory("trajectory_" + tag + ".csv", traj);
      json entry = {{"x0", format_point(xs[c])}};
      if (lift) {
        const kk::Trajectory lifted = lifted_trajectory(*lift, xs[c], traj);
        const kk::Trajectory projected = project(*lift, lifted);
        out.trajectory("lifted_" + tag + ".csv", lifted, "y");
        out.trajectory("projection_" + tag + ".csv", projected);
        entry["max_projection_error"] = (projected.states - traj.states).cwiseAbs().maxCoeff();
      }
      runs.push_back(entry);
    }
    summary["runs"] = runs;
    if (lift) {
      summary["lift"] = {{"observables", lift->library.labels()}, {"K", kk::io::matrix_to_json(lift->K)}};
    }

    const bool surfaces = sys.name == "quad-manifold";
    if (surfaces) {
      const double slope = kk::slow_subspace_slope(*lift);
      const std::vector<std::string> header = {"y1", "y2", "y3"};
      out.table("surface_red.csv", header,
                surface(-2.0, 2.0, -1.0, 4.0, 21, [](double y1, double y3) { return std::vector<double>{y1, y1 * y1, y3}; }));
      out.table("surface_blue.csv", header,
                surface(-2.0, 2.0, -1.0, 4.0, 21, [](double y1, double y2) { return std::vector<double>{y1, y2, y1 * y1}; }));
      out.table("surface_green.csv", header, surface(-2.0, 2.0, -1.0, 4.0, 21, [slope](double y1, double y2) {
                  return std::vector<double>{y1, y2, slope * y2};
                }));
      summary["slow_subspace_slope"] = slope;
    }
    if (s.gnuplot) write_simulate_gnuplot(out, sys, xs.size(), lift.has_value(), surfaces);
  }
  if (s.gnuplot && carleman) {
    std::ostringstream gp;
    gp << "set datafile separator ','\nset key autotitle columnhead\nset logscale y\n"
       << "plot for [c=2:*] 'truncation_1.csv' using 1:(abs(column(c))) with lines\n";
    out.text("plot.gp", gp.str());
  }
  summary["files"] = out.files();
  out.json_file("summary.json", summary);
  return 0;
}

// ---------------------------------------------------------------------------
// identify
// ---------------------------------------------------------------------------

std::vector<kk::Vec> identification_grid(const kk::PolySystem& sys) {
  if (sys.dim() == 1) {
    if (sys.name == "logistic") return {kk::Vec::Constant(1, 0.2), kk::Vec::Constant(1, 0.4), kk::Vec::Constant(1, 0.6), kk::Vec::Constant(1, 0.8)};
    return {kk::Vec::Constant(1, -2.0), kk::Vec::Constant(1, -1.0), kk::Vec::Constant(1, -0.5)};
  }
  std::vector<kk::Vec> out;
  if (sys.dim() == 2) {
    for (double a : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      for (double b : {-2.0, 2.0}) out.push_back(kk::Vec{{a, b}});
    }
    return out;
  }
  return default_initial_conditions(sys);
}

int cmd_identify(const Settings& s, Output& out) {
  if (s.inputs.empty() == !s.generate) throw kk::InvalidArgument("identify needs exactly one of --input or --generate");
  std::optional<kk::PolySystem> sys;
  if (!s.system.empty()) sys = kk::builtin(s.system, system_params(s));
  if (s.generate && !sys) throw kk::InvalidArgument("--generate needs --system");

  kk::TimeKind kind = sys ? sys->time_kind : kk::TimeKind::Continuous;
  if (!s.time_kind.empty()) kind = kk::time_kind_from_string(s.time_kind);
  if (sys && kind != sys->time_kind) throw kk::InvalidArgument("--time-kind contradicts the system");

  std::vector<kk::Trajectory> trajs;
  if (s.generate) {
    const auto xs = initial_conditions(s, *sys, identification_grid(*sys));
    const double t_end = s.t_end.value_or(default_horizon(*sys));
    for (std::size_t c = 0; c < xs.size(); ++c) {
      trajs.push_back(run(*sys, xs[c], t_end, s.dt));
      out.trajectory("data_" + std::to_string(c + 1) + ".csv", trajs.back());
    }
  } else {
    for (const auto& path : s.inputs) {
      std::ifstream f(path, std::ios::binary);
      if (!f) throw kk::InvalidArgument("cannot open input '" + path + "'");
      trajs.push_back(kk::io::read_trajectory_csv(f));
    }
  }

  kk::IdentifyOptions opt;
  opt.d_max = s.d_max;
  opt.sindy.threshold = s.threshold;
  opt.refine.max_rounds = s.max_rounds;
  opt.refine.sparse_refit = s.sparse_refit;
  opt.refine.threshold = s.threshold;
  const kk::Identification result = kk::identify(kk::build_dataset(trajs, kind), opt);

  out.json_file("sparse_model.json", kk::io::to_json(result.sparse));
  out.json_file("koopman_model.json", kk::io::to_json(result.refined.model));

  json residuals = json::array();
  for (const auto& t : trajs) residuals.push_back(kk::invariance_residual(result.refined.model, t));
  json report = {{"command", "identify"},
                 {"time_kind", kk::to_string(kind)},
                 {"d_max", s.d_max},
                 {"threshold", s.threshold},
                 {"converged", result.refined.converged},
                 {"rounds", result.refined.rounds},
                 {"message", result.refined.message},
                 {"observables", result.refined.model.library.labels()},
                 {"invariance_residuals", residuals}};
  if (sys) {
    report["system"] = sys->name;
    report["params"] = params_json(*sys);
    const auto truth = kk::closed_lift(*sys);
    if (truth && truth->library.labels() == result.refined.model.library.labels()) {
      report["max_K_error"] = (truth->K - result.refined.model.K).cwiseAbs().maxCoeff();
    }
  }
  report["files"] = out.files();
  out.json_file("identify_report.json", report);
  std::cout << result.refined.message << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// spectral
// ---------------------------------------------------------------------------

int spectral_named(const Settings& s, Output& out) {
  if (s.named_observable != "exp-neg-inv") throw kk::InvalidArgument("unknown named observable '" + s.named_observable + "'");
  const kk::PolySystem sys = kk::builtin(s.system.empty() ? "center-manifold" : s.system, system_params(s));
  if (sys.name != "center-manifold") throw kk::InvalidArgument("exp-neg-inv applies to center-manifold only");
  // d/dt exp(-1/x) = (x^2 / x^2) exp(-1/x) on x' = x^2: eigenvalue 1.
  const kk::ObservableLibrary lib(1, {kk::Observable::exp_neg_inv(0)});
  const kk::Eigenfunction phi{kk::Complex(1.0, 0.0), kk::CVec::Ones(1), lib, {}, kk::TimeKind::Continuous};
  const auto xs = initial_conditions(s, sys, {kk::Vec::Constant(1, 0.25), kk::Vec::Constant(1, 0.5)});
  json checks = json::array();
  for (std::size_t c = 0; c < xs.size(); ++c) {
    const double x0 = xs[c](0);
    if (!(x0 > 0.0)) throw kk::InvalidArgument("exp-neg-inv check needs x0 > 0");
    const double t_end = s.t_end.value_or(0.9 / x0);
    if (t_end >= 1.0 / x0) throw kk::InvalidArgument("t-end must precede the escape time 1/x0");
    const kk::Trajectory traj = kk::integrate(sys, xs[c], t_end, s.dt);
    out.trajectory("trajectory_" + std::to_string(c + 1) + ".csv", traj);
    checks.push_back({{"x0", x0}, {"t_end", t_end}, {"residual", kk::verify_eigenfunction(phi, traj)}});
  }
  json report = {{"command", "spectral"},
                 {"system", sys.name},
                 {"observable", lib[0].label()},
                 {"eigenvalue", kk::io::complex_to_json(phi.eigenvalue)},
                 {"checks", checks}};
  out.json_file("eigenfunctions.json", json::array({kk::io::to_json(phi)}));
  report["files"] = out.files();
  out.json_file("spectral_report.json", report);
  return 0;
}

int cmd_spectral(const Settings& s, Output& out) {
  if (!s.named_observable.empty()) return spectral_named(s, out);
  std::optional<kk::PolySystem> sys;
  if (!s.system.empty()) sys = kk::builtin(s.system, system_params(s));
  kk::KoopmanModel model;
  if (!s.model.empty()) {
    std::ifstream f(s.model, std::ios::binary);
    if (!f) throw kk::InvalidArgument("cannot open model '" + s.model + "'");
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw kk::InvalidArgument(std::string("model: ") + e.what());
    }
    model = kk::io::koopman_model_from_json(j);
  } else if (sys) {
    const auto lift = kk::closed_lift(*sys);
    if (!lift) throw kk::InvalidArgument("system '" + sys->name + "' has no closed polynomial lift; pass --model");
    model = *lift;
  } else {
    throw kk::InvalidArgument("spectral needs --model or --system");
  }

  const auto phis = kk::eigenfunctions(model);
  std::vector<kk::Trajectory> trajs;
  if (sys) {
    if (sys->dim() != model.library.dim()) throw kk::InvalidArgument("model and system dimensions differ");
    const auto xs = initial_conditions(s, *sys, default_initial_conditions(*sys));
    const double t_end = s.t_end.value_or(default_horizon(*sys));
    for (std::size_t c = 0; c < xs.size(); ++c) {
      trajs.push_back(run(*sys, xs[c], t_end, s.dt));
      out.trajectory("trajectory_" + std::to_string(c + 1) + ".csv", trajs.back());
    }
  }

  std::vector<std::vector<double>> values;
  json functions = json::array();
  json entries = json::array();
  for (std::size_t i = 0; i < phis.size(); ++i) {
    values.push_back({static_cast<double>(i + 1), phis[i].eigenvalue.real(), phis[i].eigenvalue.imag()});
    functions.push_back(kk::io::to_json(phis[i]));
    json res = json::array();
    for (const auto& t : trajs) {
      try {
        res.push_back(kk::verify_eigenfunction(phis[i], t));
      } catch (const kk::InvalidArgument&) {
        res.push_back(nullptr);  // phi vanishes on this trajectory
      }
    }
    json coeffs = json::array();
    for (Eigen::Index k = 0; k < phis[i].coeffs.size(); ++k) coeffs.push_back(kk::io::complex_to_json(phis[i].coeffs(k)));
    entries.push_back({{"eigenvalue", kk::io::complex_to_json(phis[i].eigenvalue)}, {"coeffs", coeffs}, {"residuals", res}});
  }
  out.table("eigenvalues.csv", {"index", "re", "im"}, values);
  out.json_file("eigenfunctions.json", functions);

  json report = {{"command", "spectral"},
                 {"time_kind", kk::to_string(model.time_kind)},
                 {"coordinates", model.coordinate_labels()},
                 {"eigenfunctions", entries}};
  if (sys) {
    report["system"] = sys->name;
    report["params"] = params_json(*sys);
  }
  // Slow-manifold lifts on (x1, x2, x1^2): phi_lambda = x2 - b x1^2.
  const std::vector<std::string> quad = {"x1", "x2", "x1^2"};
  if (model.time_kind == kk::TimeKind::Continuous && !model.has_coordinates() && model.library.labels() == quad) {
    const kk::Eigenfunction phi = kk::eigenfunction_for(model, kk::Complex(model.K(1, 1), 0.0));
    report["b"] = -(phi.coeffs(2) / phi.coeffs(1)).real();
    report["slow_subspace_slope"] = kk::slow_subspace_slope(model);
  }
  report["files"] = out.files();
  out.json_file("spectral_report.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// control
// ---------------------------------------------------------------------------

int cmd_control(const Settings& s, Output& out) {
  const kk::PolySystem sys = kk::builtin(s.system.empty() ? "kooc-demo" : s.system, system_params(s));
  if (!sys.actuated()) throw kk::InvalidArgument("system '" + sys.name + "' has no input");
  const auto xs = initial_conditions(s, sys, {kk::Vec{{-5.0, 5.0}}});
  if (xs.size() != 1) throw kk::InvalidArgument("control takes a single --x0");
  if (!(s.rcost > 0.0)) throw kk::InvalidArgument("--rcost must be positive");
  if (s.q < 0.0) throw kk::InvalidArgument("--q must be non-negative");

  const auto n = static_cast<Eigen::Index>(sys.dim());
  kk::ComparisonOptions opt;
  opt.horizon = s.t_end.value_or(50.0);
  opt.dt = s.dt;
  opt.Q = s.q * kk::Mat::Identity(n, n);
  opt.R = s.rcost * kk::Mat::Identity(sys.input_map.cols(), sys.input_map.cols());

  json params = params_json(sys);
  params["x0"] = format_point(xs[0]);
  params["q"] = s.q;
  params["rcost"] = s.rcost;
  params["horizon"] = opt.horizon;
  params["dt"] = opt.dt;

  kk::ComparisonReport rep;
  try {
    rep = kk::compare_lqr_kooc(sys, xs[0], opt);
  } catch (const kk::NotStabilizable& e) {
    json modes = json::array();
    for (const auto& m : e.modes()) modes.push_back(kk::io::complex_to_json(m));
    out.json_file("pbh_report.json", {{"system", sys.name}, {"params", params}, {"error", e.what()}, {"uncontrollable_modes", modes}});
    throw;
  }

  out.trajectory("lqr_trajectory.csv", rep.lqr_trajectory);
  out.trajectory("kooc_trajectory.csv", rep.kooc_trajectory);
  std::vector<std::vector<double>> cost;
  for (Eigen::Index k = 0; k < rep.j_lqr.size(); ++k) {
    cost.push_back({rep.lqr_trajectory.times(k), rep.j_lqr(k), rep.j_kooc(k), rep.j_lqr_script(k), rep.j_kooc_script(k)});
  }
  out.table("cost.csv", {"t", "J_lqr", "J_kooc", "J_lqr_script", "J_kooc_script"}, cost);
  if (s.gnuplot) {
    out.text("plot.gp",
             "set datafile separator ','\nset key autotitle columnhead\nset multiplot layout 1,3\n"
             "set xlabel 'x1'\nset ylabel 'x2'\n"
             "plot 'lqr_trajectory.csv' using 2:3 with lines, 'kooc_trajectory.csv' using 2:3 with lines\n"
             "set xlabel 't'\nset ylabel 'x'\n"
             "plot 'lqr_trajectory.csv' using 1:2 with lines, 'lqr_trajectory.csv' using 1:3 with lines, \\\n"
             "     'kooc_trajectory.csv' using 1:2 with lines, 'kooc_trajectory.csv' using 1:3 with lines\n"
             "set ylabel 'J'\n"
             "plot 'cost.csv' using 1:2 with lines, 'cost.csv' using 1:3 with lines\n"
             "unset multiplot\n");
  }
  const json files = {{"lqr", "lqr_trajectory.csv"}, {"kooc", "kooc_trajectory.csv"}, {"cost", "cost.csv"}};
  out.json_file("report.json", kk::io::to_json(rep, params, files));
  std::cout << "J_kooc/J_lqr = " << kk::io::format_double(rep.cost_ratio) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

void apply_config(Settings& s, const CLI::App& sub, const kk::io::ExperimentConfig& c) {
  if (!c.experiment.empty() && s.system.empty()) s.system = c.experiment;
  if (!c.io.empty() && sub.count("--out") == 0) s.out = c.io;
  std::vector<double> x0;
  for (const auto& [key, v] : c.params) {
    const bool cli = [&] {
      const std::string flag = "--" + (key == "t_end" || key == "horizon" ? std::string("t-end") : key == "d_max" ? "d-max" : key == "max_rounds" ? "max-rounds" : key);
      try {
        return sub.count(flag) > 0;
      } catch (const CLI::OptionNotFound&) {
        return false;
      }
    }();
    if (cli) continue;
    if (key == "mu") s.mu = v;
    else if (key == "lambda") s.lambda = v;
    else if (key == "r") s.r = v;
    else if (key == "t_end" || key == "horizon") s.t_end = v;
    else if (key == "dt") s.dt = v;
    else if (key == "d_max") s.d_max = static_cast<int>(v);
    else if (key == "threshold") s.threshold = v;
    else if (key == "max_rounds") s.max_rounds = static_cast<int>(v);
    else if (key == "q") s.q = v;
    else if (key == "rcost") s.rcost = v;
    else if (key.rfind("x0_", 0) == 0) {
      const std::size_t idx = std::stoul(key.substr(3));
      if (idx < 1 || idx > 16) throw kk::InvalidArgument("config: bad initial-condition index in '" + key + "'");
      if (x0.size() < idx) x0.resize(idx, std::numeric_limits<double>::quiet_NaN());
      x0[idx - 1] = v;
    } else {
      throw kk::InvalidArgument("config: unknown parameter '" + key + "'");
    }
  }
  if (!x0.empty() && s.x0.empty()) {
    std::string p;
    for (std::size_t i = 0; i < x0.size(); ++i) {
      if (std::isnan(x0[i])) throw kk::InvalidArgument("config: initial condition has gaps");
      p += (i ? "," : "") + kk::io::format_double(x0[i]);
    }
    s.x0.push_back(p);
  }
}

std::string registry_footer() {
  std::string f = "Systems:\n";
  for (const auto& info : kk::registry()) {
    f += "  " + info.name + "\n      " + info.provenance + "\n";
    if (!info.defaults.empty()) {
      f += "      defaults:";
      for (const auto& [k, v] : info.defaults) {
        std::ostringstream os;
        os << v;
        f += " " + k + "=" + os.str();
      }
      f += "\n";
    }
  }
  f += "\nExit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 not stabilizable.\n"
       "KOOPMANKIT_OUT overrides the output directory.";
  return f;
}

void add_common(CLI::App* sub, Settings& s) {
  sub->add_option("--system", s.system, "Registry system name");
  sub->add_option("--mu", s.mu, "Slow eigenvalue mu");
  sub->add_option("--lambda", s.lambda, "Fast eigenvalue lambda");
  sub->add_option("--r", s.r, "Logistic parameter r");
  sub->add_option("--x0", s.x0, "Initial condition, comma separated; repeat for several")->allow_extra_args(false);
  sub->add_option("--t-end,--horizon", s.t_end, "Horizon (time units, or steps for maps)");
  sub->add_option("--dt", s.dt, "Integration step")->check(CLI::PositiveNumber);
  sub->add_option("--out", s.out, "Output directory");
  sub->add_option("--config", s.config, "Experiment config JSON");
  sub->add_flag("--gnuplot", s.gnuplot, "Also write a gnuplot script");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"koopmankit: Koopman-invariant lifts, identification, eigenfunctions and KOOC"};
  app.footer(registry_footer());
  app.require_subcommand(1);
  Settings s;

  CLI::App* simulate = app.add_subcommand("simulate", "Simulate a registry system and its lifts");
  add_common(simulate, s);
  simulate->add_option("--rank", s.ranks, "Carleman truncation ranks, comma separated")->delimiter(',');

  CLI::App* identify = app.add_subcommand("identify", "Sparse regression and subspace refinement from data");
  add_common(identify, s);
  identify->add_option("--input", s.inputs, "Trajectory CSV file(s)");
  identify->add_flag("--generate", s.generate, "Generate data from --system");
  identify->add_option("--time-kind", s.time_kind, "continuous or discrete (CSV input without --system)");
  identify->add_option("--d-max", s.d_max, "Library degree; 1 gives the DMD fit")->check(CLI::PositiveNumber);
  identify->add_option("--threshold", s.threshold, "Sparsity threshold")->check(CLI::NonNegativeNumber);
  identify->add_option("--max-rounds", s.max_rounds, "Closure rounds")->check(CLI::PositiveNumber);
  identify->add_flag("--sparse-refit", s.sparse_refit, "Threshold the refined operator as well");

  CLI::App* spectral = app.add_subcommand("spectral", "Eigenvalues and eigenfunctions of a lifted model");
  add_common(spectral, s);
  spectral->add_option("--model", s.model, "Koopman model JSON");
  spectral->add_option("--named-observable", s.named_observable, "Check a named observable (exp-neg-inv)");

  CLI::App* control = app.add_subcommand("control", "LQR versus KOOC on an actuated system");
  add_common(control, s);
  control->add_option("--q", s.q, "State cost weight (Q = q I)");
  control->add_option("--rcost", s.rcost, "Input cost weight (R = rcost I)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!s.config.empty()) {
      std::ifstream f(s.config, std::ios::binary);
      if (!f) throw kk::InvalidArgument("cannot open config '" + s.config + "'");
      json j;
      try {
        j = json::parse(f);
      } catch (const json::exception& e) {
        throw kk::InvalidArgument(std::string("config: ") + e.what());
      }
      apply_config(s, *sub, kk::io::experiment_config_from_json(j));
    }
    const char* env = std::getenv("KOOPMANKIT_OUT");
    Output out(env && *env ? fs::path(env) : fs::path(s.out));
    int rc = 0;
    if (sub == simulate) rc = cmd_simulate(s, out);
    else if (sub == identify) rc = cmd_identify(s, out);
    else if (sub == spectral) rc = cmd_spectral(s, out);
    else rc = cmd_control(s, out);
    for (const auto& f : out.files()) std::cout << (out.dir() / f).string() << "\n";
    return rc;
  } catch (const kk::NotStabilizable& e) {
    std::cerr << "not stabilizable: " << e.what() << "\n";
    return kExitNotStabilizable;
  } catch (const kk::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kk::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kk::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
