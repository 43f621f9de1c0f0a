#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "koopmankit/io.hpp"

using namespace koopmankit;
using koopmankit::io::json;

namespace {

Trajectory sample_trajectory(bool inputs) {
  Trajectory t = integrate(builtin("quad-manifold"), Vec{{1.5, -1.0}}, 0.1, 0.01);
  if (inputs) t.inputs = Mat::Random(1, t.size()) * 1e-7;
  return t;
}

}  // namespace

TEST(Csv, RoundTripIsBitExact) {
  for (bool inputs : {false, true}) {
    const Trajectory t = sample_trajectory(inputs);
    std::ostringstream os;
    io::write_trajectory_csv(os, t);
    std::istringstream is(os.str());
    const Trajectory back = io::read_trajectory_csv(is);
    EXPECT_EQ(back.times, t.times);
    EXPECT_EQ(back.states, t.states);
    EXPECT_EQ(back.inputs, t.inputs);
  }
}

TEST(Csv, HeaderAndLineEndings) {
  const Trajectory t = sample_trajectory(true);
  std::ostringstream os;
  io::write_trajectory_csv(os, t);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n') + 1), "t,x1,x2,u\r\n");
  std::size_t lf = 0;
  std::size_t crlf = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\n') {
      ++lf;
      if (i > 0 && s[i - 1] == '\r') ++crlf;
    }
  }
  EXPECT_EQ(lf, crlf);
  EXPECT_EQ(lf, static_cast<std::size_t>(t.size()) + 1);
}

TEST(Csv, MultiInputHeader) {
  Trajectory t = sample_trajectory(false);
  t.inputs = Mat::Zero(2, t.size());
  std::ostringstream os;
  io::write_trajectory_csv(os, t, "y");
  EXPECT_EQ(os.str().substr(0, 13), "t,y1,y2,u1,u2");
}

TEST(Csv, RejectsMalformedInput) {
  std::istringstream no_t("x1,x2\r\n1,2\r\n");
  EXPECT_THROW((void)io::read_trajectory_csv(no_t), InvalidArgument);
  std::istringstream ragged("t,x1\r\n0,1\r\n0.1\r\n");
  EXPECT_THROW((void)io::read_trajectory_csv(ragged), InvalidArgument);
  std::istringstream junk("t,x1\r\n0,abc\r\n");
  EXPECT_THROW((void)io::read_trajectory_csv(junk), InvalidArgument);
  std::istringstream empty("");
  EXPECT_THROW((void)io::read_trajectory_csv(empty), InvalidArgument);
}

TEST(Csv, AcceptsPlainLineFeeds) {
  std::istringstream is("t,x1\n0,1\n1,0.5\n");
  const Trajectory t = io::read_trajectory_csv(is);
  EXPECT_EQ(t.size(), 2);
  EXPECT_EQ(t.states(0, 1), 0.5);
}

TEST(Json, KoopmanModelRoundTrip) {
  KoopmanModel m = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 4}, {-2.0, 2}});
  m.K(0, 0) = 0.1 + 0.2;  // not representable in few digits
  const json j = io::to_json(m);
  const KoopmanModel back = io::koopman_model_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.K, m.K);
  EXPECT_EQ(back.library, m.library);
  EXPECT_EQ(back.state_rows, m.state_rows);
  EXPECT_EQ(back.time_kind, m.time_kind);
  EXPECT_EQ(io::to_json(back).dump(), j.dump());
}

TEST(Json, TransformedModelKeepsCoordinates) {
  KoopmanModel m = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  Mat t(3, 3);
  t << 1, 1, 0, 1, -1, 0, 0, 0.25, 1;
  m.K = t * m.K * t.inverse();
  m.coordinates = t;
  const KoopmanModel back = io::koopman_model_from_json(io::to_json(m));
  EXPECT_EQ(back.coordinates, m.coordinates);
}

TEST(Json, NamedObservableRoundTrip) {
  const ObservableLibrary lib(1, {Observable::monomial({1}), Observable::exp_neg_inv(0)});
  const KoopmanModel m{lib, Mat::Identity(2, 2), TimeKind::Continuous, {0}, {}};
  const json j = io::to_json(m);
  EXPECT_EQ(j["observables"][1], "exp(-1/x1)");
  EXPECT_EQ(io::koopman_model_from_json(j).library, lib);
}

TEST(Json, KoopmanModelRejectsUnknownKeys) {
  json j = io::to_json(slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}}));
  j["extra"] = 1;
  EXPECT_THROW((void)io::koopman_model_from_json(j), InvalidArgument);
}

TEST(Json, SparseModelRoundTrip) {
  std::vector<Trajectory> trajs;
  for (double a : {-1.0, 1.0, 2.0}) trajs.push_back(integrate(builtin("quad-manifold"), Vec{{a, 1.0}}, 2.0, 0.01));
  const SparseModel s = sindy(build_dataset(trajs, TimeKind::Continuous), monomials(2, 2));
  const json j = io::to_json(s);
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][1]["target"], "d/dt x2");
  const SparseModel back = io::sparse_model_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.xi_t, s.xi_t);
  EXPECT_TRUE((back.mask == s.mask).all());
  EXPECT_EQ(back.threshold, s.threshold);
  EXPECT_EQ(io::to_json(back).dump(), j.dump());
}

TEST(Json, EigenfunctionRoundTrip) {
  Mat a(2, 2);
  a << -0.2, -2.0, 2.0, -0.2;
  const KoopmanModel m{monomials(2, 1), a, TimeKind::Continuous, {0, 1}, {}};
  for (const auto& phi : eigenfunctions(m)) {
    const json j = io::to_json(phi);
    const Eigenfunction back = io::eigenfunction_from_json(json::parse(j.dump()));
    EXPECT_EQ(back.eigenvalue, phi.eigenvalue);
    EXPECT_EQ(back.coeffs, phi.coeffs);
    EXPECT_EQ(back.library, phi.library);
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
  }
}

TEST(Json, ReportRoundTripsThroughParser) {
  ComparisonOptions opt;
  opt.horizon = 1.0;
  const ComparisonReport r = compare_lqr_kooc(builtin("kooc-demo"), Vec{{-5.0, 5.0}}, opt);
  const json j = io::to_json(r, {{"mu", -0.1}}, {{"lqr", "lqr.csv"}});
  const json back = json::parse(j.dump(2));
  EXPECT_EQ(back, j);
  EXPECT_EQ(back["cost_ratio"].get<double>(), r.cost_ratio);
  EXPECT_EQ(io::matrix_from_json(back["gains"]["lqr"]), r.lqr_gain);
  EXPECT_EQ(io::koopman_model_from_json(back["lifted_model"]).K, r.kooc.model.K);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const auto c = io::experiment_config_from_json(
      json::parse(R"({"experiment": "kooc-demo", "params": {"mu": -0.1, "x0_1": -5}, "io": "out", "seed": 3})"));
  EXPECT_EQ(c.experiment, "kooc-demo");
  EXPECT_EQ(c.params.at("mu"), -0.1);
  EXPECT_EQ(c.io, "out");
  EXPECT_EQ(c.seed, 3);
  EXPECT_EQ(io::experiment_config_from_json(io::to_json(c)).params, c.params);
  EXPECT_THROW((void)io::experiment_config_from_json(json::parse(R"({"experimnet": "x"})")), InvalidArgument);
  EXPECT_THROW((void)io::experiment_config_from_json(json::parse(R"({"params": {"mu": "a"}})")), InvalidArgument);
  EXPECT_THROW((void)io::experiment_config_from_json(json::parse(R"({"seed": 1.5})")), InvalidArgument);
}

TEST(Format, SeventeenSignificantDigits) {
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(io::format_double(1.0 / 3.0)), 1.0 / 3.0);
}
