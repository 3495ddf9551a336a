#include <catch2/catch_amalgamated.hpp>

#include "hmjls/analysis.hpp"
#include "hmjls/model_io.hpp"
#include "test_helpers.hpp"

using namespace hmjls;

namespace {

ClosedLoopSystem scalar_loop(double a, double c, double e, double k_gain = 0.0,
                             double b_in = 1.0, double d_ff = 0.0) {
  MjlsModel md = testutil::scalar_model(a, b_in, c, d_ff, e);
  FeedbackGains g = testutil::zero_gains(1, 1, 1, 1);
  g.K[0][0](0, 0) = k_gain;
  return closed_loop(md, testutil::trivial_channel(), 1, g);
}

Eigen::VectorXd point_mass(int size, int at) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
  v[at] = 1.0;
  return v;
}

ClosedLoopSystem permuted(const ClosedLoopSystem& cl, const std::vector<int>& perm) {
  ClosedLoopSystem out;
  out.chain.model = cl.chain.model;
  out.chain.obs = cl.chain.obs;
  out.chain.T = cl.chain.T;
  const int K = cl.chain.size();
  out.chain.states.resize(K);
  out.chain.pbar.resize(K, K);
  out.A.resize(K);
  out.C.resize(K);
  out.E.resize(K);
  for (int i = 0; i < K; ++i) {
    out.chain.states[i] = cl.chain.states[perm[i]];
    out.A[i] = cl.A[perm[i]];
    out.C[i] = cl.C[perm[i]];
    out.E[i] = cl.E[perm[i]];
    for (int j = 0; j < K; ++j) out.chain.pbar(i, j) = cl.chain.pbar(perm[i], perm[j]);
  }
  out.chain.state_lookup.assign(cl.chain.state_lookup.size(), -1);
  return out;
}

}  // namespace

TEST_CASE("closed-loop matrices are the stated affine combinations") {
  ModelFile mf = builtin_model("ex2");
  ObservationProcess obs = iid_failures(0.5);

  SECTION("zero gains reproduce the open loop") {
    ClosedLoopSystem cl = closed_loop(mf.model, obs, 2, testutil::zero_gains(2, 2, 1, 2));
    for (int k = 0; k < cl.chain.size(); ++k) {
      const int a = cl.chain.states[k].mode;
      CHECK(cl.A[k].isApprox(mf.model.A[a]));
      CHECK(cl.C[k].isApprox(mf.model.C[a]));
      CHECK(cl.E[k].isApprox(mf.model.E[a]));
    }
  }

  SECTION("random gains follow the (last_obs, phase) slot") {
    CounterRng rng(31, 0);
    FeedbackGains g = testutil::random_gains(rng, 2, 3, 1, 2);
    ClosedLoopSystem cl = closed_loop(mf.model, obs, 3, g);
    for (int k = 0; k < cl.chain.size(); ++k) {
      const ExtendedState& s = cl.chain.states[k];
      const Eigen::MatrixXd& K = g.K[s.last_obs][s.phase];
      CHECK(cl.A[k].isApprox(mf.model.A[s.mode] + mf.model.B[s.mode] * K));
      CHECK(cl.C[k].isApprox(mf.model.C[s.mode] + mf.model.D[s.mode] * K));
      CHECK(cl.E[k].isApprox(mf.model.E[s.mode]));  // independent of (last_obs, phase)
    }
  }

  SECTION("all-observing channel gives the mode-dependent loop") {
    ObservationProcess all;
    all.M = 1;
    all.Q = Eigen::MatrixXd::Ones(1, 1);
    all.f = {1};
    CounterRng rng(32, 0);
    FeedbackGains g = testutil::random_gains(rng, 2, 1, 1, 2);
    ClosedLoopSystem cl = closed_loop(mf.model, all, 1, g);
    REQUIRE(cl.chain.size() == 2);
    for (int k = 0; k < 2; ++k) {
      const int a = cl.chain.states[k].mode;
      CHECK(cl.chain.states[k].last_obs == a);
      CHECK(cl.A[k].isApprox(mf.model.A[a] + mf.model.B[a] * g.K[a][0]));
    }
  }

  SECTION("mismatched banks are rejected") {
    CHECK_THROWS_AS(closed_loop(mf.model, obs, 2, testutil::zero_gains(2, 3, 1, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(closed_loop(mf.model, obs, 2, testutil::zero_gains(2, 2, 1, 3)),
                    std::invalid_argument);
  }
}

TEST_CASE("spectral radius of the second-moment matrix") {
  SECTION("zero dynamics give radius zero") {
    ClosedLoopSystem cl = scalar_loop(0.0, 1.0, 1.0);
    CHECK(mss_spectral_radius(cl) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("scalar loop gives a squared") {
    CHECK(mss_spectral_radius(scalar_loop(0.9, 1, 1)) == Catch::Approx(0.81).epsilon(1e-10));
    CHECK(mss_spectral_radius(scalar_loop(1.1, 1, 1)) == Catch::Approx(1.21).epsilon(1e-10));
  }

  SECTION("the bundled two-mode plant is open-loop unstable") {
    ModelFile mf = builtin_model("ex2");
    ClosedLoopSystem cl =
        closed_loop(mf.model, iid_failures(0.5), 1, testutil::zero_gains(2, 1, 1, 2));
    CHECK(mss_spectral_radius(cl) > 1.0);
  }
}

TEST_CASE("MSS LMI feasibility matches the spectral-radius oracle") {
  SECTION("stable scalar loop is feasible with a positive certificate") {
    FeasibilityResult res = is_mss_lmi(scalar_loop(0.5, 1, 1));
    REQUIRE(res.status == sdp::SolveStatus::optimal);
    REQUIRE(res.certificate.families.count("Q") == 1);
    CHECK(res.certificate.families.at("Q")[0](0, 0) > 0.0);
    CHECK(res.certificate.reverified);
  }

  SECTION("open-loop example plant is infeasible") {
    ModelFile mf = builtin_model("ex2");
    ClosedLoopSystem cl =
        closed_loop(mf.model, iid_failures(0.5), 1, testutil::zero_gains(2, 1, 1, 2));
    FeasibilityResult res = is_mss_lmi(cl);
    CHECK(res.status == sdp::SolveStatus::infeasible);
  }

  SECTION("randomized agreement outside the borderline band") {
    CounterRng rng(41, 0);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const double a_scale = 0.5 + rng.next_double();
      MjlsModel md = testutil::random_model(rng, 2, 2, 1, 1, 1, a_scale);
      ObservationProcess obs = testutil::random_observation(rng, 2);
      const int T = 1 + static_cast<int>(rng.next_double() * 3);
      FeedbackGains g = testutil::random_gains(rng, 2, T, 1, 2);
      ClosedLoopSystem cl = closed_loop(md, obs, T, g);
      const double radius = mss_spectral_radius(cl);
      if (std::abs(radius - 1.0) < 1e-3) continue;
      FeasibilityResult res = is_mss_lmi(cl);
      REQUIRE(res.status != sdp::SolveStatus::failure);
      CHECK((res.status == sdp::SolveStatus::optimal) == (radius < 1.0));
      ++checked;
    }
    CHECK(checked >= 10);
  }
}

TEST_CASE("H2 norm computations") {
  SECTION("scalar closed form e^2 c^2 / (1 - a^2)") {
    ClosedLoopSystem cl = scalar_loop(0.5, 1.0, 1.0);
    const Eigen::VectorXd mu = point_mass(1, 0);
    CHECK(h2_norm_squared(cl, mu, H2Method::direct) == Catch::Approx(4.0 / 3.0).margin(1e-9));
    CHECK(h2_norm_squared(cl, mu, H2Method::iterative) ==
          Catch::Approx(4.0 / 3.0).margin(1e-9));
  }

  SECTION("zero disturbance injection gives zero norm") {
    ClosedLoopSystem cl = scalar_loop(0.5, 1.0, 0.0);
    CHECK(h2_norm_squared(cl, point_mass(1, 0)) == Catch::Approx(0.0).margin(1e-14));
  }

  SECTION("unstable loops are rejected") {
    ClosedLoopSystem cl = scalar_loop(1.1, 1.0, 1.0);
    CHECK_THROWS_AS(h2_norm_squared(cl, point_mass(1, 0)), std::domain_error);
  }

  SECTION("direct and iterative methods agree on a jump system") {
    ModelFile mf = builtin_model("ex2");
    CounterRng rng(43, 0);
    for (int trial = 0; trial < 40; ++trial) {
      FeedbackGains g = testutil::random_gains(rng, 2, 2, 1, 2);
      ClosedLoopSystem cl = closed_loop(mf.model, iid_failures(0.3), 2, g);
      if (mss_spectral_radius(cl) >= 0.95) continue;
      Eigen::VectorXd mu =
          extended_initial_distribution(cl.chain, uniform_initial_data(2, 2, 2));
      const double direct = h2_norm_squared(cl, mu, H2Method::direct);
      const double iter = h2_norm_squared(cl, mu, H2Method::iterative);
      CHECK(direct == Catch::Approx(iter).margin(1e-8));
    }
  }

  SECTION("value is invariant under state reordering") {
    ModelFile mf = builtin_model("ex2");
    CounterRng rng(44, 0);
    FeedbackGains g = testutil::random_gains(rng, 2, 1, 1, 2, 0.2);
    ClosedLoopSystem cl = closed_loop(mf.model, iid_failures(0.4), 1, g);
    REQUIRE(mss_spectral_radius(cl) < 1.0);  // holds for this seed
    Eigen::VectorXd mu =
        extended_initial_distribution(cl.chain, uniform_initial_data(2, 2, 1));
    const double base = h2_norm_squared(cl, mu);

    std::vector<int> perm = {5, 2, 0, 4, 1, 3};
    ClosedLoopSystem plc = permuted(cl, perm);
    Eigen::VectorXd pmu(6);
    for (int i = 0; i < 6; ++i) pmu[i] = mu[perm[i]];
    const double permuted_value = h2_norm_squared(plc, pmu);
    CHECK(base == Catch::Approx(permuted_value).epsilon(1e-10));
  }

  SECTION("scaling E scales the squared norm quadratically") {
    ModelFile mf = builtin_model("ex2");
    CounterRng rng(45, 0);
    FeedbackGains g = testutil::random_gains(rng, 2, 1, 1, 2, 0.2);
    ClosedLoopSystem cl = closed_loop(mf.model, iid_failures(0.4), 1, g);
    REQUIRE(mss_spectral_radius(cl) < 1.0);
    Eigen::VectorXd mu =
        extended_initial_distribution(cl.chain, uniform_initial_data(2, 2, 1));
    const double base = h2_norm_squared(cl, mu);
    const double kappa = 3.7;
    ClosedLoopSystem scaled = cl;
    for (auto& E : scaled.E) E *= kappa;
    const double scaled_value = h2_norm_squared(scaled, mu);
    CHECK(scaled_value == Catch::Approx(kappa * kappa * base).epsilon(1e-10));
  }
}

TEST_CASE("H2 LMI bound tracks the Gramian value") {
  ModelFile mf = builtin_model("ex2");
  CounterRng rng(46, 0);
  int checked = 0;
  for (int trial = 0; trial < 12 && checked < 4; ++trial) {
    FeedbackGains g = testutil::random_gains(rng, 2, 1, 1, 2, 0.25);
    ClosedLoopSystem cl = closed_loop(mf.model, iid_failures(0.3), 1, g);
    if (mss_spectral_radius(cl) >= 0.9) continue;
    Eigen::VectorXd mu =
        extended_initial_distribution(cl.chain, uniform_initial_data(2, 2, 1));
    const double gramian = h2_norm_squared(cl, mu);
    BoundResult lmi = h2_upper_bound_lmi(cl, mu);
    REQUIRE(lmi.status == sdp::SolveStatus::optimal);
    CHECK(lmi.value >= gramian * (1.0 - 1e-6));
    CHECK(std::abs(lmi.value - gramian) / gramian <= 0.01);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("H-infinity sufficient condition") {
  SECTION("zero transfer is feasible for tiny gamma") {
    MjlsModel md = testutil::scalar_model(0.5, 1.0, 0.0, 0.0, 0.0);
    ClosedLoopSystem cl =
        closed_loop(md, testutil::trivial_channel(), 1, testutil::zero_gains(1, 1, 1, 1));
    FeasibilityResult res = hinf_upper_bound(cl, 1e-4);
    CHECK(res.status == sdp::SolveStatus::optimal);
  }

  SECTION("pure delay has unit gain") {
    // x(k+1) = w(k), z(k) = x(k): the exact squared gain is 1.
    ClosedLoopSystem cl = scalar_loop(0.0, 1.0, 1.0);
    BoundResult res = hinf_minimize(cl);
    REQUIRE(res.status == sdp::SolveStatus::optimal);
    CHECK(res.value >= 1.0 - 1e-6);
    CHECK(res.value <= 1.0 + 1e-2);
    CHECK(res.certificate.reverified);

    FeasibilityResult below = hinf_upper_bound(cl, 0.8);
    CHECK(below.status == sdp::SolveStatus::infeasible);
    FeasibilityResult above = hinf_upper_bound(cl, 1.2);
    CHECK(above.status == sdp::SolveStatus::optimal);
  }

  SECTION("minimized bound exists for a stabilized jump system") {
    ModelFile mf = builtin_model("ex2");
    CounterRng rng(47, 0);
    FeedbackGains g = testutil::random_gains(rng, 2, 1, 1, 2, 0.2);
    ClosedLoopSystem cl = closed_loop(mf.model, iid_failures(0.4), 1, g);
    REQUIRE(mss_spectral_radius(cl) < 1.0);
    BoundResult res = hinf_minimize(cl);
    REQUIRE(res.status == sdp::SolveStatus::optimal);
    CHECK(res.value > 0.0);
  }
}
