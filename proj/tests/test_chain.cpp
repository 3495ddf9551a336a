#include <catch2/catch_amalgamated.hpp>

#include "hmjls/chain.hpp"
#include "hmjls/model_io.hpp"
#include "test_helpers.hpp"

using namespace hmjls;

TEST_CASE("next_phase wraps modulo the period") {
  CHECK(next_phase(0, 3) == 1);
  CHECK(next_phase(2, 3) == 0);
  CHECK(next_phase(0, 1) == 0);
  CHECK_THROWS_AS(next_phase(3, 3), std::invalid_argument);
  CHECK_THROWS_AS(next_phase(-1, 3), std::invalid_argument);
}

namespace {

/// Brute-force oracle: enumerate the full product space and filter by the
/// membership predicate.
std::vector<ExtendedState> enumerate_states(int N, const ObservationProcess& obs, int T) {
  std::vector<ExtendedState> out;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < obs.M; ++b)
      for (int g = 0; g < N; ++g)
        for (int d = 0; d < T; ++d) {
          if (obs.f[b] == 1 && !(a == g && d == 0)) continue;
          out.push_back(ExtendedState{a, b, g, d});
        }
  return out;
}

long long count_formula(int N, const ObservationProcess& obs, int T) {
  long long m1 = 0;
  for (int v : obs.f) m1 += v;
  const long long m0 = obs.M - m1;
  return N * m1 + static_cast<long long>(N) * m0 * N * T;
}

}  // namespace

TEST_CASE("state space for the six-state example") {
  ObservationProcess obs = iid_failures(0.5);
  std::vector<ExtendedState> states = build_state_space(2, obs, 1);
  std::vector<ExtendedState> expect = {
      {0, 0, 0, 0}, {0, 1, 0, 0}, {0, 1, 1, 0}, {1, 0, 1, 0}, {1, 1, 0, 0}, {1, 1, 1, 0}};
  REQUIRE(states.size() == 6);
  for (std::size_t i = 0; i < states.size(); ++i) CHECK(states[i] == expect[i]);
  CHECK(states == enumerate_states(2, obs, 1));
}

TEST_CASE("state count matches the cardinality formula") {
  ObservationProcess obs = iid_failures(0.5);
  CHECK(build_state_space(2, obs, 5).size() == 22);
  CHECK(count_formula(2, obs, 5) == 22);

  CounterRng rng(11, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 1 + static_cast<int>(rng.next_double() * 3);
    const int M = 1 + static_cast<int>(rng.next_double() * 3);
    const int T = 1 + static_cast<int>(rng.next_double() * 4);
    ObservationProcess o = testutil::random_observation(rng, M);
    std::vector<ExtendedState> states = build_state_space(N, o, T);
    CHECK(static_cast<long long>(states.size()) == count_formula(N, o, T));
    CHECK(states == enumerate_states(N, o, T));
  }
}

TEST_CASE("all-observing channel collapses the state space") {
  ObservationProcess obs;
  obs.M = 2;
  obs.Q.resize(2, 2);
  obs.Q << 0.5, 0.5, 0.25, 0.75;
  obs.f = {1, 1};
  std::vector<ExtendedState> states = build_state_space(3, obs, 4);
  CHECK(states.size() == 6);  // N * M
  for (const auto& s : states) {
    CHECK(s.last_obs == s.mode);
    CHECK(s.phase == 0);
  }
}

TEST_CASE("transition probabilities match hand-evaluated cases") {
  ModelFile mf = builtin_model("ex2");  // P = [[0.1, 0.9], [0.7, 0.3]]
  ObservationProcess obs = gilbert_elliott(0.3, 0.3);
  ExtendedChain chain = transition_matrix(mf.model, obs, 2);

  const int from = chain.index_of({0, 0, 0, 0});
  REQUIRE(from >= 0);

  // Observing target: p12 * q11 = 0.9 * 0.7.
  const int to_obs = chain.index_of({1, 0, 1, 0});
  REQUIRE(to_obs >= 0);
  CHECK(chain.pbar(from, to_obs) == Catch::Approx(0.63).margin(1e-15));

  // Non-observing target keeps last_obs and advances the phase:
  // p12 * q12 = 0.9 * 0.3.
  const int to_blind = chain.index_of({1, 1, 0, 1});
  REQUIRE(to_blind >= 0);
  CHECK(chain.pbar(from, to_blind) == Catch::Approx(0.27).margin(1e-15));

  // Mismatched last_obs in a non-observing target is impossible.
  const int to_bad = chain.index_of({1, 1, 1, 1});
  REQUIRE(to_bad >= 0);
  CHECK(chain.pbar(from, to_bad) == 0.0);
}

TEST_CASE("pbar rows are stochastic across random configurations") {
  CounterRng rng(13, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int N = 1 + static_cast<int>(rng.next_double() * 3);
    const int M = 1 + static_cast<int>(rng.next_double() * 3);
    const int T = 1 + static_cast<int>(rng.next_double() * 4);
    MjlsModel md = testutil::random_model(rng, N, 2, 1, 1, 1);
    ObservationProcess obs = testutil::random_observation(rng, M);
    ExtendedChain chain = transition_matrix(md, obs, T);
    CHECK(static_cast<long long>(chain.size()) == count_formula(N, obs, T));
    for (int i = 0; i < chain.size(); ++i) {
      CHECK(chain.pbar.row(i).minCoeff() >= 0.0);
      CHECK(std::abs(chain.pbar.row(i).sum() - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("incoming weighted sums") {
  ModelFile mf = builtin_model("ex2");
  ObservationProcess obs = iid_failures(0.5);
  ExtendedChain chain = transition_matrix(mf.model, obs, 1);
  const int K = chain.size();
  REQUIRE(K == 6);

  SECTION("identity family gives column sums") {
    std::vector<Eigen::MatrixXd> family(K, Eigen::MatrixXd::Identity(2, 2));
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd expect = chain.pbar.col(k).sum() * Eigen::MatrixXd::Identity(2, 2);
      CHECK(incoming_weighted_sum(chain, family, k).isApprox(expect, 1e-14));
    }
  }

  SECTION("random family matches the direct sum") {
    CounterRng rng(17, 0);
    std::vector<Eigen::MatrixXd> family;
    for (int k = 0; k < K; ++k) family.push_back(testutil::random_symmetric(rng, 2));
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(2, 2);
      for (int j = 0; j < K; ++j) expect += chain.pbar(j, k) * family[j];
      CHECK((incoming_weighted_sum(chain, family, k) - expect).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("single-state chain weighted sums are the identity map") {
  MjlsModel md = testutil::scalar_model(0.5, 1.0, 1.0, 0.0, 1.0);
  ExtendedChain chain = transition_matrix(md, testutil::trivial_channel(), 1);
  REQUIRE(chain.size() == 1);
  CHECK(chain.pbar(0, 0) == Catch::Approx(1.0));
  std::vector<Eigen::MatrixXd> family{Eigen::MatrixXd::Constant(1, 1, 3.25)};
  CHECK(incoming_weighted_sum(chain, family, 0)(0, 0) == Catch::Approx(3.25));
  std::vector<Eigen::MatrixXd> pairs{Eigen::MatrixXd::Constant(1, 1, -2.0)};
  CHECK(outgoing_weighted_sum(chain, pairs, 0)(0, 0) == Catch::Approx(-2.0));
}

TEST_CASE("outgoing weighted sums") {
  ModelFile mf = builtin_model("ex2");
  ObservationProcess obs = gilbert_elliott(0.4, 0.2);
  ExtendedChain chain = transition_matrix(mf.model, obs, 2);
  const int K = chain.size();

  SECTION("identity pair family returns the identity") {
    std::vector<Eigen::MatrixXd> pairs(static_cast<std::size_t>(K) * K,
                                       Eigen::MatrixXd::Identity(2, 2));
    for (int k = 0; k < K; ++k)
      CHECK(outgoing_weighted_sum(chain, pairs, k).isApprox(Eigen::MatrixXd::Identity(2, 2),
                                                            1e-14));
  }

  SECTION("zero pair family returns zero") {
    std::vector<Eigen::MatrixXd> pairs(static_cast<std::size_t>(K) * K,
                                       Eigen::MatrixXd::Zero(2, 2));
    CHECK(outgoing_weighted_sum(chain, pairs, 1).isZero(0.0));
  }

  SECTION("random pair family matches the direct sum") {
    CounterRng rng(19, 0);
    std::vector<Eigen::MatrixXd> pairs;
    for (int i = 0; i < K * K; ++i) pairs.push_back(testutil::random_matrix(rng, 2, 2));
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(2, 2);
      for (int j = 0; j < K; ++j)
        expect += chain.pbar(k, j) * pairs[static_cast<std::size_t>(k) * K + j];
      CHECK((outgoing_weighted_sum(chain, pairs, k) - expect).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("extended initial distribution") {
  ModelFile mf = builtin_model("ex2");

  SECTION("uniform data on the six-state chain") {
    ExtendedChain chain = transition_matrix(mf.model, iid_failures(0.5), 1);
    Eigen::VectorXd mu = extended_initial_distribution(chain, uniform_initial_data(2, 2, 1));
    Eigen::VectorXd expect(6);
    // Direct evaluation of the two-branch product over the canonical order
    // (observing states carry 1/2 * 1/2, the rest 1/2 * 1/2 * 1/2).
    expect << 0.25, 0.125, 0.125, 0.25, 0.125, 0.125;
    CHECK((mu - expect).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(std::abs(mu.sum() - 1.0) <= 1e-12);
  }

  SECTION("all-observing channel uses only the product of marginals") {
    ObservationProcess obs;
    obs.M = 2;
    obs.Q.resize(2, 2);
    obs.Q << 0.3, 0.7, 0.6, 0.4;
    obs.f = {1, 1};
    ExtendedChain chain = transition_matrix(mf.model, obs, 3);
    InitialData init = uniform_initial_data(2, 2, 3);
    init.mu_r << 0.25, 0.75;
    init.mu_s << 0.1, 0.9;
    Eigen::VectorXd mu = extended_initial_distribution(chain, init);
    for (int k = 0; k < chain.size(); ++k) {
      const ExtendedState& s = chain.states[k];
      CHECK(mu[k] ==
            Catch::Approx(init.mu_r[s.mode] * init.mu_s[s.channel]).margin(1e-15));
    }
  }

  SECTION("point-mass nu confines support") {
    ExtendedChain chain = transition_matrix(mf.model, iid_failures(0.5), 2);
    InitialData init = uniform_initial_data(2, 2, 2);
    init.nu.setZero();
    init.nu(1, 1) = 1.0;
    Eigen::VectorXd mu = extended_initial_distribution(chain, init);
    for (int k = 0; k < chain.size(); ++k) {
      const ExtendedState& s = chain.states[k];
      if (mu[k] > 0.0)
        CHECK((chain.obs.f[s.channel] == 1 || (s.last_obs == 1 && s.phase == 1)));
    }
    CHECK(std::abs(mu.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("reachability restriction keeps a stochastic sub-chain") {
  ModelFile mf = builtin_model("ex2");
  // pf = 0: the non-observing channel state is never entered.
  ExtendedChain chain = transition_matrix(mf.model, iid_failures(0.0), 3);
  std::vector<int> seeds;
  for (int k = 0; k < chain.size(); ++k)
    if (chain.obs.f[chain.states[k].channel] == 1) seeds.push_back(k);
  std::vector<int> keep = reachable_from(chain, seeds);
  CHECK(static_cast<int>(keep.size()) < chain.size());
  ExtendedChain sub = restrict_to(chain, keep);
  for (int i = 0; i < sub.size(); ++i)
    CHECK(std::abs(sub.pbar.row(i).sum() - 1.0) <= 1e-12);
  for (const auto& s : sub.states) CHECK(sub.obs.f[s.channel] == 1);
}

TEST_CASE("chain CSV dump lists 1-based tuples and probabilities") {
  MjlsModel md = testutil::scalar_model(0.5, 1.0, 1.0, 0.0, 1.0);
  ExtendedChain chain = transition_matrix(md, testutil::trivial_channel(), 1);
  std::ostringstream os;
  dump_chain_csv(chain, os);
  CHECK(os.str() == "mode,channel,last_obs,phase,p_1\n1,1,1,1,1\n");
}
