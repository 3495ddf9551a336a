#pragma once

#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hmjls/model.hpp"

namespace hmjls {

/// One state of the extended chain: the quadruple
///   (mode, channel state, last observed mode, gain phase),
/// all 0-based. When the channel state is observing (f = 1), membership
/// forces last_obs == mode and phase == 0.
struct ExtendedState {
  int mode = 0;      // alpha
  int channel = 0;   // beta
  int last_obs = 0;  // gamma
  int phase = 0;     // delta, in [0, T)

  friend bool operator==(const ExtendedState& a, const ExtendedState& b) {
    return a.mode == b.mode && a.channel == b.channel && a.last_obs == b.last_obs &&
           a.phase == b.phase;
  }
};

inline bool state_allowed(const ExtendedState& s, const ObservationProcess& obs) {
  if (obs.f[s.channel] == 1) return s.last_obs == s.mode && s.phase == 0;
  return true;
}

/// Successor phase: phase + 1 modulo T (0-based).
inline int next_phase(int phase, int T) {
  if (phase < 0 || phase >= T) throw std::invalid_argument("next_phase: phase out of range");
  return (phase + 1) % T;
}

/// All admissible quadruples in canonical lexicographic order on
/// (mode, channel, last_obs, phase).
inline std::vector<ExtendedState> build_state_space(int N, const ObservationProcess& obs,
                                                    int T) {
  if (N < 1 || T < 1) throw std::invalid_argument("build_state_space: N and T must be >= 1");
  {
    ValidationReport rep = validate_observation(obs);
    if (!rep.ok())
      throw std::invalid_argument("build_state_space: invalid observation process\n" + rep.str());
  }
  std::vector<ExtendedState> states;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < obs.M; ++b)
      for (int g = 0; g < N; ++g)
        for (int d = 0; d < T; ++d) {
          ExtendedState s{a, b, g, d};
          if (state_allowed(s, obs)) states.push_back(s);
        }
  return states;
}

/// The extended chain: state list in canonical order plus the dense
/// transition matrix pbar. Immutable after construction.
struct ExtendedChain {
  MjlsModel model;
  ObservationProcess obs;
  int T = 1;
  std::vector<ExtendedState> states;
  Eigen::MatrixXd pbar;            ///< pbar(i, j) = P(state i -> state j)
  std::vector<int> state_lookup;   ///< flat (((a*M)+b)*N+g)*T+d -> position, -1 if absent

  int size() const { return static_cast<int>(states.size()); }

  int index_of(const ExtendedState& s) const {
    if (s.mode < 0 || s.mode >= model.N || s.channel < 0 || s.channel >= obs.M ||
        s.last_obs < 0 || s.last_obs >= model.N || s.phase < 0 || s.phase >= T)
      return -1;
    return state_lookup[((static_cast<std::size_t>(s.mode) * obs.M + s.channel) * model.N +
                         s.last_obs) *
                            T +
                        s.phase];
  }
};

/// Builds the extended chain for (model, channel, period). The transition
/// probability from (a, b, g, d) to (a', b', g', d') is
///   P(a, a') Q(b, b')  if f(b') = 1 and g' = a', d' = 0,
///   P(a, a') Q(b, b')  if f(b') = 0 and g' = g,  d' = next_phase(d),
///   0                  otherwise.
inline ExtendedChain transition_matrix(const MjlsModel& model, const ObservationProcess& obs,
                                       int T) {
  {
    ValidationReport rep = validate_model(model);
    rep.merge(validate_observation(obs));
    if (!rep.ok()) throw std::invalid_argument("transition_matrix: invalid inputs\n" + rep.str());
  }
  if (T < 1) throw std::invalid_argument("transition_matrix: T must be >= 1");

  ExtendedChain chain;
  chain.model = model;
  chain.obs = obs;
  chain.T = T;
  chain.states = build_state_space(model.N, obs, T);
  const int K = chain.size();

  chain.state_lookup.assign(static_cast<std::size_t>(model.N) * obs.M * model.N * T, -1);
  for (int k = 0; k < K; ++k) {
    const ExtendedState& s = chain.states[k];
    chain.state_lookup[((static_cast<std::size_t>(s.mode) * obs.M + s.channel) * model.N +
                        s.last_obs) *
                           T +
                       s.phase] = k;
  }

  chain.pbar = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < K; ++i) {
    const ExtendedState& s = chain.states[i];
    const int d_next = next_phase(s.phase, T);
    for (int a2 = 0; a2 < model.N; ++a2) {
      for (int b2 = 0; b2 < obs.M; ++b2) {
        const double prob = model.P(s.mode, a2) * obs.Q(s.channel, b2);
        if (prob == 0.0) continue;
        const ExtendedState target = obs.f[b2] == 1 ? ExtendedState{a2, b2, a2, 0}
                                                    : ExtendedState{a2, b2, s.last_obs, d_next};
        chain.pbar(i, chain.index_of(target)) += prob;
      }
    }
  }
  return chain;
}

/// Weighted sum over transitions INTO state k: sum_j pbar(j, k) * family[j].
inline Eigen::MatrixXd incoming_weighted_sum(const ExtendedChain& chain,
                                             const std::vector<Eigen::MatrixXd>& family,
                                             int k) {
  if (static_cast<int>(family.size()) != chain.size())
    throw std::invalid_argument("incoming_weighted_sum: family size mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(family[0].rows(), family[0].cols());
  for (int j = 0; j < chain.size(); ++j) {
    const double w = chain.pbar(j, k);
    if (w != 0.0) out += w * family[j];
  }
  return out;
}

/// Weighted sum over transitions OUT OF state k of a pair-indexed family:
/// sum_j pbar(k, j) * family[k * size + j].
inline Eigen::MatrixXd outgoing_weighted_sum(const ExtendedChain& chain,
                                             const std::vector<Eigen::MatrixXd>& pair_family,
                                             int k) {
  const int K = chain.size();
  if (static_cast<int>(pair_family.size()) != K * K)
    throw std::invalid_argument("outgoing_weighted_sum: pair family size mismatch");
  const Eigen::MatrixXd& first = pair_family[static_cast<std::size_t>(k) * K];
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(first.rows(), first.cols());
  for (int j = 0; j < K; ++j) {
    const double w = chain.pbar(k, j);
    if (w != 0.0) out += w * pair_family[static_cast<std::size_t>(k) * K + j];
  }
  return out;
}

/// Initial distribution of the extended chain induced by (mu_r, mu_s, nu):
/// observing states get mu_r(a) mu_s(b); the rest get mu_r(a) mu_s(b) nu(g, d).
inline Eigen::VectorXd extended_initial_distribution(const ExtendedChain& chain,
                                                     const InitialData& init) {
  {
    ValidationReport rep = validate_initial(init, chain.model.N, chain.obs.M, chain.T);
    if (!rep.ok())
      throw std::invalid_argument("extended_initial_distribution: invalid initial data\n" +
                                  rep.str());
  }
  Eigen::VectorXd mu(chain.size());
  for (int k = 0; k < chain.size(); ++k) {
    const ExtendedState& s = chain.states[k];
    const double base = init.mu_r[s.mode] * init.mu_s[s.channel];
    mu[k] = chain.obs.f[s.channel] == 1 ? base : base * init.nu(s.last_obs, s.phase);
  }
  return mu;
}

/// States reachable (in the directed-graph sense) from the given seed
/// indices, including the seeds.
inline std::vector<int> reachable_from(const ExtendedChain& chain,
                                       const std::vector<int>& seeds) {
  std::vector<char> seen(chain.size(), 0);
  std::vector<int> stack;
  for (int s : seeds) {
    if (s < 0 || s >= chain.size()) throw std::invalid_argument("reachable_from: bad seed index");
    if (!seen[s]) {
      seen[s] = 1;
      stack.push_back(s);
    }
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j = 0; j < chain.size(); ++j)
      if (chain.pbar(i, j) > 0.0 && !seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
  }
  std::vector<int> out;
  for (int i = 0; i < chain.size(); ++i)
    if (seen[i]) out.push_back(i);
  return out;
}

/// Restriction of the chain to a transition-closed subset of states (for
/// example the output of reachable_from). Performance aid only; results for
/// initial distributions supported on the subset are unchanged.
inline ExtendedChain restrict_to(const ExtendedChain& chain, const std::vector<int>& keep) {
  ExtendedChain sub;
  sub.model = chain.model;
  sub.obs = chain.obs;
  sub.T = chain.T;
  const int K = static_cast<int>(keep.size());
  sub.states.reserve(K);
  for (int k : keep) sub.states.push_back(chain.states[k]);
  sub.pbar.resize(K, K);
  for (int i = 0; i < K; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < K; ++j) {
      sub.pbar(i, j) = chain.pbar(keep[i], keep[j]);
      row_sum += sub.pbar(i, j);
    }
    if (std::abs(row_sum - 1.0) > 1e-10)
      throw std::invalid_argument("restrict_to: subset is not transition-closed (row " +
                                  std::to_string(i + 1) + " sums to " + detail::fmt_g(row_sum) +
                                  ")");
  }
  sub.state_lookup.assign(
      static_cast<std::size_t>(sub.model.N) * sub.obs.M * sub.model.N * sub.T, -1);
  for (int k = 0; k < K; ++k) {
    const ExtendedState& s = sub.states[k];
    sub.state_lookup[((static_cast<std::size_t>(s.mode) * sub.obs.M + s.channel) * sub.model.N +
                      s.last_obs) *
                         sub.T +
                     s.phase] = k;
  }
  return sub;
}

/// CSV dump: one row per state with its 1-based tuple followed by the full
/// row of transition probabilities.
inline void dump_chain_csv(const ExtendedChain& chain, std::ostream& os) {
  os << "mode,channel,last_obs,phase";
  for (int j = 0; j < chain.size(); ++j) os << ",p_" << (j + 1);
  os << '\n';
  char buf[32];
  for (int i = 0; i < chain.size(); ++i) {
    const ExtendedState& s = chain.states[i];
    os << (s.mode + 1) << ',' << (s.channel + 1) << ',' << (s.last_obs + 1) << ','
       << (s.phase + 1);
    for (int j = 0; j < chain.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", chain.pbar(i, j));
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace hmjls
