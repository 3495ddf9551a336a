#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hmjls {

/// Absolute tolerance on row sums of transition matrices and on distribution
/// mass. Rows within this tolerance of 1 are renormalized on load; rows
/// outside it are rejected.
inline constexpr double kStochasticTol = 1e-12;

/// Discrete-time Markov jump linear system
///   x(k+1) = A_i x(k) + B_i u(k) + E_i w(k),  z(k) = C_i x(k) + D_i u(k),
/// where the active index i follows a Markov chain with transition matrix P.
struct MjlsModel {
  int N = 0;  ///< number of modes
  int n = 0;  ///< state dimension
  int m = 0;  ///< input dimension
  int l = 0;  ///< performance-output dimension
  int q = 0;  ///< disturbance dimension
  std::vector<Eigen::MatrixXd> A;  ///< N matrices, n x n
  std::vector<Eigen::MatrixXd> B;  ///< N matrices, n x m
  std::vector<Eigen::MatrixXd> C;  ///< N matrices, l x n
  std::vector<Eigen::MatrixXd> D;  ///< N matrices, l x m
  std::vector<Eigen::MatrixXd> E;  ///< N matrices, n x q
  Eigen::MatrixXd P;               ///< N x N, row-stochastic
};

/// Mode-observation channel: an independent Markov chain on [0, M) with
/// transition matrix Q; the mode is visible exactly when the chain sits in a
/// state with indicator f = 1.
struct ObservationProcess {
  int M = 0;
  Eigen::MatrixXd Q;       ///< M x M, row-stochastic
  std::vector<int> f;      ///< M entries in {0, 1}
};

/// Periodic gain bank: K[g][d] is applied when the last observed mode is g
/// and the phase since that observation is d (both 0-based, d in [0, T)).
struct FeedbackGains {
  int N = 0;
  int T = 0;
  std::vector<std::vector<Eigen::MatrixXd>> K;  ///< K[g][d], m x n

  const Eigen::MatrixXd& at(int g, int d) const { return K[g][d]; }
};

/// Initial-condition data: distributions of the initial mode, the initial
/// channel state, and the pre-observation pair (last-observed mode, phase).
struct InitialData {
  Eigen::VectorXd mu_r;  ///< length N
  Eigen::VectorXd mu_s;  ///< length M
  Eigen::MatrixXd nu;    ///< N x T, distribution over (last-observed mode, phase)
};

/// Accumulates human-readable invariant violations; empty means valid.
/// Diagnostics are reported, never thrown. Indices in messages are 1-based.
class ValidationReport {
 public:
  void add(std::string msg) { problems_.push_back(std::move(msg)); }
  bool ok() const { return problems_.empty(); }
  const std::vector<std::string>& problems() const { return problems_; }

  std::string str() const {
    std::string out;
    for (const auto& p : problems_) {
      out += p;
      out += '\n';
    }
    return out;
  }

  bool contains(const std::string& needle) const {
    for (const auto& p : problems_)
      if (p.find(needle) != std::string::npos) return true;
    return false;
  }

  void merge(const ValidationReport& other) {
    problems_.insert(problems_.end(), other.problems_.begin(), other.problems_.end());
  }

 private:
  std::vector<std::string> problems_;
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline void check_stochastic(const Eigen::MatrixXd& M, const std::string& name,
                             ValidationReport& rep) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (M(i, j) < 0.0)
        rep.add(name + " row " + std::to_string(i + 1) + " has negative entry " +
                fmt_g(M(i, j)) + " at column " + std::to_string(j + 1));
    }
    const double sum = M.row(i).sum();
    if (std::abs(sum - 1.0) > kStochasticTol)
      rep.add(name + " row " + std::to_string(i + 1) + " sums to " + fmt_g(sum));
  }
}

inline void check_distribution(const Eigen::VectorXd& v, const std::string& name,
                               ValidationReport& rep) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] < 0.0)
      rep.add(name + " has negative entry " + fmt_g(v[i]) + " at position " +
              std::to_string(i + 1));
  const double sum = v.sum();
  if (std::abs(sum - 1.0) > kStochasticTol) rep.add(name + " sums to " + fmt_g(sum));
}

inline void check_family(const std::vector<Eigen::MatrixXd>& fam, const std::string& name,
                         int N, int rows, int cols, ValidationReport& rep) {
  if (static_cast<int>(fam.size()) != N) {
    rep.add(name + " has " + std::to_string(fam.size()) + " matrices, expected " +
            std::to_string(N));
    return;
  }
  for (int i = 0; i < N; ++i) {
    if (fam[i].rows() != rows || fam[i].cols() != cols)
      rep.add(name + "[" + std::to_string(i + 1) + "] is " + std::to_string(fam[i].rows()) +
              "x" + std::to_string(fam[i].cols()) + ", expected " + std::to_string(rows) +
              "x" + std::to_string(cols));
  }
}

}  // namespace detail

/// Checks dimensions and row-stochasticity; returns every violation found.
inline ValidationReport validate_model(const MjlsModel& model) {
  ValidationReport rep;
  if (model.N < 1) rep.add("mode count N must be positive, got " + std::to_string(model.N));
  if (model.n < 1 || model.m < 1 || model.l < 1 || model.q < 1)
    rep.add("dimensions (n, m, l, q) must be positive, got (" + std::to_string(model.n) +
            ", " + std::to_string(model.m) + ", " + std::to_string(model.l) + ", " +
            std::to_string(model.q) + ")");
  if (model.N < 1 || model.n < 1 || model.m < 1 || model.l < 1 || model.q < 1) return rep;

  detail::check_family(model.A, "A", model.N, model.n, model.n, rep);
  detail::check_family(model.B, "B", model.N, model.n, model.m, rep);
  detail::check_family(model.C, "C", model.N, model.l, model.n, rep);
  detail::check_family(model.D, "D", model.N, model.l, model.m, rep);
  detail::check_family(model.E, "E", model.N, model.n, model.q, rep);

  if (model.P.rows() != model.N || model.P.cols() != model.N)
    rep.add("P is " + std::to_string(model.P.rows()) + "x" + std::to_string(model.P.cols()) +
            ", expected " + std::to_string(model.N) + "x" + std::to_string(model.N));
  else
    detail::check_stochastic(model.P, "P", rep);
  return rep;
}

inline ValidationReport validate_observation(const ObservationProcess& obs) {
  ValidationReport rep;
  if (obs.M < 1) {
    rep.add("channel state count M must be positive, got " + std::to_string(obs.M));
    return rep;
  }
  if (obs.Q.rows() != obs.M || obs.Q.cols() != obs.M)
    rep.add("Q is " + std::to_string(obs.Q.rows()) + "x" + std::to_string(obs.Q.cols()) +
            ", expected " + std::to_string(obs.M) + "x" + std::to_string(obs.M));
  else
    detail::check_stochastic(obs.Q, "Q", rep);
  if (static_cast<int>(obs.f.size()) != obs.M)
    rep.add("f has " + std::to_string(obs.f.size()) + " entries, expected " +
            std::to_string(obs.M));
  else
    for (int i = 0; i < obs.M; ++i)
      if (obs.f[i] != 0 && obs.f[i] != 1)
        rep.add("f[" + std::to_string(i + 1) + "] = " + std::to_string(obs.f[i]) +
                ", must be 0 or 1");
  return rep;
}

/// The bank must hold an m x n gain for every (mode, phase) slot.
inline ValidationReport validate_gains(const FeedbackGains& gains, int m, int n) {
  ValidationReport rep;
  if (gains.N < 1 || gains.T < 1) {
    rep.add("gain bank dimensions (N, T) must be positive, got (" + std::to_string(gains.N) +
            ", " + std::to_string(gains.T) + ")");
    return rep;
  }
  if (static_cast<int>(gains.K.size()) != gains.N) {
    rep.add("gain bank has " + std::to_string(gains.K.size()) + " rows, expected " +
            std::to_string(gains.N));
    return rep;
  }
  for (int g = 0; g < gains.N; ++g) {
    if (static_cast<int>(gains.K[g].size()) != gains.T) {
      rep.add("gain bank row " + std::to_string(g + 1) + " has " +
              std::to_string(gains.K[g].size()) + " entries, expected " +
              std::to_string(gains.T));
      continue;
    }
    for (int d = 0; d < gains.T; ++d)
      if (gains.K[g][d].rows() != m || gains.K[g][d].cols() != n)
        rep.add("K[" + std::to_string(g + 1) + "][" + std::to_string(d + 1) + "] is " +
                std::to_string(gains.K[g][d].rows()) + "x" +
                std::to_string(gains.K[g][d].cols()) + ", expected " + std::to_string(m) +
                "x" + std::to_string(n));
  }
  return rep;
}

inline ValidationReport validate_initial(const InitialData& init, int N, int M, int T) {
  ValidationReport rep;
  if (init.mu_r.size() != N)
    rep.add("mu_r has " + std::to_string(init.mu_r.size()) + " entries, expected " +
            std::to_string(N));
  else
    detail::check_distribution(init.mu_r, "mu_r", rep);
  if (init.mu_s.size() != M)
    rep.add("mu_s has " + std::to_string(init.mu_s.size()) + " entries, expected " +
            std::to_string(M));
  else
    detail::check_distribution(init.mu_s, "mu_s", rep);
  if (init.nu.rows() != N || init.nu.cols() != T) {
    rep.add("nu is " + std::to_string(init.nu.rows()) + "x" + std::to_string(init.nu.cols()) +
            ", expected " + std::to_string(N) + "x" + std::to_string(T));
  } else {
    Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(init.nu.data(), init.nu.size());
    detail::check_distribution(flat, "nu", rep);
  }
  return rep;
}

/// Divides each row by its sum. Call only after validation has accepted the
/// matrix; afterwards rows are stochastic to machine precision.
inline void renormalize_rows(Eigen::MatrixXd& M) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) M.row(i) /= M.row(i).sum();
}

inline void renormalize_distribution(Eigen::VectorXd& v) { v /= v.sum(); }

/// Stationary distribution of a row-stochastic matrix (solves pi P = pi,
/// sum(pi) = 1 by direct elimination).
inline Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
  const Eigen::Index n = P.rows();
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
  A.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b[n - 1] = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(b);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return pi;
}

/// Uniform initial data for a given (N, M, T); handy default for simulation.
inline InitialData uniform_initial_data(int N, int M, int T) {
  InitialData init;
  init.mu_r = Eigen::VectorXd::Constant(N, 1.0 / N);
  init.mu_s = Eigen::VectorXd::Constant(M, 1.0 / M);
  init.nu = Eigen::MatrixXd::Constant(N, T, 1.0 / (N * T));
  return init;
}

/// Largest Frobenius norm among the plant matrices; used to set scale-aware
/// strictness margins.
inline double model_matrix_scale(const MjlsModel& model) {
  double s = 0.0;
  for (const auto* fam : {&model.A, &model.B, &model.C, &model.D, &model.E})
    for (const auto& M : *fam) s = std::max(s, M.norm());
  return s;
}

// ---------------------------------------------------------------------------
// Channel presets
// ---------------------------------------------------------------------------

/// Two-state Good/Bad channel: transmits the mode in the Good state, switches
/// G->B with probability p and B->G with probability q.
inline ObservationProcess gilbert_elliott(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("gilbert_elliott: probabilities must lie in [0, 1]");
  ObservationProcess obs;
  obs.M = 2;
  obs.Q.resize(2, 2);
  obs.Q << 1.0 - p, p, q, 1.0 - q;
  obs.f = {1, 0};
  return obs;
}

/// Each observation attempt fails independently with probability pf.
inline ObservationProcess iid_failures(double pf) {
  if (!(pf >= 0.0 && pf <= 1.0))
    throw std::invalid_argument("iid_failures: probability must lie in [0, 1]");
  ObservationProcess obs;
  obs.M = 2;
  obs.Q.resize(2, 2);
  obs.Q << 1.0 - pf, pf, 1.0 - pf, pf;
  obs.f = {1, 0};
  return obs;
}

/// Observation attempts every l steps, each succeeding with probability p;
/// gaps between observations are l, 2l, 3l, ... with geometric(p) multiples.
inline ObservationProcess periodic_with_failures(int l, double p) {
  if (l < 1) throw std::invalid_argument("periodic_with_failures: l must be >= 1");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("periodic_with_failures: probability must lie in [0, 1]");
  ObservationProcess obs;
  obs.M = l + 1;
  obs.Q = Eigen::MatrixXd::Zero(obs.M, obs.M);
  if (l == 1) {
    obs.Q(0, 0) = p;
    obs.Q(0, 1) = 1.0 - p;
    obs.Q(1, 0) = p;
    obs.Q(1, 1) = 1.0 - p;
  } else {
    // State 1 jumps into the cycle so the walk back to an observation takes
    // exactly l steps; the last state decides success/retry.
    obs.Q(0, 2) = 1.0;
    for (int i = 1; i < l; ++i) obs.Q(i, i + 1) = 1.0;
    obs.Q(l, 0) = p;
    obs.Q(l, 1) = 1.0 - p;
  }
  obs.f.assign(obs.M, 0);
  obs.f[0] = 1;
  return obs;
}

}  // namespace hmjls
