#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "hmjls/chain.hpp"
#include "hmjls/sdp.hpp"
#include "hmjls/sdp_solver.hpp"

namespace hmjls {

/// Closed loop over the extended chain: per-state matrices
///   A[k] = A_a + B_a K[g][d],  C[k] = C_a + D_a K[g][d],  E[k] = E_a,
/// where (a, ., g, d) is the k-th extended state.
struct ClosedLoopSystem {
  ExtendedChain chain;
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> C;
  std::vector<Eigen::MatrixXd> E;
};

inline ClosedLoopSystem closed_loop(const ExtendedChain& chain, const FeedbackGains& gains) {
  const MjlsModel& md = chain.model;
  if (gains.N != md.N || gains.T != chain.T)
    throw std::invalid_argument("closed_loop: gain bank is (" + std::to_string(gains.N) + ", " +
                                std::to_string(gains.T) + "), expected (" +
                                std::to_string(md.N) + ", " + std::to_string(chain.T) + ")");
  {
    ValidationReport rep = validate_gains(gains, md.m, md.n);
    if (!rep.ok()) throw std::invalid_argument("closed_loop: invalid gains\n" + rep.str());
  }
  ClosedLoopSystem cl;
  cl.chain = chain;
  cl.A.reserve(chain.size());
  cl.C.reserve(chain.size());
  cl.E.reserve(chain.size());
  for (const ExtendedState& s : chain.states) {
    const Eigen::MatrixXd& K = gains.K[s.last_obs][s.phase];
    cl.A.push_back(md.A[s.mode] + md.B[s.mode] * K);
    cl.C.push_back(md.C[s.mode] + md.D[s.mode] * K);
    cl.E.push_back(md.E[s.mode]);
  }
  return cl;
}

inline ClosedLoopSystem closed_loop(const MjlsModel& model, const ObservationProcess& obs,
                                    int T, const FeedbackGains& gains) {
  return closed_loop(transition_matrix(model, obs, T), gains);
}

namespace detail {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

}  // namespace detail

/// Matrix of the second-moment recursion: the (target, source) block is
/// pbar(source, target) * (A[source] (x) A[source]). Its spectral radius is
/// < 1 exactly when the closed loop is mean square stable.
inline Eigen::MatrixXd second_moment_matrix(const ClosedLoopSystem& cl) {
  const int K = cl.chain.size();
  const int n = cl.chain.model.n;
  const int nn = n * n;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K) * nn,
                                            static_cast<Eigen::Index>(K) * nn);
  for (int i = 0; i < K; ++i) {
    const Eigen::MatrixXd AA = detail::kron(cl.A[i], cl.A[i]);
    for (int j = 0; j < K; ++j) {
      const double w = cl.chain.pbar(i, j);
      if (w != 0.0) M.block(static_cast<Eigen::Index>(j) * nn, static_cast<Eigen::Index>(i) * nn, nn, nn) = w * AA;
    }
  }
  return M;
}

inline double mss_spectral_radius(const ClosedLoopSystem& cl) {
  const Eigen::MatrixXd M = second_moment_matrix(cl);
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct AnalysisOptions {
  double eps_scale = 1e-7;  ///< strictness margin = eps_scale * (1 + plant matrix scale)
  sdp::SolverOptions solver;
};

inline double strictness_margin(const MjlsModel& model, double eps_scale) {
  return eps_scale * (1.0 + model_matrix_scale(model));
}

/// Solver-produced witness for an LMI claim. Families hold the named
/// matrix variables at the solution; `reverified` records the independent
/// floating-point eigenvalue check of every block.
struct Certificate {
  std::string kind;
  std::map<std::string, std::vector<Eigen::MatrixXd>> families;
  double value = std::numeric_limits<double>::quiet_NaN();
  sdp::SolveStatus status = sdp::SolveStatus::failure;
  double min_margin = std::numeric_limits<double>::quiet_NaN();
  double gap_bound = std::numeric_limits<double>::quiet_NaN();
  double max_eq_violation = 0.0;
  int newton_steps = 0;
  bool reverified = false;
  std::string message;
};

namespace detail {

inline Certificate make_certificate(
    std::string kind, const sdp::ConicProgram& prog, const sdp::Solution& sol,
    const std::vector<std::pair<std::string, std::vector<sdp::VarId>>>& families,
    double scale) {
  Certificate cert;
  cert.kind = std::move(kind);
  cert.status = sol.status;
  cert.min_margin = sol.min_margin;
  cert.gap_bound = sol.gap_bound;
  cert.max_eq_violation = sol.max_eq_violation;
  cert.newton_steps = sol.newton_steps;
  cert.message = sol.message;
  if (sol.y.size() == prog.num_scalars) {
    for (const auto& [name, ids] : families) {
      std::vector<Eigen::MatrixXd> vals;
      vals.reserve(ids.size());
      for (sdp::VarId id : ids) vals.push_back(sdp::extract(prog, sol.y, id));
      cert.families.emplace(name, std::move(vals));
    }
    cert.reverified = sol.min_margin > -1e-9 * (1.0 + scale);
  }
  return cert;
}

}  // namespace detail

struct FeasibilityResult {
  sdp::SolveStatus status = sdp::SolveStatus::failure;
  Certificate certificate;
};

/// Feasibility of the coupled Lyapunov LMIs: positive-definite Q[k] with
/// Q[k] - sum_j pbar(j, k) A[j] Q[j] A[j]^T > 0 for every state. Feasible
/// exactly when the second-moment spectral radius is below one.
inline FeasibilityResult is_mss_lmi(const ClosedLoopSystem& cl, const AnalysisOptions& opts = {}) {
  const int K = cl.chain.size();
  const int n = cl.chain.model.n;
  const double eps = strictness_margin(cl.chain.model, opts.eps_scale);

  sdp::ProgramBuilder b;
  std::vector<sdp::VarId> Q;
  Q.reserve(K);
  for (int k = 0; k < K; ++k)
    Q.push_back(b.add_variable("Q[" + std::to_string(k) + "]", n, n, sdp::Symmetry::symmetric));
  for (int k = 0; k < K; ++k)
    b.add_lmi("Q_pos[" + std::to_string(k) + "]", {{b.expr(Q[k])}}, eps);
  for (int k = 0; k < K; ++k) {
    sdp::MatExpr decay = b.expr(Q[k]);
    for (int j = 0; j < K; ++j) {
      const double w = cl.chain.pbar(j, k);
      if (w != 0.0)
        decay = decay - w * (cl.A[j] * b.expr(Q[j]) * Eigen::MatrixXd(cl.A[j].transpose()));
    }
    b.add_lmi("Q_decay[" + std::to_string(k) + "]", {{decay}}, eps);
  }
  const sdp::ConicProgram prog = b.build();
  sdp::Solution sol = sdp::solve(prog, opts.solver);

  FeasibilityResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate("mss", prog, sol, {{"Q", Q}},
                                             model_matrix_scale(cl.chain.model));
  return out;
}

enum class H2Method { automatic, direct, iterative };

/// Squared H2 norm: trace form over the observability-weighted Gramian,
/// the fixed point of Q[k] = sum_j pbar(j,k) (A[j] Q[j] A[j]^T + mu(j) E[j] E[j]^T).
/// Requires mean square stability (checked with the spectral-radius oracle).
inline double h2_norm_squared(const ClosedLoopSystem& cl, const Eigen::VectorXd& mu_bar,
                              H2Method method = H2Method::automatic,
                              double fp_tol = 1e-12, int fp_max_iters = 100000) {
  const int K = cl.chain.size();
  const int n = cl.chain.model.n;
  if (mu_bar.size() != K)
    throw std::invalid_argument("h2_norm_squared: mu_bar has wrong length");
  if (mu_bar.minCoeff() < 0.0 || std::abs(mu_bar.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("h2_norm_squared: mu_bar is not a distribution");
  const double radius = mss_spectral_radius(cl);
  if (!(radius < 1.0))
    throw std::domain_error("h2_norm_squared: closed loop is not mean square stable "
                            "(spectral radius " + detail::fmt_g(radius) + ")");

  std::vector<Eigen::MatrixXd> inject(K);
  for (int k = 0; k < K; ++k) {
    inject[k] = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < K; ++j) {
      const double w = cl.chain.pbar(j, k) * mu_bar[j];
      if (w != 0.0) inject[k] += w * (cl.E[j] * cl.E[j].transpose());
    }
  }

  const int nn = n * n;
  const bool direct = method == H2Method::direct ||
                      (method == H2Method::automatic && static_cast<long long>(nn) * K <= 5000);
  std::vector<Eigen::MatrixXd> Q(K, Eigen::MatrixXd::Zero(n, n));
  if (direct) {
    const Eigen::MatrixXd M = second_moment_matrix(cl);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(K) * nn);
    for (int k = 0; k < K; ++k)
      rhs.segment(static_cast<Eigen::Index>(k) * nn, nn) =
          Eigen::Map<const Eigen::VectorXd>(inject[k].data(), nn);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(M.rows(), M.cols());
    Eigen::VectorXd q = (I - M).partialPivLu().solve(rhs);
    for (int k = 0; k < K; ++k)
      Q[k] = Eigen::Map<const Eigen::MatrixXd>(q.data() + static_cast<Eigen::Index>(k) * nn, n, n);
  } else {
    std::vector<Eigen::MatrixXd> next(K);
    int it = 0;
    for (; it < fp_max_iters; ++it) {
      double diff = 0.0;
      for (int k = 0; k < K; ++k) {
        next[k] = inject[k];
        for (int j = 0; j < K; ++j) {
          const double w = cl.chain.pbar(j, k);
          if (w != 0.0) next[k] += w * (cl.A[j] * Q[j] * cl.A[j].transpose());
        }
        diff = std::max(diff, (next[k] - Q[k]).cwiseAbs().maxCoeff());
      }
      Q.swap(next);
      if (diff < fp_tol) break;
    }
    if (it >= fp_max_iters)
      throw std::runtime_error("h2_norm_squared: fixed-point iteration did not converge within " +
                               std::to_string(fp_max_iters) + " iterations");
  }

  double total = 0.0;
  for (int k = 0; k < K; ++k) total += (cl.C[k] * Q[k] * cl.C[k].transpose()).trace();
  return total;
}

struct BoundResult {
  sdp::SolveStatus status = sdp::SolveStatus::failure;
  double value = std::numeric_limits<double>::quiet_NaN();  ///< bound on the squared norm
  Certificate certificate;
};

/// LMI upper bound on the squared H2 norm (trace objective over the coupled
/// Gramian inequalities); tight up to the strictness margins.
inline BoundResult h2_upper_bound_lmi(const ClosedLoopSystem& cl, const Eigen::VectorXd& mu_bar,
                                      const AnalysisOptions& opts = {}) {
  const int K = cl.chain.size();
  const int n = cl.chain.model.n;
  if (mu_bar.size() != K)
    throw std::invalid_argument("h2_upper_bound_lmi: mu_bar has wrong length");
  const double eps = strictness_margin(cl.chain.model, opts.eps_scale);

  sdp::ProgramBuilder b;
  std::vector<sdp::VarId> Q;
  for (int k = 0; k < K; ++k)
    Q.push_back(b.add_variable("Q[" + std::to_string(k) + "]", n, n, sdp::Symmetry::symmetric));
  sdp::VarId gamma = b.add_variable("gamma", 1, 1, sdp::Symmetry::general);

  for (int k = 0; k < K; ++k)
    b.add_lmi("Q_pos[" + std::to_string(k) + "]", {{b.expr(Q[k])}}, eps);
  for (int k = 0; k < K; ++k) {
    Eigen::MatrixXd inject = Eigen::MatrixXd::Zero(n, n);
    sdp::MatExpr decay = b.expr(Q[k]);
    for (int j = 0; j < K; ++j) {
      const double w = cl.chain.pbar(j, k);
      if (w == 0.0) continue;
      decay = decay - w * (cl.A[j] * b.expr(Q[j]) * Eigen::MatrixXd(cl.A[j].transpose()));
      inject += w * mu_bar[j] * (cl.E[j] * cl.E[j].transpose());
    }
    decay = decay - sdp::MatExpr::constant(inject);
    b.add_lmi("gramian[" + std::to_string(k) + "]", {{decay}}, eps);
  }
  sdp::MatExpr trace_gap = b.expr(gamma);
  for (int k = 0; k < K; ++k) trace_gap = trace_gap - b.quad_trace(cl.C[k], Q[k]);
  b.add_lmi("trace", {{trace_gap}}, eps);
  b.minimize(b.expr(gamma));

  const sdp::ConicProgram prog = b.build();
  sdp::Solution sol = sdp::solve(prog, opts.solver);
  BoundResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate("h2", prog, sol, {{"Q", Q}},
                                             model_matrix_scale(cl.chain.model));
  if (sol.status == sdp::SolveStatus::optimal) {
    out.value = sol.objective;
    out.certificate.value = sol.objective;
  }
  return out;
}

namespace detail {

/// Shared assembly for the H-infinity sufficient condition with fixed gains
/// (one G per state). gamma_sq < 0 means "make gamma a decision variable and
/// minimize it".
inline std::pair<sdp::ConicProgram, std::vector<std::pair<std::string, std::vector<sdp::VarId>>>>
build_hinf_analysis_program(const ClosedLoopSystem& cl, double gamma_sq, double eps,
                            sdp::VarId* gamma_out) {
  const int K = cl.chain.size();
  const int n = cl.chain.model.n;
  const int q = cl.chain.model.q;
  const int l = cl.chain.model.l;

  sdp::ProgramBuilder b;
  sdp::VarId gamma;
  const bool minimize = gamma_sq < 0.0;
  if (minimize) gamma = b.add_variable("gamma", 1, 1, sdp::Symmetry::general);
  std::vector<sdp::VarId> G, H, X;
  std::vector<sdp::VarId> Z(static_cast<std::size_t>(K) * K);
  for (int k = 0; k < K; ++k) {
    G.push_back(b.add_variable("G[" + std::to_string(k) + "]", n, n, sdp::Symmetry::general));
    H.push_back(b.add_variable("H[" + std::to_string(k) + "]", n, n, sdp::Symmetry::general));
    X.push_back(b.add_variable("X[" + std::to_string(k) + "]", n, n, sdp::Symmetry::symmetric));
  }
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j)
      Z[static_cast<std::size_t>(k) * K + j] =
          b.add_variable("Z[" + std::to_string(k) + "][" + std::to_string(j) + "]", n, n,
                         sdp::Symmetry::symmetric);

  const Eigen::MatrixXd Iq = Eigen::MatrixXd::Identity(q, q);
  const Eigen::MatrixXd Il = Eigen::MatrixXd::Identity(l, l);
  for (int k = 0; k < K; ++k) {
    std::vector<std::vector<std::optional<sdp::MatExpr>>> grid(4);
    for (auto& row : grid) row.resize(4);
    grid[0][0] = b.expr(G[k]) + b.expr(G[k]).transpose() - b.expr(X[k]);
    grid[0][2] = (cl.A[k] * b.expr(G[k])).transpose();
    grid[0][3] = (cl.C[k] * b.expr(G[k])).transpose();
    grid[1][1] = minimize ? b.scalar_times(gamma, Iq)
                          : sdp::MatExpr::constant(Eigen::MatrixXd(gamma_sq * Iq));
    grid[1][2] = sdp::MatExpr::constant(Eigen::MatrixXd(cl.E[k].transpose()));
    sdp::MatExpr dissip = b.expr(H[k]) + b.expr(H[k]).transpose();
    for (int j = 0; j < K; ++j) {
      const double w = cl.chain.pbar(k, j);
      if (w != 0.0) dissip = dissip - w * b.expr(Z[static_cast<std::size_t>(k) * K + j]);
    }
    grid[2][2] = dissip;
    grid[3][3] = sdp::MatExpr::constant(Il);
    b.add_lmi("hinf[" + std::to_string(k) + "]", grid, eps);
  }
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) {
      std::vector<std::vector<std::optional<sdp::MatExpr>>> grid(2);
      grid[0].resize(2);
      grid[1].resize(2);
      grid[0][0] = b.expr(Z[static_cast<std::size_t>(k) * K + j]);
      grid[0][1] = b.expr(H[k]).transpose();
      grid[1][1] = b.expr(X[j]);
      b.add_lmi("couple[" + std::to_string(k) + "][" + std::to_string(j) + "]", grid, eps);
    }
  if (minimize) {
    b.minimize(b.expr(gamma));
    if (gamma_out) *gamma_out = gamma;
  }

  std::vector<std::pair<std::string, std::vector<sdp::VarId>>> families{
      {"G", G}, {"H", H}, {"X", X}, {"Z", Z}};
  return {b.build(), std::move(families)};
}

}  // namespace detail

/// Sufficient-condition check: feasibility certifies that the closed loop is
/// mean square stable with squared H-infinity norm below gamma_sq.
/// Infeasibility proves nothing (the condition is sufficient only).
inline FeasibilityResult hinf_upper_bound(const ClosedLoopSystem& cl, double gamma_sq,
                                          const AnalysisOptions& opts = {}) {
  if (!(gamma_sq > 0.0)) throw std::invalid_argument("hinf_upper_bound: gamma must be positive");
  const double eps = strictness_margin(cl.chain.model, opts.eps_scale);
  auto [prog, families] = detail::build_hinf_analysis_program(cl, gamma_sq, eps, nullptr);
  sdp::Solution sol = sdp::solve(prog, opts.solver);
  FeasibilityResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate("hinf", prog, sol, families,
                                             model_matrix_scale(cl.chain.model));
  out.certificate.value = gamma_sq;
  return out;
}

/// Least gamma_sq achievable by the sufficient condition (gamma enters the
/// LMIs linearly, so this is a single minimization, no bisection).
inline BoundResult hinf_minimize(const ClosedLoopSystem& cl, const AnalysisOptions& opts = {}) {
  const double eps = strictness_margin(cl.chain.model, opts.eps_scale);
  sdp::VarId gamma;
  auto [prog, families] = detail::build_hinf_analysis_program(cl, -1.0, eps, &gamma);
  sdp::Solution sol = sdp::solve(prog, opts.solver);
  BoundResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate("hinf", prog, sol, families,
                                             model_matrix_scale(cl.chain.model));
  if (sol.status == sdp::SolveStatus::optimal) {
    out.value = sol.objective;
    out.certificate.value = sol.objective;
  }
  return out;
}

}  // namespace hmjls
