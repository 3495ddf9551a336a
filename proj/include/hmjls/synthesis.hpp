#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hmjls/analysis.hpp"

namespace hmjls {

struct SynthesisOptions {
  double eps_scale = 1e-7;   ///< strictness margin scale, as in the analysis module
  sdp::SolverOptions solver;
  double cond_limit = 1e12;  ///< gain recovery fails beyond this condition number
  bool post_check_lmi = true;  ///< run the analysis-module LMI re-check on the result
};

struct PostVerification {
  double spectral_radius = std::numeric_limits<double>::quiet_NaN();
  bool mss = false;
  double h2_squared = std::numeric_limits<double>::quiet_NaN();
  sdp::SolveStatus lmi_recheck = sdp::SolveStatus::failure;
  bool lmi_recheck_ran = false;
};

struct SynthesisResult {
  sdp::SolveStatus status = sdp::SolveStatus::failure;
  FeedbackGains gains;
  Eigen::MatrixXd nu;   ///< designed initial distribution (H2 problem only), N x T
  double gamma = std::numeric_limits<double>::quiet_NaN();  ///< squared-norm bound
  Certificate certificate;
  PostVerification post;
  double max_g_condition = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

/// K[g][d] solves K G = F for each slot, via linear solve rather than an
/// explicit inverse. Throws naming the offending slot when G is singular
/// beyond cond_limit.
inline FeedbackGains recover_gains(const std::vector<std::vector<Eigen::MatrixXd>>& F,
                                   const std::vector<std::vector<Eigen::MatrixXd>>& G,
                                   double cond_limit = 1e12,
                                   double* max_condition = nullptr) {
  if (F.size() != G.size() || F.empty())
    throw std::invalid_argument("recover_gains: bank shape mismatch");
  FeedbackGains gains;
  gains.N = static_cast<int>(F.size());
  gains.T = static_cast<int>(F[0].size());
  gains.K.resize(gains.N);
  double worst = 0.0;
  for (int g = 0; g < gains.N; ++g) {
    if (F[g].size() != static_cast<std::size_t>(gains.T) || G[g].size() != F[g].size())
      throw std::invalid_argument("recover_gains: bank shape mismatch");
    for (int d = 0; d < gains.T; ++d) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(G[g][d]);
      const double smin = svd.singularValues().minCoeff();
      const double smax = svd.singularValues().maxCoeff();
      const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
      worst = std::max(worst, cond);
      if (!(cond <= cond_limit))
        throw std::domain_error("recover_gains: G[" + std::to_string(g + 1) + "][" +
                                std::to_string(d + 1) + "] is numerically singular (condition " +
                                detail::fmt_g(cond) + ")");
      // K G = F  <=>  G^T K^T = F^T
      gains.K[g].push_back(
          G[g][d].transpose().partialPivLu().solve(F[g][d].transpose()).transpose());
    }
  }
  if (max_condition) *max_condition = worst;
  return gains;
}

namespace detail {

/// Gain-slot bookkeeping: by default one (G, F) pair per (last observed
/// mode, phase) slot, exactly as the synthesis conditions share them.
/// Per-state slots give the classical design on the extended chain, used as
/// a reduction cross-check.
struct SlotMap {
  int count = 0;
  std::vector<int> of_state;  // state index -> slot index
  bool per_state = false;

  static SlotMap gain_slots(const ExtendedChain& chain) {
    SlotMap s;
    s.count = chain.model.N * chain.T;
    s.of_state.reserve(chain.size());
    for (const ExtendedState& st : chain.states)
      s.of_state.push_back(st.last_obs * chain.T + st.phase);
    return s;
  }
  static SlotMap state_slots(const ExtendedChain& chain) {
    SlotMap s;
    s.per_state = true;
    s.count = chain.size();
    s.of_state.resize(chain.size());
    for (int k = 0; k < chain.size(); ++k) s.of_state[k] = k;
    return s;
  }
};

struct GainVars {
  std::vector<sdp::VarId> G, F;  // per slot
};

inline GainVars add_gain_vars(sdp::ProgramBuilder& b, const SlotMap& slots, int n, int m) {
  GainVars gv;
  for (int s = 0; s < slots.count; ++s) {
    gv.G.push_back(
        b.add_variable("G[" + std::to_string(s) + "]", n, n, sdp::Symmetry::general));
    gv.F.push_back(
        b.add_variable("F[" + std::to_string(s) + "]", m, n, sdp::Symmetry::general));
  }
  return gv;
}

inline std::vector<std::vector<Eigen::MatrixXd>> extract_bank(
    const sdp::ConicProgram& prog, const Eigen::VectorXd& y,
    const std::vector<sdp::VarId>& ids, int N, int T) {
  std::vector<std::vector<Eigen::MatrixXd>> bank(N);
  for (int g = 0; g < N; ++g)
    for (int d = 0; d < T; ++d) bank[g].push_back(sdp::extract(prog, y, ids[g * T + d]));
  return bank;
}

}  // namespace detail

/// Stabilizing state-feedback design: finds per-state R and per-slot (G, F)
/// satisfying the coupled LMIs, then recovers K = F G^{-1}. The condition is
/// sufficient; infeasibility does not prove that no stabilizing bank exists.
inline SynthesisResult synthesize_stabilizing(const MjlsModel& model,
                                              const ObservationProcess& obs, int T,
                                              const SynthesisOptions& opts = {}) {
  const ExtendedChain chain = transition_matrix(model, obs, T);
  const int K = chain.size();
  const int n = model.n;
  const double eps = strictness_margin(model, opts.eps_scale);
  const detail::SlotMap slots = detail::SlotMap::gain_slots(chain);

  sdp::ProgramBuilder b;
  std::vector<sdp::VarId> R;
  for (int k = 0; k < K; ++k)
    R.push_back(b.add_variable("R[" + std::to_string(k) + "]", n, n, sdp::Symmetry::symmetric));
  detail::GainVars gv = detail::add_gain_vars(b, slots, n, model.m);

  for (int k = 0; k < K; ++k) {
    const ExtendedState& st = chain.states[k];
    const int s = slots.of_state[k];
    sdp::MatExpr mixed = b.expr(gv.G[s]) + b.expr(gv.G[s]).transpose();
    for (int j = 0; j < K; ++j) {
      const double w = chain.pbar(j, k);
      if (w != 0.0) mixed = mixed - w * b.expr(R[j]);
    }
    std::vector<std::vector<std::optional<sdp::MatExpr>>> grid(2);
    grid[0].resize(2);
    grid[1].resize(2);
    grid[0][0] = b.expr(R[k]);
    grid[0][1] = model.A[st.mode] * b.expr(gv.G[s]) + model.B[st.mode] * b.expr(gv.F[s]);
    grid[1][1] = mixed;
    b.add_lmi("stab[" + std::to_string(k) + "]", grid, eps);
  }
  // Pure feasibility in principle; a small trace surrogate keeps the
  // solution bounded and well conditioned without affecting feasibility.
  sdp::MatExpr surrogate(1, 1);
  for (int k = 0; k < K; ++k) surrogate = surrogate + b.trace(R[k]);
  b.minimize(surrogate);

  const sdp::ConicProgram prog = b.build();
  sdp::Solution sol = sdp::solve(prog, opts.solver);

  SynthesisResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate(
      "stabilize", prog, sol, {{"R", R}, {"G", gv.G}, {"F", gv.F}}, model_matrix_scale(model));
  if (sol.status == sdp::SolveStatus::infeasible) {
    out.message = "no stabilizing bank found by this condition (sufficient only)";
    return out;
  }
  if (sol.status != sdp::SolveStatus::optimal) {
    out.message = sol.message;
    return out;
  }
  try {
    out.gains = recover_gains(detail::extract_bank(prog, sol.y, gv.F, model.N, T),
                              detail::extract_bank(prog, sol.y, gv.G, model.N, T),
                              opts.cond_limit, &out.max_g_condition);
  } catch (const std::exception& e) {
    out.status = sdp::SolveStatus::failure;
    out.message = e.what();
    return out;
  }
  const ClosedLoopSystem cl = closed_loop(chain, out.gains);
  out.post.spectral_radius = mss_spectral_radius(cl);
  out.post.mss = out.post.spectral_radius < 1.0;
  if (opts.post_check_lmi) {
    AnalysisOptions aopts;
    aopts.eps_scale = opts.eps_scale;
    aopts.solver = opts.solver;
    out.post.lmi_recheck = is_mss_lmi(cl, aopts).status;
    out.post.lmi_recheck_ran = true;
  }
  if (!out.post.mss) {
    out.status = sdp::SolveStatus::failure;
    out.message = "post-verification failed: recovered gains are not mean square stabilizing";
  }
  return out;
}

namespace detail {

struct H2Program {
  sdp::ConicProgram program;
  std::vector<sdp::VarId> W, R, nu;
  GainVars gains;
  sdp::VarId gamma;
  SlotMap slots;
};

inline H2Program build_h2_program(const ExtendedChain& chain, const Eigen::VectorXd& mu_r,
                                  const Eigen::VectorXd& mu_s, double eps,
                                  bool per_state_slots) {
  const MjlsModel& model = chain.model;
  const int K = chain.size();
  const int n = model.n;
  const int T = chain.T;

  H2Program hp;
  hp.slots = per_state_slots ? SlotMap::state_slots(chain) : SlotMap::gain_slots(chain);

  sdp::ProgramBuilder b;
  for (int k = 0; k < K; ++k)
    hp.W.push_back(
        b.add_variable("W[" + std::to_string(k) + "]", model.l, model.l, sdp::Symmetry::symmetric));
  for (int k = 0; k < K; ++k)
    hp.R.push_back(b.add_variable("R[" + std::to_string(k) + "]", n, n, sdp::Symmetry::symmetric));
  hp.gains = add_gain_vars(b, hp.slots, n, model.m);
  for (int g = 0; g < model.N; ++g)
    for (int d = 0; d < T; ++d)
      hp.nu.push_back(b.add_variable("nu[" + std::to_string(g) + "][" + std::to_string(d) + "]",
                                     1, 1, sdp::Symmetry::general));
  hp.gamma = b.add_variable("gamma", 1, 1, sdp::Symmetry::general);

  for (int k = 0; k < K; ++k) {
    const ExtendedState& st = chain.states[k];
    const int s = hp.slots.of_state[k];
    const Eigen::MatrixXd EE = model.E[st.mode] * model.E[st.mode].transpose();
    const double base = mu_r[st.mode] * mu_s[st.channel];

    sdp::MatExpr mixed = b.expr(hp.gains.G[s]) + b.expr(hp.gains.G[s]).transpose();
    for (int j = 0; j < K; ++j) {
      const double w = chain.pbar(j, k);
      if (w != 0.0) mixed = mixed - w * b.expr(hp.R[j]);
    }

    sdp::MatExpr top = b.expr(hp.R[k]);
    if (chain.obs.f[st.channel] == 1)
      top = top - sdp::MatExpr::constant(Eigen::MatrixXd(base * EE));
    else
      top = top - b.scalar_times(hp.nu[st.last_obs * T + st.phase], Eigen::MatrixXd(base * EE));

    std::vector<std::vector<std::optional<sdp::MatExpr>>> grid(2);
    grid[0].resize(2);
    grid[1].resize(2);
    grid[0][0] = top;
    grid[0][1] =
        model.A[st.mode] * b.expr(hp.gains.G[s]) + model.B[st.mode] * b.expr(hp.gains.F[s]);
    grid[1][1] = mixed;
    b.add_lmi("h2_r[" + std::to_string(k) + "]", grid, eps);

    std::vector<std::vector<std::optional<sdp::MatExpr>>> wgrid(2);
    wgrid[0].resize(2);
    wgrid[1].resize(2);
    wgrid[0][0] = b.expr(hp.W[k]);
    wgrid[0][1] =
        model.C[st.mode] * b.expr(hp.gains.G[s]) + model.D[st.mode] * b.expr(hp.gains.F[s]);
    wgrid[1][1] = mixed;
    b.add_lmi("h2_w[" + std::to_string(k) + "]", wgrid, eps);
  }

  sdp::MatExpr trace_gap = b.expr(hp.gamma);
  for (int k = 0; k < K; ++k) trace_gap = trace_gap - b.trace(hp.W[k]);
  b.add_lmi("trace", {{trace_gap}}, eps);

  sdp::MatExpr nu_sum(1, 1);
  for (std::size_t i = 0; i < hp.nu.size(); ++i) {
    b.add_lmi("nu_nonneg[" + std::to_string(i) + "]", {{b.expr(hp.nu[i])}}, 0.0);
    nu_sum = nu_sum + b.expr(hp.nu[i]);
  }
  b.add_equality("nu_total", nu_sum, 1.0);
  b.minimize(b.expr(hp.gamma));

  hp.program = b.build();
  return hp;
}

}  // namespace detail

/// H2 design: minimizes the guaranteed squared-H2 bound over the gain bank
/// and the pre-observation initial distribution nu, given the distributions
/// of the initial mode and channel state.
inline SynthesisResult synthesize_h2(const MjlsModel& model, const ObservationProcess& obs,
                                     int T, const Eigen::VectorXd& mu_r,
                                     const Eigen::VectorXd& mu_s,
                                     const SynthesisOptions& opts = {}) {
  const ExtendedChain chain = transition_matrix(model, obs, T);
  {
    ValidationReport rep;
    if (mu_r.size() != model.N) rep.add("mu_r has wrong length");
    if (mu_s.size() != obs.M) rep.add("mu_s has wrong length");
    if (rep.ok()) {
      detail::check_distribution(mu_r, "mu_r", rep);
      detail::check_distribution(mu_s, "mu_s", rep);
    }
    if (!rep.ok()) throw std::invalid_argument("synthesize_h2: invalid inputs\n" + rep.str());
  }
  const double eps = strictness_margin(model, opts.eps_scale);
  detail::H2Program hp = detail::build_h2_program(chain, mu_r, mu_s, eps, false);
  sdp::Solution sol = sdp::solve(hp.program, opts.solver);

  SynthesisResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate(
      "h2", hp.program, sol,
      {{"W", hp.W}, {"R", hp.R}, {"G", hp.gains.G}, {"F", hp.gains.F}},
      model_matrix_scale(model));
  if (sol.status == sdp::SolveStatus::infeasible) {
    out.message = "H2 condition infeasible (sufficient only)";
    return out;
  }
  if (sol.status != sdp::SolveStatus::optimal) {
    out.message = sol.message;
    return out;
  }
  out.gamma = sol.objective;
  out.certificate.value = sol.objective;
  out.nu.resize(model.N, T);
  for (int g = 0; g < model.N; ++g)
    for (int d = 0; d < T; ++d)
      out.nu(g, d) = sdp::extract(hp.program, sol.y, hp.nu[g * T + d])(0, 0);

  try {
    out.gains = recover_gains(detail::extract_bank(hp.program, sol.y, hp.gains.F, model.N, T),
                              detail::extract_bank(hp.program, sol.y, hp.gains.G, model.N, T),
                              opts.cond_limit, &out.max_g_condition);
  } catch (const std::exception& e) {
    out.status = sdp::SolveStatus::failure;
    out.message = e.what();
    return out;
  }

  const ClosedLoopSystem cl = closed_loop(chain, out.gains);
  out.post.spectral_radius = mss_spectral_radius(cl);
  out.post.mss = out.post.spectral_radius < 1.0;
  if (out.post.mss && opts.post_check_lmi) {
    InitialData init;
    init.mu_r = mu_r;
    init.mu_s = mu_s;
    init.nu = out.nu;
    // nu comes back from an interior point: nonnegative up to solver noise.
    init.nu = init.nu.cwiseMax(0.0);
    init.nu /= init.nu.sum();
    const Eigen::VectorXd mu_bar = extended_initial_distribution(chain, init);
    out.post.h2_squared = h2_norm_squared(cl, mu_bar);
    out.post.lmi_recheck =
        out.post.h2_squared <= out.gamma * (1.0 + 1e-6) ? sdp::SolveStatus::optimal
                                                        : sdp::SolveStatus::failure;
    out.post.lmi_recheck_ran = true;
  }
  if (!out.post.mss) {
    out.status = sdp::SolveStatus::failure;
    out.message = "post-verification failed: recovered gains are not mean square stabilizing";
  }
  return out;
}

/// Classical per-state H2 design on the same extended chain (every state
/// gets its own G, F). Reduction cross-check; only the optimum is used.
inline BoundResult h2_per_state_optimum(const MjlsModel& model, const ObservationProcess& obs,
                                        int T, const Eigen::VectorXd& mu_r,
                                        const Eigen::VectorXd& mu_s,
                                        const SynthesisOptions& opts = {}) {
  const ExtendedChain chain = transition_matrix(model, obs, T);
  const double eps = strictness_margin(model, opts.eps_scale);
  detail::H2Program hp = detail::build_h2_program(chain, mu_r, mu_s, eps, true);
  sdp::Solution sol = sdp::solve(hp.program, opts.solver);
  BoundResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate("h2_per_state", hp.program, sol, {},
                                             model_matrix_scale(model));
  if (sol.status == sdp::SolveStatus::optimal) {
    out.value = sol.objective;
    out.certificate.value = sol.objective;
  }
  return out;
}

/// H-infinity design: minimizes the guaranteed squared-gain bound over the
/// gain bank (Z ranges over every ordered state pair).
inline SynthesisResult synthesize_hinf(const MjlsModel& model, const ObservationProcess& obs,
                                       int T, const SynthesisOptions& opts = {}) {
  const ExtendedChain chain = transition_matrix(model, obs, T);
  const int K = chain.size();
  const int n = model.n;
  const int q = model.q;
  const int l = model.l;
  const double eps = strictness_margin(model, opts.eps_scale);
  const detail::SlotMap slots = detail::SlotMap::gain_slots(chain);

  sdp::ProgramBuilder b;
  sdp::VarId gamma = b.add_variable("gamma", 1, 1, sdp::Symmetry::general);
  std::vector<sdp::VarId> X, H;
  std::vector<sdp::VarId> Z(static_cast<std::size_t>(K) * K);
  for (int k = 0; k < K; ++k) {
    X.push_back(b.add_variable("X[" + std::to_string(k) + "]", n, n, sdp::Symmetry::symmetric));
    H.push_back(b.add_variable("H[" + std::to_string(k) + "]", n, n, sdp::Symmetry::general));
  }
  detail::GainVars gv = detail::add_gain_vars(b, slots, n, model.m);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j)
      Z[static_cast<std::size_t>(k) * K + j] =
          b.add_variable("Z[" + std::to_string(k) + "][" + std::to_string(j) + "]", n, n,
                         sdp::Symmetry::symmetric);

  const Eigen::MatrixXd Iq = Eigen::MatrixXd::Identity(q, q);
  const Eigen::MatrixXd Il = Eigen::MatrixXd::Identity(l, l);
  for (int k = 0; k < K; ++k) {
    const ExtendedState& st = chain.states[k];
    const int s = slots.of_state[k];
    std::vector<std::vector<std::optional<sdp::MatExpr>>> grid(4);
    for (auto& row : grid) row.resize(4);
    grid[0][0] = b.expr(gv.G[s]) + b.expr(gv.G[s]).transpose() - b.expr(X[k]);
    grid[0][2] =
        (model.A[st.mode] * b.expr(gv.G[s]) + model.B[st.mode] * b.expr(gv.F[s])).transpose();
    grid[0][3] =
        (model.C[st.mode] * b.expr(gv.G[s]) + model.D[st.mode] * b.expr(gv.F[s])).transpose();
    grid[1][1] = b.scalar_times(gamma, Iq);
    grid[1][2] = sdp::MatExpr::constant(Eigen::MatrixXd(model.E[st.mode].transpose()));
    sdp::MatExpr dissip = b.expr(H[k]) + b.expr(H[k]).transpose();
    for (int j = 0; j < K; ++j) {
      const double w = chain.pbar(k, j);
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
  b.minimize(b.expr(gamma));

  const sdp::ConicProgram prog = b.build();
  sdp::Solution sol = sdp::solve(prog, opts.solver);

  SynthesisResult out;
  out.status = sol.status;
  out.certificate = detail::make_certificate(
      "hinf", prog, sol, {{"X", X}, {"H", H}, {"G", gv.G}, {"F", gv.F}, {"Z", Z}},
      model_matrix_scale(model));
  if (sol.status == sdp::SolveStatus::infeasible) {
    out.message = "H-infinity condition infeasible (sufficient only)";
    return out;
  }
  if (sol.status != sdp::SolveStatus::optimal) {
    out.message = sol.message;
    return out;
  }
  out.gamma = sol.objective;
  out.certificate.value = sol.objective;
  try {
    out.gains = recover_gains(detail::extract_bank(prog, sol.y, gv.F, model.N, T),
                              detail::extract_bank(prog, sol.y, gv.G, model.N, T),
                              opts.cond_limit, &out.max_g_condition);
  } catch (const std::exception& e) {
    out.status = sdp::SolveStatus::failure;
    out.message = e.what();
    return out;
  }

  const ClosedLoopSystem cl = closed_loop(chain, out.gains);
  out.post.spectral_radius = mss_spectral_radius(cl);
  out.post.mss = out.post.spectral_radius < 1.0;
  if (out.post.mss && opts.post_check_lmi) {
    AnalysisOptions aopts;
    aopts.eps_scale = opts.eps_scale;
    aopts.solver = opts.solver;
    out.post.lmi_recheck = hinf_upper_bound(cl, out.gamma * (1.0 + 1e-6), aopts).status;
    out.post.lmi_recheck_ran = true;
  }
  if (!out.post.mss) {
    out.status = sdp::SolveStatus::failure;
    out.message = "post-verification failed: recovered gains are not mean square stabilizing";
  }
  return out;
}

}  // namespace hmjls
