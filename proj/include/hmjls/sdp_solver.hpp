#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "hmjls/sdp.hpp"

namespace hmjls::sdp {

struct SolverOptions {
  double gap_abs = 1e-7;          ///< absolute duality-gap target
  double gap_rel = 1e-8;          ///< relative duality-gap target
  double infeasibility_tol = 1e-8;  ///< certified positive phase-I bound => infeasible
  int max_newton = 2000;          ///< total Newton-step budget
  double mu_factor = 10.0;        ///< barrier parameter reduction per stage
  double center_tol = 0.09;       ///< Newton-decrement^2/2 threshold while tracing the path
  double final_center_tol = 0.02; ///< tighter threshold for the last stage
  bool verbose = false;
};

/// Backend interface: consumes the compiled standard-form data (objective
/// vector, equality rows, PSD blocks of given orders) and returns a status
/// plus primal values. Any conforming solver can be plugged in.
class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual Solution solve(const ConicProgram& program, const SolverOptions& opts) = 0;
};

/// Default backend: a feasible-start log-det barrier method. Phase I
/// minimizes a uniform slack shift t over all blocks (always strictly
/// feasible), declaring infeasibility when the certified lower bound on t
/// stays positive; phase II follows the central path on the objective.
/// Stateless across calls; one call is single-threaded and deterministic.
class BarrierSolver final : public SdpBackend {
 public:
  Solution solve(const ConicProgram& program, const SolverOptions& opts) override {
    try {
      return solve_impl(program, opts);
    } catch (const std::exception& e) {
      Solution s;
      s.status = SolveStatus::failure;
      s.message = std::string("solver exception: ") + e.what();
      return s;
    }
  }

 private:
  struct WorkBlock {
    int dim = 0;
    double scale = 1.0;
    Eigen::MatrixXd F0;  // (original F0 - eps I) / scale
    std::vector<int> vars;
    std::vector<Eigen::MatrixXd> coeff;  // divided by scale
  };

  struct BlockEval {
    Eigen::MatrixXd S;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double logdet = 0.0;
  };

  struct Work {
    const ConicProgram* prog = nullptr;
    SolverOptions opts;
    std::vector<WorkBlock> blocks;
    int m = 0;        // scalar count without t
    int mw = 0;       // with t in phase I
    bool with_t = false;
    double barrier_dim = 0.0;  // sum of block dims
    Eigen::MatrixXd eqA;       // p x m
    Eigen::VectorXd eqb;
    int newton_steps = 0;

    bool use_dense = true;
    Eigen::SparseMatrix<double> Hs;  // upper triangle only
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt;
    bool pattern_ready = false;
  };

  static double tcoeff(const Work& w, const WorkBlock&) { return w.with_t ? 1.0 : 0.0; }

  static bool eval_blocks(const Work& w, const Eigen::VectorXd& y, std::vector<BlockEval>& ev) {
    ev.resize(w.blocks.size());
    const double t = w.with_t ? y[w.m] : 0.0;
    for (std::size_t b = 0; b < w.blocks.size(); ++b) {
      const WorkBlock& blk = w.blocks[b];
      Eigen::MatrixXd S = blk.F0;
      for (std::size_t k = 0; k < blk.vars.size(); ++k) S += y[blk.vars[k]] * blk.coeff[k];
      if (w.with_t) S.diagonal().array() += t;
      ev[b].llt.compute(S);
      if (ev[b].llt.info() != Eigen::Success) return false;
      double ld = 0.0;
      const auto& L = ev[b].llt.matrixLLT();
      for (int i = 0; i < blk.dim; ++i) {
        const double d = L(i, i);
        if (!(d > 0.0)) return false;
        ld += std::log(d);
      }
      ev[b].logdet = 2.0 * ld;
      ev[b].S = std::move(S);
    }
    return true;
  }

  static double barrier_value(const std::vector<BlockEval>& ev) {
    double phi = 0.0;
    for (const auto& e : ev) phi -= e.logdet;
    return phi;
  }

  /// Newton direction for min c.y/mu + barrier subject to eqA y = eqb.
  /// Returns false on unrecoverable factorization failure.
  bool newton_direction(Work& w, const Eigen::VectorXd& y, const std::vector<BlockEval>& ev,
                        const Eigen::VectorXd& grad_total, Eigen::VectorXd& delta,
                        double& dec2) const {
    const int mw = w.mw;
    const int p = static_cast<int>(w.eqA.rows());

    // Local curvature per block, then assemble.
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::MatrixXd Hd;
    if (w.use_dense)
      Hd = Eigen::MatrixXd::Zero(mw, mw);
    else
      trips.reserve(200000);

    for (std::size_t b = 0; b < w.blocks.size(); ++b) {
      const WorkBlock& blk = w.blocks[b];
      const int s = blk.dim;
      const int kb = static_cast<int>(blk.vars.size()) + (w.with_t ? 1 : 0);
      Eigen::MatrixXd invS = ev[b].llt.solve(Eigen::MatrixXd::Identity(s, s));
      std::vector<Eigen::MatrixXd> W(kb);
      std::vector<int> gidx(kb);
      for (std::size_t k = 0; k < blk.vars.size(); ++k) {
        W[k] = invS * blk.coeff[k];
        gidx[k] = blk.vars[k];
      }
      if (w.with_t) {
        W[kb - 1] = invS;
        gidx[kb - 1] = w.m;
      }
      for (int i = 0; i < kb; ++i) {
        for (int j = i; j < kb; ++j) {
          const double h = (W[i].array() * W[j].transpose().array()).sum();
          const int gi = std::min(gidx[i], gidx[j]);
          const int gj = std::max(gidx[i], gidx[j]);
          if (w.use_dense) {
            Hd(gi, gj) += h;
            if (gi != gj) Hd(gj, gi) += h;
          } else {
            trips.emplace_back(gi, gj, h);
          }
        }
      }
    }

    double dmax = 0.0;
    if (w.use_dense) {
      dmax = Hd.diagonal().maxCoeff();
    } else {
      for (int i = 0; i < mw; ++i) trips.emplace_back(i, i, 0.0);
      w.Hs.resize(mw, mw);
      w.Hs.setFromTriplets(trips.begin(), trips.end());
      for (int i = 0; i < mw; ++i) dmax = std::max(dmax, w.Hs.coeff(i, i));
    }
    if (!(dmax > 0.0)) dmax = 1.0;

    // Factor with an escalating diagonal ridge.
    Eigen::MatrixXd rhs(mw, 1 + p);
    rhs.col(0) = grad_total;
    for (int r = 0; r < p; ++r) rhs.col(1 + r) = pad_t(w, w.eqA.row(r).transpose());

    Eigen::MatrixXd X;
    double ridge = 1e-13 * dmax;
    bool ok = false;
    for (int attempt = 0; attempt < 5 && !ok; ++attempt, ridge *= 1e3) {
      if (w.use_dense) {
        Eigen::MatrixXd Hr = Hd;
        Hr.diagonal().array() += ridge;
        Eigen::LLT<Eigen::MatrixXd> llt(Hr);
        if (llt.info() != Eigen::Success) continue;
        X = llt.solve(rhs);
      } else {
        for (int i = 0; i < mw; ++i) w.Hs.coeffRef(i, i) += ridge;
        if (!w.pattern_ready) {
          w.ldlt.analyzePattern(w.Hs);
          w.pattern_ready = true;
        }
        w.ldlt.factorize(w.Hs);
        for (int i = 0; i < mw; ++i) w.Hs.coeffRef(i, i) -= ridge;
        if (w.ldlt.info() != Eigen::Success) continue;
        X = w.ldlt.solve(rhs);
      }
      ok = X.allFinite();
    }
    if (!ok) return false;

    if (p == 0) {
      delta = -X.col(0);
      dec2 = -grad_total.dot(delta);
      return true;
    }
    Eigen::VectorXd r = w.eqb - w.eqA * strip_t(w, y);
    Eigen::MatrixXd EV(p, p);
    Eigen::VectorXd EU(p);
    for (int i = 0; i < p; ++i) {
      EU[i] = pad_t(w, w.eqA.row(i).transpose()).dot(X.col(0));
      for (int j = 0; j < p; ++j)
        EV(i, j) = pad_t(w, w.eqA.row(i).transpose()).dot(X.col(1 + j));
    }
    Eigen::VectorXd lambda = EV.fullPivLu().solve(r - EU);
    delta = -X.col(0) - X.block(0, 1, mw, p) * lambda;
    dec2 = -grad_total.dot(delta) + r.dot(lambda);
    return true;
  }

  static Eigen::VectorXd pad_t(const Work& w, const Eigen::VectorXd& v) {
    if (!w.with_t) return v;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(w.mw);
    out.head(w.m) = v;
    return out;
  }
  static Eigen::VectorXd strip_t(const Work& w, const Eigen::VectorXd& y) {
    return w.with_t ? Eigen::VectorXd(y.head(w.m)) : y;
  }

  enum class CenterOutcome { centered, early_stop, stalled, budget };

  /// Centers min cw.y/mu + barrier. early_stop, when provided, is checked
  /// after every accepted step.
  template <typename EarlyStop>
  CenterOutcome center(Work& w, Eigen::VectorXd& y, std::vector<BlockEval>& ev,
                       const Eigen::VectorXd& cw, double mu, double dec_tol,
                       EarlyStop early_stop) const {
    for (int it = 0; it < 80; ++it) {
      if (w.newton_steps >= w.opts.max_newton) return CenterOutcome::budget;
      ++w.newton_steps;

      Eigen::VectorXd grad = cw / mu;
      for (std::size_t b = 0; b < w.blocks.size(); ++b) {
        const WorkBlock& blk = w.blocks[b];
        const Eigen::MatrixXd invS =
            ev[b].llt.solve(Eigen::MatrixXd::Identity(blk.dim, blk.dim));
        for (std::size_t k = 0; k < blk.vars.size(); ++k)
          grad[blk.vars[k]] -= (invS.array() * blk.coeff[k].array()).sum();
        if (w.with_t) grad[w.m] -= invS.trace();
      }

      Eigen::VectorXd delta;
      double dec2 = 0.0;
      if (!newton_direction(w, y, ev, grad, delta, dec2)) return CenterOutcome::stalled;
      if (0.5 * dec2 <= dec_tol) return CenterOutcome::centered;

      const double dirderiv = grad.dot(delta);
      const double psi0 = cw.dot(y) / mu + barrier_value(ev);
      double alpha = 1.0;
      std::vector<BlockEval> trial;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        Eigen::VectorXd ytrial = y + alpha * delta;
        if (eval_blocks(w, ytrial, trial)) {
          const double psi = cw.dot(ytrial) / mu + barrier_value(trial);
          if (psi <= psi0 + 1e-4 * alpha * dirderiv || psi < psi0 - 1e-12 * std::abs(psi0)) {
            y = std::move(ytrial);
            ev = std::move(trial);
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!accepted) return CenterOutcome::stalled;
      if (early_stop(y)) return CenterOutcome::early_stop;
    }
    return CenterOutcome::centered;  // decrement small enough in practice; treat as centered
  }

  Solution solve_impl(const ConicProgram& prog, const SolverOptions& opts) const {
    Solution sol;
    if (prog.blocks.empty()) {
      sol.status = SolveStatus::failure;
      sol.message = "program has no conic blocks";
      return sol;
    }

    Work w;
    w.prog = &prog;
    w.opts = opts;
    w.m = prog.num_scalars;
    w.eqA = prog.eq_A;
    w.eqb = prog.eq_b;

    // Normalize each block so entries are O(1); this preserves the feasible
    // set and the barrier parameter.
    w.blocks.reserve(prog.blocks.size());
    for (const CompiledBlock& b : prog.blocks) {
      WorkBlock wb;
      wb.dim = b.dim;
      wb.F0 = b.F0 - b.eps * Eigen::MatrixXd::Identity(b.dim, b.dim);
      double scale = wb.F0.cwiseAbs().maxCoeff();
      for (const auto& M : b.coeff) scale = std::max(scale, M.cwiseAbs().maxCoeff());
      scale = std::min(std::max(scale, 1e-8), 1e12);
      wb.scale = scale;
      wb.F0 /= scale;
      wb.vars = b.var_index;
      wb.coeff.reserve(b.coeff.size());
      for (const auto& M : b.coeff) wb.coeff.push_back(M / scale);
      w.blocks.push_back(std::move(wb));
      w.barrier_dim += b.dim;
    }

    // Dense/sparse split by pattern density.
    {
      std::vector<std::pair<int, int>> pairs;
      for (const auto& blk : w.blocks) {
        const int kb = static_cast<int>(blk.vars.size());
        for (int i = 0; i < kb; ++i)
          for (int j = i; j < kb; ++j)
            pairs.emplace_back(std::min(blk.vars[i], blk.vars[j]),
                               std::max(blk.vars[i], blk.vars[j]));
      }
      std::sort(pairs.begin(), pairs.end());
      pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
      const double denom = 0.5 * double(w.m) * double(w.m + 1);
      const double density = denom > 0 ? double(pairs.size()) / denom : 1.0;
      w.use_dense = w.m <= 500 || density > 0.2;
    }

    // --- Phase I ------------------------------------------------------
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(w.m);
    if (w.eqA.rows() > 0)
      y0 = w.eqA.completeOrthogonalDecomposition().solve(w.eqb);

    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& blk : w.blocks) {
      Eigen::MatrixXd S = blk.F0;
      for (std::size_t k = 0; k < blk.vars.size(); ++k) S += y0[blk.vars[k]] * blk.coeff[k];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
      worst = std::max(worst, -es.eigenvalues().minCoeff());
    }

    Eigen::VectorXd y;
    const bool pure_feasibility = !prog.has_objective || prog.c.isZero(0.0);

    if (worst < -1e-6) {
      y = y0;  // already comfortably interior
    } else {
      w.with_t = true;
      w.mw = w.m + 1;
      w.pattern_ready = false;
      Eigen::VectorXd yt(w.mw);
      yt.head(w.m) = y0;
      const double t0 = worst + 1.0;
      yt[w.m] = t0;

      Eigen::VectorXd ct = Eigen::VectorXd::Zero(w.mw);
      ct[w.m] = 1.0;
      const double t_early = -0.02 * (1.0 + std::max(0.0, t0));
      auto early = [&](const Eigen::VectorXd& yy) { return yy[w.m] <= t_early; };

      std::vector<BlockEval> ev;
      if (!eval_blocks(w, yt, ev)) {
        sol.status = SolveStatus::failure;
        sol.message = "phase I: initial point not interior";
        return sol;
      }

      double mu = std::max(1.0, 0.1 * t0);
      bool done = false;
      while (!done) {
        const CenterOutcome oc = center(w, yt, ev, ct, mu, opts.center_tol, early);
        const double t = yt[w.m];
        if (oc == CenterOutcome::early_stop) break;
        if (oc == CenterOutcome::stalled || oc == CenterOutcome::budget) {
          if (t < -1e-10) break;  // interior, just thin
          sol.status = SolveStatus::failure;
          sol.message = oc == CenterOutcome::budget ? "phase I: Newton budget exhausted"
                                                    : "phase I: line search stalled";
          sol.newton_steps = w.newton_steps;
          return sol;
        }
        const double gap = mu * w.barrier_dim * (1.0 + 2.0 * opts.center_tol);
        if (t - gap > opts.infeasibility_tol) {
          sol.status = SolveStatus::infeasible;
          sol.message = "phase I lower bound positive (t >= " +
                        std::to_string(t - gap) + " in normalized units)";
          sol.newton_steps = w.newton_steps;
          sol.y = strip_t(w, yt);
          return sol;
        }
        if (gap <= 1e-12 * std::max(1.0, std::abs(t))) {
          if (t < 0.0) break;
          sol.status = SolveStatus::failure;
          sol.message = "phase I: marginally feasible/infeasible (|t| below resolution)";
          sol.newton_steps = w.newton_steps;
          return sol;
        }
        mu /= opts.mu_factor;
      }
      y = strip_t(w, yt);
      w.with_t = false;
      w.pattern_ready = false;
    }
    w.mw = w.m;

    if (pure_feasibility) {
      sol.status = SolveStatus::optimal;
      sol.y = y;
      sol.objective = prog.obj_offset;
      sol.gap_bound = 0.0;
      sol.newton_steps = w.newton_steps;
      sol.message = "feasible";
      return sol;
    }

    // --- Phase II -----------------------------------------------------
    std::vector<BlockEval> ev;
    if (!eval_blocks(w, y, ev)) {
      sol.status = SolveStatus::failure;
      sol.message = "phase II: start point not interior";
      return sol;
    }
    const Eigen::VectorXd& c = prog.c;
    auto no_stop = [](const Eigen::VectorXd&) { return false; };

    // Balance the initial objective pressure against the barrier gradient.
    double gnorm = 0.0;
    {
      Eigen::VectorXd bg = Eigen::VectorXd::Zero(w.m);
      for (std::size_t b = 0; b < w.blocks.size(); ++b) {
        const WorkBlock& blk = w.blocks[b];
        const Eigen::MatrixXd invS =
            ev[b].llt.solve(Eigen::MatrixXd::Identity(blk.dim, blk.dim));
        for (std::size_t k = 0; k < blk.vars.size(); ++k)
          bg[blk.vars[k]] -= (invS.array() * blk.coeff[k].array()).sum();
      }
      gnorm = bg.norm();
    }
    double mu = std::max(c.norm() / (gnorm + 1.0), 1e-8);
    const double obj_start = c.dot(y) + prog.obj_offset;

    while (true) {
      const CenterOutcome oc = center(w, y, ev, c, mu, opts.center_tol, no_stop);
      const double obj = c.dot(y) + prog.obj_offset;
      const double gap = mu * w.barrier_dim * (1.0 + 2.0 * opts.center_tol);
      const double target = std::max(opts.gap_abs, opts.gap_rel * (1.0 + std::abs(obj)));
      if (opts.verbose)
        std::fprintf(stderr, "[sdp] mu=%.3e obj=%.10e gap<=%.3e steps=%d\n", mu, obj, gap,
                     w.newton_steps);

      if (oc == CenterOutcome::stalled || oc == CenterOutcome::budget) {
        if (gap <= 1e-3 * (1.0 + std::abs(obj))) {
          sol.status = SolveStatus::optimal;
          sol.message = std::string(oc == CenterOutcome::budget ? "Newton budget reached"
                                                                : "line search stalled") +
                        "; returned last interior iterate";
        } else {
          sol.status = SolveStatus::failure;
          sol.message = oc == CenterOutcome::budget ? "phase II: Newton budget exhausted"
                                                    : "phase II: line search stalled";
        }
        sol.y = y;
        sol.objective = obj;
        sol.gap_bound = gap;
        sol.newton_steps = w.newton_steps;
        return sol;
      }
      if (!(std::abs(obj) < 1e13 * (1.0 + std::abs(obj_start)))) {
        sol.status = SolveStatus::failure;
        sol.message = "phase II: objective appears unbounded";
        sol.y = y;
        sol.newton_steps = w.newton_steps;
        return sol;
      }
      if (gap <= target) {
        center(w, y, ev, c, mu, opts.final_center_tol, no_stop);
        sol.status = SolveStatus::optimal;
        sol.y = y;
        sol.objective = c.dot(y) + prog.obj_offset;
        sol.gap_bound = gap;
        sol.newton_steps = w.newton_steps;
        sol.message = "converged";
        return sol;
      }
      mu /= opts.mu_factor;
    }
  }
};

/// Solves the program with the given backend (the built-in barrier solver by
/// default), then recomputes every block residual independently of the
/// backend and attaches it; an optimal answer whose re-verified margins are
/// negative is downgraded to failure.
inline Solution solve(const ConicProgram& program, const SolverOptions& opts = {},
                      SdpBackend* backend = nullptr) {
  static BarrierSolver default_backend;
  SdpBackend* be = backend != nullptr ? backend : &default_backend;
  Solution sol = be->solve(program, opts);

  if (sol.y.size() == program.num_scalars) {
    sol.residuals.clear();
    double min_margin = std::numeric_limits<double>::infinity();
    for (const CompiledBlock& b : program.blocks) {
      const Eigen::MatrixXd S = block_value(b, sol.y);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
      const double lmin = es.eigenvalues().minCoeff();
      sol.residuals.push_back(BlockResidual{b.label, lmin, b.eps});
      min_margin = std::min(min_margin, lmin - b.eps);
    }
    sol.min_margin = min_margin;
    if (program.eq_A.rows() > 0)
      sol.max_eq_violation =
          (program.eq_A * sol.y - program.eq_b).cwiseAbs().maxCoeff();
    if (sol.status == SolveStatus::optimal) {
      double allow = 0.0;
      for (const CompiledBlock& b : program.blocks)
        allow = std::max(allow, 1e-12 * (1.0 + b.F0.cwiseAbs().maxCoeff()));
      if (min_margin < -allow) {
        sol.status = SolveStatus::failure;
        sol.message = "independent residual re-verification failed (margin " +
                      std::to_string(min_margin) + ")";
      }
    }
  }
  return sol;
}

}  // namespace hmjls::sdp
