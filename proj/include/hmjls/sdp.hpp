#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hmjls::sdp {

enum class Symmetry { general, symmetric };

struct VarId {
  int v = -1;
  bool valid() const { return v >= 0; }
};

struct VarInfo {
  std::string name;
  int rows = 0, cols = 0;
  Symmetry sym = Symmetry::general;
  int offset = 0;  ///< first scalar index in the packed layout
  int size = 0;    ///< number of scalar unknowns
};

/// Scalar layout inside a variable. General matrices are packed column-major;
/// symmetric matrices store the lower triangle column by column.
inline int packed_size(int rows, int cols, Symmetry sym) {
  return sym == Symmetry::symmetric ? rows * (rows + 1) / 2 : rows * cols;
}

inline int sym_pack_index(int i, int j, int n) {
  if (i < j) std::swap(i, j);  // lower triangle
  return j * n - j * (j - 1) / 2 + (i - j);
}

/// Affine matrix-valued expression: constant + sum of coeff * L * op(V) * R
/// terms, where V is a registered matrix variable and op is optional
/// transposition. Supports +, -, scaling, multiplication by constant
/// matrices, and transposition.
class MatExpr {
 public:
  struct Term {
    double coeff = 1.0;
    Eigen::MatrixXd left;   // rows() x (vr or vc)
    int var = -1;
    bool transposed = false;
    Eigen::MatrixXd right;  // (vc or vr) x cols()
  };

  MatExpr() = default;
  MatExpr(int rows, int cols) : rows_(rows), cols_(cols), constant_(Eigen::MatrixXd::Zero(rows, cols)) {}

  static MatExpr constant(const Eigen::MatrixXd& M) {
    MatExpr e(static_cast<int>(M.rows()), static_cast<int>(M.cols()));
    e.constant_ = M;
    return e;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Eigen::MatrixXd& constant_part() const { return constant_; }
  const std::vector<Term>& terms() const { return terms_; }

  MatExpr transpose() const {
    MatExpr out(cols_, rows_);
    out.constant_ = constant_.transpose();
    out.terms_.reserve(terms_.size());
    for (const Term& t : terms_) {
      Term nt;
      nt.coeff = t.coeff;
      nt.var = t.var;
      nt.transposed = !t.transposed;
      nt.left = t.right.transpose();
      nt.right = t.left.transpose();
      out.terms_.push_back(std::move(nt));
    }
    return out;
  }

  friend MatExpr operator+(MatExpr a, const MatExpr& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_)
      throw std::invalid_argument("MatExpr: dimension mismatch in +");
    a.constant_ += b.constant_;
    a.terms_.insert(a.terms_.end(), b.terms_.begin(), b.terms_.end());
    return a;
  }
  friend MatExpr operator-(MatExpr a, const MatExpr& b) { return std::move(a) + (-1.0) * b; }
  friend MatExpr operator*(double s, MatExpr e) {
    e.constant_ *= s;
    for (Term& t : e.terms_) t.coeff *= s;
    return e;
  }
  friend MatExpr operator*(const Eigen::MatrixXd& M, MatExpr e) {
    if (M.cols() != e.rows_) throw std::invalid_argument("MatExpr: dimension mismatch in M*e");
    e.constant_ = M * e.constant_;
    for (Term& t : e.terms_) t.left = M * t.left;
    e.rows_ = static_cast<int>(M.rows());
    return e;
  }
  friend MatExpr operator*(MatExpr e, const Eigen::MatrixXd& M) {
    if (e.cols_ != M.rows()) throw std::invalid_argument("MatExpr: dimension mismatch in e*M");
    e.constant_ = e.constant_ * M;
    for (Term& t : e.terms_) t.right = t.right * M;
    e.cols_ = static_cast<int>(M.cols());
    return e;
  }

 private:
  friend class ProgramBuilder;
  int rows_ = 0, cols_ = 0;
  Eigen::MatrixXd constant_;
  std::vector<Term> terms_;
};

/// One compiled PSD constraint F(y) = F0 + sum_i y_i * coeff_i >= eps * I.
struct CompiledBlock {
  std::string label;
  int dim = 0;
  double eps = 0.0;
  Eigen::MatrixXd F0;
  std::vector<int> var_index;            ///< ascending scalar indices
  std::vector<Eigen::MatrixXd> coeff;    ///< symmetric dim x dim, parallel to var_index
};

/// Deterministic standard-form program: identical builder input produces a
/// bit-identical program (fixed variable order, fixed packing, ordered maps).
struct ConicProgram {
  std::vector<VarInfo> vars;
  int num_scalars = 0;
  bool has_objective = false;
  Eigen::VectorXd c;        ///< minimize c . y (zero when pure feasibility)
  double obj_offset = 0.0;
  std::vector<CompiledBlock> blocks;
  Eigen::MatrixXd eq_A;     ///< eq_A * y = eq_b
  Eigen::VectorXd eq_b;
  std::vector<std::string> eq_labels;

  /// Canonical text rendering (17 significant digits); used for byte-level
  /// determinism checks and fingerprints.
  std::string serialize() const {
    std::string out;
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      out += ' ';
    };
    out += "vars " + std::to_string(num_scalars) + "\n";
    for (const auto& v : vars)
      out += v.name + " " + std::to_string(v.rows) + "x" + std::to_string(v.cols) +
             (v.sym == Symmetry::symmetric ? " sym " : " gen ") + std::to_string(v.offset) +
             "\n";
    out += "objective ";
    num(obj_offset);
    for (int i = 0; i < c.size(); ++i) num(c[i]);
    out += "\n";
    for (const auto& b : blocks) {
      out += "block " + b.label + " dim " + std::to_string(b.dim) + " eps ";
      num(b.eps);
      out += "\nF0 ";
      for (int i = 0; i < b.dim; ++i)
        for (int j = 0; j < b.dim; ++j) num(b.F0(i, j));
      out += "\n";
      for (std::size_t k = 0; k < b.var_index.size(); ++k) {
        out += "v" + std::to_string(b.var_index[k]) + " ";
        for (int i = 0; i < b.dim; ++i)
          for (int j = 0; j < b.dim; ++j) num(b.coeff[k](i, j));
        out += "\n";
      }
    }
    for (int r = 0; r < eq_A.rows(); ++r) {
      out += "eq ";
      for (int i = 0; i < eq_A.cols(); ++i) num(eq_A(r, i));
      num(eq_b[r]);
      out += "\n";
    }
    return out;
  }
};

enum class SolveStatus { optimal, infeasible, failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    default: return "failure";
  }
}

struct BlockResidual {
  std::string label;
  double min_eigenvalue = 0.0;  ///< of the block value at the solution
  double eps = 0.0;
};

struct Solution {
  SolveStatus status = SolveStatus::failure;
  Eigen::VectorXd y;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double gap_bound = std::numeric_limits<double>::quiet_NaN();  ///< certified suboptimality bound
  std::vector<BlockResidual> residuals;  ///< recomputed independently of the backend
  double min_margin = std::numeric_limits<double>::quiet_NaN();  ///< min(lambda_min - eps)
  double max_eq_violation = 0.0;
  int newton_steps = 0;
  std::string message;
};

/// Registers variables, LMI blocks (upper triangle with the lower half
/// mirrored), linear equalities and a linear objective, then compiles
/// everything to a ConicProgram with a deterministic scalar layout.
class ProgramBuilder {
 public:
  VarId add_variable(std::string name, int rows, int cols, Symmetry sym) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("add_variable: dimensions must be positive");
    if (sym == Symmetry::symmetric && rows != cols)
      throw std::invalid_argument("add_variable: symmetric variable must be square: " + name);
    for (const auto& v : vars_)
      if (v.name == name) throw std::invalid_argument("add_variable: duplicate name " + name);
    VarInfo info;
    info.name = std::move(name);
    info.rows = rows;
    info.cols = cols;
    info.sym = sym;
    info.offset = num_scalars_;
    info.size = packed_size(rows, cols, sym);
    num_scalars_ += info.size;
    vars_.push_back(std::move(info));
    return VarId{static_cast<int>(vars_.size()) - 1};
  }

  const VarInfo& info(VarId v) const {
    check(v);
    return vars_[v.v];
  }

  /// Expression consisting of the bare variable.
  MatExpr expr(VarId v) const {
    const VarInfo& iv = info(v);
    MatExpr e(iv.rows, iv.cols);
    MatExpr::Term t;
    t.var = v.v;
    t.left = Eigen::MatrixXd::Identity(iv.rows, iv.rows);
    t.right = Eigen::MatrixXd::Identity(iv.cols, iv.cols);
    e.terms_.push_back(std::move(t));
    return e;
  }

  /// v * M for a 1x1 (scalar) variable v and a constant matrix M.
  MatExpr scalar_times(VarId v, const Eigen::MatrixXd& M) const {
    const VarInfo& iv = info(v);
    if (iv.rows != 1 || iv.cols != 1)
      throw std::invalid_argument("scalar_times: variable must be 1x1: " + iv.name);
    MatExpr e(static_cast<int>(M.rows()), static_cast<int>(M.cols()));
    for (int j = 0; j < M.cols(); ++j) {
      MatExpr::Term t;
      t.var = v.v;
      t.left = M.col(j);
      t.right = Eigen::MatrixXd::Zero(1, M.cols());
      t.right(0, j) = 1.0;
      e.terms_.push_back(std::move(t));
    }
    return e;
  }

  /// tr(V) as a 1x1 expression.
  MatExpr trace(VarId v) const {
    const VarInfo& iv = info(v);
    if (iv.rows != iv.cols) throw std::invalid_argument("trace: variable must be square");
    MatExpr e(1, 1);
    for (int i = 0; i < iv.rows; ++i) {
      MatExpr::Term t;
      t.var = v.v;
      t.left = Eigen::MatrixXd::Zero(1, iv.rows);
      t.left(0, i) = 1.0;
      t.right = Eigen::MatrixXd::Zero(iv.cols, 1);
      t.right(i, 0) = 1.0;
      e.terms_.push_back(std::move(t));
    }
    return e;
  }

  /// tr(C V C^T) as a 1x1 expression, for constant C.
  MatExpr quad_trace(const Eigen::MatrixXd& C, VarId v) const {
    const VarInfo& iv = info(v);
    if (C.cols() != iv.rows || iv.rows != iv.cols)
      throw std::invalid_argument("quad_trace: dimension mismatch");
    MatExpr e(1, 1);
    for (int i = 0; i < C.rows(); ++i) {
      MatExpr::Term t;
      t.var = v.v;
      t.left = C.row(i);
      t.right = C.row(i).transpose();
      e.terms_.push_back(std::move(t));
    }
    return e;
  }

  /// Adds the PSD constraint assembled from the upper-triangular cell grid
  /// (cells with i <= j; the lower half is the mirrored transpose, the
  /// star convention). Diagonal cells must be symmetric expressions.
  /// The constraint is grid(y) >= eps * I.
  void add_lmi(std::string label, const std::vector<std::vector<std::optional<MatExpr>>>& grid,
               double eps) {
    const std::size_t nb = grid.size();
    if (nb == 0) throw std::invalid_argument("add_lmi: empty grid: " + label);
    // Block row/col sizes from the diagonal.
    std::vector<int> sizes(nb, -1);
    for (std::size_t i = 0; i < nb; ++i) {
      if (grid[i].size() != nb)
        throw std::invalid_argument("add_lmi: grid must be square: " + label);
      if (!grid[i][i]) throw std::invalid_argument("add_lmi: missing diagonal cell: " + label);
      if (grid[i][i]->rows() != grid[i][i]->cols())
        throw std::invalid_argument("add_lmi: diagonal cell not square: " + label);
      sizes[i] = grid[i][i]->rows();
    }
    int dim = 0;
    std::vector<int> off(nb, 0);
    for (std::size_t i = 0; i < nb; ++i) {
      off[i] = dim;
      dim += sizes[i];
    }

    PendingBlock blk;
    blk.label = std::move(label);
    blk.dim = dim;
    blk.eps = eps;
    blk.F0 = Eigen::MatrixXd::Zero(dim, dim);

    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        if (j < i) {
          if (grid[i][j])
            throw std::invalid_argument("add_lmi: lower-triangle cell set in " + blk.label +
                                        "; supply the upper triangle only");
          continue;
        }
        if (!grid[i][j]) continue;  // zero cell
        const MatExpr& cell = *grid[i][j];
        if (cell.rows() != sizes[i] || cell.cols() != sizes[j])
          throw std::invalid_argument("add_lmi: cell (" + std::to_string(i + 1) + "," +
                                      std::to_string(j + 1) + ") is " +
                                      std::to_string(cell.rows()) + "x" +
                                      std::to_string(cell.cols()) + " in " + blk.label);
        CellCoeffs cc = compile_cell(cell);
        if (i == j) require_symmetric(cc, blk.label, static_cast<int>(i));
        scatter(cc, off[i], off[j], i == j, blk);
      }
    }
    pending_.push_back(std::move(blk));
  }

  /// Adds the linear equality expr == rhs for a 1x1 expression.
  void add_equality(std::string label, const MatExpr& e, double rhs) {
    if (e.rows() != 1 || e.cols() != 1)
      throw std::invalid_argument("add_equality: expression must be 1x1");
    CellCoeffs cc = compile_cell(e);
    EqRow row;
    row.label = std::move(label);
    row.rhs = rhs - cc.constant(0, 0);
    for (const auto& [idx, M] : cc.coeff) row.coeffs.emplace_back(idx, M(0, 0));
    eqs_.push_back(std::move(row));
  }

  /// Sets the objective: minimize the 1x1 expression.
  void minimize(const MatExpr& e) {
    if (e.rows() != 1 || e.cols() != 1)
      throw std::invalid_argument("minimize: expression must be 1x1");
    obj_ = compile_cell(e);
    has_objective_ = true;
  }

  ConicProgram build() const {
    ConicProgram p;
    p.vars = vars_;
    p.num_scalars = num_scalars_;
    p.c = Eigen::VectorXd::Zero(num_scalars_);
    p.has_objective = has_objective_;
    if (has_objective_) {
      p.obj_offset = obj_.constant(0, 0);
      for (const auto& [idx, M] : obj_.coeff) p.c[idx] = M(0, 0);
    }
    p.blocks.reserve(pending_.size());
    for (const PendingBlock& blk : pending_) {
      CompiledBlock cb;
      cb.label = blk.label;
      cb.dim = blk.dim;
      cb.eps = blk.eps;
      cb.F0 = 0.5 * (blk.F0 + blk.F0.transpose());
      cb.var_index.reserve(blk.coeff.size());
      cb.coeff.reserve(blk.coeff.size());
      for (const auto& [idx, M] : blk.coeff) {
        cb.var_index.push_back(idx);
        cb.coeff.push_back(0.5 * (M + M.transpose()));
      }
      p.blocks.push_back(std::move(cb));
    }
    p.eq_A = Eigen::MatrixXd::Zero(static_cast<int>(eqs_.size()), num_scalars_);
    p.eq_b = Eigen::VectorXd::Zero(static_cast<int>(eqs_.size()));
    for (std::size_t r = 0; r < eqs_.size(); ++r) {
      for (const auto& [idx, v] : eqs_[r].coeffs) p.eq_A(static_cast<int>(r), idx) += v;
      p.eq_b[static_cast<int>(r)] = eqs_[r].rhs;
      p.eq_labels.push_back(eqs_[r].label);
    }
    return p;
  }

 private:
  struct CellCoeffs {
    Eigen::MatrixXd constant;
    std::map<int, Eigen::MatrixXd> coeff;  ///< scalar index -> derivative matrix
  };
  struct PendingBlock {
    std::string label;
    int dim = 0;
    double eps = 0.0;
    Eigen::MatrixXd F0;
    std::map<int, Eigen::MatrixXd> coeff;  ///< scalar index -> dim x dim
  };
  struct EqRow {
    std::string label;
    double rhs = 0.0;
    std::vector<std::pair<int, double>> coeffs;
  };

  void check(VarId v) const {
    if (!v.valid() || v.v >= static_cast<int>(vars_.size()))
      throw std::invalid_argument("unknown variable handle");
  }

  CellCoeffs compile_cell(const MatExpr& e) const {
    CellCoeffs out;
    out.constant = e.constant_part();
    for (const MatExpr::Term& t : e.terms()) {
      if (t.var < 0 || t.var >= static_cast<int>(vars_.size()))
        throw std::invalid_argument("expression references unknown variable");
      const VarInfo& iv = vars_[t.var];
      const int expect_l = t.transposed ? iv.cols : iv.rows;
      const int expect_r = t.transposed ? iv.rows : iv.cols;
      if (t.left.cols() != expect_l || t.right.rows() != expect_r)
        throw std::invalid_argument("expression term dimension mismatch for " + iv.name);
      if (iv.sym == Symmetry::symmetric) {
        const int n = iv.rows;
        for (int j = 0; j < n; ++j) {
          for (int i = j; i < n; ++i) {
            const int idx = iv.offset + sym_pack_index(i, j, n);
            Eigen::MatrixXd grad = t.left.col(i) * t.right.row(j);
            if (i != j) grad += t.left.col(j) * t.right.row(i);
            add_coeff(out, idx, t.coeff * grad);
          }
        }
      } else {
        for (int j = 0; j < iv.cols; ++j) {
          for (int i = 0; i < iv.rows; ++i) {
            const int idx = iv.offset + j * iv.rows + i;
            const Eigen::MatrixXd grad = t.transposed
                                             ? Eigen::MatrixXd(t.left.col(j) * t.right.row(i))
                                             : Eigen::MatrixXd(t.left.col(i) * t.right.row(j));
            add_coeff(out, idx, t.coeff * grad);
          }
        }
      }
    }
    return out;
  }

  static void add_coeff(CellCoeffs& cc, int idx, const Eigen::MatrixXd& M) {
    auto it = cc.coeff.find(idx);
    if (it == cc.coeff.end())
      cc.coeff.emplace(idx, M);
    else
      it->second += M;
  }

  static void require_symmetric(const CellCoeffs& cc, const std::string& label, int cell) {
    auto asym = [](const Eigen::MatrixXd& M) {
      return (M - M.transpose()).cwiseAbs().maxCoeff();
    };
    const double scale_c = std::max(1.0, cc.constant.cwiseAbs().maxCoeff());
    if (asym(cc.constant) > 1e-12 * scale_c)
      throw std::invalid_argument("add_lmi: asymmetric diagonal cell " + std::to_string(cell + 1) +
                                  " in " + label);
    for (const auto& [idx, M] : cc.coeff) {
      const double scale_m = std::max(1.0, M.cwiseAbs().maxCoeff());
      if (asym(M) > 1e-12 * scale_m)
        throw std::invalid_argument("add_lmi: asymmetric diagonal cell " +
                                    std::to_string(cell + 1) + " in " + label +
                                    " (variable scalar " + std::to_string(idx) + ")");
    }
  }

  static void scatter(const CellCoeffs& cc, int r0, int c0, bool diagonal, PendingBlock& blk) {
    auto place = [&](Eigen::MatrixXd& target, const Eigen::MatrixXd& M) {
      target.block(r0, c0, M.rows(), M.cols()) += M;
      if (!diagonal) target.block(c0, r0, M.cols(), M.rows()) += M.transpose();
    };
    place(blk.F0, cc.constant);
    for (const auto& [idx, M] : cc.coeff) {
      auto it = blk.coeff.find(idx);
      if (it == blk.coeff.end())
        it = blk.coeff.emplace(idx, Eigen::MatrixXd::Zero(blk.dim, blk.dim)).first;
      place(it->second, M);
    }
  }

  std::vector<VarInfo> vars_;
  int num_scalars_ = 0;
  std::vector<PendingBlock> pending_;
  std::vector<EqRow> eqs_;
  CellCoeffs obj_;
  bool has_objective_ = false;
};

/// Reads the value of a named variable out of a solution vector.
inline Eigen::MatrixXd extract(const ConicProgram& p, const Eigen::VectorXd& y, VarId v) {
  if (!v.valid() || v.v >= static_cast<int>(p.vars.size()))
    throw std::invalid_argument("extract: unknown variable");
  const VarInfo& iv = p.vars[v.v];
  Eigen::MatrixXd M(iv.rows, iv.cols);
  if (iv.sym == Symmetry::symmetric) {
    for (int j = 0; j < iv.cols; ++j)
      for (int i = j; i < iv.rows; ++i) {
        const double val = y[iv.offset + sym_pack_index(i, j, iv.rows)];
        M(i, j) = val;
        M(j, i) = val;
      }
  } else {
    for (int j = 0; j < iv.cols; ++j)
      for (int i = 0; i < iv.rows; ++i) M(i, j) = y[iv.offset + j * iv.rows + i];
  }
  return M;
}

/// Value of a compiled block at y (the strictness shift is NOT subtracted).
inline Eigen::MatrixXd block_value(const CompiledBlock& b, const Eigen::VectorXd& y) {
  Eigen::MatrixXd S = b.F0;
  for (std::size_t k = 0; k < b.var_index.size(); ++k) S += y[b.var_index[k]] * b.coeff[k];
  return S;
}

/// Dump in SDPA sparse format (.dat-s): min c.x s.t. sum x_i F_i - F0 >= 0.
/// Equalities are emitted as paired 1x1 inequality blocks.
inline void dump_sdpa(const ConicProgram& p, std::ostream& os) {
  const int m = p.num_scalars;
  const int n_eq = static_cast<int>(p.eq_A.rows());
  const int nblocks = static_cast<int>(p.blocks.size()) + 2 * n_eq;
  os << "* generated by hmjls\n" << m << " = mDIM\n" << nblocks << " = nBLOCK\n";
  for (std::size_t b = 0; b < p.blocks.size(); ++b) os << p.blocks[b].dim << " ";
  for (int r = 0; r < 2 * n_eq; ++r) os << 1 << " ";
  os << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (int i = 0; i < m; ++i) {
    num(p.c.size() ? p.c[i] : 0.0);
    os << (i + 1 < m ? ' ' : '\n');
  }
  if (m == 0) os << "\n";
  // entries: <matno> <blkno> <i> <j> <value>, matno 0 is F0
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const CompiledBlock& blk = p.blocks[b];
    Eigen::MatrixXd F0 = blk.F0 - blk.eps * Eigen::MatrixXd::Identity(blk.dim, blk.dim);
    for (int i = 0; i < blk.dim; ++i)
      for (int j = i; j < blk.dim; ++j)
        if (F0(i, j) != 0.0) {
          os << 0 << ' ' << (b + 1) << ' ' << (i + 1) << ' ' << (j + 1) << ' ';
          num(-F0(i, j));  // SDPA subtracts F0
          os << '\n';
        }
    for (std::size_t k = 0; k < blk.var_index.size(); ++k)
      for (int i = 0; i < blk.dim; ++i)
        for (int j = i; j < blk.dim; ++j)
          if (blk.coeff[k](i, j) != 0.0) {
            os << (blk.var_index[k] + 1) << ' ' << (b + 1) << ' ' << (i + 1) << ' ' << (j + 1)
               << ' ';
            num(blk.coeff[k](i, j));
            os << '\n';
          }
  }
  for (int r = 0; r < n_eq; ++r) {
    for (int sgn = 0; sgn < 2; ++sgn) {
      const int blkno = static_cast<int>(p.blocks.size()) + 2 * r + sgn + 1;
      const double s = sgn == 0 ? 1.0 : -1.0;
      os << 0 << ' ' << blkno << " 1 1 ";
      num(s * p.eq_b[r]);
      os << '\n';
      for (int i = 0; i < m; ++i)
        if (p.eq_A(r, i) != 0.0) {
          os << (i + 1) << ' ' << blkno << " 1 1 ";
          num(s * p.eq_A(r, i));
          os << '\n';
        }
    }
  }
}

}  // namespace hmjls::sdp
