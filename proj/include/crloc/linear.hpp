#pragma once

// Normal equations with block-tridiagonal structure over time columns. Every
// factor couples at most two adjacent time knots, so the information matrix
// is tridiagonal in column blocks and is solved by block elimination.

#include "crloc/state.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace crloc {

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BlockTridiagonalSystem {
 public:
  BlockTridiagonalSystem() = default;

  explicit BlockTridiagonalSystem(const VariableLayout& layout) : layout_(layout) {
    const int nc = layout.num_columns();
    diag_.resize(nc);
    upper_.resize(nc > 0 ? nc - 1 : 0);
    rhs_ = Eigen::VectorXd::Zero(layout.size());
    for (int k = 0; k < nc; ++k) {
      diag_[k] = Eigen::MatrixXd::Zero(layout.column_size(k), layout.column_size(k));
      if (k + 1 < nc) {
        upper_[k] = Eigen::MatrixXd::Zero(layout.column_size(k), layout.column_size(k + 1));
      }
    }
  }

  const VariableLayout& layout() const { return layout_; }
  int size() const { return layout_.size(); }
  const Eigen::VectorXd& rhs() const { return rhs_; }

  /// H[i.., j..] += block, for global variable offsets i, j. Callers add each
  /// symmetric pair once with i <= j or both orderings; only the upper
  /// triangle of the column structure is stored.
  template <typename Derived>
  void add_hessian(int i, int j, const Eigen::MatrixBase<Derived>& block) {
    const int ci = layout_.column_of(i);
    const int cj = layout_.column_of(j);
    if (ci == cj) {
      const int o = layout_.column_offset(ci);
      diag_[ci].block(i - o, j - o, block.rows(), block.cols()) += block;
    } else if (cj == ci + 1) {
      upper_[ci].block(i - layout_.column_offset(ci), j - layout_.column_offset(cj), block.rows(),
                       block.cols()) += block;
    } else if (ci == cj + 1) {
      upper_[cj].block(j - layout_.column_offset(cj), i - layout_.column_offset(ci), block.cols(),
                       block.rows()) += block.transpose();
    } else {
      throw std::logic_error("BlockTridiagonalSystem: factor spans non-adjacent time columns");
    }
  }

  template <typename Derived>
  void add_rhs(int i, const Eigen::MatrixBase<Derived>& v) {
    rhs_.segment(i, v.size()) += v;
  }

  /// Adds a dense contribution over a set of variable blocks: for factor
  /// Jacobian blocks J_a (rows x 6) at offsets idx[a], adds J_a^T W J_b to H and
  /// -J_a^T W r to the right-hand side. Offsets < 0 (clamped) are skipped.
  void add_factor(const std::vector<int>& idx, const std::vector<Eigen::MatrixXd>& jac,
                  const Eigen::MatrixXd& weight, const Eigen::VectorXd& residual) {
    std::vector<Eigen::MatrixXd> jw(jac.size());
    for (std::size_t a = 0; a < jac.size(); ++a) {
      if (idx[a] < 0) continue;
      jw[a] = jac[a].transpose() * weight;
      add_rhs(idx[a], -(jw[a] * residual));
    }
    for (std::size_t a = 0; a < jac.size(); ++a) {
      if (idx[a] < 0) continue;
      for (std::size_t b = 0; b < jac.size(); ++b) {
        if (idx[b] < 0) continue;
        // Diagonal column blocks are stored in full, off-diagonal ones once.
        if (layout_.column_of(idx[a]) > layout_.column_of(idx[b])) continue;
        add_hessian(idx[a], idx[b], jw[a] * jac[b]);
      }
    }
  }

  /// H <- H + lambda (diag(H) + I).
  void damp(double lambda) {
    for (auto& d : diag_) {
      for (int i = 0; i < d.rows(); ++i) {
        d(i, i) += lambda * (d(i, i) + 1.0);
      }
    }
  }

  /// Dense copy of H, for tests and tiny problems.
  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(size(), size());
    for (int k = 0; k < static_cast<int>(diag_.size()); ++k) {
      const int o = layout_.column_offset(k);
      h.block(o, o, diag_[k].rows(), diag_[k].cols()) = diag_[k];
      if (k + 1 < static_cast<int>(diag_.size())) {
        const int o1 = layout_.column_offset(k + 1);
        h.block(o, o1, upper_[k].rows(), upper_[k].cols()) = upper_[k];
        h.block(o1, o, upper_[k].cols(), upper_[k].rows()) = upper_[k].transpose();
      }
    }
    return h;
  }

  /// H x using the stored blocks.
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    for (int k = 0; k < static_cast<int>(diag_.size()); ++k) {
      const int o = layout_.column_offset(k);
      const auto n = diag_[k].rows();
      y.segment(o, n).noalias() += diag_[k] * x.segment(o, n);
      if (k + 1 < static_cast<int>(diag_.size())) {
        const int o1 = layout_.column_offset(k + 1);
        const auto n1 = upper_[k].cols();
        y.segment(o, n).noalias() += upper_[k] * x.segment(o1, n1);
        y.segment(o1, n1).noalias() += upper_[k].transpose() * x.segment(o, n);
      }
    }
    return y;
  }

  const Eigen::MatrixXd& diagonal_block(int k) const { return diag_[k]; }
  const Eigen::MatrixXd& upper_block(int k) const { return upper_[k]; }

  struct Solution {
    Eigen::VectorXd delta;
    std::vector<Eigen::MatrixXd> column_covariance;  // marginal covariance of each column
  };

  /// Solves H delta = rhs by backward block elimination; optionally returns
  /// the diagonal column blocks of H^-1.
  Solution solve(bool with_covariance = false) const {
    const int nc = static_cast<int>(diag_.size());
    Solution out;
    out.delta = Eigen::VectorXd::Zero(size());
    if (nc == 0) return out;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> schur(nc);
    std::vector<Eigen::VectorXd> y(nc);
    for (int k = nc - 1; k >= 0; --k) {
      Eigen::MatrixXd s = diag_[k];
      y[k] = rhs_.segment(layout_.column_offset(k), layout_.column_size(k));
      if (k + 1 < nc) {
        const Eigen::MatrixXd sinv_bt = schur[k + 1].solve(upper_[k].transpose());
        s.noalias() -= upper_[k] * sinv_bt;
        y[k].noalias() -= sinv_bt.transpose() * y[k + 1];
      }
      schur[k].compute(s);
      if (schur[k].info() != Eigen::Success || !diagonal_positive(schur[k])) {
        throw NotPositiveDefinite("normal equations are not positive definite (column " + std::to_string(k) +
                                  ")");
      }
    }
    Eigen::VectorXd prev = schur[0].solve(y[0]);
    out.delta.segment(0, layout_.column_size(0)) = prev;
    for (int k = 1; k < nc; ++k) {
      Eigen::VectorXd x = schur[k].solve(y[k] - upper_[k - 1].transpose() * prev);
      out.delta.segment(layout_.column_offset(k), layout_.column_size(k)) = x;
      prev = std::move(x);
    }
    if (with_covariance) {
      out.column_covariance.resize(nc);
      const auto inv = [](const Eigen::LLT<Eigen::MatrixXd>& f) {
        return Eigen::MatrixXd(f.solve(Eigen::MatrixXd::Identity(f.rows(), f.cols())));
      };
      out.column_covariance[0] = inv(schur[0]);
      for (int k = 1; k < nc; ++k) {
        const Eigen::MatrixXd f = schur[k].solve(upper_[k - 1].transpose());
        Eigen::MatrixXd c = inv(schur[k]) + f * out.column_covariance[k - 1] * f.transpose();
        out.column_covariance[k] = 0.5 * (c + c.transpose());
      }
    }
    return out;
  }

  /// Dense reference solve (Cholesky of the assembled matrix).
  Solution solve_dense(bool with_covariance = false) const {
    const Eigen::MatrixXd h = dense();
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success || !diagonal_positive(llt)) {
      throw NotPositiveDefinite("normal equations are not positive definite");
    }
    Solution out;
    out.delta = llt.solve(rhs_);
    if (with_covariance) {
      const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(size(), size()));
      for (int k = 0; k < static_cast<int>(diag_.size()); ++k) {
        const int o = layout_.column_offset(k);
        const int m = layout_.column_size(k);
        out.column_covariance.push_back(cov.block(o, o, m, m));
      }
    }
    return out;
  }

 private:
  static bool diagonal_positive(const Eigen::LLT<Eigen::MatrixXd>& f) {
    const auto l = f.matrixLLT().diagonal();
    return l.size() == 0 || ((l.array() > 0.0).all() && l.allFinite());
  }

  VariableLayout layout_;
  std::vector<Eigen::MatrixXd> diag_;
  std::vector<Eigen::MatrixXd> upper_;
  Eigen::VectorXd rhs_;
};

}  // namespace crloc
