#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "spherefd/atlas.hpp"
#include "spherefd/errors.hpp"
#include "spherefd/geometry.hpp"
#include "spherefd/kernels.hpp"

namespace spherefd {

/// Local kernel system of one patch: Gram matrix K|_{X_l}, operator Gram
/// K_L|_{X_l}, and the differentiation matrix W_l with W_l K = K_L.
struct LocalSystem {
  int patch_index = 0;
  Eigen::MatrixXd K;
  Eigen::MatrixXd KL;
  Eigen::MatrixXd W;
  double cond_estimate = 1.0;
};

namespace detail {

inline LocalSystem local_diff_matrix_impl(const Patch& patch, const NodeSet& nodes,
                                          const ZonalProfile& psi,
                                          const ZonalProfile& psi_L,
                                          int patch_index, double cond_limit) {
  if (patch.indices.empty()) throw InvalidArgument("empty patch in local assembly");
  std::vector<SpherePoint> pts;
  pts.reserve(patch.indices.size());
  for (int j : patch.indices) pts.push_back(nodes[j]);

  LocalSystem sys;
  sys.patch_index = patch_index;
  sys.K = gram(pts, psi);
  sys.KL = gram(pts, psi_L);

  Eigen::LLT<Eigen::MatrixXd> llt(sys.K);
  if (llt.info() != Eigen::Success) {
    throw IllConditionedPatch(
        "patch " + std::to_string(patch_index) +
            ": kernel Gram matrix is numerically singular",
        patch_index, std::numeric_limits<double>::infinity());
  }
  sys.cond_estimate = 1.0 / llt.rcond();
  if (!(sys.cond_estimate < cond_limit)) {
    throw IllConditionedPatch(
        "patch " + std::to_string(patch_index) + ": condition estimate " +
            std::to_string(sys.cond_estimate) + " exceeds the limit " +
            std::to_string(cond_limit),
        patch_index, sys.cond_estimate);
  }
  // W K = K_L with K symmetric: solve K Z = K_L, then W = Z^T.
  sys.W = llt.solve(sys.KL).transpose();
  return sys;
}

}  // namespace detail

/// W_l = K_L|_{X_l} (K|_{X_l})^{-1} through a Cholesky solve of the
/// symmetric positive definite local Gram matrix.  Patches whose condition
/// estimate exceeds `cond_limit` raise IllConditionedPatch.
inline LocalSystem local_diff_matrix(const Patch& patch, const NodeSet& nodes,
                                     const ZonalProfile& psi,
                                     const EllipticOperator& op,
                                     int patch_index = 0,
                                     double cond_limit = 1e12) {
  const ZonalProfile psi_L = apply_operator(psi, op);
  return detail::local_diff_matrix_impl(patch, nodes, psi, psi_L, patch_index,
                                        cond_limit);
}

/// The overdetermined block system W M v = F in row-major compressed form.
/// Row block l carries the n_l rows of W_l scattered to the global columns
/// J_l; the right-hand side block is f restricted to X_l.
class GlobalLeastSquares {
 public:
  int rows() const { return static_cast<int>(row_ptr_.size()) - 1; }
  int cols() const { return cols_; }
  int block_count() const { return static_cast<int>(block_row_start_.size()); }
  int block_rows(int block) const {
    return static_cast<int>(block_cols_[static_cast<std::size_t>(block)].size());
  }
  int block_row_start(int block) const {
    return block_row_start_[static_cast<std::size_t>(block)];
  }
  const std::vector<int>& block_columns(int block) const {
    return block_cols_[static_cast<std::size_t>(block)];
  }
  const Eigen::VectorXd& rhs() const { return rhs_; }
  std::int64_t nonzeros() const { return static_cast<std::int64_t>(values_.size()); }

  int row_block_of(int row) const {
    int lo = 0, hi = block_count() - 1;
    while (lo < hi) {
      const int mid = (lo + hi + 1) / 2;
      if (block_row_start_[static_cast<std::size_t>(mid)] <= row) lo = mid;
      else hi = mid - 1;
    }
    return lo;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(rows());
    for (int i = 0; i < rows(); ++i) {
      double acc = 0.0;
      for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
        acc += values_[static_cast<std::size_t>(k)] * x(col_idx_[static_cast<std::size_t>(k)]);
      }
      y(i) = acc;
    }
    return y;
  }

  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(cols());
    for (int i = 0; i < rows(); ++i) {
      const double yi = y(i);
      for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
        x(col_idx_[static_cast<std::size_t>(k)]) += values_[static_cast<std::size_t>(k)] * yi;
      }
    }
    return x;
  }

  /// Squared column norms of A (the Jacobi diagonal of A^T A).
  Eigen::VectorXd column_squared_norms() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(cols());
    for (std::size_t k = 0; k < values_.size(); ++k) {
      d(col_idx_[k]) += values_[k] * values_[k];
    }
    return d;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows(), cols());
    for (int i = 0; i < rows(); ++i) {
      for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
        A(i, col_idx_[static_cast<std::size_t>(k)]) = values_[static_cast<std::size_t>(k)];
      }
    }
    return A;
  }

  struct Triplet {
    int row;
    int col;
    double value;
  };

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(values_.size());
    for (int i = 0; i < rows(); ++i) {
      for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
        out.push_back({i, col_idx_[static_cast<std::size_t>(k)], values_[static_cast<std::size_t>(k)]});
      }
    }
    return out;
  }

  /// Matrix Market coordinate export (1-based indices) for external solver
  /// cross-checks.
  void write_matrix_market(std::ostream& os) const {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << rows() << " " << cols() << " " << nonzeros() << "\n";
    char buf[64];
    for (const auto& t : triplets()) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", t.row + 1, t.col + 1, t.value);
      os << buf;
    }
  }

  void write_rhs_csv(std::ostream& os) const {
    char buf[48];
    for (int i = 0; i < rhs_.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g\n", rhs_(i));
      os << buf;
    }
  }

  static GlobalLeastSquares from_blocks(int n,
                                        const std::vector<std::vector<int>>& block_cols,
                                        const std::vector<Eigen::MatrixXd>& block_W,
                                        const std::vector<Eigen::VectorXd>& block_rhs) {
    GlobalLeastSquares g;
    g.cols_ = n;
    int row_start = 0;
    for (std::size_t b = 0; b < block_cols.size(); ++b) {
      const auto& cols = block_cols[b];
      const int nb = static_cast<int>(cols.size());
      if (block_W[b].rows() != nb || block_W[b].cols() != nb || block_rhs[b].size() != nb) {
        throw InvalidArgument("inconsistent block shapes in global assembly");
      }
      g.block_row_start_.push_back(row_start);
      g.block_cols_.push_back(cols);
      for (int i = 0; i < nb; ++i) {
        for (int j = 0; j < nb; ++j) {
          g.col_idx_.push_back(cols[static_cast<std::size_t>(j)]);
          g.values_.push_back(block_W[b](i, j));
        }
        g.row_ptr_.push_back(static_cast<int>(g.values_.size()));
      }
      row_start += nb;
      const int old = g.rhs_.size();
      g.rhs_.conservativeResize(old + nb);
      g.rhs_.tail(nb) = block_rhs[b];
    }
    return g;
  }

 private:
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
  Eigen::VectorXd rhs_;
  std::vector<int> block_row_start_;
  std::vector<std::vector<int>> block_cols_;
};

/// Samples f once per node.  Non-finite samples raise DataError naming the
/// node.
inline Eigen::VectorXd rhs_from_function(
    const std::function<double(const SpherePoint&)>& f, const NodeSet& nodes) {
  Eigen::VectorXd values(nodes.size());
  for (int j = 0; j < nodes.size(); ++j) {
    const double v = f(nodes[j]);
    if (!std::isfinite(v)) {
      throw DataError("right-hand side is not finite at node " + std::to_string(j), j);
    }
    values(j) = v;
  }
  return values;
}

/// Assembles the global block system: one row block W_l per patch against
/// the global column set J_l, right-hand side blocks f|_{X_l}.  A node shared
/// by several patches contributes one equation per patch; that redundancy is
/// what the least-squares functional minimizes over.
inline GlobalLeastSquares assemble_global(const Atlas& atlas, const NodeSet& nodes,
                                          const ZonalProfile& psi,
                                          const EllipticOperator& op,
                                          const Eigen::VectorXd& f_values,
                                          double cond_limit = 1e12) {
  if (f_values.size() != nodes.size()) {
    throw InvalidArgument("f_values length must equal the node count");
  }
  const ZonalProfile psi_L = apply_operator(psi, op);
  std::vector<std::vector<int>> block_cols;
  std::vector<Eigen::MatrixXd> block_W;
  std::vector<Eigen::VectorXd> block_rhs;
  block_cols.reserve(atlas.patches.size());
  block_W.reserve(atlas.patches.size());
  block_rhs.reserve(atlas.patches.size());
  for (int l = 0; l < atlas.patch_count(); ++l) {
    const Patch& patch = atlas.patches[static_cast<std::size_t>(l)];
    LocalSystem sys =
        detail::local_diff_matrix_impl(patch, nodes, psi, psi_L, l, cond_limit);
    Eigen::VectorXd fl(patch.size());
    for (int i = 0; i < patch.size(); ++i) fl(i) = f_values(patch.indices[static_cast<std::size_t>(i)]);
    block_cols.push_back(patch.indices);
    block_W.push_back(std::move(sys.W));
    block_rhs.push_back(std::move(fl));
  }
  return GlobalLeastSquares::from_blocks(nodes.size(), block_cols, block_W, block_rhs);
}

}  // namespace spherefd
