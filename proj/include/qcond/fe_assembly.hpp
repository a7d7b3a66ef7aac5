#pragma once

// P1 assembly on a fixed mesh: interior/boundary block layout with
// precomputed value slots so repeated assembly does not touch the sparsity
// structure.

#include "qcond/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <functional>
#include <memory>
#include <optional>

namespace qcond {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

struct BlockSystem {
  SpMat II;  // interior rows, interior columns
  SpMat IB;  // interior rows, boundary columns
  SpMat BI;  // boundary rows, interior columns
  SpMat BB;  // boundary rows, boundary columns
};

class BlockPattern {
 public:
  explicit BlockPattern(std::shared_ptr<const Mesh> mesh);

  [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
  [[nodiscard]] const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  [[nodiscard]] int num_interior() const { return static_cast<int>(interior_vertices_.size()); }
  [[nodiscard]] int num_boundary() const { return mesh_->num_boundary(); }
  /// Interior index of a vertex, or -1 on the boundary.
  [[nodiscard]] int interior_index(int v) const { return interior_index_[v]; }
  [[nodiscard]] const std::vector<int>& interior_vertices() const { return interior_vertices_; }

  /// Zero-valued matrices carrying the fixed sparsity structure.
  [[nodiscard]] BlockSystem make_system() const;

  using LocalMatrix = Eigen::Matrix3d;
  /// Overwrites the values of `sys` with sum over triangles of local(t).
  void assemble(BlockSystem& sys, const std::function<void(int, LocalMatrix&)>& local) const;
  /// Same, for the interior block only.
  void assemble_interior(SpMat& II, const std::function<void(int, LocalMatrix&)>& local) const;

  [[nodiscard]] Vec gather_interior(const Vec& nodal) const;
  [[nodiscard]] Vec gather_boundary(const Vec& nodal) const;
  /// Nodal vector from interior values and boundary values (boundary loop order).
  [[nodiscard]] Vec scatter(const Vec& interior, const Vec& boundary) const;

 private:
  struct Slot {
    char block = 0;  // 0 II, 1 IB, 2 BI, 3 BB
    int offset = 0;
  };

  std::shared_ptr<const Mesh> mesh_;
  std::vector<int> interior_index_;
  std::vector<int> interior_vertices_;
  BlockSystem pattern_;
  std::vector<std::array<Slot, 9>> slots_;
};

/// Sparse LU of the interior block with a 1-norm condition estimate.
class InteriorSolver {
 public:
  InteriorSolver() = default;
  void analyze(const SpMat& II);
  /// Returns false when the numerical factorization fails.
  bool factorize(const SpMat& II);
  [[nodiscard]] Vec solve(const Vec& rhs) const;
  [[nodiscard]] Vec solve_transpose(const Vec& rhs) const;
  /// Hager-Higham estimate of cond_1(II); requires a successful factorization.
  [[nodiscard]] double condition_estimate(const SpMat& II) const;
  [[nodiscard]] bool ok() const { return factored_; }

 private:
  std::unique_ptr<Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>> lu_;
  bool analyzed_ = false;
  bool factored_ = false;
};

}  // namespace qcond
