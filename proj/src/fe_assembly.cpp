#include "qcond/fe_assembly.hpp"

#include <cmath>
#include <stdexcept>

namespace qcond {

BlockPattern::BlockPattern(std::shared_ptr<const Mesh> mesh) : mesh_(std::move(mesh)) {
  const Mesh& m = *mesh_;
  interior_index_.assign(m.num_vertices(), -1);
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (!m.is_boundary(v)) {
      interior_index_[v] = static_cast<int>(interior_vertices_.size());
      interior_vertices_.push_back(v);
    }
  }
  const int ni = num_interior();
  const int nb = num_boundary();

  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> tii, tib, tbi, tbb;
  for (const auto& tri : m.triangles()) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int ri = interior_index_[tri[i]], cj = interior_index_[tri[j]];
        const int rb = m.boundary_position(tri[i]), cb = m.boundary_position(tri[j]);
        if (ri >= 0 && cj >= 0) tii.emplace_back(ri, cj, 1.0);
        else if (ri >= 0) tib.emplace_back(ri, cb, 1.0);
        else if (cj >= 0) tbi.emplace_back(rb, cj, 1.0);
        else tbb.emplace_back(rb, cb, 1.0);
      }
  }
  pattern_.II.resize(ni, ni);
  pattern_.IB.resize(ni, nb);
  pattern_.BI.resize(nb, ni);
  pattern_.BB.resize(nb, nb);
  pattern_.II.setFromTriplets(tii.begin(), tii.end());
  pattern_.IB.setFromTriplets(tib.begin(), tib.end());
  pattern_.BI.setFromTriplets(tbi.begin(), tbi.end());
  pattern_.BB.setFromTriplets(tbb.begin(), tbb.end());
  for (SpMat* s : {&pattern_.II, &pattern_.IB, &pattern_.BI, &pattern_.BB}) {
    s->makeCompressed();
    s->coeffs().setZero();
  }

  auto offset_of = [](const SpMat& s, int r, int c) {
    const int* outer = s.outerIndexPtr();
    const int* inner = s.innerIndexPtr();
    for (int k = outer[c]; k < outer[c + 1]; ++k)
      if (inner[k] == r) return k;
    throw std::logic_error("sparsity slot missing");
  };

  slots_.resize(m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int ri = interior_index_[tri[i]], cj = interior_index_[tri[j]];
        const int rb = m.boundary_position(tri[i]), cb = m.boundary_position(tri[j]);
        Slot& s = slots_[t][3 * i + j];
        if (ri >= 0 && cj >= 0) s = {0, offset_of(pattern_.II, ri, cj)};
        else if (ri >= 0) s = {1, offset_of(pattern_.IB, ri, cb)};
        else if (cj >= 0) s = {2, offset_of(pattern_.BI, rb, cj)};
        else s = {3, offset_of(pattern_.BB, rb, cb)};
      }
  }
}

BlockSystem BlockPattern::make_system() const { return pattern_; }

void BlockPattern::assemble(BlockSystem& sys,
                            const std::function<void(int, LocalMatrix&)>& local) const {
  double* vals[4] = {sys.II.valuePtr(), sys.IB.valuePtr(), sys.BI.valuePtr(), sys.BB.valuePtr()};
  for (SpMat* s : {&sys.II, &sys.IB, &sys.BI, &sys.BB}) s->coeffs().setZero();
  LocalMatrix K;
  for (int t = 0; t < mesh_->num_triangles(); ++t) {
    local(t, K);
    const auto& sl = slots_[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) vals[static_cast<int>(sl[3 * i + j].block)][sl[3 * i + j].offset] += K(i, j);
  }
}

void BlockPattern::assemble_interior(SpMat& II,
                                     const std::function<void(int, LocalMatrix&)>& local) const {
  II.coeffs().setZero();
  double* vals = II.valuePtr();
  LocalMatrix K;
  for (int t = 0; t < mesh_->num_triangles(); ++t) {
    const auto& sl = slots_[t];
    local(t, K);
    for (int k = 0; k < 9; ++k)
      if (sl[k].block == 0) vals[sl[k].offset] += K(k / 3, k % 3);
  }
}

Vec BlockPattern::gather_interior(const Vec& nodal) const {
  Vec out(num_interior());
  for (int i = 0; i < num_interior(); ++i) out[i] = nodal[interior_vertices_[i]];
  return out;
}

Vec BlockPattern::gather_boundary(const Vec& nodal) const {
  Vec out(num_boundary());
  const auto& bv = mesh_->boundary_vertices();
  for (int k = 0; k < num_boundary(); ++k) out[k] = nodal[bv[k]];
  return out;
}

Vec BlockPattern::scatter(const Vec& interior, const Vec& boundary) const {
  Vec out(mesh_->num_vertices());
  for (int i = 0; i < num_interior(); ++i) out[interior_vertices_[i]] = interior[i];
  const auto& bv = mesh_->boundary_vertices();
  for (int k = 0; k < num_boundary(); ++k) out[bv[k]] = boundary[k];
  return out;
}

void InteriorSolver::analyze(const SpMat& II) {
  lu_ = std::make_unique<Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>>();
  lu_->analyzePattern(II);
  analyzed_ = true;
  factored_ = false;
}

bool InteriorSolver::factorize(const SpMat& II) {
  if (!analyzed_) analyze(II);
  lu_->factorize(II);
  factored_ = lu_->info() == Eigen::Success;
  return factored_;
}

Vec InteriorSolver::solve(const Vec& rhs) const {
  if (!factored_) throw std::logic_error("interior system not factorized");
  return lu_->solve(rhs);
}

Vec InteriorSolver::solve_transpose(const Vec& rhs) const {
  if (!factored_) throw std::logic_error("interior system not factorized");
  return lu_->transpose().solve(rhs);
}

double InteriorSolver::condition_estimate(const SpMat& II) const {
  const int n = static_cast<int>(II.rows());
  if (n == 0) return 1.0;
  double norm1 = 0.0;
  for (int c = 0; c < II.outerSize(); ++c) {
    double col = 0.0;
    for (SpMat::InnerIterator it(II, c); it; ++it) col += std::abs(it.value());
    norm1 = std::max(norm1, col);
  }
  // Hager's 1-norm estimator for the inverse
  Vec x = Vec::Constant(n, 1.0 / n);
  double est = 0.0;
  int last_j = -1;
  for (int iter = 0; iter < 5; ++iter) {
    const Vec y = solve(x);
    est = y.lpNorm<1>();
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi[i] = y[i] >= 0.0 ? 1.0 : -1.0;
    const Vec z = solve_transpose(xi);
    int j = 0;
    const double zmax = z.cwiseAbs().maxCoeff(&j);
    if (zmax <= z.dot(x) || j == last_j) break;
    x.setZero();
    x[j] = 1.0;
    last_j = j;
  }
  if (!std::isfinite(est)) return std::numeric_limits<double>::infinity();
  return norm1 * est;
}

}  // namespace qcond
