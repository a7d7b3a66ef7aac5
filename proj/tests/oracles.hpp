#pragma once

// Independent reference formulas used by the tests.

#include "qcond/mesh.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>

namespace oracle {

/// Outward DN symbol of d_i(M_ij d_j v) = 0 on the half space behind a
/// straight boundary with outward normal nu and tangent tau, for the
/// tangential frequency xi: the decaying mode exp(i xi x_t - lambda x_n)
/// with x_n the inward distance.
inline std::complex<double> half_space_symbol(const Eigen::Matrix2d& M, const Eigen::Vector2d& nu,
                                              const Eigen::Vector2d& tau, double xi) {
  Eigen::Matrix2d Q;
  Q.col(0) = tau;
  Q.col(1) = -nu;
  const Eigen::Matrix2d B = Q.transpose() * M * Q;
  using C = std::complex<double>;
  const C I(0.0, 1.0);
  // B22 l^2 - i xi (B12 + B21) l - B11 xi^2 = 0
  const C a = B(1, 1), b = -I * xi * (B(0, 1) + B(1, 0)), c = -B(0, 0) * xi * xi;
  const C disc = std::sqrt(b * b - 4.0 * a * c);
  C l = (-b + disc) / (2.0 * a);
  if (l.real() < 0.0) l = (-b - disc) / (2.0 * a);
  // outward flux -(B21 d_t v + B22 d_n v) with d_n v = -l v
  return B(1, 1) * l - I * xi * B(1, 0);
}

/// Max error of the P1 interpolant at triangle centroids.
template <class F>
double centroid_interpolation_error(const qcond::Mesh& m, F f) {
  double e = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    const double interp = (f(m.vertices()[tri[0]]) + f(m.vertices()[tri[1]]) + f(m.vertices()[tri[2]])) / 3.0;
    e = std::max(e, std::abs(interp - f(m.centroid(t))));
  }
  return e;
}

inline double order(double e_coarse, double e_fine, double h_coarse, double h_fine) {
  return std::log(e_coarse / e_fine) / std::log(h_coarse / h_fine);
}

/// div(a grad u) for u = 0.1 sin(x) e^y and a = 1 + amp exp(-|grad u|^2), by hand.
inline double gaussian_p_source(double amp, const Eigen::Vector2d& x) {
  const double ex = std::exp(x.y());
  const double ux = 0.1 * std::cos(x.x()) * ex, uy = 0.1 * std::sin(x.x()) * ex;
  const double uxx = -uy, uxy = ux, uyy = uy;
  const double E = std::exp(-(ux * ux + uy * uy));
  const double ax = -2.0 * amp * E * (ux * uxx + uy * uxy);
  const double ay = -2.0 * amp * E * (ux * uxy + uy * uyy);
  return ax * ux + ay * uy + (1.0 + amp * E) * (uxx + uyy);
}

}  // namespace oracle
