#pragma once

// Independent reference computations used only by the tests. Nothing here may
// call into the code paths it is used to check.

#include "iontrap/common.hpp"
#include "iontrap/trap_model.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace iontrap::oracle {

/// Adaptive Gauss-Kronrod (7/15) integration with bisection.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, double rel_tol, int depth = 0) {
  static constexpr std::array<double, 8> xk = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr std::array<double, 8> wk = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr std::array<double, 4> wg = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kronrod = wk[7] * fc;
  double gauss = wg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double f1 = f(c - h * xk[i]);
    const double f2 = f(c + h * xk[i]);
    kronrod += wk[i] * (f1 + f2);
    if (i % 2 == 1) gauss += wg[i / 2] * (f1 + f2);
  }
  kronrod *= h;
  gauss *= h;
  const double err = std::abs(kronrod - gauss);
  if (err <= std::max(abs_tol, rel_tol * std::abs(kronrod)) || depth > 40) return kronrod;
  return integrate(f, a, c, 0.5 * abs_tol, rel_tol, depth + 1) +
         integrate(f, c, b, 0.5 * abs_tol, rel_tol, depth + 1);
}

/// Patch potential from the Laplace boundary integral
///   phi(r) = 1/(2 pi) * integral over the patch of z / |r - r'|^3,
/// evaluated by nested adaptive quadrature.
inline double quadrature_patch_potential(const RectPatch& p, const Vec3& r, double rel_tol = 1e-12) {
  const double z = r.z();
  auto inner = [&](double xp) {
    const double dx = xp - r.x();
    auto g = [&](double yp) {
      const double dy = yp - r.y();
      const double s = dx * dx + dy * dy + z * z;
      return z / (s * std::sqrt(s));
    };
    return integrate(g, p.y_min, p.y_max, 0.0, rel_tol);
  };
  return integrate(inner, p.x_min, p.x_max, 0.0, rel_tol) / kTwoPi;
}

/// Central-difference gradient of a scalar field.
inline Vec3 fd_gradient(const std::function<double(const Vec3&)>& f, const Vec3& r, double h) {
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 a = r;
    Vec3 b = r;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Central-difference Hessian from a gradient field.
inline Mat3 fd_hessian(const std::function<Vec3(const Vec3&)>& grad, const Vec3& r, double h) {
  Mat3 H;
  for (int j = 0; j < 3; ++j) {
    Vec3 a = r;
    Vec3 b = r;
    a[j] += h;
    b[j] -= h;
    H.col(j) = (grad(a) - grad(b)) / (2.0 * h);
  }
  return H;
}

/// Least-squares parabola y = c0 + c1 (x - x0) + c2 (x - x0)^2 on samples.
inline std::array<double, 3> fit_parabola(const std::vector<double>& x, const std::vector<double>& y,
                                          double x0) {
  Eigen::MatrixXd A(x.size(), 3);
  Eigen::VectorXd b(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x0;
    A(i, 0) = 1.0;
    A(i, 1) = d;
    A(i, 2) = d * d;
    b[i] = y[i];
  }
  const Eigen::Vector3d c = A.colPivHouseholderQr().solve(b);
  return {c[0], c[1], c[2]};
}

}  // namespace iontrap::oracle
