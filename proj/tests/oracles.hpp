#pragma once

// Test-only reference computations, deliberately independent of the library's
// analytic derivative algebra: Bessel-series Matern evaluation, long-double
// finite differences through the zonal composition, brute-force geometry
// scans, and Gauss-Legendre quadrature.

#include <cmath>
#include <random>
#include <vector>

#include "spherefd/assembly.hpp"
#include "spherefd/geometry.hpp"
#include "spherefd/kernels.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Modified Bessel K of half-integer order via the closed-form recursion
// K_{1/2}(x) = sqrt(pi/2x) e^{-x},  K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu.
inline long double bessel_k_half(int twice_nu, long double x) {
  const long double pi = 3.14159265358979323846264338327950288L;
  long double k_prev = std::sqrt(pi / (2.0L * x)) * std::exp(-x);  // K_{1/2}
  if (twice_nu == 1) return k_prev;
  long double k_cur = k_prev * (1.0L + 1.0L / x);  // K_{3/2}
  for (int t = 3; t < twice_nu; t += 2) {
    const long double nu = 0.5L * t;
    const long double k_next = k_prev + (2.0L * nu / x) * k_cur;
    k_prev = k_cur;
    k_cur = k_next;
  }
  return k_cur;
}

inline long double gamma_half(int twice_nu) {
  // Gamma(nu) for nu = twice_nu / 2 with twice_nu odd.
  const long double pi = 3.14159265358979323846264338327950288L;
  long double g = std::sqrt(pi);  // Gamma(1/2)
  for (int t = 1; t < twice_nu; t += 2) g *= 0.5L * t;
  return g;
}

/// Matern kernel normalized to phi(0) = 1, evaluated through the Bessel
/// function directly: phi(r) = (e r)^nu K_nu(e r) / (2^{nu-1} Gamma(nu)).
inline double matern_reference(double nu, double eps, double r) {
  if (r == 0.0) return 1.0;
  const int twice_nu = static_cast<int>(std::lround(2.0 * nu));
  const long double x = static_cast<long double>(eps) * r;
  const long double scale =
      std::pow(2.0L, 0.5L * twice_nu - 1.0L) * gamma_half(twice_nu);
  return static_cast<double>(std::pow(x, 0.5L * twice_nu) *
                             bessel_k_half(twice_nu, x) / scale);
}

// ---------------------------------------------------------------------------
// Long-double zonal composition psi(t) = phi(sqrt(2-2t)) straight from the
// radial polynomial, bypassing the library's derivative forms.
inline long double psi_composition(const spherefd::RadialProfile& phi, long double t) {
  const long double rr = std::max(0.0L, 2.0L - 2.0L * t);
  const long double v = static_cast<long double>(phi.eps) * std::sqrt(rr);
  if (phi.family == spherefd::KernelFamily::wendland && v >= 1.0L) return 0.0L;
  long double acc = 0.0L;
  const auto& c = phi.polynomial();
  for (std::size_t j = c.size(); j-- > 0;) acc = acc * v + static_cast<long double>(c[j]);
  if (phi.family == spherefd::KernelFamily::matern) acc *= std::exp(-v);
  return acc;
}

template <typename F>
inline long double fd1(const F& f, long double t, long double h) {
  return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h);
}

template <typename F>
inline long double fd2(const F& f, long double t, long double h) {
  return (-f(t + 2 * h) + 16 * f(t + h) - 30 * f(t) + 16 * f(t - h) - f(t - 2 * h)) /
         (12 * h * h);
}

/// One application of (-Delta + alpha) through the zonal identity with
/// finite-difference derivatives of f.
template <typename F>
inline long double zonal_operator_fd(const F& f, int dim, long double alpha,
                                     long double t, long double h) {
  const long double lap = (1 - t * t) * fd2(f, t, h) - dim * t * fd1(f, t, h);
  return -lap + alpha * f(t);
}

/// L^kappa psi by nested finite differences on the exact composition; the
/// outer level uses a much larger step so the inner FD error is not
/// amplified, plus one Richardson extrapolation to kill its leading
/// truncation term.
inline double apply_operator_fd(const spherefd::RadialProfile& phi, int dim,
                                double alpha, int kappa, double t) {
  const auto psi = [&phi](long double x) { return psi_composition(phi, x); };
  if (kappa == 1) {
    return static_cast<double>(zonal_operator_fd(psi, dim, alpha, t, 0x1p-11L));
  }
  const auto level1 = [&](long double x) {
    return zonal_operator_fd(psi, dim, alpha, x, 0x1p-13L);
  };
  const long double h = 0x1p-6L;
  const long double coarse = zonal_operator_fd(level1, dim, alpha, t, 2 * h);
  const long double fine = zonal_operator_fd(level1, dim, alpha, t, h);
  return static_cast<double>((16.0L * fine - coarse) / 15.0L);
}

// ---------------------------------------------------------------------------
// Brute-force geometry scans.
inline double min_pairwise_geodesic(const spherefd::NodeSet& nodes) {
  double dmin = 4.0;
  for (int i = 0; i < nodes.size(); ++i) {
    for (int j = i + 1; j < nodes.size(); ++j) {
      dmin = std::min(dmin, spherefd::geodesic_distance(nodes[i], nodes[j]));
    }
  }
  return dmin;
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
struct Quadrature {
  std::vector<double> x;
  std::vector<double> w;
};

inline Quadrature gauss_legendre(int n) {
  Quadrature q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double xi = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = xi;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * xi * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
      const double dx = p1 / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.x[i] = -xi;
    q.x[n - 1 - i] = xi;
    const double wgt = 2.0 / ((1.0 - xi * xi) * dp * dp);
    q.w[i] = wgt;
    q.w[n - 1 - i] = wgt;
  }
  return q;
}

/// Surface integral over S^2 with Gauss-Legendre in cos(theta) and the
/// trapezoid rule in phi (spectrally exact for smooth integrands).
template <typename F>
inline double sphere_integral(const F& f, int n_theta = 64, int n_phi = 128) {
  const Quadrature q = gauss_legendre(n_theta);
  double acc = 0.0;
  for (int i = 0; i < n_theta; ++i) {
    const double z = q.x[i];
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    double ring = 0.0;
    for (int k = 0; k < n_phi; ++k) {
      const double phi = 2.0 * M_PI * k / n_phi;
      ring += f(s * std::cos(phi), s * std::sin(phi), z);
    }
    acc += q.w[i] * ring * (2.0 * M_PI / n_phi);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Deterministic random node sets and coefficient vectors for property tests.
inline spherefd::NodeSet random_cap_nodes(int count, double cap_radius,
                                          unsigned seed) {
  // Uniform points in a cap around the north pole, then rotated by a random
  // rotation derived from the seed.
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double zmin = std::cos(cap_radius);
  const Eigen::Vector3d axis =
      Eigen::Vector3d(uni(eng) - 0.5, uni(eng) - 0.5, uni(eng) - 0.5).normalized();
  const double angle = 2.0 * M_PI * uni(eng);
  const Eigen::AngleAxisd rot(angle, axis);
  std::vector<spherefd::SpherePoint> pts;
  while (static_cast<int>(pts.size()) < count) {
    const double z = zmin + (1.0 - zmin) * uni(eng);
    const double phi = 2.0 * M_PI * uni(eng);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    Eigen::Vector3d p(s * std::cos(phi), s * std::sin(phi), z);
    pts.emplace_back(spherefd::ManifoldDim::sphere(), rot * p);
  }
  return spherefd::NodeSet::from_points(spherefd::ManifoldDim::sphere(), std::move(pts));
}

inline Eigen::VectorXd random_vector(int n, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = gauss(eng);
  return v;
}

}  // namespace oracles
