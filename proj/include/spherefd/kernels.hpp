#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spherefd/errors.hpp"
#include "spherefd/geometry.hpp"

namespace spherefd {

enum class KernelFamily { matern, wendland };

namespace detail {

/// Coefficients of the normalized Wendland polynomial phi_{3,ell}(v) on
/// [0,1], generated by the dimension-walk integral recursion
/// (I p)(r) = \int_r^1 s p(s) ds starting from (1-v)^{ell+2}.
inline std::vector<double> wendland_coefficients(int ell) {
  const int base = ell + 2;
  std::vector<double> p(static_cast<std::size_t>(base) + 1, 0.0);
  double binom = 1.0;
  for (int k = 0; k <= base; ++k) {
    p[static_cast<std::size_t>(k)] = ((k % 2) ? -binom : binom);
    binom = binom * (base - k) / (k + 1);
  }
  for (int step = 0; step < ell; ++step) {
    std::vector<double> q(p.size() + 2, 0.0);
    double at_one = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double a = p[j] / static_cast<double>(j + 2);
      at_one += a;
      q[j + 2] = -a;
    }
    q[0] = at_one;
    p = std::move(q);
  }
  const double scale = 1.0 / p[0];
  for (double& c : p) c *= scale;
  return p;
}

/// Coefficients of the normalized Matern polynomial for nu = p + 1/2, so that
/// phi(r) = poly(v) * exp(-v), v = eps r, phi(0) = 1.
inline std::vector<double> matern_coefficients(int p) {
  // poly(v) = p!/(2p)! * sum_k (2p-k)! / (k! (p-k)!) (2v)^k
  std::vector<double> c(static_cast<std::size_t>(p) + 1, 0.0);
  double fact_p = 1.0;
  for (int i = 2; i <= p; ++i) fact_p *= i;
  double fact_2p = 1.0;
  for (int i = 2; i <= 2 * p; ++i) fact_2p *= i;
  for (int k = 0; k <= p; ++k) {
    double num = 1.0;  // (2p-k)!
    for (int i = 2; i <= 2 * p - k; ++i) num *= i;
    double fact_k = 1.0;
    for (int i = 2; i <= k; ++i) fact_k *= i;
    double fact_pk = 1.0;
    for (int i = 2; i <= p - k; ++i) fact_pk *= i;
    c[static_cast<std::size_t>(k)] =
        fact_p / fact_2p * num / (fact_k * fact_pk) * std::pow(2.0, k);
  }
  return c;
}

/// One term of the closed zonal algebra: a polynomial in v = eps * r,
/// r = sqrt(2 - 2t), optionally multiplied by exp(-v), optionally supported
/// on v <= 1.  Differentiation in t uses d/dt = -(eps^2 / v) d/dv and stays
/// inside the class as long as no v^1 coefficient appears.
struct RadialForm {
  std::vector<double> coef;  // coef[j] multiplies v^j
  bool exponential = false;
  bool compact = false;
  double eps = 1.0;

  double poly_at(double v) const {
    double acc = 0.0;
    for (std::size_t j = coef.size(); j-- > 0;) acc = acc * v + coef[j];
    return acc;
  }

  double value_at_v(double v) const {
    if (compact && v >= 1.0) return 0.0;
    const double p = poly_at(v);
    return exponential ? p * std::exp(-v) : p;
  }

  double value_at_t(double t) const {
    const double rr = std::max(0.0, 2.0 - 2.0 * t);
    return value_at_v(eps * std::sqrt(rr));
  }

  double max_abs_coef() const {
    double m = 0.0;
    for (double c : coef) m = std::max(m, std::abs(c));
    return m;
  }

  /// d/dt.  Throws SmoothnessError when the derivative leaves the algebra,
  /// i.e. when a 1/v singularity would appear at t = 1.
  RadialForm derivative_t() const {
    // q(v) = d/dv of the polynomial factor, folding in the exponential.
    std::vector<double> q(std::max<std::size_t>(coef.size(), 1), 0.0);
    for (std::size_t j = 1; j < coef.size(); ++j) {
      q[j - 1] += static_cast<double>(j) * coef[j];
    }
    if (exponential) {
      for (std::size_t j = 0; j < coef.size(); ++j) q[j] -= coef[j];
    }
    const double tol = 1e-9 * std::max(max_abs_coef(), 1e-300);
    if (std::abs(q[0]) > tol) {
      throw SmoothnessError(
          "zonal profile is not differentiable at t = 1 beyond its depth", 0, 1);
    }
    RadialForm out;
    out.exponential = exponential;
    out.compact = compact;
    out.eps = eps;
    out.coef.assign(std::max<std::size_t>(q.size(), 2) - 1, 0.0);
    for (std::size_t j = 1; j < q.size(); ++j) {
      out.coef[j - 1] = -eps * eps * q[j];
    }
    if (out.coef.empty()) out.coef.assign(1, 0.0);
    return out;
  }

  /// Multiply by a polynomial in t (t = 1 - v^2 / (2 eps^2)).
  RadialForm times_t_polynomial(std::span<const double> tpoly) const {
    // Expand the t-polynomial as a polynomial in v (even powers only).
    std::vector<double> tv{1.0};  // (1 - v^2/(2 eps^2))^k, k = 0
    std::vector<double> acc{0.0};
    const double s = -0.5 / (eps * eps);
    for (std::size_t k = 0; k < tpoly.size(); ++k) {
      if (acc.size() < tv.size()) acc.resize(tv.size(), 0.0);
      for (std::size_t j = 0; j < tv.size(); ++j) acc[j] += tpoly[k] * tv[j];
      // tv <- tv * (1 + s v^2)
      std::vector<double> next(tv.size() + 2, 0.0);
      for (std::size_t j = 0; j < tv.size(); ++j) {
        next[j] += tv[j];
        next[j + 2] += s * tv[j];
      }
      tv = std::move(next);
    }
    RadialForm out;
    out.exponential = exponential;
    out.compact = compact;
    out.eps = eps;
    out.coef.assign(coef.size() + acc.size() - 1, 0.0);
    for (std::size_t i = 0; i < coef.size(); ++i) {
      for (std::size_t j = 0; j < acc.size(); ++j) {
        out.coef[i + j] += coef[i] * acc[j];
      }
    }
    return out;
  }

  RadialForm scaled(double a) const {
    RadialForm out = *this;
    for (double& c : out.coef) c *= a;
    return out;
  }

  static RadialForm linear_combination(double a, const RadialForm& x,
                                       double b, const RadialForm& y) {
    if (x.exponential != y.exponential || x.compact != y.compact ||
        x.eps != y.eps) {
      throw InvalidArgument("radial forms from different kernels cannot be combined");
    }
    RadialForm out;
    out.exponential = x.exponential;
    out.compact = x.compact;
    out.eps = x.eps;
    out.coef.assign(std::max(x.coef.size(), y.coef.size()), 0.0);
    for (std::size_t j = 0; j < x.coef.size(); ++j) out.coef[j] += a * x.coef[j];
    for (std::size_t j = 0; j < y.coef.size(); ++j) out.coef[j] += b * y.coef[j];
    return out;
  }
};

}  // namespace detail

/// Descriptor of a radial kernel phi(r) on the ambient space, normalized to
/// phi(0) = 1.  Matern kernels are restricted to half-integer orders, where
/// the modified Bessel function collapses to polynomial-times-exponential
/// closed forms; Wendland kernels use the ambient dimension m = 3, which also
/// covers the circle in R^2 by inclusion.
class RadialProfile {
 public:
  KernelFamily family;
  double param;  // nu for Matern, ell for Wendland
  double eps;    // scale; the kernel is evaluated at eps * r

  /// Reference evaluation of phi(r).
  double operator()(double r) const {
    const double v = eps * r;
    if (family == KernelFamily::wendland) {
      if (v >= 1.0) return 0.0;
      double acc = 0.0;
      for (std::size_t j = coef_.size(); j-- > 0;) acc = acc * v + coef_[j];
      return acc;
    }
    double acc = 0.0;
    for (std::size_t j = coef_.size(); j-- > 0;) acc = acc * v + coef_[j];
    return acc * std::exp(-v);
  }

  /// Largest k such that psi(t) = phi(sqrt(2-2t)) has k continuous
  /// derivatives at t = 1.
  int max_zonal_depth() const {
    return family == KernelFamily::matern
               ? static_cast<int>(std::lround(param - 0.5))
               : static_cast<int>(std::lround(param));
  }

  /// Nominal Sobolev exponent s of the native space of the restriction to
  /// S^d: nu + d/2 for Matern, ell + (d+1)/2 for Wendland.
  double native_smoothness(ManifoldDim dim) const {
    return family == KernelFamily::matern
               ? param + 0.5 * dim.intrinsic()
               : param + 0.5 * (dim.intrinsic() + 1);
  }

  const std::vector<double>& polynomial() const { return coef_; }

  friend RadialProfile matern_profile(double nu, double eps);
  friend RadialProfile wendland_profile(int ell, double eps);

 private:
  RadialProfile(KernelFamily f, double p, double e, std::vector<double> c)
      : family(f), param(p), eps(e), coef_(std::move(c)) {}
  std::vector<double> coef_;
};

inline RadialProfile matern_profile(double nu, double eps) {
  const double k = nu - 0.5;
  const int p = static_cast<int>(std::lround(k));
  if (std::abs(k - p) > 1e-12 || p < 0 || p > 4) {
    throw InvalidArgument(
        "matern order must be one of {1/2, 3/2, 5/2, 7/2, 9/2}, got " +
        std::to_string(nu));
  }
  if (!(eps > 0.0)) throw InvalidArgument("kernel scale eps must be positive");
  return RadialProfile(KernelFamily::matern, nu, eps,
                       detail::matern_coefficients(p));
}

inline RadialProfile wendland_profile(int ell, double eps) {
  if (ell < 0 || ell > 4) {
    throw InvalidArgument("wendland smoothness ell must be in {0,...,4}, got " +
                          std::to_string(ell));
  }
  if (!(eps > 0.0)) throw InvalidArgument("kernel scale eps must be positive");
  return RadialProfile(KernelFamily::wendland, ell, eps,
                       detail::wendland_coefficients(ell));
}

/// The elliptic operator L = (-Laplace_Beltrami + alpha I)^kappa on S^d.
/// Order 2 kappa; alpha > 0 keeps the null space trivial.
struct EllipticOperator {
  int kappa;
  double alpha;
  ManifoldDim dim;

  EllipticOperator(int kappa, double alpha, ManifoldDim dim)
      : kappa(kappa), alpha(alpha), dim(dim) {
    if (kappa < 1) throw InvalidArgument("operator exponent kappa must be >= 1");
    if (!(alpha > 0.0)) throw InvalidArgument("operator shift alpha must be positive");
  }
};

/// A zonal kernel profile psi with analytic derivatives up to a fixed depth.
/// Evaluation is exact up to rounding everywhere on [-1, 1], including t = 1
/// where naive chain-rule composition of phi(sqrt(2-2t)) loses all accuracy.
class ZonalProfile {
 public:
  int depth() const { return static_cast<int>(forms_.size()) - 1; }

  double operator()(double t) const { return forms_[0].value_at_t(t); }

  double derivative(double t, int k) const {
    if (k < 0 || k > depth()) {
      throw SmoothnessError("derivative order " + std::to_string(k) +
                                " exceeds profile depth " + std::to_string(depth()),
                            depth(), k);
    }
    return forms_[static_cast<std::size_t>(k)].value_at_t(t);
  }

  /// (psi(t), psi'(t), ..., psi^(p)(t)).
  std::vector<double> eval_derivs(double t, int p) const {
    if (p > depth()) {
      throw SmoothnessError("requested " + std::to_string(p) +
                                " derivatives, profile depth is " +
                                std::to_string(depth()),
                            depth(), p);
    }
    std::vector<double> out(static_cast<std::size_t>(p) + 1);
    for (int k = 0; k <= p; ++k) out[static_cast<std::size_t>(k)] = forms_[static_cast<std::size_t>(k)].value_at_t(t);
    return out;
  }

  /// The radial descriptor this profile came from, when it is a kernel
  /// rather than an operator image or a synthetic polynomial.
  const std::optional<RadialProfile>& origin() const { return origin_; }

  const detail::RadialForm& form(int k) const {
    return forms_[static_cast<std::size_t>(k)];
  }

  /// Profile psi(t) = sum_k c[k] t^k with derivatives up to `depth`; used for
  /// Legendre-type zonal kernels and analytic test fixtures.
  static ZonalProfile from_t_polynomial(std::span<const double> t_coeffs,
                                        int depth) {
    detail::RadialForm unit;
    unit.coef = {1.0};
    std::vector<detail::RadialForm> forms;
    forms.push_back(unit.times_t_polynomial(t_coeffs));
    for (int k = 0; k < depth; ++k) forms.push_back(forms.back().derivative_t());
    return ZonalProfile(std::move(forms), std::nullopt);
  }

  static ZonalProfile from_forms(std::vector<detail::RadialForm> forms,
                                 std::optional<RadialProfile> origin) {
    if (forms.empty()) throw InvalidArgument("zonal profile needs at least one form");
    return ZonalProfile(std::move(forms), std::move(origin));
  }

 private:
  ZonalProfile(std::vector<detail::RadialForm> forms,
               std::optional<RadialProfile> origin)
      : forms_(std::move(forms)), origin_(std::move(origin)) {}

  std::vector<detail::RadialForm> forms_;
  std::optional<RadialProfile> origin_;
};

/// Restriction of a radial kernel to the sphere: psi(t) = phi(sqrt(2-2t)),
/// with `depth` analytic derivatives.  The admissible depth is limited by the
/// kernel smoothness at r = 0 (Matern nu - 1/2, Wendland ell); beyond it the
/// derivatives blow up at t = 1 and the request is rejected.
inline ZonalProfile zonal_from_radial(const RadialProfile& phi, int depth) {
  if (depth < 0) throw InvalidArgument("derivative depth must be >= 0");
  const int maxd = phi.max_zonal_depth();
  if (depth > maxd) {
    throw SmoothnessError(
        "kernel supports at most " + std::to_string(maxd) +
            " zonal derivatives (operator order kappa <= " +
            std::to_string(maxd / 2) + "); requested depth " +
            std::to_string(depth),
        maxd, depth);
  }
  detail::RadialForm base;
  base.coef = phi.polynomial();
  base.exponential = (phi.family == KernelFamily::matern);
  base.compact = (phi.family == KernelFamily::wendland);
  base.eps = phi.eps;
  std::vector<detail::RadialForm> forms{base};
  for (int k = 0; k < depth; ++k) forms.push_back(forms.back().derivative_t());
  return ZonalProfile::from_forms(std::move(forms), phi);
}

/// Laplace-Beltrami operator applied through the zonal identity: for
/// f(x) = psi(x . y) on S^d,  (Delta f)(x) = (1-t^2) psi''(t) - d t psi'(t).
/// Consumes two derivative orders.
inline ZonalProfile zonal_laplace_beltrami(const ZonalProfile& psi,
                                           ManifoldDim dim) {
  if (psi.depth() < 2) {
    throw SmoothnessError("zonal Laplacian needs derivative depth >= 2",
                          psi.depth(), 2);
  }
  const double one_minus_t2[] = {1.0, 0.0, -1.0};
  const double d_times_t[] = {0.0, static_cast<double>(dim.intrinsic())};
  std::vector<detail::RadialForm> forms;
  forms.reserve(static_cast<std::size_t>(psi.depth()) - 1);
  detail::RadialForm r0 = detail::RadialForm::linear_combination(
      1.0, psi.form(2).times_t_polynomial(one_minus_t2),
      -1.0, psi.form(1).times_t_polynomial(d_times_t));
  forms.push_back(std::move(r0));
  for (int k = 2; k < psi.depth(); ++k) {
    forms.push_back(forms.back().derivative_t());
  }
  return ZonalProfile::from_forms(std::move(forms), std::nullopt);
}

/// psi_L = L psi in either kernel argument, L = (-Delta + alpha)^kappa.
/// Requires depth >= 2 kappa; the result keeps depth - 2 kappa derivatives.
inline ZonalProfile apply_operator(const ZonalProfile& psi,
                                   const EllipticOperator& op) {
  const int need = 2 * op.kappa;
  if (psi.depth() < need) {
    throw SmoothnessError(
        "operator application requires derivative depth " +
            std::to_string(need) + ", profile has " + std::to_string(psi.depth()),
        psi.depth(), need);
  }
  ZonalProfile cur = psi;
  for (int step = 0; step < op.kappa; ++step) {
    ZonalProfile lap = zonal_laplace_beltrami(cur, op.dim);
    std::vector<detail::RadialForm> forms;
    forms.reserve(static_cast<std::size_t>(lap.depth()) + 1);
    for (int k = 0; k <= lap.depth(); ++k) {
      forms.push_back(detail::RadialForm::linear_combination(
          -1.0, lap.form(k), op.alpha, cur.form(k)));
    }
    cur = ZonalProfile::from_forms(std::move(forms), std::nullopt);
  }
  return cur;
}

/// Gram matrix [psi(x_i . x_j)]; symmetric by construction.
inline Eigen::MatrixXd gram(std::span<const SpherePoint> nodes,
                            const ZonalProfile& psi) {
  const int n = static_cast<int>(nodes.size());
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double t =
          std::clamp(nodes[static_cast<std::size_t>(i)].coords().dot(
                         nodes[static_cast<std::size_t>(j)].coords()),
                     -1.0, 1.0);
      const double v = psi(t);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

/// Kernel sum sigma(x) = sum_j c_j psi(x . x_j).
inline double kernel_interpolant_eval(std::span<const SpherePoint> centers,
                                      const Eigen::VectorXd& coeffs,
                                      const ZonalProfile& psi,
                                      const SpherePoint& x) {
  if (static_cast<int>(centers.size()) != coeffs.size()) {
    throw InvalidArgument("kernel sum: centers and coefficients differ in length");
  }
  double acc = 0.0;
  for (int j = 0; j < coeffs.size(); ++j) {
    const double t = std::clamp(
        x.coords().dot(centers[static_cast<std::size_t>(j)].coords()), -1.0, 1.0);
    acc += coeffs[j] * psi(t);
  }
  return acc;
}

}  // namespace spherefd
