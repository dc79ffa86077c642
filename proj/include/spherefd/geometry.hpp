#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "spherefd/errors.hpp"

namespace spherefd {

/// Intrinsic dimension of the sphere S^d embedded in R^{d+1}.  Only the
/// circle (d = 1) and the 2-sphere (d = 2) are supported.
class ManifoldDim {
 public:
  explicit ManifoldDim(int d) : d_(d) {
    if (d != 1 && d != 2) {
      throw InvalidArgument("manifold dimension must be 1 or 2, got " +
                            std::to_string(d));
    }
  }
  static ManifoldDim circle() { return ManifoldDim(1); }
  static ManifoldDim sphere() { return ManifoldDim(2); }

  int intrinsic() const { return d_; }
  int ambient() const { return d_ + 1; }
  friend bool operator==(ManifoldDim a, ManifoldDim b) { return a.d_ == b.d_; }
  friend bool operator!=(ManifoldDim a, ManifoldDim b) { return a.d_ != b.d_; }

 private:
  int d_;
};

/// A point on S^d, stored as a unit vector in R^3 (third coordinate fixed to
/// zero on the circle).  Construction renormalizes, so the unit-norm
/// invariant holds to within 1e-12.
class SpherePoint {
 public:
  SpherePoint(ManifoldDim dim, const Eigen::Vector3d& raw) : dim_(dim) {
    Eigen::Vector3d v = raw;
    if (dim.intrinsic() == 1) v.z() = 0.0;
    const double norm = v.norm();
    if (!std::isfinite(norm) || norm < 1e-14) {
      throw InvalidArgument("cannot normalize near-zero or non-finite vector");
    }
    coords_ = v / norm;
  }

  static SpherePoint from_angle(double theta) {
    return SpherePoint(ManifoldDim::circle(),
                       {std::cos(theta), std::sin(theta), 0.0});
  }

  const Eigen::Vector3d& coords() const { return coords_; }
  double x() const { return coords_.x(); }
  double y() const { return coords_.y(); }
  double z() const { return coords_.z(); }
  ManifoldDim dim() const { return dim_; }

 private:
  ManifoldDim dim_;
  Eigen::Vector3d coords_;
};

/// Geodesic (great-circle) distance in radians, in [0, pi].  The atan2 form
/// is uniformly accurate, in particular near coincident and antipodal pairs
/// where acos of the inner product loses half the digits.
inline double geodesic_distance(const SpherePoint& a, const SpherePoint& b) {
  const double cross = a.coords().cross(b.coords()).norm();
  const double dot = a.coords().dot(b.coords());
  return std::atan2(cross, dot);
}

namespace detail {
constexpr double kDuplicateTol = 1e-14;
}

/// An ordered set of distinct nodes on S^d, optionally tagged with the seed
/// that generated it.
class NodeSet {
 public:
  /// Validating factory: rejects empty input, mixed dimensions and duplicate
  /// nodes (pairwise geodesic distance below 1e-14).
  static NodeSet from_points(ManifoldDim dim, std::vector<SpherePoint> pts,
                             std::optional<std::uint64_t> seed = std::nullopt) {
    if (pts.empty()) throw InvalidArgument("node set must contain at least one point");
    for (const auto& p : pts) {
      if (p.dim() != dim) throw InvalidArgument("node dimension mismatch");
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        if (geodesic_distance(pts[i], pts[j]) < detail::kDuplicateTol) {
          throw InvalidArgument("duplicate nodes at indices " +
                                std::to_string(i) + " and " + std::to_string(j));
        }
      }
    }
    return NodeSet(dim, std::move(pts), seed);
  }

  /// Escape hatch for degenerate test fixtures; skips the duplicate scan.
  static NodeSet from_points_unchecked(ManifoldDim dim,
                                       std::vector<SpherePoint> pts,
                                       std::optional<std::uint64_t> seed = std::nullopt) {
    if (pts.empty()) throw InvalidArgument("node set must contain at least one point");
    return NodeSet(dim, std::move(pts), seed);
  }

  int size() const { return static_cast<int>(points_.size()); }
  const SpherePoint& operator[](int i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<SpherePoint>& points() const { return points_; }
  ManifoldDim dim() const { return dim_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

  /// CSV export: header `# sphere d=<d> n=<n> seed=<seed|none>`, then one
  /// `x,y[,z]` row per node.
  void write_csv(std::ostream& os) const {
    os << "# sphere d=" << dim_.intrinsic() << " n=" << size() << " seed=";
    if (seed_) os << *seed_; else os << "none";
    os << "\n";
    char buf[96];
    for (const auto& p : points_) {
      if (dim_.intrinsic() == 1) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.x(), p.y());
      } else {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.x(), p.y(), p.z());
      }
      os << buf;
    }
  }

  static NodeSet read_csv(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("# sphere", 0) != 0) {
      throw InvalidArgument("node CSV must start with '# sphere' header");
    }
    int d = 0, n = 0;
    std::optional<std::uint64_t> seed;
    {
      std::istringstream hs(header.substr(8));
      std::string tok;
      while (hs >> tok) {
        if (tok.rfind("d=", 0) == 0) d = std::stoi(tok.substr(2));
        else if (tok.rfind("n=", 0) == 0) n = std::stoi(tok.substr(2));
        else if (tok.rfind("seed=", 0) == 0) {
          const std::string s = tok.substr(5);
          if (s != "none") seed = std::stoull(s);
        }
      }
    }
    ManifoldDim dim(d);
    std::vector<SpherePoint> pts;
    pts.reserve(static_cast<std::size_t>(n));
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      Eigen::Vector3d v = Eigen::Vector3d::Zero();
      char comma = 0;
      ls >> v.x() >> comma >> v.y();
      if (dim.intrinsic() == 2) ls >> comma >> v.z();
      if (!ls) throw InvalidArgument("malformed node CSV row: " + line);
      pts.emplace_back(dim, v);
    }
    if (n != 0 && n != static_cast<int>(pts.size())) {
      throw InvalidArgument("node CSV row count does not match header n=" +
                            std::to_string(n));
    }
    return from_points(dim, std::move(pts), seed);
  }

 private:
  NodeSet(ManifoldDim dim, std::vector<SpherePoint> pts,
          std::optional<std::uint64_t> seed)
      : dim_(dim), points_(std::move(pts)), seed_(seed) {}

  ManifoldDim dim_;
  std::vector<SpherePoint> points_;
  std::optional<std::uint64_t> seed_;
};

/// Deterministic quasi-uniform nodes: equally spaced angles on the circle,
/// the golden-angle (Fibonacci) lattice on the 2-sphere.
inline NodeSet fibonacci_nodes(int n, ManifoldDim dim) {
  if (n < 2) throw InvalidArgument("fibonacci_nodes requires n >= 2");
  std::vector<SpherePoint> pts;
  pts.reserve(static_cast<std::size_t>(n));
  if (dim.intrinsic() == 1) {
    for (int j = 0; j < n; ++j) {
      pts.push_back(SpherePoint::from_angle(2.0 * std::numbers::pi * j / n));
    }
  } else {
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int j = 0; j < n; ++j) {
      const double zj = 1.0 - (2.0 * j + 1.0) / n;
      const double rho = std::sqrt(std::max(0.0, 1.0 - zj * zj));
      const double phi = golden_angle * j;
      pts.emplace_back(dim, Eigen::Vector3d(rho * std::cos(phi),
                                            rho * std::sin(phi), zj));
    }
  }
  return NodeSet::from_points(dim, std::move(pts));
}

namespace detail {

/// Deterministic standard normals: mt19937_64 plus an explicit Box-Muller
/// transform, so identical seeds give identical streams on every platform.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

 private:
  double uniform01() {
    // 53 random bits -> double in [0,1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace detail

/// I.i.d. uniform nodes via normalized Gaussian vectors.  Reproducible
/// bit-for-bit for a fixed seed.
inline NodeSet random_nodes(int n, ManifoldDim dim, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("random_nodes requires n >= 2");
  detail::GaussianStream g(seed);
  std::vector<SpherePoint> pts;
  pts.reserve(static_cast<std::size_t>(n));
  const int ambient = dim.ambient();
  while (static_cast<int>(pts.size()) < n) {
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    for (int k = 0; k < ambient; ++k) v[k] = g.next();
    if (v.norm() < 1e-8) continue;  // essentially impossible; redraw
    pts.emplace_back(dim, v);
  }
  return NodeSet::from_points(dim, std::move(pts), seed);
}

/// Orthonormal tangent frame at a point, built deterministically by
/// Gram-Schmidt against the coordinate axis least aligned with it.  On the
/// circle the frame is the counterclockwise unit tangent.
struct TangentFrame {
  Eigen::Vector3d e1;
  Eigen::Vector3d e2;  // zero on the circle
};

inline TangentFrame tangent_frame(const SpherePoint& center) {
  const Eigen::Vector3d& c = center.coords();
  if (center.dim().intrinsic() == 1) {
    return {Eigen::Vector3d(-c.y(), c.x(), 0.0), Eigen::Vector3d::Zero()};
  }
  int axis = 0;
  double best = std::abs(c.x());
  if (std::abs(c.y()) < best) { best = std::abs(c.y()); axis = 1; }
  if (std::abs(c.z()) < best) { axis = 2; }
  Eigen::Vector3d a = Eigen::Vector3d::Unit(axis);
  Eigen::Vector3d e1 = (a - a.dot(c) * c).normalized();
  Eigen::Vector3d e2 = c.cross(e1).normalized();
  return {e1, e2};
}

/// Chart coordinate type: d components, second entry fixed to zero on the
/// circle.
using ChartPoint = Eigen::Vector2d;

/// Azimuthal equidistant chart (inverse exponential map) centered at
/// `center`.  The chart is a radial isometry: |chart_map(c,x)| equals the
/// geodesic distance from c to x.  Throws DomainError for antipodal input.
inline ChartPoint chart_map(const SpherePoint& center, const SpherePoint& x) {
  if (center.dim() != x.dim()) throw InvalidArgument("chart dimension mismatch");
  const double theta = geodesic_distance(center, x);
  if (theta > std::numbers::pi - 1e-9) {
    throw DomainError("chart_map: point is antipodal to the chart center");
  }
  const TangentFrame frame = tangent_frame(center);
  if (center.dim().intrinsic() == 1) {
    const double t = std::atan2(frame.e1.dot(x.coords()),
                                center.coords().dot(x.coords()));
    return {t, 0.0};
  }
  if (theta < 1e-15) return {0.0, 0.0};
  const Eigen::Vector2d p(frame.e1.dot(x.coords()), frame.e2.dot(x.coords()));
  const double s = p.norm();  // = sin(theta) up to rounding
  if (s == 0.0) return {0.0, 0.0};
  return (theta / s) * p;
}

/// Half the minimum pairwise geodesic distance.  Duplicate nodes (distance
/// below 1e-14) yield value zero with the flag set.
struct SeparationResult {
  double value = 0.0;
  bool has_duplicates = false;
};

inline SeparationResult separation_distance(const NodeSet& nodes) {
  if (nodes.size() < 2) throw InvalidArgument("separation needs >= 2 nodes");
  double dmin = std::numbers::pi;
  for (int i = 0; i < nodes.size(); ++i) {
    for (int j = i + 1; j < nodes.size(); ++j) {
      dmin = std::min(dmin, geodesic_distance(nodes[i], nodes[j]));
    }
  }
  if (dmin < detail::kDuplicateTol) return {0.0, true};
  return {0.5 * dmin, false};
}

/// Real eigenfunction of -Laplace_Beltrami on S^d with eigenvalue l^2 on the
/// circle and l(l+1) on the 2-sphere.
///
/// Circle indexing: m = 0 is cos(l theta), m = 1 is sin(l theta).
/// Sphere indexing: real spherical harmonics, -l <= m <= l, with m > 0 the
/// cosine branch and m < 0 the sine branch; fully normalized in L^2(S^2), no
/// Condon-Shortley phase.
class Eigenfunction {
 public:
  Eigenfunction(ManifoldDim dim, int l, int m) : dim_(dim), l_(l), m_(m) {
    if (dim.intrinsic() == 1) {
      if (l < 0 || (m != 0 && m != 1) || (l == 0 && m == 1)) {
        throw InvalidArgument("circle harmonic needs l >= 0 and m in {0 (cos), 1 (sin)}, nonzero");
      }
    } else {
      if (l < 0 || std::abs(m) > l) {
        throw InvalidArgument("sphere harmonic needs 0 <= |m| <= l");
      }
    }
  }

  int l() const { return l_; }
  int m() const { return m_; }
  ManifoldDim dim() const { return dim_; }

  double eigenvalue() const {
    return dim_.intrinsic() == 1 ? static_cast<double>(l_) * l_
                                 : static_cast<double>(l_) * (l_ + 1);
  }

  double operator()(const SpherePoint& p) const {
    if (p.dim() != dim_) throw InvalidArgument("eigenfunction dimension mismatch");
    if (dim_.intrinsic() == 1) {
      const double theta = std::atan2(p.y(), p.x());
      return m_ == 0 ? std::cos(l_ * theta) : std::sin(l_ * theta);
    }
    return sphere_harmonic(l_, m_, p.x(), p.y(), p.z());
  }

 private:
  static double sphere_harmonic(int l, int m, double x, double y, double z) {
    const int am = std::abs(m);
    const double rxy = std::hypot(x, y);
    // Fully normalized associated Legendre values at cos(theta) = z.
    double p_mm = std::sqrt(1.0 / (4.0 * std::numbers::pi));
    for (int k = 1; k <= am; ++k) {
      p_mm *= std::sqrt((2.0 * k + 1.0) / (2.0 * k)) * rxy;
    }
    double plm = p_mm;
    if (l > am) {
      double p_prev = p_mm;
      double p_cur = std::sqrt(2.0 * am + 3.0) * z * p_mm;
      for (int ll = am + 2; ll <= l; ++ll) {
        const double a = std::sqrt((4.0 * ll * ll - 1.0) /
                                   (static_cast<double>(ll) * ll - am * am));
        const double b = std::sqrt((static_cast<double>(ll - 1) * (ll - 1) - am * am) /
                                   (4.0 * static_cast<double>(ll - 1) * (ll - 1) - 1.0));
        const double p_next = a * (z * p_cur - b * p_prev);
        p_prev = p_cur;
        p_cur = p_next;
      }
      plm = p_cur;
    }
    if (m == 0) return plm;
    // cos/sin(am * phi) by Chebyshev recurrence on (x, y)/rxy; at the poles
    // plm already vanishes for am > 0, so the fallback angle is harmless.
    double cphi = 1.0, sphi = 0.0;
    if (rxy > 0.0) { cphi = x / rxy; sphi = y / rxy; }
    double c_prev = 1.0, s_prev = 0.0;  // k = 0
    double c_cur = cphi, s_cur = sphi;  // k = 1
    for (int k = 2; k <= am; ++k) {
      const double c_next = 2.0 * cphi * c_cur - c_prev;
      const double s_next = 2.0 * cphi * s_cur - s_prev;
      c_prev = c_cur; s_prev = s_cur;
      c_cur = c_next; s_cur = s_next;
    }
    const double azimuth = (m > 0) ? c_cur : s_cur;
    return std::numbers::sqrt2 * plm * azimuth;
  }

  ManifoldDim dim_;
  int l_;
  int m_;
};

}  // namespace spherefd
