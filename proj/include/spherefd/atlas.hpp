#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "spherefd/errors.hpp"
#include "spherefd/geometry.hpp"
#include "spherefd/kernels.hpp"

namespace spherefd {

/// A geodesic cap U_l together with its chart data: node index set J_l and
/// the chart images of those nodes.  The chart image of the cap is the
/// Euclidean disk of the same radius, so the chart diameter h_l is exactly
/// 2 * radius.
struct Patch {
  SpherePoint center;
  double radius = 0.0;
  std::vector<int> indices;              // J_l, sorted ascending
  std::vector<ChartPoint> chart_points;  // chart_map(center, x_j), j in J_l

  int size() const { return static_cast<int>(indices.size()); }
  double chart_diameter() const { return 2.0 * radius; }
};

struct Atlas {
  ManifoldDim dim;
  std::vector<Patch> patches;

  int patch_count() const { return static_cast<int>(patches.size()); }
};

namespace detail {

inline int monomial_count(ManifoldDim dim, int order) {
  return dim.intrinsic() == 1 ? order : order * (order + 1) / 2;
}

/// Exponent multi-indices of the monomial basis of polynomials with total
/// degree < order, in graded order.
inline std::vector<std::pair<int, int>> monomial_exponents(ManifoldDim dim,
                                                           int order) {
  std::vector<std::pair<int, int>> out;
  if (dim.intrinsic() == 1) {
    for (int a = 0; a < order; ++a) out.emplace_back(a, 0);
  } else {
    for (int deg = 0; deg < order; ++deg) {
      for (int a = deg; a >= 0; --a) out.emplace_back(a, deg - a);
    }
  }
  return out;
}

struct BoxScale {
  Eigen::Vector2d mid = Eigen::Vector2d::Zero();
  Eigen::Vector2d half = Eigen::Vector2d::Ones();

  ChartPoint apply(const ChartPoint& p) const {
    return {(p.x() - mid.x()) / half.x(), (p.y() - mid.y()) / half.y()};
  }
};

inline BoxScale unit_box_scale(std::span<const ChartPoint> pts) {
  BoxScale s;
  if (pts.empty()) return s;
  Eigen::Vector2d lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  s.mid = 0.5 * (lo + hi);
  s.half = 0.5 * (hi - lo);
  for (int k = 0; k < 2; ++k) {
    if (s.half[k] < 1e-300) s.half[k] = 1.0;
  }
  return s;
}

inline double monomial_value(const std::pair<int, int>& e, const ChartPoint& p) {
  double v = 1.0;
  for (int i = 0; i < e.first; ++i) v *= p.x();
  for (int i = 0; i < e.second; ++i) v *= p.y();
  return v;
}

inline Eigen::MatrixXd vandermonde(std::span<const ChartPoint> pts,
                                   const std::vector<std::pair<int, int>>& expos,
                                   const BoxScale& scale) {
  Eigen::MatrixXd V(static_cast<int>(pts.size()), static_cast<int>(expos.size()));
  for (int i = 0; i < V.rows(); ++i) {
    const ChartPoint p = scale.apply(pts[static_cast<std::size_t>(i)]);
    for (int c = 0; c < V.cols(); ++c) {
      V(i, c) = monomial_value(expos[static_cast<std::size_t>(c)], p);
    }
  }
  return V;
}

}  // namespace detail

/// Result of a numerical r-determining-set test: whether only the zero
/// polynomial of total order < r vanishes on the points.
struct DeterminingCheck {
  bool pass = false;
  int rank = 0;
  int required_rank = 0;
  double cond = std::numeric_limits<double>::infinity();
};

/// Numerical rank test of the monomial Vandermonde matrix on the points,
/// rescaled to the unit box.  Singular values above 1e-10 of the largest
/// count towards the rank.
inline DeterminingCheck determining_set_check(std::span<const ChartPoint> pts,
                                              ManifoldDim dim, int order) {
  if (order < 1) throw InvalidArgument("determining order must be >= 1");
  const auto expos = detail::monomial_exponents(dim, order);
  DeterminingCheck out;
  out.required_rank = static_cast<int>(expos.size());
  if (pts.empty()) return out;
  const Eigen::MatrixXd V =
      detail::vandermonde(pts, expos, detail::unit_box_scale(pts));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) ++rank;
  }
  out.rank = rank;
  out.pass = (rank == out.required_rank);
  if (out.pass) out.cond = sv(0) / sv(sv.size() - 1);
  return out;
}

/// l1 norm of the minimum-2-norm polynomial-reproduction weights at y:
/// the smallest-norm w with sum_i w_i p(y_i) = p(y) for all p of total order
/// < `order`.  Any feasible w bounds the Lebesgue function from above, since
/// the Lebesgue function equals the minimal feasible l1 norm.
inline double reproduction_weights_l1(std::span<const ChartPoint> pts,
                                      ManifoldDim dim, int order,
                                      const ChartPoint& y) {
  const auto expos = detail::monomial_exponents(dim, order);
  const auto scale = detail::unit_box_scale(pts);
  const Eigen::MatrixXd V = detail::vandermonde(pts, expos, scale);
  Eigen::VectorXd rhs(static_cast<int>(expos.size()));
  const ChartPoint ys = scale.apply(y);
  for (int c = 0; c < rhs.size(); ++c) {
    rhs(c) = detail::monomial_value(expos[static_cast<std::size_t>(c)], ys);
  }
  const Eigen::MatrixXd Vt = V.transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Vt);
  const Eigen::VectorXd w = cod.solve(rhs);
  const double defect = (Vt * w - rhs).norm();
  if (defect > 1e-8 * std::max(1.0, rhs.norm())) {
    throw DomainError(
        "Lebesgue bound undefined: points are not a determining set at the "
        "requested order");
  }
  return w.lpNorm<1>();
}

namespace detail {

/// Deterministic low-discrepancy samples of the chart image of a cap: a
/// Fibonacci spiral in the disk for d = 2, uniform spacing on the segment for
/// d = 1.
inline std::vector<ChartPoint> chart_samples(ManifoldDim dim, double radius,
                                             int count) {
  std::vector<ChartPoint> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  if (dim.intrinsic() == 1) {
    for (int i = 0; i < count; ++i) {
      out.push_back({-radius + 2.0 * radius * (i + 0.5) / count, 0.0});
    }
  } else {
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double r = radius * std::sqrt((i + 0.5) / count);
      out.push_back({r * std::cos(golden_angle * i), r * std::sin(golden_angle * i)});
    }
  }
  return out;
}

}  // namespace detail

/// Sampled upper-bound estimate of the Lebesgue constant of the weight set
/// Y = chart points of `subset` (positions into patch.indices) over the chart
/// image of the patch.  Each sample contributes a certified upper bound of
/// the Lebesgue function there; the maximum over interior samples is a lower
/// estimate of the supremum of those upper bounds.
inline double lebesgue_upper_bound(const Patch& patch, ManifoldDim dim,
                                   std::span<const int> subset, int order,
                                   int sample_count) {
  std::vector<ChartPoint> Y;
  Y.reserve(subset.size());
  for (int pos : subset) {
    Y.push_back(patch.chart_points[static_cast<std::size_t>(pos)]);
  }
  if (!determining_set_check(Y, dim, order).pass) {
    throw DomainError("Lebesgue bound undefined: subset fails the determining-set check");
  }
  double bound = 0.0;
  for (const ChartPoint& y : detail::chart_samples(dim, patch.radius, sample_count)) {
    bound = std::max(bound, reproduction_weights_l1(Y, dim, order, y));
  }
  return bound;
}

/// Construction parameters of the cap cover.
struct AtlasParams {
  int target_patch_size = 30;   // nu*: grow until each patch holds this many nodes
  double overlap_factor = 1.5;  // beta > 1: initial radius over the coarse fill estimate
  int determining_order = 4;    // r enforced on patches and pairwise overlaps
  double growth_factor = 1.3;
  int max_growth_steps = 6;
};

namespace detail {

inline double coarse_fill_constant(ManifoldDim dim) {
  // Circle: exact fill distance of m equispaced centers is pi / m.  Sphere:
  // 2.2 m^{-1/2} slightly exceeds the covering radius of the coarse
  // Fibonacci set, so beta > 1 yields deep overlaps between neighbor caps.
  return dim.intrinsic() == 1 ? std::numbers::pi : 2.05;
}

/// Radius adjustment: move the cut to the middle of the widest gap in the
/// sorted node distances within [radius, 1.15 radius].  Membership can only
/// grow, so patch criteria established before the snap keep holding; the
/// payoff is boundary clearance for the separation distance.
inline double snap_radius(const std::vector<double>& sorted_dists, double radius,
                          double cap) {
  const double window_hi = std::min(1.15 * radius, cap);
  const auto begin_it = std::upper_bound(sorted_dists.begin(), sorted_dists.end(), radius);
  std::size_t k = (begin_it == sorted_dists.begin())
                      ? 0
                      : static_cast<std::size_t>(begin_it - sorted_dists.begin()) - 1;
  double best_radius = radius;
  double best_gap = -1.0;
  for (; k < sorted_dists.size() && sorted_dists[k] <= window_hi; ++k) {
    const double next = (k + 1 < sorted_dists.size())
                            ? sorted_dists[k + 1]
                            : std::numeric_limits<double>::infinity();
    const double gap = next - sorted_dists[k];
    if (gap > best_gap) {
      best_gap = gap;
      best_radius = std::isfinite(next) ? 0.5 * (sorted_dists[k] + next)
                                        : std::min(1.1 * radius, 0.999 * cap);
    }
  }
  best_radius = std::min(best_radius, 0.999 * cap);
  return std::max(best_radius, radius);
}

struct PatchDraft {
  SpherePoint center;
  double radius = 0.0;
  std::vector<double> dist;         // distance from center to every node
  std::vector<double> sorted_dist;  // ascending
  std::vector<int> indices;
  int growth_steps = 0;

  explicit PatchDraft(SpherePoint c) : center(std::move(c)) {}

  void rebuild_membership() {
    indices.clear();
    for (std::size_t j = 0; j < dist.size(); ++j) {
      if (dist[j] <= radius) indices.push_back(static_cast<int>(j));
    }
  }
};

/// Shrink counterpart of snap_radius: a cut at or below `target` placed in a
/// distance gap for boundary clearance.  The topmost gap is preferred so the
/// cut sheds as few nodes as possible; wider gaps slightly further down are
/// taken only when the topmost one is a near-tie between nodes.
inline double snap_down(const std::vector<double>& sorted_dists, double target) {
  double best_radius = target;
  double best_gap = -1.0;
  double top_radius = target;
  double top_gap = -1.0;
  for (std::size_t k = 0; k < sorted_dists.size() && sorted_dists[k] <= target; ++k) {
    if (k + 1 < sorted_dists.size() && sorted_dists[k + 1] <= 0.9 * target) continue;
    const double hi = (k + 1 < sorted_dists.size())
                          ? std::min(sorted_dists[k + 1], target)
                          : target;
    const double gap = hi - sorted_dists[k];
    if (gap > best_gap) {
      best_gap = gap;
      best_radius = 0.5 * (sorted_dists[k] + hi);
    }
    top_gap = gap;
    top_radius = 0.5 * (sorted_dists[k] + hi);
  }
  if (top_gap >= 0.3 * best_gap) return top_radius;
  return best_radius;
}

inline std::vector<ChartPoint> chart_of(const SpherePoint& center,
                                        const NodeSet& nodes,
                                        const std::vector<int>& indices) {
  std::vector<ChartPoint> out;
  out.reserve(indices.size());
  for (int j : indices) out.push_back(chart_map(center, nodes[j]));
  return out;
}

inline std::vector<int> sorted_intersection(const std::vector<int>& a,
                                            const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

/// Introspection record for construction debugging: why each unresolved pair
/// could not be separated (1 target invalid, 2 patch criteria, 3 neighbor
/// protection).
struct RepairDebug {
  struct StuckPair {
    int l, p;
    int shared;
    std::array<int, 5> option_reason;
    bool recenter_tried;
  };
  std::vector<StuckPair> stuck;
};

/// Separates cap pairs whose overlap cannot hold a determining set, by
/// shrinking radii, while protecting every overlap that already passes.
class OverlapRepair {
 public:
  OverlapRepair(std::vector<PatchDraft>& drafts, const NodeSet& nodes,
                ManifoldDim dim, const AtlasParams& params, int n)
      : drafts_(drafts), nodes_(nodes), dim_(dim), params_(params), n_(n),
        mult_(static_cast<std::size_t>(n), 0) {
    for (const auto& d : drafts_) {
      for (int j : d.indices) ++mult_[static_cast<std::size_t>(j)];
    }
  }

  void set_debug(RepairDebug* debug) { debug_ = debug; }

  void run() {
    const int rounds = 48;
    for (int round = 0; round < rounds; ++round) {
      // Sweep the failing pairs thinnest-lens first: emptying a sliver is
      // cheap and enlarges the slack available to the harder pairs.
      std::vector<std::tuple<int, std::size_t, std::size_t>> failing;
      for (std::size_t l = 0; l < drafts_.size(); ++l) {
        for (std::size_t p = l + 1; p < drafts_.size(); ++p) {
          if (!intersects(l, p)) continue;
          if (pair_passes(l, p)) continue;
          failing.emplace_back(
              static_cast<int>(
                  sorted_intersection(drafts_[l].indices, drafts_[p].indices).size()),
              l, p);
        }
      }
      if (failing.empty()) break;
      std::sort(failing.begin(), failing.end());
      bool progress = false;
      const bool last_chance = (round == rounds - 1);
      for (const auto& [count, l, p] : failing) {
        if (!intersects(l, p) || pair_passes(l, p)) continue;  // fixed en route
        record_ = last_chance;
        if (separate(l, p)) progress = true;
        record_ = false;
      }
      if (!progress && !last_chance) {
        if (debug_ != nullptr) {
          record_ = true;
          for (const auto& [count, l, p] : failing) {
            if (intersects(l, p) && !pair_passes(l, p)) separate(l, p);
          }
          record_ = false;
        }
        break;
      }
    }
  }

  /// Nodes no cap holds after the shrink rounds.
  std::vector<int> orphans() const {
    std::vector<int> out;
    for (int j = 0; j < n_; ++j) {
      if (mult_[static_cast<std::size_t>(j)] == 0) out.push_back(j);
    }
    return out;
  }

  /// Greedy cover of the unresolved pair graph: patches whose removal clears
  /// every remaining failing pair.
  std::vector<std::size_t> wedged_patches() const {
    std::vector<std::pair<std::size_t, std::size_t>> stuck;
    for (std::size_t l = 0; l < drafts_.size(); ++l) {
      for (std::size_t p = l + 1; p < drafts_.size(); ++p) {
        if (intersects(l, p) && !pair_passes(l, p)) stuck.emplace_back(l, p);
      }
    }
    std::vector<std::size_t> out;
    while (!stuck.empty()) {
      std::vector<int> count(drafts_.size(), 0);
      for (const auto& [l, p] : stuck) {
        ++count[l];
        ++count[p];
      }
      // Most stuck pairs resolved per deletion; smaller cap on ties.
      std::size_t pick = drafts_.size();
      for (std::size_t i = 0; i < drafts_.size(); ++i) {
        if (count[i] == 0) continue;
        if (pick == drafts_.size() || count[i] > count[pick] ||
            (count[i] == count[pick] &&
             drafts_[i].indices.size() < drafts_[pick].indices.size())) {
          pick = i;
        }
      }
      if (pick == drafts_.size()) break;
      out.push_back(pick);
      std::erase_if(stuck, [pick](const auto& pr) {
        return pr.first == pick || pr.second == pick;
      });
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  bool intersects(std::size_t l, std::size_t p) const {
    return geodesic_distance(drafts_[l].center, drafts_[p].center) <
           drafts_[l].radius + drafts_[p].radius;
  }

  bool membership_determining(std::size_t l, const std::vector<int>& member) const {
    return determining_set_check(chart_of(drafts_[l].center, nodes_, member), dim_,
                                 params_.determining_order)
        .pass;
  }

  /// A pair is acceptable when the caps share no node at all (no overlap
  /// conditions exist) or when the shared nodes form a determining set in
  /// both charts.
  bool overlap_determining(std::size_t l, std::size_t p,
                           const std::vector<int>& member_l,
                           const std::vector<int>& member_p) const {
    const auto inter = sorted_intersection(member_l, member_p);
    if (inter.empty()) return true;
    return determining_set_check(chart_of(drafts_[l].center, nodes_, inter), dim_,
                                 params_.determining_order)
               .pass &&
           determining_set_check(chart_of(drafts_[p].center, nodes_, inter), dim_,
                                 params_.determining_order)
               .pass;
  }

  bool pair_passes(std::size_t l, std::size_t p) const {
    return overlap_determining(l, p, drafts_[l].indices, drafts_[p].indices);
  }

  enum class ShrinkStatus { ok, bad_target, fails_criteria };

  /// Shrink target snapped into the widest nearby distance gap; reports
  /// whether the cap would lose its size or determining criteria.
  ShrinkStatus snapped_shrink(std::size_t l, double target, double& snapped,
                              std::vector<int>& kept) const {
    const auto& d = drafts_[l];
    if (!(target > 0.0) || target >= d.radius) return ShrinkStatus::bad_target;
    snapped = snap_down(d.sorted_dist, target);
    kept.clear();
    for (int j : d.indices) {
      if (d.dist[static_cast<std::size_t>(j)] <= snapped) kept.push_back(j);
    }
    if (static_cast<int>(kept.size()) < std::min(params_.target_patch_size, n_)) {
      return ShrinkStatus::fails_criteria;
    }
    return membership_determining(l, kept) ? ShrinkStatus::ok
                                           : ShrinkStatus::fails_criteria;
  }

  /// A shrink of `changed` is safe when every neighbor overlap that passes
  /// now stays passing or becomes node-free.  At lookahead depth 0 a damaged
  /// neighbor is also acceptable if it can provably repair itself by a rim
  /// retraction of its own (a subsequent round performs it).
  bool protects_neighbors(std::size_t changed, double new_radius,
                          const std::vector<int>& kept, std::size_t partner,
                          int depth = 0) const {
    for (std::size_t q = 0; q < drafts_.size(); ++q) {
      if (q == changed || q == partner) continue;
      const double cdist = geodesic_distance(drafts_[changed].center, drafts_[q].center);
      if (cdist >= drafts_[changed].radius + drafts_[q].radius) continue;
      if (cdist >= new_radius + drafts_[q].radius) continue;  // becomes disjoint
      if (!pair_passes(changed, q)) continue;                 // cannot get worse
      if (overlap_determining(changed, q, kept, drafts_[q].indices)) continue;
      if (depth == 0 && neighbor_can_self_repair(q, changed, kept)) continue;
      return false;
    }
    return true;
  }

  /// True when cap q can retract its own rim to make its overlap with the
  /// hypothetical membership of `changed` empty or determining, without
  /// damaging q's other passing overlaps.
  bool neighbor_can_self_repair(std::size_t q, std::size_t changed,
                                const std::vector<int>& changed_kept) const {
    const auto shared = sorted_intersection(changed_kept, drafts_[q].indices);
    if (shared.empty()) return true;
    double empty_q = drafts_[q].radius;
    for (int j : shared) {
      empty_q = std::min(empty_q, drafts_[q].dist[static_cast<std::size_t>(j)]);
    }
    for (double g : rim_targets(q, empty_q * (1.0 - 1e-12))) {
      double snapped = 0.0;
      std::vector<int> kept_q;
      if (snapped_shrink(q, g, snapped, kept_q) != ShrinkStatus::ok) continue;
      if (!overlap_determining(changed, q, changed_kept, kept_q)) continue;
      if (!protects_neighbors(q, snapped, kept_q, changed, 1)) continue;
      return true;
    }
    return false;
  }


  int orphan_count(std::size_t l, double new_radius, const std::vector<int>& other_kept,
                   std::size_t other, double other_radius) const {
    int count = 0;
    for (int j : drafts_[l].indices) {
      if (drafts_[l].dist[static_cast<std::size_t>(j)] <= new_radius) continue;
      int mult = mult_[static_cast<std::size_t>(j)];
      const bool in_other_now =
          std::binary_search(drafts_[other].indices.begin(), drafts_[other].indices.end(), j);
      const bool in_other_after =
          drafts_[other].dist[static_cast<std::size_t>(j)] <= other_radius &&
          std::binary_search(other_kept.begin(), other_kept.end(), j);
      if (in_other_now && !in_other_after) --mult;
      count += (mult <= 1) ? 1 : 0;
    }
    return count;
  }

  void commit(std::size_t l, double radius, std::vector<int> kept) {
    auto& d = drafts_[l];
    for (int j : d.indices) --mult_[static_cast<std::size_t>(j)];
    d.radius = radius;
    d.indices = std::move(kept);
    for (int j : d.indices) ++mult_[static_cast<std::size_t>(j)];
  }

  bool separate(std::size_t l, std::size_t p) {
    const double cdist = geodesic_distance(drafts_[l].center, drafts_[p].center);
    const double rl = drafts_[l].radius;
    const double rp = drafts_[p].radius;
    const double margin = 0.02 * std::min(rl, rp);
    const double f = (cdist - margin) / (rl + rp);
    // Cheapest moves first: retract one rim past the shared nodes, leaving a
    // node-free sliver; then full set-disjoint targets.
    const auto shared = sorted_intersection(drafts_[l].indices, drafts_[p].indices);
    double empty_l = rl, empty_p = rp;
    for (int j : shared) {
      empty_l = std::min(empty_l, drafts_[l].dist[static_cast<std::size_t>(j)]);
      empty_p = std::min(empty_p, drafts_[p].dist[static_cast<std::size_t>(j)]);
    }
    const double nudge = 1.0 - 1e-12;
    struct Option {
      double target_l, target_p;
      int klass;  // 0 rim retraction, 1 full separation
    };
    std::vector<Option> options;
    const auto rims_l = rim_targets(l, empty_l * nudge);
    const auto rims_p = rim_targets(p, empty_p * nudge);
    for (double g : rims_l) options.push_back({g, rp, 0});
    for (double g : rims_p) options.push_back({rl, g, 0});
    options.push_back({cdist - rp - margin, rp, 1});
    options.push_back({rl, cdist - rl - margin, 1});
    options.push_back({f * rl, f * rp, 1});
    // Joint retractions: the shared nodes split between the two rims, so
    // each side sheds less than it would alone.
    for (int j : shared) {
      const double dl = drafts_[l].dist[static_cast<std::size_t>(j)] * nudge;
      const double dp = drafts_[p].dist[static_cast<std::size_t>(j)] * nudge;
      options.push_back({dl, dp, 0});
    }
    for (double gl : rims_l) {
      for (double gp : rims_p) {
        if (options.size() > 48) break;
        options.push_back({gl, gp, 0});
      }
    }

    int best = -1;
    int best_orphans = 0, best_shed = 0, best_klass = 0;
    std::vector<double> snap_l(options.size()), snap_p(options.size());
    std::vector<std::vector<int>> keep_l(options.size()), keep_p(options.size());
    std::array<int, 5> reason{};
    for (std::size_t o = 0; o < options.size(); ++o) {
      snap_l[o] = rl;
      snap_p[o] = rp;
      keep_l[o] = drafts_[l].indices;
      keep_p[o] = drafts_[p].indices;
      ShrinkStatus st = ShrinkStatus::ok;
      if (options[o].target_l < rl) {
        st = snapped_shrink(l, options[o].target_l, snap_l[o], keep_l[o]);
      }
      if (st == ShrinkStatus::ok && options[o].target_p < rp) {
        st = snapped_shrink(p, options[o].target_p, snap_p[o], keep_p[o]);
      }
      if (st != ShrinkStatus::ok) {
        if (o < reason.size()) reason[o] = (st == ShrinkStatus::bad_target) ? 1 : 2;
        continue;
      }
      if (!overlap_determining(l, p, keep_l[o], keep_p[o])) {
        if (o < reason.size()) reason[o] = 4;  // does not resolve this pair
        continue;
      }
      if ((snap_l[o] < rl && !protects_neighbors(l, snap_l[o], keep_l[o], p)) ||
          (snap_p[o] < rp && !protects_neighbors(p, snap_p[o], keep_p[o], l))) {
        if (o < reason.size()) reason[o] = 3;
        continue;
      }
      const int shed_l = static_cast<int>(drafts_[l].indices.size() - keep_l[o].size());
      const int shed_p = static_cast<int>(drafts_[p].indices.size() - keep_p[o].size());
      const int orphans = orphan_count(l, snap_l[o], keep_p[o], p, snap_p[o]) +
                          orphan_count(p, snap_p[o], keep_l[o], l, snap_l[o]);
      const int shed = shed_l + shed_p;
      const int klass = options[o].klass;
      if (best < 0 || std::tie(orphans, klass, shed) <
                          std::tie(best_orphans, best_klass, best_shed)) {
        best = static_cast<int>(o);
        best_orphans = orphans;
        best_shed = shed;
        best_klass = klass;
      }
    }
    if (best >= 0) {
      const auto ub = static_cast<std::size_t>(best);
      if (snap_l[ub] < rl) commit(l, snap_l[ub], std::move(keep_l[ub]));
      if (snap_p[ub] < rp) commit(p, snap_p[ub], std::move(keep_p[ub]));
      return true;
    }
    // Retraction is wedged; try fattening the lens instead.  Growth only adds
    // nodes to existing overlaps, so it can break nothing that passes -- it
    // must only avoid spawning new thin overlaps with third caps.
    if (try_grow(l, p) || try_grow(p, l)) return true;
    // Finally, slide one center away from the other along their great circle.
    const double gamma = (rl + rp - cdist) + margin;
    if (try_recenter(l, p, gamma) || try_recenter(p, l, gamma)) return true;
    if (debug_ != nullptr && record_) {
      debug_->stuck.push_back({static_cast<int>(l), static_cast<int>(p),
                               static_cast<int>(shared.size()), reason, true});
    }
    return false;
  }

  /// Grow cap `l` outward to a snapped gap radius that makes the (l, p)
  /// overlap determining while every other affected overlap stays empty or
  /// determining.
  bool try_grow(std::size_t l, std::size_t p) {
    const auto& d = drafts_[l];
    const double cap_limit = 0.5 * std::numbers::pi;
    const double growth_limit = std::min(1.5 * d.radius, 0.999 * cap_limit);
    const auto hi_it =
        std::upper_bound(d.sorted_dist.begin(), d.sorted_dist.end(), growth_limit);
    auto lo_it = std::upper_bound(d.sorted_dist.begin(), d.sorted_dist.end(), d.radius);
    std::vector<std::pair<double, double>> gaps;  // (width, midpoint)
    for (auto it = lo_it; it < hi_it; ++it) {
      const double next = (it + 1 < d.sorted_dist.end())
                              ? std::min(*(it + 1), growth_limit)
                              : growth_limit;
      gaps.emplace_back(next - *it, 0.5 * (*it + next));
    }
    // Wide gaps first: they both give boundary clearance and change the
    // membership decisively.
    std::stable_sort(gaps.begin(), gaps.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> targets;
    const double min_gap = gaps.empty() ? 0.0 : 0.15 * gaps.front().first;
    for (const auto& [w, mid] : gaps) {
      if (targets.size() >= 8) break;
      if (w >= min_gap && w > 1e-10) targets.push_back(mid);
    }
    for (double g : targets) {
      std::vector<int> grown;
      for (int j = 0; j < n_; ++j) {
        if (d.dist[static_cast<std::size_t>(j)] <= g) grown.push_back(j);
      }
      if (!overlap_determining(l, p, grown, drafts_[p].indices)) continue;
      if (sorted_intersection(grown, drafts_[p].indices).empty()) continue;
      bool ok = true;
      for (std::size_t q = 0; q < drafts_.size() && ok; ++q) {
        if (q == l || q == p) continue;
        const double cd = geodesic_distance(d.center, drafts_[q].center);
        if (cd >= g + drafts_[q].radius) continue;
        const bool had_nodes =
            !sorted_intersection(drafts_[l].indices, drafts_[q].indices).empty();
        if (intersects(l, q) && had_nodes && pair_passes(l, q)) {
          continue;  // only gains nodes, stays determining
        }
        ok = overlap_determining(l, q, grown, drafts_[q].indices);
      }
      if (!ok) continue;
      commit(l, g, std::move(grown));
      return true;
    }
    return false;
  }

  /// Candidate rim-retraction radii below `upper`: midpoints of the widest
  /// distance gaps near the rim, widest first, topmost always included.
  std::vector<double> rim_targets(std::size_t l, double upper) const {
    const auto& sd = drafts_[l].sorted_dist;
    std::vector<std::pair<double, double>> gaps;  // (width, midpoint)
    const double window = 0.85 * upper;
    bool first_below = true;
    for (std::size_t k = sd.size(); k-- > 0;) {
      if (sd[k] > upper) continue;
      const double hi = (k + 1 < sd.size()) ? std::min(sd[k + 1], upper) : upper;
      if (sd[k] < window && !first_below) break;
      gaps.emplace_back(hi - sd[k], 0.5 * (sd[k] + hi));
      first_below = false;
    }
    if (gaps.empty()) return {upper};
    std::vector<double> out{gaps.front().second};  // topmost
    std::stable_sort(gaps.begin(), gaps.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [w, mid] : gaps) {
      if (out.size() >= 5) break;
      if (std::find(out.begin(), out.end(), mid) == out.end()) out.push_back(mid);
    }
    return out;
  }

  /// Move center `l` away from center `p` by angle gamma, keeping its radius;
  /// commits only when patch criteria, neighbor protection and the pair's
  /// disjointness all hold at the new position.
  bool try_recenter(std::size_t l, std::size_t p, double gamma) {
    const auto& dl = drafts_[l];
    const Eigen::Vector3d cl = dl.center.coords();
    const Eigen::Vector3d cp = drafts_[p].center.coords();
    Eigen::Vector3d toward = cp - cp.dot(cl) * cl;
    const double tn = toward.norm();
    if (tn < 1e-12) return false;
    toward /= tn;
    const Eigen::Vector3d moved =
        std::cos(gamma) * cl - std::sin(gamma) * toward;
    const SpherePoint new_center(dl.center.dim(), moved);

    PatchDraft cand(new_center);
    cand.radius = dl.radius;
    cand.dist.resize(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j) {
      cand.dist[static_cast<std::size_t>(j)] = geodesic_distance(new_center, nodes_[j]);
    }
    cand.sorted_dist = cand.dist;
    std::sort(cand.sorted_dist.begin(), cand.sorted_dist.end());
    cand.radius = snap_down(cand.sorted_dist, cand.radius);
    cand.rebuild_membership();
    if (static_cast<int>(cand.indices.size()) < std::min(params_.target_patch_size, n_)) {
      return false;
    }
    if (!determining_set_check(chart_of(new_center, nodes_, cand.indices), dim_,
                               params_.determining_order)
             .pass) {
      return false;
    }
    // The pair itself must come apart.
    if (geodesic_distance(new_center, drafts_[p].center) <
        cand.radius + drafts_[p].radius) {
      return false;
    }
    // Every other overlap of the moved patch must pass afterwards, whether it
    // existed before or is newly created by the move.
    for (std::size_t q = 0; q < drafts_.size(); ++q) {
      if (q == l || q == p) continue;
      const double cd = geodesic_distance(new_center, drafts_[q].center);
      if (cd >= cand.radius + drafts_[q].radius) continue;
      const auto inter = sorted_intersection(cand.indices, drafts_[q].indices);
      if (inter.empty()) continue;
      const bool ok =
          determining_set_check(chart_of(new_center, nodes_, inter), dim_,
                                params_.determining_order)
              .pass &&
          determining_set_check(chart_of(drafts_[q].center, nodes_, inter), dim_,
                                params_.determining_order)
              .pass;
      if (!ok) return false;
    }
    for (int j : drafts_[l].indices) --mult_[static_cast<std::size_t>(j)];
    drafts_[l].center = new_center;
    drafts_[l].radius = cand.radius;
    drafts_[l].dist = std::move(cand.dist);
    drafts_[l].sorted_dist = std::move(cand.sorted_dist);
    drafts_[l].indices = std::move(cand.indices);
    for (int j : drafts_[l].indices) ++mult_[static_cast<std::size_t>(j)];
    return true;
  }

  std::vector<PatchDraft>& drafts_;
  const NodeSet& nodes_;
  ManifoldDim dim_;
  const AtlasParams& params_;
  int n_;
  std::vector<int> mult_;
  RepairDebug* debug_ = nullptr;
  bool record_ = false;
};

}  // namespace detail

/// Builds the overlapping cap cover.  Centers are a coarse Fibonacci set of
/// m = ceil(n / nu*) points; each radius starts at beta times a coarse fill
/// estimate and grows geometrically until the patch holds nu* nodes and its
/// chart points pass the determining-set check at the configured order.
/// Radii then grow further, pairwise, until every nonempty overlap passes the
/// same check (the computable proxy for significant patch overlap).  All
/// radii must stay below pi/2; with a single patch the cap is relaxed to just
/// below the chart singularity.
inline Atlas build_atlas(const NodeSet& nodes, const AtlasParams& params,
                         detail::RepairDebug* repair_debug = nullptr) {
  const ManifoldDim dim = nodes.dim();
  const int n = nodes.size();
  const int min_pts = detail::monomial_count(dim, params.determining_order);
  if (params.target_patch_size < min_pts) {
    throw InvalidArgument(
        "target patch size " + std::to_string(params.target_patch_size) +
        " is below the determining-set size " + std::to_string(min_pts) +
        " for order " + std::to_string(params.determining_order));
  }
  if (!(params.overlap_factor > 1.0)) {
    throw InvalidArgument("overlap factor beta must exceed 1");
  }

  const int m = (n + params.target_patch_size - 1) / params.target_patch_size;
  std::vector<detail::PatchDraft> drafts;

  if (m == 1) {
    // Classical square-system mode: one patch must hold every node.
    std::vector<SpherePoint> candidates;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j = 0; j < n; ++j) mean += nodes[j].coords();
    if (mean.norm() > 1e-8 * n) candidates.emplace_back(dim, mean);
    if (n >= 2) {
      const Eigen::Vector3d mid = nodes[0].coords() + nodes[1].coords();
      if (mid.norm() > 1e-8) candidates.emplace_back(dim, mid);
    }
    candidates.push_back(nodes[0]);

    const double cap = std::numbers::pi - 0.1;
    bool placed = false;
    for (const auto& c : candidates) {
      double maxd = 0.0;
      for (int j = 0; j < n; ++j) maxd = std::max(maxd, geodesic_distance(c, nodes[j]));
      if (maxd < cap - 0.01) {
        detail::PatchDraft d(c);
        d.radius = std::min(maxd + std::max(0.05 * maxd, 0.02), cap);
        drafts.push_back(std::move(d));
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw AtlasConstructionError(
          "single-patch cover impossible: nodes spread too close to a full hemisphere pair", 0);
    }
  } else {
    const NodeSet centers = fibonacci_nodes(m, dim);
    const double rho0 =
        params.overlap_factor * detail::coarse_fill_constant(dim) *
        std::pow(static_cast<double>(m), -1.0 / dim.intrinsic());
    for (int l = 0; l < m; ++l) {
      detail::PatchDraft d(centers[l]);
      d.radius = rho0;
      drafts.push_back(std::move(d));
    }
  }

  const double cap = (m == 1) ? std::numbers::pi - 0.09
                              : 0.5 * std::numbers::pi;

  const auto establish_patch = [&](detail::PatchDraft& d, int label, int auto_size) {
    d.dist.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) d.dist[static_cast<std::size_t>(j)] = geodesic_distance(d.center, nodes[j]);
    d.sorted_dist = d.dist;
    std::sort(d.sorted_dist.begin(), d.sorted_dist.end());
    if (d.radius <= 0.0) {
      // Start just past the auto_size-th nearest node.
      const std::size_t k = static_cast<std::size_t>(std::min(auto_size, n)) - 1;
      d.radius = 1.02 * d.sorted_dist[k];
    }
    d.radius = std::min(d.radius, 0.999 * cap);

    bool ok = false;
    for (int step = 0; step <= params.max_growth_steps; ++step) {
      d.rebuild_membership();
      if (static_cast<int>(d.indices.size()) >= std::min(params.target_patch_size, n)) {
        const auto chart = detail::chart_of(d.center, nodes, d.indices);
        if (determining_set_check(chart, dim, params.determining_order).pass) {
          ok = true;
          break;
        }
      }
      if (step == params.max_growth_steps) break;
      d.radius *= params.growth_factor;
      ++d.growth_steps;
      if (d.radius >= cap) {
        throw AtlasConstructionError(
            "patch " + std::to_string(label) + " hit the radius cap while growing",
            label);
      }
    }
    if (!ok) {
      throw AtlasConstructionError(
          "patch " + std::to_string(label) +
              " cannot satisfy size/determining criteria within the growth budget",
          label);
    }
    d.radius = detail::snap_radius(d.sorted_dist, d.radius, cap);
    d.rebuild_membership();
  };

  for (std::size_t l = 0; l < drafts.size(); ++l) {
    establish_patch(drafts[l], static_cast<int>(l), params.target_patch_size);
  }

  // Pairwise overlap repair.  A cap pair that intersects must carry a
  // determining overlap set in both charts.  The center-distance spectrum is
  // essentially continuous, so some pairs always land near the kissing
  // distance with lenses too thin to hold a determining set; such a pair is
  // separated by shrinking one or both caps to just below the kissing
  // distance.  A shrink is committed only when the cap keeps its own
  // criteria and no currently passing overlap of the cap is broken, so the
  // failing-pair count decreases monotonically.  Caps never grow here; nodes
  // orphaned by the shrinks get dedicated caps centered on them, which sit
  // deep inside their hosts and therefore overlap them determiningly.
  const int max_deletions = std::max(4, 2 * m);
  int deletions = 0;
  for (int pass = 0; pass < 12; ++pass) {
    detail::OverlapRepair repair(drafts, nodes, dim, params, n);
    repair.set_debug(pass == 11 ? repair_debug : nullptr);
    repair.run();

    // Caps wedged in unresolved pairs are removed outright; the nodes they
    // alone covered get fresh caps below.
    std::vector<std::size_t> doomed = repair.wedged_patches();
    if (deletions + static_cast<int>(doomed.size()) > max_deletions) {
      doomed.resize(static_cast<std::size_t>(
          std::max(0, max_deletions - deletions)));
    }
    const std::vector<int> orphans = repair.orphans();
#ifdef SPHEREFD_ATLAS_TRACE
    std::fprintf(stderr, "[atlas] pass=%d drafts=%zu doomed=%zu orphans=%zu\n", pass,
                 drafts.size(), doomed.size(), orphans.size());
#endif
    if (doomed.empty() && orphans.empty()) break;
    if (pass == 11) break;  // leave the final coverage check to report

    deletions += static_cast<int>(doomed.size());
    for (auto it = doomed.rbegin(); it != doomed.rend(); ++it) {
      drafts.erase(drafts.begin() + static_cast<std::ptrdiff_t>(*it));
    }
    std::vector<int> covered_by(static_cast<std::size_t>(n), 0);
    for (const auto& d : drafts) {
      for (int j : d.indices) ++covered_by[static_cast<std::size_t>(j)];
    }
    // Replacement size cycles with the pass so that a deleted cap is not
    // recreated identically, which would repeat the same wedge forever.
    const int replacement_size =
        std::min(n, params.target_patch_size * (3 + pass % 3) / 2);
    for (int j = 0; j < n; ++j) {
      if (covered_by[static_cast<std::size_t>(j)] > 0) continue;
      detail::PatchDraft d(nodes[j]);
      establish_patch(d, static_cast<int>(drafts.size()), replacement_size);
      for (int c2 : d.indices) ++covered_by[static_cast<std::size_t>(c2)];
      drafts.push_back(std::move(d));
    }
  }

  // Exhaustive coverage check (recomputed from final memberships).
  std::vector<int> multiplicity(static_cast<std::size_t>(n), 0);
  for (const auto& d : drafts) {
    for (int j : d.indices) ++multiplicity[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < n; ++j) {
    if (multiplicity[static_cast<std::size_t>(j)] == 0) {
      int nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < drafts.size(); ++l) {
        if (drafts[l].dist[static_cast<std::size_t>(j)] < best) {
          best = drafts[l].dist[static_cast<std::size_t>(j)];
          nearest = static_cast<int>(l);
        }
      }
      throw AtlasConstructionError(
          "node " + std::to_string(j) + " is not covered by any patch (nearest patch " +
              std::to_string(nearest) + ")",
          nearest);
    }
  }

#ifdef SPHEREFD_ATLAS_TRACE
  {
    int fail2 = 0, tot2 = 0;
    for (std::size_t l = 0; l < drafts.size(); ++l) {
      for (std::size_t p = l + 1; p < drafts.size(); ++p) {
        if (geodesic_distance(drafts[l].center, drafts[p].center) >=
            drafts[l].radius + drafts[p].radius) continue;
        const auto inter = detail::sorted_intersection(drafts[l].indices, drafts[p].indices);
        if (inter.empty()) continue;
        ++tot2;
        const bool ok =
            determining_set_check(detail::chart_of(drafts[l].center, nodes, inter), dim,
                                  params.determining_order).pass &&
            determining_set_check(detail::chart_of(drafts[p].center, nodes, inter), dim,
                                  params.determining_order).pass;
        if (!ok) ++fail2;
      }
    }
    std::fprintf(stderr, "[atlas] final drafts check: %d/%d failing\n", fail2, tot2);
  }
#endif
  Atlas atlas{dim, {}};
  atlas.patches.reserve(drafts.size());
  for (auto& d : drafts) {
    auto chart = detail::chart_of(d.center, nodes, d.indices);
    Patch patch{d.center, d.radius, std::move(d.indices), std::move(chart)};
    atlas.patches.push_back(std::move(patch));
  }
  return atlas;
}

inline Atlas build_atlas(const NodeSet& nodes, int target_patch_size,
                         double overlap_factor) {
  AtlasParams params;
  params.target_patch_size = target_patch_size;
  params.overlap_factor = overlap_factor;
  return build_atlas(nodes, params);
}

/// Covering number mu_A: the largest number of caps (itself included) meeting
/// any one cap.  Caps meet iff their center distance is below the radius sum.
inline int covering_number(const Atlas& atlas) {
  int mu = 0;
  for (const auto& a : atlas.patches) {
    int count = 0;
    for (const auto& b : atlas.patches) {
      if (geodesic_distance(a.center, b.center) < a.radius + b.radius) ++count;
    }
    mu = std::max(mu, count);
  }
  return mu;
}

/// Global cover statistics. `delta` is the atlas-aware separation distance:
/// the per-patch minimum of chart distance to the cap boundary and half the
/// minimum pairwise chart distance, minimized over patches.
struct AtlasStats {
  double h_A = 0.0;
  double delta = 0.0;
  double quasi_uniformity = std::numeric_limits<double>::infinity();  // q = h_A / delta
  int covering = 0;                                                   // mu_A
  int max_patch_size = 0;                                             // nu_{X,A}
  bool duplicate_nodes = false;
};

inline AtlasStats atlas_stats(const Atlas& atlas) {
  AtlasStats s;
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& patch : atlas.patches) {
    s.h_A = std::max(s.h_A, patch.chart_diameter());
    s.max_patch_size = std::max(s.max_patch_size, patch.size());
    for (std::size_t i = 0; i < patch.chart_points.size(); ++i) {
      delta = std::min(delta, patch.radius - patch.chart_points[i].norm());
      for (std::size_t j = i + 1; j < patch.chart_points.size(); ++j) {
        const double pd = (patch.chart_points[i] - patch.chart_points[j]).norm();
        if (pd < detail::kDuplicateTol) s.duplicate_nodes = true;
        delta = std::min(delta, 0.5 * pd);
      }
    }
  }
  s.covering = covering_number(atlas);
  s.delta = s.duplicate_nodes ? 0.0 : std::max(delta, 0.0);
  s.quasi_uniformity = (s.delta > 0.0)
                           ? s.h_A / s.delta
                           : std::numeric_limits<double>::infinity();
  return s;
}

/// Per-patch diagnostic block of atlas_diagnostics.
struct PatchReport {
  int index = 0;
  int n_nodes = 0;
  double radius = 0.0;
  double chart_diameter = 0.0;
  DeterminingCheck own_check;
  std::vector<std::pair<int, DeterminingCheck>> overlap_checks;  // neighbor -> check
  int sliver_neighbors = 0;     // cap intersections that share no node
  double lebesgue_bound = 0.0;  // max over own/overlap subsets; 0 when sampling disabled
  double gram_cond = -1.0;      // -1 when no kernel was supplied
};

struct AtlasReport {
  int n = 0;
  int patch_count = 0;
  int determining_order = 0;
  AtlasStats stats;
  bool coverage_complete = false;
  bool all_checks_pass = false;
  double max_lebesgue_bound = 0.0;
  std::vector<PatchReport> patches;
};

/// Assumption diagnostics: per-patch determining checks (own nodes and every
/// nonempty pairwise overlap, in this patch's chart), sampled Lebesgue
/// bounds, optional kernel Gram conditioning, and the global cover
/// statistics.  Failures are reported, never thrown.
inline AtlasReport atlas_diagnostics(const Atlas& atlas, const NodeSet& nodes,
                                     int order,
                                     const ZonalProfile* psi = nullptr,
                                     int lebesgue_samples = 256) {
  AtlasReport report;
  report.n = nodes.size();
  report.patch_count = atlas.patch_count();
  report.determining_order = order;
  report.stats = atlas_stats(atlas);

  std::vector<int> multiplicity(static_cast<std::size_t>(nodes.size()), 0);
  bool all_pass = true;

  for (int l = 0; l < atlas.patch_count(); ++l) {
    const Patch& patch = atlas.patches[static_cast<std::size_t>(l)];
    PatchReport pr;
    pr.index = l;
    pr.n_nodes = patch.size();
    pr.radius = patch.radius;
    pr.chart_diameter = patch.chart_diameter();
    for (int j : patch.indices) ++multiplicity[static_cast<std::size_t>(j)];

    pr.own_check = determining_set_check(patch.chart_points, atlas.dim, order);
    all_pass = all_pass && pr.own_check.pass;

    std::vector<int> all_positions(patch.indices.size());
    for (std::size_t i = 0; i < all_positions.size(); ++i) all_positions[i] = static_cast<int>(i);
    if (lebesgue_samples > 0 && pr.own_check.pass) {
      pr.lebesgue_bound = lebesgue_upper_bound(patch, atlas.dim, all_positions,
                                               order, lebesgue_samples);
    }

    for (int p = 0; p < atlas.patch_count(); ++p) {
      if (p == l) continue;
      const Patch& other = atlas.patches[static_cast<std::size_t>(p)];
      if (geodesic_distance(patch.center, other.center) >= patch.radius + other.radius) continue;
      const auto inter = detail::sorted_intersection(patch.indices, other.indices);
      if (inter.empty()) {
        // Caps meet in a node-free sliver: there is no overlap point set to
        // test, only the covering number is affected.
        ++pr.sliver_neighbors;
        continue;
      }
      std::vector<int> positions;
      positions.reserve(inter.size());
      for (int j : inter) {
        const auto it = std::lower_bound(patch.indices.begin(), patch.indices.end(), j);
        positions.push_back(static_cast<int>(it - patch.indices.begin()));
      }
      std::vector<ChartPoint> overlap_chart;
      overlap_chart.reserve(positions.size());
      for (int pos : positions) overlap_chart.push_back(patch.chart_points[static_cast<std::size_t>(pos)]);
      DeterminingCheck check = determining_set_check(overlap_chart, atlas.dim, order);
      all_pass = all_pass && check.pass;
      if (lebesgue_samples > 0 && check.pass) {
        pr.lebesgue_bound = std::max(
            pr.lebesgue_bound,
            lebesgue_upper_bound(patch, atlas.dim, positions, order, lebesgue_samples));
      }
      pr.overlap_checks.emplace_back(p, check);
    }

    if (psi != nullptr) {
      std::vector<SpherePoint> pts;
      pts.reserve(patch.indices.size());
      for (int j : patch.indices) pts.push_back(nodes[j]);
      const Eigen::MatrixXd K = gram(pts, *psi);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
      const double lo = eig.eigenvalues()(0);
      const double hi = eig.eigenvalues()(eig.eigenvalues().size() - 1);
      pr.gram_cond = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
    }

    report.max_lebesgue_bound = std::max(report.max_lebesgue_bound, pr.lebesgue_bound);
    report.patches.push_back(std::move(pr));
  }

  report.coverage_complete =
      std::all_of(multiplicity.begin(), multiplicity.end(), [](int c) { return c > 0; });
  report.all_checks_pass = all_pass && report.coverage_complete;
  return report;
}

}  // namespace spherefd
