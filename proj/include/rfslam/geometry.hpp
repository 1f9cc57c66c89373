#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rfslam/common.hpp"

namespace rfslam {

using Vec2 = Eigen::Vector2d;

// Tolerance band (meters) for segment intersection tests, so grazing hits at
// floor-plan corners are not missed.
inline constexpr double kGeomTol = 1e-9;

/// Flat reflecting wall segment.
struct Surface {
  Vec2 a;
  Vec2 b;
  double reflection_amplitude;  // magnitude in (0, 1]

  Surface(const Vec2& a_in, const Vec2& b_in, double refl = 0.7)
      : a(a_in), b(b_in), reflection_amplitude(refl) {
    if ((b - a).norm() <= kGeomTol) {
      throw std::invalid_argument("Surface: endpoints coincide");
    }
    if (!(refl > 0.0) || refl > 1.0) {
      throw std::invalid_argument("Surface: reflection_amplitude must be in (0, 1]");
    }
  }
};

/// 2D floor plan: wall segments plus anchor (receiver) positions.
struct Environment {
  std::vector<Surface> surfaces;
  std::vector<Vec2> pa_positions;
};

enum class FeatureKind { Pa, Va };

/// One ground-truth propagation path: the anchor itself (line of sight) or a
/// mirror-image virtual anchor behind a wall.
struct Feature {
  Vec2 position;
  double path_length;
  FeatureKind kind;
  std::optional<std::size_t> surface;  // wall index for virtual anchors
};

using PaFeatures = std::vector<Feature>;
using FeatureTruth = std::vector<PaFeatures>;  // indexed by anchor

namespace detail {

inline double cross2(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

// Signed distance-scaled side of point p relative to the infinite line a-b.
inline double line_side(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  return cross2(d, p - a) / d.norm();
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp(d.dot(p - a) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

// True when wall s cuts the open interior of the leg from p0 to p1. Hits
// within kGeomTol of the leg endpoints do not count (legs start or end on
// walls); hits anywhere on the wall, endpoints included, do.
inline bool segment_blocks_leg(const Vec2& p0, const Vec2& p1, const Surface& s) {
  const Vec2 r = p1 - p0;
  const Vec2 w = s.b - s.a;
  const double rn = r.norm();
  const double wn = w.norm();
  if (rn <= kGeomTol) return false;
  const double denom = cross2(r, w);
  const double t_tol = kGeomTol / rn;
  const double u_tol = kGeomTol / wn;
  if (std::abs(denom) <= kGeomTol * rn * wn) {
    // Near parallel: blocked only if collinear and overlapping inside the leg.
    if (std::abs(line_side(s.a, p0, p1)) > kGeomTol) return false;
    double ua = r.dot(s.a - p0) / (rn * rn);
    double ub = r.dot(s.b - p0) / (rn * rn);
    if (ua > ub) std::swap(ua, ub);
    return ua < 1.0 - t_tol && ub > t_tol;
  }
  const double t = cross2(s.a - p0, w) / denom;
  const double u = cross2(s.a - p0, r) / denom;
  return t > t_tol && t < 1.0 - t_tol && u >= -u_tol && u <= 1.0 + u_tol;
}

}  // namespace detail

/// Reflection of p across the infinite line through s.
inline Vec2 mirror_point(const Vec2& p, const Surface& s) {
  const Vec2 d = (s.b - s.a).normalized();
  const Vec2 rel = p - s.a;
  const Vec2 foot = s.a + d * d.dot(rel);
  return 2.0 * foot - p;
}

/// True when any wall cuts the open interior of the segment a-b.
inline bool segment_obstructed(const Vec2& a, const Vec2& b, const Environment& env) {
  for (const Surface& s : env.surfaces) {
    if (detail::segment_blocks_leg(a, b, s)) return true;
  }
  return false;
}

struct SpecularPath {
  Vec2 reflection_point;
  double path_length;
};

/// Single-bounce specular path from agent to pa via wall s, or nothing when
/// the bounce misses the wall segment or either leg is obstructed. The path
/// length equals the distance from the agent to the mirror image of pa.
inline std::optional<SpecularPath> specular_path(const Vec2& agent, const Vec2& pa,
                                                 const Surface& s, const Environment& env) {
  const double side_agent = detail::line_side(agent, s.a, s.b);
  const double side_pa = detail::line_side(pa, s.a, s.b);
  // Degenerate (on the wall line) or opposite sides: no specular reflection.
  if (std::abs(side_agent) <= kGeomTol || std::abs(side_pa) <= kGeomTol) return std::nullopt;
  if (side_agent * side_pa < 0.0) return std::nullopt;

  const Vec2 image = mirror_point(pa, s);
  const Vec2 r = image - agent;
  const Vec2 w = s.b - s.a;
  const double denom = detail::cross2(r, w);
  if (std::abs(denom) <= kGeomTol * r.norm() * w.norm()) return std::nullopt;
  const double t = detail::cross2(s.a - agent, w) / denom;
  const double u = detail::cross2(s.a - agent, r) / denom;
  const double t_tol = kGeomTol / r.norm();
  const double u_tol = kGeomTol / w.norm();
  if (t <= t_tol || t >= 1.0 - t_tol) return std::nullopt;
  if (u < -u_tol || u > 1.0 + u_tol) return std::nullopt;

  const Vec2 bounce = agent + t * r;
  if (segment_obstructed(agent, bounce, env)) return std::nullopt;
  if (segment_obstructed(bounce, pa, env)) return std::nullopt;
  return SpecularPath{bounce, r.norm()};
}

/// Ground-truth feature set for every anchor at the given agent position:
/// the line-of-sight entry (dropped when a wall blocks it) followed by one
/// virtual anchor per wall with a valid unobstructed single-bounce path.
inline FeatureTruth ground_truth_features(const Environment& env, const Vec2& agent) {
  FeatureTruth truth;
  truth.reserve(env.pa_positions.size());
  for (const Vec2& pa : env.pa_positions) {
    PaFeatures features;
    if (!segment_obstructed(agent, pa, env)) {
      features.push_back(Feature{pa, (agent - pa).norm(), FeatureKind::Pa, std::nullopt});
    }
    for (std::size_t i = 0; i < env.surfaces.size(); ++i) {
      if (auto path = specular_path(agent, pa, env.surfaces[i], env)) {
        features.push_back(Feature{mirror_point(pa, env.surfaces[i]), path->path_length,
                                   FeatureKind::Va, i});
      }
    }
    truth.push_back(std::move(features));
  }
  return truth;
}

}  // namespace rfslam
