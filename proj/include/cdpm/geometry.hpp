#pragma once

// Planar four-tendon scaffold: kinematics and the tension-to-wrench map.
//
// The working plane is x-z. +z points from the over-tube toward the tissue.
// Poses, lengths and offsets are in mm, angles in rad, moments in N*mm.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cdpm/errors.hpp"

namespace cdpm {

inline constexpr int kTendons = 4;

using Vec2 = Eigen::Vector2d;     // (x, z)
using Vec4 = Eigen::Vector4d;     // one entry per tendon
using Wrench = Eigen::Vector3d;   // (fx, fz, moment about the tube origin)
using StructureMatrix = Eigen::Matrix<double, 3, kTendons>;

struct TubePose {
  double x = 0.0;    ///< transverse offset, mm
  double z = 0.0;    ///< axial advance toward the tissue, mm
  double phi = 0.0;  ///< pitch, rad

  friend bool operator==(const TubePose&, const TubePose&) = default;
};

struct CableLengths {
  Vec4 mm = Vec4::Zero();
};

struct TendonAngles {
  Vec4 theta = Vec4::Zero();
  Vec4 cos_theta = Vec4::Zero();           ///< unit_dir . contact_axis
  std::array<Vec2, kTendons> unit_dirs{};  ///< attachment -> anchor
};

struct ScaffoldGeometry {
  std::array<Vec2, kTendons> anchors{};
  std::array<Vec2, kTendons> collar_offsets{};  ///< body frame
  Vec2 tip_offset = Vec2::Zero();               ///< probe tip, body frame
  double tube_radius = 1.5;
  Vec2 contact_axis = Vec2(0.0, 1.0);
  double workspace_margin = 0.5;

  void validate() const {
    for (int i = 0; i < kTendons; ++i) {
      for (int j = i + 1; j < kTendons; ++j) {
        if ((anchors[i] - anchors[j]).norm() == 0.0) {
          throw ConfigError("scaffold anchors " + std::to_string(i + 1) + " and " +
                            std::to_string(j + 1) + " coincide");
        }
      }
    }
    if (!(tube_radius >= 0.0)) throw ConfigError("tube_radius must be >= 0");
    if (!(workspace_margin >= 0.0)) throw ConfigError("workspace margin must be >= 0");
    if (std::abs(contact_axis.norm() - 1.0) >= 1e-12) {
      throw ConfigError("contact_axis must have unit norm");
    }
  }
};

/// Dimensions of the default rectangular scaffold. Front anchors sit
/// `front_anchor_height` above the front collar, rear anchors sit
/// `rear_anchor_depth` below it, both at +/- `half_width`.
struct ScaffoldConfig {
  double half_width = 20.0;
  double front_anchor_height = 20.0;
  double rear_anchor_depth = 40.0;
  double collar_spacing = 20.0;
  double tube_outer_diameter = 3.0;
};

/// Tendons 1,2 are the front pair (anchors on the tissue side), 3,4 the rear pair.
/// Odd tendons anchor on the -x side.
inline ScaffoldGeometry default_geometry(const ScaffoldConfig& config = {}) {
  const double dims[] = {config.half_width, config.front_anchor_height, config.rear_anchor_depth,
                         config.collar_spacing, config.tube_outer_diameter};
  for (double d : dims) {
    if (!(d > 0.0)) throw ConfigError("scaffold dimensions must be positive");
  }
  if (config.rear_anchor_depth <= config.collar_spacing) {
    throw ConfigError("rear anchors must lie behind the rear collar");
  }
  ScaffoldGeometry g;
  const double w = config.half_width;
  g.anchors = {Vec2(-w, config.front_anchor_height), Vec2(w, config.front_anchor_height),
               Vec2(-w, -config.rear_anchor_depth), Vec2(w, -config.rear_anchor_depth)};
  g.collar_offsets = {Vec2(0.0, 0.0), Vec2(0.0, 0.0), Vec2(0.0, -config.collar_spacing),
                      Vec2(0.0, -config.collar_spacing)};
  g.tube_radius = config.tube_outer_diameter / 2.0;
  g.validate();
  return g;
}

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Eigen::Matrix2d rotation(double phi) {
  Eigen::Matrix2d r;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  r << c, -s, s, c;
  return r;
}

// Counter-clockwise convex hull (monotone chain).
inline std::vector<Vec2> convex_hull(std::array<Vec2, kTendons> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    const auto& p = pts[i];
    while (k >= t && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

/// World position of body-frame point `offset` at `pose`.
inline Vec2 body_point(const TubePose& pose, const Vec2& offset) {
  return Vec2(pose.x, pose.z) + detail::rotation(pose.phi) * offset;
}

inline std::array<Vec2, kTendons> attachment_points(const TubePose& pose,
                                                    const ScaffoldGeometry& geom) {
  std::array<Vec2, kTendons> p;
  for (int i = 0; i < kTendons; ++i) p[i] = body_point(pose, geom.collar_offsets[i]);
  return p;
}

/// Signed clearance (mm) of the worst attachment point from the anchor hull,
/// positive inside.
inline double workspace_clearance(const TubePose& pose, const ScaffoldGeometry& geom) {
  const auto hull = detail::convex_hull(geom.anchors);
  double clearance = std::numeric_limits<double>::infinity();
  for (const auto& p : attachment_points(pose, geom)) {
    for (std::size_t e = 0; e < hull.size(); ++e) {
      const Vec2& a = hull[e];
      const Vec2& b = hull[(e + 1) % hull.size()];
      clearance = std::min(clearance, detail::cross2(b - a, p - a) / (b - a).norm());
    }
  }
  return clearance;
}

inline bool in_workspace(const TubePose& pose, const ScaffoldGeometry& geom) {
  return std::isfinite(pose.x) && std::isfinite(pose.z) && std::isfinite(pose.phi) &&
         workspace_clearance(pose, geom) > geom.workspace_margin;
}

inline void require_workspace(const TubePose& pose, const ScaffoldGeometry& geom) {
  if (!in_workspace(pose, geom)) {
    throw OutOfWorkspaceError("pose (x=" + std::to_string(pose.x) + ", z=" +
                              std::to_string(pose.z) + ", phi=" + std::to_string(pose.phi) +
                              ") is outside the scaffold workspace");
  }
}

/// Cable lengths without the workspace check; used inside solvers that may
/// probe poses near the boundary.
inline Vec4 raw_cable_lengths(const TubePose& pose, const ScaffoldGeometry& geom) {
  Vec4 L;
  const auto p = attachment_points(pose, geom);
  for (int i = 0; i < kTendons; ++i) L[i] = (geom.anchors[i] - p[i]).norm();
  return L;
}

inline CableLengths inverse_kinematics(const TubePose& pose, const ScaffoldGeometry& geom) {
  require_workspace(pose, geom);
  return {raw_cable_lengths(pose, geom)};
}

inline TendonAngles tendon_angles(const TubePose& pose, const ScaffoldGeometry& geom) {
  require_workspace(pose, geom);
  TendonAngles out;
  const auto p = attachment_points(pose, geom);
  for (int i = 0; i < kTendons; ++i) {
    const Vec2 d = geom.anchors[i] - p[i];
    const double n = d.norm();
    if (n < 1e-12) {
      throw DegenerateGeometryError("tendon " + std::to_string(i + 1) + " has zero length");
    }
    out.unit_dirs[i] = d / n;
    out.cos_theta[i] = out.unit_dirs[i].dot(geom.contact_axis);
    out.theta[i] = std::acos(std::clamp(out.cos_theta[i], -1.0, 1.0));
  }
  return out;
}

/// Column i is the wrench a unit tension in tendon i applies to the tube:
/// [unit direction; moment about the tube origin]. W * T is the net cable wrench
/// and dL/dq = -W^T.
inline StructureMatrix structure_matrix_unchecked(const TubePose& pose,
                                                  const ScaffoldGeometry& geom) {
  StructureMatrix w;
  const Eigen::Matrix2d rot = detail::rotation(pose.phi);
  const Vec2 origin(pose.x, pose.z);
  for (int i = 0; i < kTendons; ++i) {
    const Vec2 r = rot * geom.collar_offsets[i];
    const Vec2 d = geom.anchors[i] - (origin + r);
    const double n = d.norm();
    if (n < 1e-12) {
      throw DegenerateGeometryError("tendon " + std::to_string(i + 1) + " has zero length");
    }
    const Vec2 u = d / n;
    w(0, i) = u.x();
    w(1, i) = u.y();
    w(2, i) = detail::cross2(r, u);
  }
  return w;
}

inline StructureMatrix structure_matrix(const TubePose& pose, const ScaffoldGeometry& geom) {
  require_workspace(pose, geom);
  return structure_matrix_unchecked(pose, geom);
}

struct ForwardKinematicsResult {
  TubePose pose;
  int iterations = 0;  ///< residual evaluations
};

/// Gauss-Newton on the inverse-kinematics residual.
inline ForwardKinematicsResult solve_forward_kinematics(const CableLengths& lengths,
                                                        const ScaffoldGeometry& geom,
                                                        const TubePose& initial_guess,
                                                        int max_iterations = 100) {
  if ((lengths.mm.array() <= 0.0).any()) {
    throw OutOfWorkspaceError("cable lengths must be positive");
  }
  TubePose q = initial_guess;
  for (int it = 1; it <= max_iterations; ++it) {
    const Vec4 r = raw_cable_lengths(q, geom) - lengths.mm;
    if (r.lpNorm<Eigen::Infinity>() < 1e-11) {
      require_workspace(q, geom);
      return {q, it};
    }
    const Eigen::Matrix<double, kTendons, 3> jac = -structure_matrix_unchecked(q, geom).transpose();
    const Eigen::Vector3d step = jac.colPivHouseholderQr().solve(-r);
    q.x += step[0];
    q.z += step[1];
    q.phi += step[2];
    if (!std::isfinite(q.x) || !std::isfinite(q.z) || !std::isfinite(q.phi)) break;
    if (step.lpNorm<Eigen::Infinity>() < 1e-15) {
      // Stationary but not a root: the lengths are not realisable.
      throw OutOfWorkspaceError("cable lengths are not achievable by any pose");
    }
  }
  if (!in_workspace(q, geom)) {
    throw OutOfWorkspaceError("forward kinematics left the workspace");
  }
  throw SolverError("forward kinematics did not converge in " + std::to_string(max_iterations) +
                    " iterations");
}

inline TubePose forward_kinematics(const CableLengths& lengths, const ScaffoldGeometry& geom,
                                   const TubePose& initial_guess) {
  return solve_forward_kinematics(lengths, geom, initial_guess).pose;
}

/// Least-squares pose for lengths that need not be exactly consistent, such as
/// lengths inferred from noisy tension readings. Gauss-Newton until the step
/// stalls; consistent lengths give the forward-kinematics solution.
inline TubePose fit_pose(const CableLengths& lengths, const ScaffoldGeometry& geom,
                         const TubePose& initial_guess, int max_iterations = 50) {
  TubePose q = initial_guess;
  for (int it = 0; it < max_iterations; ++it) {
    const Vec4 r = raw_cable_lengths(q, geom) - lengths.mm;
    const Eigen::Matrix<double, kTendons, 3> jac = -structure_matrix_unchecked(q, geom).transpose();
    const Eigen::Vector3d step = jac.colPivHouseholderQr().solve(-r);
    q.x += step[0];
    q.z += step[1];
    q.phi += step[2];
    if (!std::isfinite(q.x) || !std::isfinite(q.z) || !std::isfinite(q.phi)) {
      throw SolverError("pose fit diverged");
    }
    if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  require_workspace(q, geom);
  return q;
}

}  // namespace cdpm
