#pragma once

// Projective de-skew of an opening from its six keypoints, and the
// patch arithmetic used by the two-stage keypoint refinement.

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "regrec/interchange.hpp"

namespace regrec::geometry {

class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// 3x3 projective transform, row-major, normalized so that m[8] == 1.
class Homography {
 public:
  Homography();  // identity
  /// Normalizes by m[8]; throws DegenerateError if m[8] or the determinant vanish.
  explicit Homography(const std::array<double, 9>& m);

  static Homography identity() { return {}; }
  static Homography translation(double dx, double dy);

  double operator()(int row, int col) const { return m_[row * 3 + col]; }
  const std::array<double, 9>& matrix() const { return m_; }
  double determinant() const;
  Homography inverse() const;
  /// (*this) after `first`: p -> this(first(p)).
  Homography compose(const Homography& first) const;

 private:
  std::array<double, 9> m_;
};

/// Maps src[i] onto dst[i] by solving the 8x8 direct linear system with
/// partial pivoting on Hartley-normalized coordinates.
Homography estimate_homography(std::span<const Point, 4> src, std::span<const Point, 4> dst);

/// Throws DegenerateError when the point lies on the horizon line (|w| < 1e-12).
Point apply_point(const Homography& h, Point p);

/// Maps the four corners and returns the box spanned by the mean of each edge's
/// two mapped endpoints. Exact for maps that keep the box axis-aligned.
Box apply_box(const Homography& h, const Box& b);

struct DeskewTransforms {
  Homography left;
  Homography right;
};

/// Left page A-B-E-D and right page B-C-F-E onto abutting axis-aligned
/// rectangles. Each rectangle's width is the mean of its top and bottom edge
/// lengths and its height the mean of its side edge lengths. The left page
/// keeps A in place; the right page starts at the left page's B-E edge.
DeskewTransforms deskew_transforms(const OpeningKeypoints& kp, double width, double height);

/// De-skew for one opening; identity on both sides when keypoints are absent.
class OpeningDeskew {
 public:
  explicit OpeningDeskew(const DetectionDocument& doc);

  PageSide side_of(Point original) const { return doc_side_(original); }
  Point apply(Point original) const;
  /// Boxes are mapped with the transform of the side holding their center,
  /// except that a box straddling the center line maps each half separately.
  Box apply(const Box& original) const;
  const Homography& transform(PageSide side) const { return side == PageSide::left ? t_.left : t_.right; }
  /// x of the shared B-E edge (or image midline) in de-skewed space.
  double center_x() const { return center_x_; }

 private:
  struct SideFn {
    std::optional<OpeningKeypoints> kp;
    double mid_x;
    PageSide operator()(Point p) const;
  };
  SideFn doc_side_;
  DeskewTransforms t_;
  double center_x_;
};

struct PatchSpec {
  Box region;
  bool mirror_horizontal = false;  // flip across the vertical axis
  bool mirror_vertical = false;    // flip across the horizontal axis
  friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

/// Stage-II crop around a stage-I keypoint: fraction x width by fraction x
/// height, centered on p and shifted (not shrunk) to stay inside the image.
/// Right-half points mirror horizontally, lower-half points vertically, so the
/// target corner always appears top-left in the patch.
PatchSpec make_patch_spec(Point p, double width, double height, double fraction = 0.15);

/// Global point -> patch-local coordinates after mirroring.
Point to_patch_local(Point global, const PatchSpec& spec);

/// Patch-local (mirrored) -> global. `stage1` is the coarse estimate the patch
/// was built from. Throws OutOfRangeError if `local` lies outside the patch.
Point refine_keypoint(Point stage1, Point local, const PatchSpec& spec);

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// Signed angle of the segment from vertical, in degrees, in (-90, 90].
/// Positive when `bottom` lies left of `top`.
double edge_angle_from_vertical(Point top, Point bottom);

struct AngleStats {
  double mean = 0.0;
  double sd = 0.0;  // sample (n-1); 0 for a single value
};
AngleStats angle_stats(std::span<const double> angles);

/// Angles of the A-D, B-E and C-F edges.
std::array<double, 3> edge_angles(const OpeningKeypoints& kp);

OpeningKeypoints apply_keypoints(const Homography& left, const Homography& right, const OpeningKeypoints& kp);

}  // namespace regrec::geometry
