#include "regrec/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

namespace regrec::geometry {

namespace {

constexpr double kHorizonEps = 1e-12;
constexpr double kDetEps = 1e-12;
constexpr long double kPivotRatioWarn = 1e10L;

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

void check_configuration(std::span<const Point, 4> pts, const char* which) {
  double scale = 0.0;
  for (const Point& p : pts)
    for (const Point& q : pts) scale = std::max(scale, dist(p, q));
  if (!(scale > 0.0)) throw DegenerateError(std::string(which) + ": all points coincide");
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      if (dist(pts[i], pts[j]) <= 1e-12 * scale)
        throw DegenerateError(std::string(which) + ": duplicate points");
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      for (std::size_t k = j + 1; k < 4; ++k)
        if (std::abs(cross(pts[i], pts[j], pts[k])) <= 1e-10 * scale * scale)
          throw DegenerateError(std::string(which) + ": three points are collinear");
}

// Similarity taking the points to zero centroid and mean distance sqrt(2).
struct Normalizer {
  long double cx = 0, cy = 0, s = 1;
  explicit Normalizer(std::span<const Point, 4> pts) {
    for (const Point& p : pts) {
      cx += p.x;
      cy += p.y;
    }
    cx /= 4;
    cy /= 4;
    long double mean = 0;
    for (const Point& p : pts) mean += std::hypot(static_cast<long double>(p.x) - cx, static_cast<long double>(p.y) - cy);
    mean /= 4;
    s = std::numbers::sqrt2_v<long double> / mean;
  }
  std::array<long double, 2> operator()(Point p) const { return {(p.x - cx) * s, (p.y - cy) * s}; }
};

using Mat3L = std::array<long double, 9>;

Mat3L mul(const Mat3L& a, const Mat3L& b) {
  Mat3L r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return r;
}

// Solves A x = b in place for an 8x8 system; returns false if singular.
bool solve8(std::array<std::array<long double, 9>, 8>& aug, std::array<long double, 8>& x) {
  long double max_pivot = 0, min_pivot = std::numeric_limits<long double>::max();
  for (int col = 0; col < 8; ++col) {
    int best = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::fabs(aug[r][col]) > std::fabs(aug[best][col])) best = r;
    long double pivot = std::fabs(aug[best][col]);
    if (pivot < 1e-300L) return false;
    max_pivot = std::max(max_pivot, pivot);
    min_pivot = std::min(min_pivot, pivot);
    std::swap(aug[col], aug[best]);
    for (int r = col + 1; r < 8; ++r) {
      long double f = aug[r][col] / aug[col][col];
      if (f == 0) continue;
      for (int c = col; c < 9; ++c) aug[r][c] -= f * aug[col][c];
    }
  }
  if (max_pivot / min_pivot > kPivotRatioWarn)
    spdlog::warn("homography: ill-conditioned system (pivot ratio {:.3g})", static_cast<double>(max_pivot / min_pivot));
  for (int r = 7; r >= 0; --r) {
    long double s = aug[r][8];
    for (int c = r + 1; c < 8; ++c) s -= aug[r][c] * x[c];
    x[r] = s / aug[r][r];
  }
  return true;
}

}  // namespace

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography::Homography(const std::array<double, 9>& m) : m_(m) {
  if (std::abs(m_[8]) < kDetEps) throw DegenerateError("homography: m[2][2] is zero, cannot normalize");
  double s = m_[8];
  for (double& v : m_) v /= s;
  m_[8] = 1.0;
  if (!(std::abs(determinant()) > kDetEps)) throw DegenerateError("homography: matrix is singular");
}

Homography Homography::translation(double dx, double dy) { return Homography({1, 0, dx, 0, 1, dy, 0, 0, 1}); }

double Homography::determinant() const {
  const auto& m = m_;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
  const auto& m = m_;
  std::array<double, 9> adj{m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
                            m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
                            m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
  return Homography(adj);  // the determinant cancels in the normalization
}

Homography Homography::compose(const Homography& first) const {
  std::array<double, 9> r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i * 3 + j] += m_[i * 3 + k] * first.m_[k * 3 + j];
  return Homography(r);
}

Homography estimate_homography(std::span<const Point, 4> src, std::span<const Point, 4> dst) {
  check_configuration(src, "source");
  check_configuration(dst, "destination");
  Normalizer ns(src), nd(dst);

  // h = (h0..h7, 1): for each pair, u = (h0 x + h1 y + h2) / (h6 x + h7 y + 1), same for v.
  std::array<std::array<long double, 9>, 8> aug{};
  for (int i = 0; i < 4; ++i) {
    auto [x, y] = ns(src[i]);
    auto [u, v] = nd(dst[i]);
    aug[2 * i] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
    aug[2 * i + 1] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
  }
  std::array<long double, 8> h{};
  if (!solve8(aug, h)) throw DegenerateError("homography: singular linear system");
  Mat3L hn{h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1};

  // Undo normalization: H = Td^-1 * Hn * Ts.
  Mat3L ts{ns.s, 0, -ns.s * ns.cx, 0, ns.s, -ns.s * ns.cy, 0, 0, 1};
  Mat3L td_inv{1 / nd.s, 0, nd.cx, 0, 1 / nd.s, nd.cy, 0, 0, 1};
  Mat3L full = mul(td_inv, mul(hn, ts));
  std::array<double, 9> out{};
  for (int i = 0; i < 9; ++i) out[i] = static_cast<double>(full[i] / full[8]);
  return Homography(out);
}

Point apply_point(const Homography& h, Point p) {
  const auto& m = h.matrix();
  double w = m[6] * p.x + m[7] * p.y + m[8];
  if (std::abs(w) < kHorizonEps) throw DegenerateError("apply_point: point maps to infinity");
  return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Box apply_box(const Homography& h, const Box& b) {
  Point tl = apply_point(h, {b.x_min, b.y_min});
  Point tr = apply_point(h, {b.x_max, b.y_min});
  Point bl = apply_point(h, {b.x_min, b.y_max});
  Point br = apply_point(h, {b.x_max, b.y_max});
  return {(tl.x + bl.x) / 2, (tl.y + tr.y) / 2, (tr.x + br.x) / 2, (bl.y + br.y) / 2, b.confidence};
}

DeskewTransforms deskew_transforms(const OpeningKeypoints& kp, double /*width*/, double /*height*/) {
  double lw = (dist(kp.a, kp.b) + dist(kp.d, kp.e)) / 2;
  double lh = (dist(kp.a, kp.d) + dist(kp.b, kp.e)) / 2;
  double rw = (dist(kp.b, kp.c) + dist(kp.e, kp.f)) / 2;
  double rh = (dist(kp.b, kp.e) + dist(kp.c, kp.f)) / 2;
  const double x0 = kp.a.x, y0 = kp.a.y;

  std::array<Point, 4> lsrc{kp.a, kp.b, kp.e, kp.d};
  std::array<Point, 4> ldst{Point{x0, y0}, Point{x0 + lw, y0}, Point{x0 + lw, y0 + lh}, Point{x0, y0 + lh}};
  std::array<Point, 4> rsrc{kp.b, kp.c, kp.f, kp.e};
  std::array<Point, 4> rdst{Point{x0 + lw, y0}, Point{x0 + lw + rw, y0}, Point{x0 + lw + rw, y0 + rh},
                            Point{x0 + lw, y0 + rh}};
  return {estimate_homography(lsrc, ldst), estimate_homography(rsrc, rdst)};
}

PageSide OpeningDeskew::SideFn::operator()(Point p) const {
  if (kp) {
    double c = cross(kp->b, kp->e, p);
    return c > 0.0 ? PageSide::left : PageSide::right;
  }
  return p.x < mid_x ? PageSide::left : PageSide::right;
}

OpeningDeskew::OpeningDeskew(const DetectionDocument& doc)
    : doc_side_{doc.keypoints, static_cast<double>(doc.image_width) / 2.0},
      t_{Homography::identity(), Homography::identity()},
      center_x_(static_cast<double>(doc.image_width) / 2.0) {
  if (doc.keypoints) {
    t_ = deskew_transforms(*doc.keypoints, static_cast<double>(doc.image_width),
                           static_cast<double>(doc.image_height));
    center_x_ = apply_point(t_.left, doc.keypoints->b).x;
  }
}

Point OpeningDeskew::apply(Point original) const { return apply_point(transform(side_of(original)), original); }

Box OpeningDeskew::apply(const Box& b) const {
  PageSide tl = side_of({b.x_min, b.y_min}), bl = side_of({b.x_min, b.y_max});
  PageSide tr = side_of({b.x_max, b.y_min}), br = side_of({b.x_max, b.y_max});
  if (tl == tr && bl == br && tl == bl) return apply_box(transform(tl), b);
  if (tl == PageSide::left && bl == PageSide::left && tr == PageSide::right && br == PageSide::right) {
    Point ptl = apply_point(t_.left, {b.x_min, b.y_min});
    Point pbl = apply_point(t_.left, {b.x_min, b.y_max});
    Point ptr = apply_point(t_.right, {b.x_max, b.y_min});
    Point pbr = apply_point(t_.right, {b.x_max, b.y_max});
    return {(ptl.x + pbl.x) / 2, (ptl.y + ptr.y) / 2, (ptr.x + pbr.x) / 2, (pbl.y + pbr.y) / 2, b.confidence};
  }
  return apply_box(transform(side_of(b.center())), b);
}

PatchSpec make_patch_spec(Point p, double width, double height, double fraction) {
  double w = fraction * width;
  double h = fraction * height;
  double x0 = std::clamp(p.x - w / 2, 0.0, width - w);
  double y0 = std::clamp(p.y - h / 2, 0.0, height - h);
  return {Box{x0, y0, x0 + w, y0 + h, 1.0}, p.x > width / 2, p.y > height / 2};
}

Point to_patch_local(Point global, const PatchSpec& spec) {
  double x = global.x - spec.region.x_min;
  double y = global.y - spec.region.y_min;
  if (spec.mirror_horizontal) x = spec.region.width() - x;
  if (spec.mirror_vertical) y = spec.region.height() - y;
  return {x, y};
}

Point refine_keypoint(Point /*stage1*/, Point local, const PatchSpec& spec) {
  const double w = spec.region.width(), h = spec.region.height();
  if (!(local.x >= 0 && local.x <= w && local.y >= 0 && local.y <= h))
    throw OutOfRangeError("refine_keypoint: local point outside the patch");
  double x = spec.mirror_horizontal ? w - local.x : local.x;
  double y = spec.mirror_vertical ? h - local.y : local.y;
  return {spec.region.x_min + x, spec.region.y_min + y};
}

double edge_angle_from_vertical(Point top, Point bottom) {
  double dx = bottom.x - top.x;
  double dy = bottom.y - top.y;
  if (dx == 0.0 && dy == 0.0) throw DegenerateError("edge_angle_from_vertical: coincident points");
  if (dy < 0.0 || (dy == 0.0 && dx > 0.0)) {
    dx = -dx;
    dy = -dy;
  }
  return std::atan2(-dx, dy) * 180.0 / std::numbers::pi;
}

AngleStats angle_stats(std::span<const double> angles) {
  if (angles.empty()) throw Error("angle_stats: empty input");
  double mean = 0.0;
  for (double a : angles) mean += a;
  mean /= static_cast<double>(angles.size());
  if (angles.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double a : angles) ss += (a - mean) * (a - mean);
  return {mean, std::sqrt(ss / static_cast<double>(angles.size() - 1))};
}

std::array<double, 3> edge_angles(const OpeningKeypoints& kp) {
  return {edge_angle_from_vertical(kp.a, kp.d), edge_angle_from_vertical(kp.b, kp.e),
          edge_angle_from_vertical(kp.c, kp.f)};
}

OpeningKeypoints apply_keypoints(const Homography& left, const Homography& right, const OpeningKeypoints& kp) {
  return {apply_point(left, kp.a), apply_point(left, kp.b), apply_point(right, kp.c),
          apply_point(left, kp.d), apply_point(left, kp.e), apply_point(right, kp.f)};
}

}  // namespace regrec::geometry
