#include "regrec/gridrec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace regrec::gridrec {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Centroids of each cluster, in cluster-id order (which is ascending value order).
// Offsets from the first member are averaged, so equal values give that value exactly.
std::vector<std::pair<double, std::size_t>> centroids(std::span<const double> values, const std::vector<int>& labels) {
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
  std::vector<std::pair<double, std::size_t>> sums(static_cast<std::size_t>(n_clusters), {0.0, 0});
  std::vector<double> base(static_cast<std::size_t>(n_clusters), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (labels[i] == kNoise) continue;
    const auto k = static_cast<std::size_t>(labels[i]);
    auto& s = sums[k];
    if (s.second == 0) base[k] = values[i];
    s.first += values[i] - base[k];
    ++s.second;
  }
  for (std::size_t k = 0; k < sums.size(); ++k) sums[k].first = base[k] + sums[k].first / static_cast<double>(sums[k].second);
  return sums;
}

}  // namespace

BandPairingError::BandPairingError(Axis a, std::size_t starts, std::size_t ends)
    : Error(std::string(a == Axis::row ? "row" : "column") + " band pairing failed: " + std::to_string(starts) +
            " start clusters vs " + std::to_string(ends) + " end clusters"),
      axis(a),
      start_clusters(starts),
      end_clusters(ends) {}

std::size_t GridTable::detected_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const GridCell& c) { return c.provenance == Provenance::detected; }));
}

std::size_t GridTable::inferred_count() const { return cells.size() - detected_count(); }

std::vector<int> dbscan_1d(std::span<const double> values, double eps, std::size_t min_pts) {
  const std::size_t n = values.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = values[order[i]];

  // Neighborhoods are contiguous windows in sorted order.
  std::vector<char> core(n, 0);
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (std::abs(s[i] - s[lo]) > eps) ++lo;
    if (hi < i) hi = i;
    while (hi + 1 < n && std::abs(s[hi + 1] - s[i]) <= eps) ++hi;
    core[i] = (hi - lo + 1) >= min_pts;
  }

  // Consecutive cores within eps share a cluster.
  std::vector<int> sorted_label(n, kNoise);
  int next_id = 0;
  std::optional<std::size_t> prev_core;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    if (prev_core && std::abs(s[i] - s[*prev_core]) <= eps)
      sorted_label[i] = sorted_label[*prev_core];
    else
      sorted_label[i] = next_id++;
    prev_core = i;
  }

  // Border points join the reachable cluster discovered first (the left one).
  std::vector<std::optional<std::size_t>> left_core(n), right_core(n);
  for (std::size_t i = 0, last = n; i < n; ++i) {
    if (last != n) left_core[i] = last;
    if (core[i]) last = i;
  }
  for (std::size_t i = n, last = n; i-- > 0;) {
    if (last != n) right_core[i] = last;
    if (core[i]) last = i;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    if (left_core[i] && std::abs(s[i] - s[*left_core[i]]) <= eps)
      sorted_label[i] = sorted_label[*left_core[i]];
    else if (right_core[i] && std::abs(s[*right_core[i]] - s[i]) <= eps)
      sorted_label[i] = sorted_label[*right_core[i]];
  }

  for (std::size_t i = 0; i < n; ++i) labels[order[i]] = sorted_label[i];
  return labels;
}

double effective_eps(std::span<const Box> cells, Axis axis, const GridConfig& cfg) {
  const auto& explicit_eps = axis == Axis::row ? cfg.eps_row : cfg.eps_col;
  if (explicit_eps) {
    if (!(*explicit_eps > 0.0)) throw Error("grid: eps must be positive");
    return *explicit_eps;
  }
  std::vector<double> sizes;
  sizes.reserve(cells.size());
  for (const Box& b : cells) sizes.push_back(axis == Axis::row ? b.height() : b.width());
  double eps = cfg.auto_eps_factor * median(std::move(sizes));
  if (!(eps > 0.0)) throw Error("grid: cannot derive eps from empty cell list");
  return eps;
}

std::vector<Band> cluster_bands(std::span<const Box> cells, Axis axis, const GridConfig& cfg) {
  if (cells.empty()) throw Error("cluster_bands: no cells");
  if (cfg.min_pts < 1) throw Error("cluster_bands: min_pts must be >= 1");
  const double eps = effective_eps(cells, axis, cfg);
  const std::size_t min_pts = std::min(cfg.min_pts, cells.size());

  std::vector<double> starts, ends;
  for (const Box& b : cells) {
    starts.push_back(axis == Axis::row ? b.y_min : b.x_min);
    ends.push_back(axis == Axis::row ? b.y_max : b.x_max);
  }
  auto sc = centroids(starts, dbscan_1d(starts, eps, min_pts));
  auto ec = centroids(ends, dbscan_1d(ends, eps, min_pts));
  if (sc.size() != ec.size()) throw BandPairingError(axis, sc.size(), ec.size());

  std::vector<Band> bands;
  for (std::size_t i = 0; i < sc.size(); ++i) {
    if (!(sc[i].first < ec[i].first)) throw BandPairingError(axis, sc.size(), ec.size());
    bands.push_back({sc[i].first, ec[i].first, std::min(sc[i].second, ec[i].second)});
  }
  // Shared borders detected with jitter can overlap slightly; split the difference.
  for (std::size_t i = 0; i + 1 < bands.size(); ++i) {
    if (bands[i].end > bands[i + 1].start) {
      double mid = (bands[i].end + bands[i + 1].start) / 2.0;
      bands[i].end = mid;
      bands[i + 1].start = mid;
    }
  }
  for (const Band& b : bands)
    if (!(b.start < b.end)) throw BandPairingError(axis, sc.size(), ec.size());
  return bands;
}

GridTable complete_grid(const Box& table_box, std::span<const CellHypothesis> cells, const GridConfig& cfg) {
  if (cells.empty()) throw Error("complete_grid: no cells");
  std::vector<Box> boxes;
  boxes.reserve(cells.size());
  for (const auto& c : cells) boxes.push_back(c.box);

  GridTable grid;
  grid.table_box = table_box;
  grid.rows = cluster_bands(boxes, Axis::row, cfg);
  grid.cols = cluster_bands(boxes, Axis::col, cfg);
  const std::size_t nr = grid.rows.size(), nc = grid.cols.size();

  // Candidate slot per cell.
  std::vector<std::vector<std::size_t>> claims(nr * nc);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    Point ctr = boxes[i].center();
    std::optional<std::size_t> best;
    double best_overlap = -1.0;
    for (std::size_t r = 0; r < nr; ++r) {
      if (ctr.y < grid.rows[r].start || ctr.y > grid.rows[r].end) continue;
      for (std::size_t c = 0; c < nc; ++c) {
        if (ctr.x < grid.cols[c].start || ctr.x > grid.cols[c].end) continue;
        double ov = intersection_area(boxes[i], grid.slot_box(r, c));
        if (ov > best_overlap) {
          best_overlap = ov;
          best = r * nc + c;
        }
      }
    }
    if (best)
      claims[*best].push_back(i);
    else
      grid.residual.push_back({i, cells[i]});
  }

  grid.cells.resize(nr * nc);
  for (std::size_t slot = 0; slot < nr * nc; ++slot) {
    const std::size_t r = slot / nc, c = slot % nc;
    const Box sbox = grid.slot_box(r, c);
    auto& claim = claims[slot];
    if (claim.empty()) {
      CellHypothesis inferred;
      inferred.box = sbox;
      inferred.class_probs = {0.0, 0.0, 0.0, 1.0};
      grid.cells[slot] = GridCell{std::move(inferred), Provenance::inferred, std::nullopt};
      continue;
    }
    auto better = [&](std::size_t a, std::size_t b) {
      if (boxes[a].confidence != boxes[b].confidence) return boxes[a].confidence > boxes[b].confidence;
      double ia = iou(boxes[a], sbox), ib = iou(boxes[b], sbox);
      if (ia != ib) return ia > ib;
      return a < b;
    };
    std::size_t winner = *std::min_element(claim.begin(), claim.end(), better);
    grid.cells[slot] = GridCell{cells[winner], Provenance::detected, winner};
    for (std::size_t i : claim)
      if (i != winner) grid.residual.push_back({i, cells[i]});
  }
  std::sort(grid.residual.begin(), grid.residual.end(),
            [](const ResidualCell& a, const ResidualCell& b) { return a.source_index < b.source_index; });
  return grid;
}

namespace {

double median_col_width(const GridTable& a, const GridTable& b) {
  std::vector<double> w;
  for (const auto* t : {&a, &b})
    for (const Band& c : t->cols) w.push_back(c.end - c.start);
  return median(std::move(w));
}

bool mergeable(const GridTable& left, const GridTable& right, double center_x, const MergeConfig& cfg) {
  if (left.rows.empty() || left.rows.size() != right.rows.size() || left.cols.empty() || right.cols.empty())
    return false;
  if (!(left.table_box.center().x < center_x && right.table_box.center().x > center_x)) return false;
  double gap = cfg.max_center_gap > 0.0 ? cfg.max_center_gap : median_col_width(left, right);
  if (std::abs(left.table_box.x_max - center_x) > gap || std::abs(right.table_box.x_min - center_x) > gap)
    return false;
  std::size_t aligned = 0;
  for (std::size_t r = 0; r < left.rows.size(); ++r)
    if (std::abs(left.rows[r].start - right.rows[r].start) <= cfg.eps_row &&
        std::abs(left.rows[r].end - right.rows[r].end) <= cfg.eps_row)
      ++aligned;
  return static_cast<double>(aligned) >= cfg.min_row_alignment * static_cast<double>(left.rows.size());
}

GridTable merge_pair(const GridTable& left, const GridTable& right) {
  GridTable m;
  m.table_box = {std::min(left.table_box.x_min, right.table_box.x_min),
                 std::min(left.table_box.y_min, right.table_box.y_min),
                 std::max(left.table_box.x_max, right.table_box.x_max),
                 std::max(left.table_box.y_max, right.table_box.y_max),
                 std::min(left.table_box.confidence, right.table_box.confidence)};
  for (std::size_t r = 0; r < left.rows.size(); ++r)
    m.rows.push_back({(left.rows[r].start + right.rows[r].start) / 2.0, (left.rows[r].end + right.rows[r].end) / 2.0,
                      std::min(left.rows[r].support, right.rows[r].support)});
  m.cols = left.cols;
  m.cols.insert(m.cols.end(), right.cols.begin(), right.cols.end());
  for (std::size_t r = 0; r < left.rows.size(); ++r) {
    for (std::size_t c = 0; c < left.cols.size(); ++c) m.cells.push_back(left.at(r, c));
    for (std::size_t c = 0; c < right.cols.size(); ++c) m.cells.push_back(right.at(r, c));
  }
  m.residual = left.residual;
  m.residual.insert(m.residual.end(), right.residual.begin(), right.residual.end());
  return m;
}

}  // namespace

std::vector<GridTable> merge_split_tables(std::vector<GridTable> tables, double center_x, const MergeConfig& cfg) {
  std::vector<GridTable> out;
  std::vector<char> used(tables.size(), 0);
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (used[i]) continue;
    bool merged = false;
    for (std::size_t j = i + 1; j < tables.size() && !merged; ++j) {
      if (used[j]) continue;
      const GridTable* l = &tables[i];
      const GridTable* r = &tables[j];
      if (l->table_box.center().x > r->table_box.center().x) std::swap(l, r);
      if (mergeable(*l, *r, center_x, cfg)) {
        out.push_back(merge_pair(*l, *r));
        used[i] = used[j] = 1;
        merged = true;
      }
    }
    if (!merged) {
      out.push_back(std::move(tables[i]));
      used[i] = 1;
    }
  }
  return out;
}

}  // namespace regrec::gridrec
