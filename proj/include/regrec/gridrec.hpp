#pragma once

// Table grid reconstruction from (possibly incomplete) cell detections.
// Cell borders are clustered along each axis with 1-D DBSCAN; each pair of
// start/end clusters becomes a row or column band, and every band
// intersection without a detection receives an inferred empty cell.

#include <optional>
#include <span>
#include <vector>

#include "regrec/interchange.hpp"

namespace regrec::gridrec {

inline constexpr int kNoise = -1;

struct GridConfig {
  std::optional<double> eps_row;  // nullopt = auto
  std::optional<double> eps_col;
  std::size_t min_pts = 2;
  bool center_line_merge = false;
  /// Multiplier applied to auto eps: 0.4 x median cell height (rows) / width (cols).
  double auto_eps_factor = 0.4;
};

struct Band {
  double start = 0.0;
  double end = 0.0;
  std::size_t support = 0;
  friend bool operator==(const Band&, const Band&) = default;
};

enum class Axis { row, col };
enum class Provenance { detected, inferred };

struct GridCell {
  CellHypothesis cell;
  Provenance provenance = Provenance::detected;
  /// Index into the input cell list, absent for inferred cells.
  std::optional<std::size_t> source_index;
};

struct ResidualCell {
  std::size_t source_index;
  CellHypothesis cell;
};

struct GridTable {
  Box table_box;
  std::vector<Band> rows;  // top -> bottom
  std::vector<Band> cols;  // left -> right
  std::vector<GridCell> cells;  // row-major, rows.size() x cols.size()
  std::vector<ResidualCell> residual;

  GridCell& at(std::size_t r, std::size_t c) { return cells[r * cols.size() + c]; }
  const GridCell& at(std::size_t r, std::size_t c) const { return cells[r * cols.size() + c]; }
  Box slot_box(std::size_t r, std::size_t c) const {
    return {cols[c].start, rows[r].start, cols[c].end, rows[r].end, 0.0};
  }
  std::size_t detected_count() const;
  std::size_t inferred_count() const;
};

/// Start/end border cluster counts disagree; the caller may relax eps.
class BandPairingError : public Error {
 public:
  BandPairingError(Axis axis, std::size_t starts, std::size_t ends);
  Axis axis;
  std::size_t start_clusters;
  std::size_t end_clusters;
};

/// DBSCAN on the real line with |a-b| <= eps neighborhoods (a point counts
/// itself). Points are visited in ascending value order (ties by index) and
/// cluster ids are assigned in discovery order, so a border point reachable
/// from two clusters joins the one to its left. Noise is kNoise.
std::vector<int> dbscan_1d(std::span<const double> values, double eps, std::size_t min_pts);

/// eps used for an axis: the explicit value, or the auto rule over `cells`.
double effective_eps(std::span<const Box> cells, Axis axis, const GridConfig& cfg);

/// Bands along one axis, sorted. `min_pts` is capped at the number of cells
/// so that a lone cell still yields a band.
std::vector<Band> cluster_bands(std::span<const Box> cells, Axis axis, const GridConfig& cfg);

/// Full grid with every band intersection filled. Detected cells go to the
/// slot containing their center (ties to the larger overlap). When several
/// cells claim one slot the winner has the highest box confidence, then the
/// larger IoU with the slot, then the earlier input index; losers and cells
/// outside every band go to `residual`.
GridTable complete_grid(const Box& table_box, std::span<const CellHypothesis> cells, const GridConfig& cfg);

struct MergeConfig {
  double eps_row = 10.0;
  /// Fraction of row pairs that must align within eps_row.
  double min_row_alignment = 0.8;
  /// Largest gap between each table edge and the center line, in pixels.
  double max_center_gap = 0.0;  // 0 = one median column width of the pair
};

/// Joins pairs of tables that sit on opposite sides of `center_x`, both
/// reach the center line, and share aligned row bands. Columns are
/// concatenated left-to-right; row bands are averaged.
std::vector<GridTable> merge_split_tables(std::vector<GridTable> tables, double center_x, const MergeConfig& cfg);

}  // namespace regrec::gridrec
