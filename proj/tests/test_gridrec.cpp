#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "regrec/gridrec.hpp"

using namespace regrec;
using namespace regrec::gridrec;

namespace {

std::vector<double> random_instance(oracle::Gen& g) {
  std::vector<double> v(static_cast<std::size_t>(g.integer(0, 30)));
  // Mix of clumps, integer-valued duplicates and scattered points.
  for (auto& x : v) {
    switch (g.integer(0, 2)) {
      case 0: x = static_cast<double>(g.integer(0, 20)); break;
      case 1: x = g.real(0, 20); break;
      default: x = 5.0 * static_cast<double>(g.integer(0, 4)) + g.real(-0.5, 0.5);
    }
  }
  return v;
}

struct Layout {
  std::vector<double> xs, ys;  // borders
};

Layout regular_layout(oracle::Gen& g, std::size_t rows, std::size_t cols) {
  Layout l;
  double x = 100;
  l.xs.push_back(x);
  for (std::size_t c = 0; c < cols; ++c) l.xs.push_back(x += g.real(100, 200));
  double y = 200;
  l.ys.push_back(y);
  for (std::size_t r = 0; r < rows; ++r) l.ys.push_back(y += g.real(35, 60));
  return l;
}

CellHypothesis cell_at(const Layout& l, std::size_t r, std::size_t c, double inset = 2.0) {
  CellHypothesis h;
  h.box = {l.xs[c] + inset, l.ys[r] + inset, l.xs[c + 1] - inset, l.ys[r + 1] - inset, 0.9};
  h.text = TextHypothesis{std::to_string(r) + ":" + std::to_string(c), 0.9};
  return h;
}

}  // namespace

TEST_CASE("dbscan matches the textbook algorithm") {
  oracle::Gen g(101);
  for (int i = 0; i < 3000; ++i) {
    auto v = random_instance(g);
    double eps = g.coin(0.3) ? static_cast<double>(g.integer(0, 3)) : g.real(0.1, 3);
    std::size_t min_pts = static_cast<std::size_t>(g.integer(1, 5));
    auto got = dbscan_1d(v, eps, min_pts);
    auto want = oracle::brute_dbscan(v, eps, min_pts);
    REQUIRE(got.size() == v.size());
    CHECK(got == want);
  }
}

TEST_CASE("dbscan corner cases") {
  std::vector<double> empty;
  CHECK(dbscan_1d(empty, 1.0, 2).empty());
  std::vector<double> one{3.0};
  CHECK(dbscan_1d(one, 1.0, 1) == std::vector<int>{0});
  CHECK(dbscan_1d(one, 1.0, 2) == std::vector<int>{kNoise});
  // The border point 1.8 is reachable from both clusters and joins the left one.
  std::vector<double> border{0, 0.4, 0.8, 1.8, 2.8, 3.2, 3.6};
  auto labels = dbscan_1d(border, 1.0, 4);
  CHECK(labels == std::vector<int>{0, 0, 0, 0, 1, 1, 1});
  // Ids follow value order regardless of input order.
  std::vector<double> shuffled{10, 0, 10.2, 0.1};
  CHECK(dbscan_1d(shuffled, 0.5, 2) == std::vector<int>{1, 0, 1, 0});
  // Exactly eps apart is a neighbor.
  std::vector<double> edge{0, 1};
  CHECK(dbscan_1d(edge, 1.0, 2) == std::vector<int>{0, 0});
}

TEST_CASE("auto eps") {
  std::vector<Box> cells{{0, 0, 10, 20}, {0, 0, 30, 40}, {0, 0, 50, 60}};
  GridConfig cfg;
  CHECK(effective_eps(cells, Axis::row, cfg) == doctest::Approx(16));
  CHECK(effective_eps(cells, Axis::col, cfg) == doctest::Approx(12));
  cfg.eps_row = 5;
  CHECK(effective_eps(cells, Axis::row, cfg) == 5);
  cfg.eps_row = 0;
  CHECK_THROWS_AS(effective_eps(cells, Axis::row, cfg), Error);
}

TEST_CASE("complete grid recovers every slot of a regular table") {
  oracle::Gen g(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t nr = static_cast<std::size_t>(g.integer(2, 12)), nc = static_cast<std::size_t>(g.integer(2, 8));
    Layout l = regular_layout(g, nr, nc);
    std::vector<CellHypothesis> cells;
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c) {
        // Keep the first two rows and columns whole so every band stays supported.
        if (r > 1 && c > 1 && g.coin(0.15)) continue;
        cells.push_back(cell_at(l, r, c));
        where.emplace_back(r, c);
      }
    Box table{l.xs.front(), l.ys.front(), l.xs.back(), l.ys.back(), 1};
    GridTable grid = complete_grid(table, cells, GridConfig{});
    REQUIRE(grid.rows.size() == nr);
    REQUIRE(grid.cols.size() == nc);
    CHECK(grid.cells.size() == nr * nc);
    CHECK(grid.residual.empty());
    CHECK(grid.detected_count() == cells.size());
    CHECK(grid.inferred_count() == nr * nc - cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const GridCell& gc = grid.at(where[i].first, where[i].second);
      CHECK(gc.provenance == Provenance::detected);
      CHECK(gc.source_index == i);
    }
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c) {
        const GridCell& gc = grid.at(r, c);
        if (gc.provenance != Provenance::inferred) continue;
        CHECK(std::abs(gc.cell.box.x_min - (l.xs[c] + 2)) < 1e-9);
        CHECK(std::abs(gc.cell.box.y_max - (l.ys[r + 1] - 2)) < 1e-9);
        CHECK(routed_type(gc.cell.class_probs) == CellType::empty);
        CHECK_FALSE(gc.source_index.has_value());
      }
    for (std::size_t r = 0; r + 1 < nr; ++r) CHECK(grid.rows[r].end <= grid.rows[r + 1].start);
  }
}

TEST_CASE("conflicting claims keep the most confident cell") {
  Layout l{{0, 100, 200}, {0, 50, 100}};
  std::vector<CellHypothesis> cells{cell_at(l, 0, 0), cell_at(l, 0, 1), cell_at(l, 1, 0), cell_at(l, 1, 1)};
  CellHypothesis dup = cell_at(l, 1, 1);
  dup.box.confidence = 0.95;
  dup.text = TextHypothesis{"winner", 1};
  cells.push_back(dup);
  GridTable grid = complete_grid({0, 0, 200, 100}, cells, GridConfig{});
  CHECK(grid.at(1, 1).source_index == 4);
  REQUIRE(grid.residual.size() == 1);
  CHECK(grid.residual[0].source_index == 3);
}

TEST_CASE("mismatched start and end clusters") {
  // Two starts near 0 and 100 but the ends all collapse into one cluster.
  std::vector<Box> boxes{{0, 0, 10, 150}, {0, 2, 10, 151}, {0, 100, 10, 150}, {0, 101, 10, 152}};
  GridConfig cfg;
  cfg.eps_row = 5;
  CHECK_THROWS_AS(cluster_bands(boxes, Axis::row, cfg), BandPairingError);
  std::vector<CellHypothesis> none;
  CHECK_THROWS_AS(complete_grid({0, 0, 1, 1}, none, cfg), Error);
}

TEST_CASE("a single cell yields a 1x1 grid") {
  std::vector<CellHypothesis> cells{cell_at(Layout{{0, 100}, {0, 40}}, 0, 0)};
  GridTable grid = complete_grid({0, 0, 100, 40}, cells, GridConfig{});
  CHECK(grid.rows.size() == 1);
  CHECK(grid.cols.size() == 1);
  CHECK(grid.detected_count() == 1);
}

TEST_CASE("split tables merge across the fold") {
  Layout left{{100, 300, 500, 700}, {100, 150, 200, 250}};
  Layout right{{705, 900, 1100}, {102, 152, 201, 251}};
  auto build = [](const Layout& l) {
    std::vector<CellHypothesis> cells;
    for (std::size_t r = 0; r + 1 < l.ys.size(); ++r)
      for (std::size_t c = 0; c + 1 < l.xs.size(); ++c) cells.push_back(cell_at(l, r, c));
    return complete_grid({l.xs.front(), l.ys.front(), l.xs.back(), l.ys.back(), 1}, cells, GridConfig{});
  };
  std::vector<GridTable> tables{build(right), build(left)};
  auto merged = merge_split_tables(tables, 702, MergeConfig{});
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].cols.size() == 5);
  CHECK(merged[0].rows.size() == 3);
  CHECK(merged[0].cells.size() == 15);
  CHECK(*merged[0].at(0, 3).cell.text == TextHypothesis{"0:0", 0.9});
  CHECK(merged[0].table_box.x_min == 100);
  CHECK(merged[0].table_box.x_max == 1100);

  // Far from the fold: left alone.
  auto apart = merge_split_tables(tables, 2000, MergeConfig{});
  CHECK(apart.size() == 2);

  // Misaligned rows: left alone.
  Layout shifted = right;
  for (double& y : shifted.ys) y += 25;
  std::vector<GridTable> off{build(left), build(shifted)};
  CHECK(merge_split_tables(off, 702, MergeConfig{}).size() == 2);
}
