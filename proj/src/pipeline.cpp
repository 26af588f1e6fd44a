#include "regrec/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "regrec/csv.hpp"
#include "regrec/geometry.hpp"
#include "regrec/text.hpp"

namespace regrec::pipeline {

using nlohmann::ordered_json;

RunSummary& RunSummary::operator+=(const RunSummary& o) {
  openings_total += o.openings_total;
  openings_processed += o.openings_processed;
  openings_failed += o.openings_failed;
  books += o.books;
  tables += o.tables;
  tables_failed += o.tables_failed;
  tables_merged += o.tables_merged;
  eps_retries += o.eps_retries;
  cells_detected += o.cells_detected;
  cells_inferred += o.cells_inferred;
  cells_residual += o.cells_residual;
  grid_rows += o.grid_rows;
  rows_extracted += o.rows_extracted;
  empty_rows += o.empty_rows;
  realigned_rows += o.realigned_rows;
  failed_alignment_rows += o.failed_alignment_rows;
  orphan_repetitions += o.orphan_repetitions;
  year_observations += o.year_observations;
  year_discarded += o.year_discarded;
  year_corrections += o.year_corrections;
  pages_interpolated += o.pages_interpolated;
  in_page_year_changes += o.in_page_year_changes;
  corrector_used += o.corrector_used;
  corrector_fallbacks += o.corrector_fallbacks;
  parish_matched += o.parish_matched;
  parish_unmatched += o.parish_unmatched;
  failures.insert(failures.end(), o.failures.begin(), o.failures.end());
  return *this;
}

ordered_json RunSummary::to_json() const {
  ordered_json j;
  j["openings"] = {{"total", openings_total}, {"processed", openings_processed}, {"failed", openings_failed}};
  j["books"] = books;
  j["tables"] = {{"reconstructed", tables}, {"failed", tables_failed}, {"merged", tables_merged},
                 {"eps_retries", eps_retries}};
  j["cells"] = {{"detected", cells_detected}, {"inferred", cells_inferred}, {"residual", cells_residual}};
  j["rows"] = {{"in_grids", grid_rows},
               {"extracted", rows_extracted},
               {"empty", empty_rows},
               {"extracted_fraction", grid_rows ? static_cast<double>(rows_extracted) / static_cast<double>(grid_rows) : 0.0},
               {"realigned", realigned_rows},
               {"alignment_failed", failed_alignment_rows},
               {"orphan_repetitions", orphan_repetitions}};
  j["years"] = {{"observations", year_observations},  {"discarded", year_discarded},
                {"corrected", year_corrections},       {"pages_interpolated", pages_interpolated},
                {"in_page_changes", in_page_year_changes}, {"corrector_used", corrector_used},
                {"corrector_fallbacks", corrector_fallbacks}};
  j["parishes"] = {{"matched", parish_matched}, {"unmatched", parish_unmatched}};
  ordered_json f = ordered_json::array();
  for (const auto& e : failures) f.push_back({{"source", e.source}, {"error", e.error}});
  j["failures"] = f;
  return j;
}

std::map<LayoutType, cells::ColumnSchema> load_schemas(const fs::path& dir) {
  std::map<LayoutType, cells::ColumnSchema> out;
  for (auto layout : {LayoutType::handdrawn, LayoutType::preprinted, LayoutType::half_table, LayoutType::free_text,
                      LayoutType::other}) {
    fs::path p = dir / (to_string(layout) + ".tsv");
    if (fs::exists(p)) out[layout] = cells::load_schema(p);
  }
  if (out.empty()) spdlog::warn("no schema files found in {}", dir.string());
  return out;
}

std::vector<LoadedDocument> load_documents(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<LoadedDocument> out;
  for (const auto& p : paths) {
    LoadedDocument d{p.string(), std::nullopt, {}};
    try {
      d.doc = read_document(p);
    } catch (const std::exception& e) {
      d.error = e.what();
      spdlog::error("{}: {}", p.string(), e.what());
    }
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

struct PlacedTable {
  gridrec::GridTable grid;
  PageSide side = PageSide::left;
};

struct PlacedYear {
  chrono::YearObservation obs;
  double y = 0.0;  // de-skewed center
  bool header = true;
};

struct OpeningWork {
  const DetectionDocument* doc = nullptr;
  std::vector<PlacedTable> tables;
  std::vector<PlacedYear> years;
};

std::vector<Box> boxes_of(const std::vector<CellHypothesis>& cells) {
  std::vector<Box> out;
  for (const auto& c : cells) out.push_back(c.box);
  return out;
}

std::optional<gridrec::GridTable> build_grid(const Box& table_box, const std::vector<CellHypothesis>& cells,
                                             const gridrec::GridConfig& cfg, RunSummary& s, const std::string& where) {
  if (cells.empty()) return std::nullopt;
  try {
    return gridrec::complete_grid(table_box, cells, cfg);
  } catch (const gridrec::BandPairingError& e) {
    ++s.eps_retries;
    auto boxes = boxes_of(cells);
    gridrec::GridConfig relaxed = cfg;
    relaxed.eps_row = 1.5 * gridrec::effective_eps(boxes, gridrec::Axis::row, cfg);
    relaxed.eps_col = 1.5 * gridrec::effective_eps(boxes, gridrec::Axis::col, cfg);
    spdlog::warn("{}: {}; retrying with eps x1.5", where, e.what());
    try {
      return gridrec::complete_grid(table_box, cells, relaxed);
    } catch (const gridrec::BandPairingError& e2) {
      spdlog::error("{}: table skipped: {}", where, e2.what());
      ++s.tables_failed;
      return std::nullopt;
    }
  }
}

/// De-skewed copy of a cell (box and line boxes).
CellHypothesis deskew_cell(const geometry::OpeningDeskew& d, const CellHypothesis& c) {
  CellHypothesis out = c;
  out.box = d.apply(c.box);
  for (auto& l : out.lines) l.box = d.apply(l.box);
  return out;
}

std::vector<PlacedTable> reconstruct_tables(const DetectionDocument& doc, const geometry::OpeningDeskew& deskew,
                                            const ExtractOptions& opts, RunSummary& s) {
  std::vector<PlacedTable> out;
  std::vector<gridrec::GridTable> grids;
  for (std::size_t t = 0; t < doc.tables.size(); ++t) {
    std::vector<CellHypothesis> cells;
    for (const auto& c : doc.tables[t].cells) cells.push_back(deskew_cell(deskew, c));
    auto grid = build_grid(deskew.apply(doc.tables[t].box), cells, opts.grid, s,
                           doc.opening_id + " table " + std::to_string(t));
    if (grid) grids.push_back(std::move(*grid));
  }
  if (opts.merge_split_tables && grids.size() > 1) {
    const std::size_t before = grids.size();
    grids = gridrec::merge_split_tables(std::move(grids), deskew.center_x(), opts.merge);
    s.tables_merged += before - grids.size();
  }
  for (auto& g : grids) {
    const PageSide side = g.table_box.center().x < deskew.center_x() ? PageSide::left : PageSide::right;
    s.cells_detected += g.detected_count();
    s.cells_inferred += g.inferred_count();
    s.cells_residual += g.residual.size();
    s.grid_rows += g.rows.size();
    ++s.tables;
    out.push_back({std::move(g), side});
  }
  std::stable_sort(out.begin(), out.end(), [](const PlacedTable& a, const PlacedTable& b) {
    if (a.side != b.side) return a.side == PageSide::left;
    if (a.grid.table_box.y_min != b.grid.table_box.y_min) return a.grid.table_box.y_min < b.grid.table_box.y_min;
    return a.grid.table_box.x_min < b.grid.table_box.x_min;
  });
  return out;
}

/// Year mentions above the first row of the page's tables are headers; the
/// rest are in-page mentions.
std::vector<PlacedYear> place_years(const DetectionDocument& doc, const geometry::OpeningDeskew& deskew,
                                    const std::vector<PlacedTable>& tables, const ExtractOptions& opts) {
  std::vector<PlacedYear> out;
  for (const auto& y : doc.year_detections) {
    const PageSide side = doc.page_assignment(y.box.center());
    const double cy = deskew.apply(y.box).center().y;
    std::optional<double> top;
    for (const auto& t : tables)
      if (t.side == side && !t.grid.rows.empty())
        top = std::min(top.value_or(t.grid.rows.front().start), t.grid.rows.front().start);
    out.push_back({chrono::make_observation(doc.opening_id, side, y.text.text, y.box, opts.chrono), cy,
                   !top || cy < *top});
  }
  return out;
}

struct BookResult {
  std::vector<MigrationRecord> records;
  RunSummary summary;
};

std::vector<chrono::PageInput> page_inputs(const std::vector<OpeningWork>& work) {
  std::vector<chrono::PageInput> pages;
  for (const auto& w : work)
    for (PageSide side : {PageSide::left, PageSide::right}) {
      chrono::PageInput p{w.doc->opening_id, side, {}};
      for (const auto& y : w.years)
        if (y.header && y.obs.side == side) p.observations.push_back(y.obs);
      pages.push_back(std::move(p));
    }
  return pages;
}

chrono::BookYearSequence book_years(const std::vector<chrono::PageInput>& pages, const ExtractOptions& opts,
                                    RunSummary& s) {
  for (const auto& p : pages) s.year_observations += p.observations.size();
  chrono::BookYearSequence seq;
  if (opts.corrector) {
    auto r = chrono::external_correct(pages, *opts.corrector, opts.chrono);
    (r.used_external ? s.corrector_used : s.corrector_fallbacks)++;
    seq = std::move(r.sequence);
  } else {
    seq = chrono::infer_sequence(pages, opts.chrono);
  }
  s.year_discarded += seq.discarded;
  s.year_corrections += seq.corrections;
  for (const auto& p : seq.pages)
    if (p.resolved_year && p.source == chrono::YearSource::interpolated) ++s.pages_interpolated;
  return seq;
}

/// In-page year changes as (de-skewed y, year), top to bottom.
std::vector<std::pair<double, int>> page_changes(const OpeningWork& w, PageSide side, std::optional<int> resolved,
                                                 std::optional<int> next, const ExtractOptions& opts) {
  std::vector<std::pair<double, int>> out;
  if (!resolved) return out;
  std::vector<const PlacedYear*> mentions;
  for (const auto& y : w.years)
    if (!y.header && y.obs.side == side) mentions.push_back(&y);
  std::stable_sort(mentions.begin(), mentions.end(), [](auto* a, auto* b) { return a->y < b->y; });
  int base = *resolved;
  for (const auto* m : mentions)
    if (auto c = chrono::in_page_change(m->obs, base, next, opts.chrono)) {
      out.emplace_back(m->y, *c);
      base = *c;
    }
  return out;
}

BookResult process_book(const std::string& book_id, std::vector<const LoadedDocument*> docs,
                        const ExtractOptions& opts) {
  BookResult result;
  RunSummary& s = result.summary;
  s.books = 1;
  s.openings_total = docs.size();
  std::stable_sort(docs.begin(), docs.end(), [](auto* a, auto* b) { return a->doc->opening_id < b->doc->opening_id; });

  std::vector<OpeningWork> work;
  for (const auto* d : docs) {
    RunSummary local;
    try {
      const geometry::OpeningDeskew deskew(*d->doc);
      OpeningWork w;
      w.doc = &*d->doc;
      w.tables = reconstruct_tables(*d->doc, deskew, opts, local);
      w.years = place_years(*d->doc, deskew, w.tables, opts);
      work.push_back(std::move(w));
      s += local;
    } catch (const std::exception& e) {
      spdlog::error("{}: opening failed: {}", d->source, e.what());
      ++s.openings_failed;
      s.failures.push_back({d->source, e.what()});
    }
  }

  const auto pages = page_inputs(work);
  const auto seq = book_years(pages, opts, s);

  for (std::size_t i = 0; i < work.size(); ++i) {
    const OpeningWork& w = work[i];
    const DetectionDocument& doc = *w.doc;
    try {
      std::vector<MigrationRecord> opening_records;
      RunSummary local;
      for (PageSide side : {PageSide::left, PageSide::right}) {
        const std::size_t page = 2 * i + (side == PageSide::left ? 0 : 1);
        const auto& py = seq.pages[page];
        const std::optional<int> next = page + 1 < seq.pages.size() ? seq.pages[page + 1].resolved_year : std::nullopt;
        const auto changes = page_changes(w, side, py.resolved_year, next, opts);
        local.in_page_year_changes += changes.size();
        auto schema_it = opts.schemas.find(doc.layout_type);
        for (const auto& t : w.tables) {
          if (t.side != side) continue;
          cells::AssemblyContext ctx;
          ctx.book_id = book_id;
          ctx.opening_id = doc.opening_id;
          ctx.side = side;
          ctx.year = py.resolved_year;
          ctx.year_inferred = py.resolved_year && py.source == chrono::YearSource::interpolated;
          ctx.direction = cells::direction_for(doc.direction, side);
          ctx.schema = schema_it == opts.schemas.end() ? nullptr : &schema_it->second;
          for (const auto& row : t.grid.rows) {
            std::optional<int> y = py.resolved_year;
            const double cy = (row.start + row.end) / 2.0;
            for (const auto& [change_y, year] : changes)
              if (cy > change_y) y = year;
            ctx.row_years.push_back(y);
          }
          cells::AssemblyStats stats;
          auto recs = cells::assemble_records(t.grid, ctx, &stats);
          local.empty_rows += stats.empty_rows;
          local.realigned_rows += stats.realigned_rows;
          local.failed_alignment_rows += stats.failed_rows;
          local.orphan_repetitions += stats.orphan_repetitions;
          opening_records.insert(opening_records.end(), recs.begin(), recs.end());
        }
      }
      if (opts.gazetteer) {
        normalize::apply_parish_matching(opening_records, *opts.gazetteer, opts.max_rel_dist);
        for (const auto& r : opening_records)
          if (r.parish_raw) (r.parish_canonical ? local.parish_matched : local.parish_unmatched)++;
      }
      local.rows_extracted += opening_records.size();
      ++local.openings_processed;
      s += local;
      result.records.insert(result.records.end(), opening_records.begin(), opening_records.end());
    } catch (const std::exception& e) {
      spdlog::error("{}: opening failed: {}", doc.opening_id, e.what());
      ++s.openings_failed;
      s.failures.push_back({doc.opening_id, e.what()});
    }
  }
  return result;
}

template <typename Fn>
void run_parallel(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

ExtractResult extract(const std::vector<LoadedDocument>& docs, const ExtractOptions& opts) {
  ExtractResult out;
  std::map<std::string, std::vector<const LoadedDocument*>> books;
  for (const auto& d : docs) {
    if (!d.doc) {
      ++out.summary.openings_total;
      ++out.summary.openings_failed;
      out.summary.failures.push_back({d.source, d.error});
      continue;
    }
    books[d.doc->book_id].push_back(&d);
  }
  std::vector<std::pair<std::string, std::vector<const LoadedDocument*>>> ordered(books.begin(), books.end());
  std::vector<BookResult> results(ordered.size());
  run_parallel(ordered.size(), opts.workers, [&](std::size_t i) {
    try {
      results[i] = process_book(ordered[i].first, ordered[i].second, opts);
    } catch (const std::exception& e) {
      spdlog::error("book {} failed: {}", ordered[i].first, e.what());
      BookResult failed;
      failed.summary.books = 1;
      failed.summary.openings_total = failed.summary.openings_failed = ordered[i].second.size();
      for (const auto* d : ordered[i].second) failed.summary.failures.push_back({d->source, e.what()});
      results[i] = std::move(failed);
    }
  });
  for (auto& r : results) {
    out.summary += r.summary;
    out.records.insert(out.records.end(), std::make_move_iterator(r.records.begin()),
                       std::make_move_iterator(r.records.end()));
  }
  return out;
}

RunSummary cmd_extract(const fs::path& in_dir, const fs::path& out_path, const fs::path& summary_path,
                       const ExtractOptions& opts) {
  auto docs = load_documents(in_dir);
  spdlog::info("extract: {} documents from {}, {} worker(s)", docs.size(), in_dir.string(), opts.workers);
  auto result = extract(docs, opts);
  write_records(result.records, out_path, record_format_for(out_path));
  write_file(summary_path, result.summary.to_json().dump(2) + "\n");
  spdlog::info("extract: {} records, {} of {} openings processed", result.records.size(),
               result.summary.openings_processed, result.summary.openings_total);
  return result.summary;
}

// ---- years ------------------------------------------------------------------

std::vector<PageYearRow> resolve_years(const std::vector<DetectionDocument>& docs, const ExtractOptions& opts,
                                       RunSummary* summary) {
  std::map<std::string, std::vector<const DetectionDocument*>> books;
  for (const auto& d : docs) books[d.book_id].push_back(&d);
  std::vector<PageYearRow> out;
  RunSummary s;
  for (auto& [book_id, list] : books) {
    std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->opening_id < b->opening_id; });
    std::vector<OpeningWork> work;
    for (const auto* d : list) {
      RunSummary scratch;
      const geometry::OpeningDeskew deskew(*d);
      OpeningWork w;
      w.doc = d;
      w.tables = reconstruct_tables(*d, deskew, opts, scratch);
      w.years = place_years(*d, deskew, w.tables, opts);
      work.push_back(std::move(w));
    }
    const auto pages = page_inputs(work);
    const auto seq = book_years(pages, opts, s);
    for (std::size_t p = 0; p < seq.pages.size(); ++p) {
      const auto& py = seq.pages[p];
      PageYearRow row{book_id, py.opening_id, py.side, {}, py.resolved_year, py.source, {}};
      for (const auto& o : py.observations) row.raws += (row.raws.empty() ? "" : "|") + o.raw;
      const std::optional<int> next = p + 1 < seq.pages.size() ? seq.pages[p + 1].resolved_year : std::nullopt;
      for (const auto& [y, year] : page_changes(work[p / 2], py.side, py.resolved_year, next, opts))
        row.in_page_years.push_back(year);
      s.in_page_year_changes += row.in_page_years.size();
      out.push_back(std::move(row));
    }
  }
  if (summary) *summary += s;
  return out;
}

RunSummary cmd_years(const fs::path& in_dir, const fs::path& out_csv, const ExtractOptions& opts) {
  RunSummary s;
  std::vector<DetectionDocument> docs;
  for (auto& d : load_documents(in_dir)) {
    ++s.openings_total;
    if (d.doc) {
      docs.push_back(std::move(*d.doc));
      ++s.openings_processed;
    } else {
      ++s.openings_failed;
      s.failures.push_back({d.source, d.error});
    }
  }
  auto rows = resolve_years(docs, opts, &s);
  std::string out = csv::format_row({"book_id", "opening_id", "page_side", "raw", "year", "source", "in_page_years"});
  for (const auto& r : rows) {
    std::string changes;
    for (int y : r.in_page_years) changes += (changes.empty() ? "" : ";") + std::to_string(y);
    out += csv::format_row({r.book_id, r.opening_id, to_string(r.side), r.raws, r.year ? std::to_string(*r.year) : "",
                            chrono::to_string(r.source), changes});
  }
  write_file(out_csv, out);
  return s;
}

// ---- evaluation -------------------------------------------------------------

namespace {

std::string layout_key(LayoutType t) {
  return t == LayoutType::preprinted || t == LayoutType::handdrawn ? to_string(t) : std::string();
}

void add_counts(std::map<std::string, eval::EvalCounts>& m, const std::string& key, const eval::EvalCounts& c) {
  m["all"] += c;
  if (!key.empty()) m[key] += c;
}

std::optional<gridrec::GridTable> quiet_grid(const Box& box, const std::vector<CellHypothesis>& cells,
                                             const ExtractOptions& opts) {
  RunSummary scratch;
  return build_grid(box, cells, opts.grid, scratch, "eval");
}

std::vector<Box> band_boxes(const std::optional<gridrec::GridTable>& g, gridrec::Axis axis) {
  std::vector<Box> out;
  if (!g || g->rows.empty() || g->cols.empty()) return out;
  if (axis == gridrec::Axis::row) {
    for (const auto& r : g->rows) out.push_back({g->cols.front().start, r.start, g->cols.back().end, r.end, 1.0});
  } else {
    for (const auto& c : g->cols) out.push_back({c.start, g->rows.front().start, c.end, g->rows.back().end, 1.0});
  }
  return out;
}

std::string text_of(const CellHypothesis& c) {
  gridrec::GridCell gc{c, gridrec::Provenance::detected, 0};
  return cells::cell_text(gc).value_or("");
}

std::map<std::pair<std::string, PageSide>, std::set<int>> year_sets(const std::vector<DetectionDocument>& docs,
                                                                    const ExtractOptions& opts) {
  std::map<std::pair<std::string, PageSide>, std::set<int>> out;
  for (const auto& r : resolve_years(docs, opts)) {
    auto& s = out[{r.opening_id, r.side}];
    if (r.year) s.insert(*r.year);
    s.insert(r.in_page_years.begin(), r.in_page_years.end());
  }
  return out;
}

}  // namespace

EvalOutcome evaluate(const std::vector<DetectionDocument>& pred, const std::vector<DetectionDocument>& gold,
                     const ExtractOptions& opts) {
  EvalOutcome out;
  std::map<std::string, const DetectionDocument*> pred_by_id;
  for (const auto& p : pred) pred_by_id[p.opening_id] = &p;
  std::vector<double> before, after;
  std::vector<eval::TextPair> pairs;

  for (const auto& g : gold) {
    auto it = pred_by_id.find(g.opening_id);
    if (it == pred_by_id.end()) {
      out.unmatched_openings.push_back(g.opening_id);
      continue;
    }
    const DetectionDocument& p = *it->second;
    ++out.openings;
    const std::string key = layout_key(g.layout_type);
    const geometry::OpeningDeskew pd(p), gd(g);

    if (p.keypoints) {
      for (double a : geometry::edge_angles(*p.keypoints)) before.push_back(a);
      const auto& l = pd.transform(PageSide::left);
      const auto& r = pd.transform(PageSide::right);
      for (double a : geometry::edge_angles(geometry::apply_keypoints(l, r, *p.keypoints))) after.push_back(a);
    }

    std::vector<Box> pt, gt;
    for (const auto& t : p.tables) pt.push_back(pd.apply(t.box));
    for (const auto& t : g.tables) gt.push_back(gd.apply(t.box));
    const auto tm = eval::match_detections(pt, gt);
    add_counts(out.tables, key, tm.counts);

    std::vector<bool> pred_matched(p.tables.size()), gold_matched(g.tables.size());
    for (const auto& m : tm.pairs) {
      pred_matched[m.pred] = gold_matched[m.gold] = true;
      std::vector<CellHypothesis> pc, gc;
      for (const auto& c : p.tables[m.pred].cells) pc.push_back(deskew_cell(pd, c));
      for (const auto& c : g.tables[m.gold].cells) gc.push_back(deskew_cell(gd, c));

      const auto cm = eval::match_detections(boxes_of(pc), boxes_of(gc));
      add_counts(out.cells, key, cm.counts);
      for (const auto& cp : cm.pairs) {
        const auto gt_type = static_cast<std::size_t>(routed_type(gc[cp.gold].class_probs));
        const auto pr_type = static_cast<std::size_t>(routed_type(pc[cp.pred].class_probs));
        ++out.confusion[gt_type][pr_type];
        const std::string ref = text_of(gc[cp.gold]);
        if (!ref.empty()) pairs.push_back({text_of(pc[cp.pred]), ref});
      }

      const auto pg = quiet_grid(pt[m.pred], pc, opts);
      const auto gg = quiet_grid(gt[m.gold], gc, opts);
      add_counts(out.rows, key,
                 eval::match_detections(band_boxes(pg, gridrec::Axis::row), band_boxes(gg, gridrec::Axis::row)).counts);
      add_counts(out.cols, key,
                 eval::match_detections(band_boxes(pg, gridrec::Axis::col), band_boxes(gg, gridrec::Axis::col)).counts);
    }
    // Cells of unmatched tables are all misses or false alarms.
    for (std::size_t t = 0; t < p.tables.size(); ++t)
      if (!pred_matched[t]) add_counts(out.cells, key, {0, p.tables[t].cells.size(), 0});
    for (std::size_t t = 0; t < g.tables.size(); ++t)
      if (!gold_matched[t]) add_counts(out.cells, key, {0, 0, g.tables[t].cells.size()});
  }

  out.text_pairs = eval::filter_unreadable(pairs);
  out.unreadable_excluded = pairs.size() - out.text_pairs.size();
  if (!before.empty()) {
    out.skew_before = geometry::angle_stats(before);
    out.skew_after = geometry::angle_stats(after);
  }

  const auto ps = year_sets(pred, opts);
  const auto gs = year_sets(gold, opts);
  std::vector<std::set<int>> py, gy;
  for (const auto& [k, years] : gs) {
    gy.push_back(years);
    auto it = ps.find(k);
    py.push_back(it == ps.end() ? std::set<int>{} : it->second);
  }
  out.years = chrono::evaluate_years(py, gy);
  return out;
}

namespace {

std::vector<DetectionDocument> readable(const std::vector<LoadedDocument>& docs) {
  std::vector<DetectionDocument> out;
  for (const auto& d : docs)
    if (d.doc) out.push_back(*d.doc);
  return out;
}

std::string counts_csv(const std::map<std::string, eval::EvalCounts>& m) {
  std::vector<eval::MetricRow> rows;
  for (const char* k : {"preprinted", "handdrawn", "all"}) {
    auto it = m.find(k);
    if (it == m.end() || it->second.tp + it->second.fp + it->second.fn == 0) continue;
    rows.push_back({k, eval::metrics(it->second)});
  }
  return eval::metric_rows_csv(rows);
}

}  // namespace

EvalOutcome cmd_eval(const fs::path& pred_dir, const fs::path& gold_dir, const fs::path& out_dir,
                     const ExtractOptions& opts) {
  const auto pred = readable(load_documents(pred_dir));
  const auto gold = readable(load_documents(gold_dir));
  auto out = evaluate(pred, gold, opts);
  for (const auto& id : out.unmatched_openings) spdlog::warn("eval: no prediction for {}", id);
  write_file(out_dir / "tables.csv", counts_csv(out.tables));
  write_file(out_dir / "rows.csv", counts_csv(out.rows));
  write_file(out_dir / "columns.csv", counts_csv(out.cols));
  write_file(out_dir / "cells.csv", counts_csv(out.cells));
  write_file(out_dir / "cell_classes.csv", eval::class_report_csv(eval::class_report(out.confusion)));
  write_file(out_dir / "text.csv", eval::text_report_csv(eval::split_metrics(out.text_pairs)));
  write_file(out_dir / "years.csv",
             csv::format_row({"precision", "recall", "f1", "tp", "fp", "fn", "pages"}) +
                 csv::format_row({eval::format_fixed(out.years.precision), eval::format_fixed(out.years.recall),
                                  eval::format_fixed(out.years.f1), std::to_string(out.years.tp),
                                  std::to_string(out.years.fp), std::to_string(out.years.fn),
                                  std::to_string(out.years.pages_scored)}));
  char buf[64];
  auto deg = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  write_file(out_dir / "skew.csv", csv::format_row({"stage", "mean_deg", "sd_deg"}) +
                                       csv::format_row({"before", deg(out.skew_before.mean), deg(out.skew_before.sd)}) +
                                       csv::format_row({"after", deg(out.skew_after.mean), deg(out.skew_after.sd)}));
  spdlog::info("eval: {} openings compared, {} unreadable text lines excluded", out.openings, out.unreadable_excluded);
  return out;
}

// ---- normalize / aggregate --------------------------------------------------

NormalizeOutcome normalize_records(std::vector<MigrationRecord> records, const normalize::Gazetteer* gazetteer,
                                   double max_rel_dist, double dup_threshold) {
  NormalizeOutcome out;
  if (gazetteer) normalize::apply_parish_matching(records, *gazetteer, max_rel_dist);
  std::map<std::string, std::vector<MigrationRecord>> books;
  for (const auto& r : records) books[r.book_id].push_back(r);
  out.duplicates = normalize::detect_duplicate_books(books, dup_threshold);
  std::set<std::string> removed;
  for (const auto& d : out.duplicates) {
    spdlog::info("normalize: book {} duplicates {} (jaccard {:.3f}); removing {}", d.remove, d.keep, d.jaccard,
                 d.remove);
    removed.insert(d.remove);
  }
  std::vector<MigrationRecord> kept;
  for (auto& r : records) {
    if (removed.count(r.book_id))
      ++out.duplicate_rows_removed;
    else
      kept.push_back(std::move(r));
  }
  auto filtered = normalize::filter_usable(kept);
  out.usable = std::move(filtered.usable);
  out.tally = std::move(filtered.tally);
  return out;
}

NormalizeOutcome cmd_normalize(const fs::path& in_path, const fs::path& out_path, const fs::path& report_path,
                               const normalize::Gazetteer* gazetteer, double max_rel_dist, double dup_threshold) {
  auto out = normalize_records(read_records(in_path, record_format_for(in_path)), gazetteer, max_rel_dist,
                               dup_threshold);
  write_records(out.usable, out_path, record_format_for(out_path));
  std::string report = csv::format_row({"section", "key", "value"});
  for (const auto& d : out.duplicates) {
    char j[32];
    std::snprintf(j, sizeof j, "%.4f", d.jaccard);
    report += csv::format_row({"duplicate_book", d.remove + " duplicates " + d.keep, j});
  }
  report += csv::format_row({"duplicate_rows_removed", "", std::to_string(out.duplicate_rows_removed)});
  for (const auto& [reason, n] : out.tally)
    report += csv::format_row({"rejected", normalize::to_string(reason), std::to_string(n)});
  report += csv::format_row({"usable", "", std::to_string(out.usable.size())});
  write_file(report_path, report);
  return out;
}

Aggregates aggregate(const std::vector<MigrationRecord>& records, const std::vector<std::string>& books) {
  const std::set<std::string> wanted(books.begin(), books.end());
  std::vector<MigrationRecord> selected;
  for (const auto& r : records)
    if (wanted.empty() || wanted.count(r.book_id)) selected.push_back(r);
  auto filtered = normalize::filter_usable(selected);
  Aggregates a;
  a.excluded = filtered.tally;
  for (const auto& r : filtered.usable) {
    ++a.by_year[{*r.year, r.direction}];
    ++a.by_parish[{*r.parish_canonical, r.direction}];
  }
  return a;
}

Aggregates cmd_aggregate(const fs::path& records_path, const fs::path& out_dir, const std::vector<std::string>& books) {
  auto a = aggregate(read_records(records_path, record_format_for(records_path)), books);
  std::string by_year = csv::format_row({"year", "direction", "count"});
  for (const auto& [k, n] : a.by_year)
    by_year += csv::format_row({std::to_string(k.first), to_string(k.second), std::to_string(n)});
  std::string by_parish = csv::format_row({"parish", "direction", "count"});
  for (const auto& [k, n] : a.by_parish) by_parish += csv::format_row({k.first, to_string(k.second), std::to_string(n)});
  std::string excluded = csv::format_row({"reason", "count"});
  for (const auto& [reason, n] : a.excluded) excluded += csv::format_row({normalize::to_string(reason), std::to_string(n)});
  write_file(out_dir / "by_year.csv", by_year);
  write_file(out_dir / "by_parish.csv", by_parish);
  write_file(out_dir / "excluded.csv", excluded);
  return a;
}

// ---- report -----------------------------------------------------------------

namespace {

std::string render_csv(const std::string& title, const std::string& content) {
  auto rows = csv::parse(content);
  if (rows.empty()) return "";
  std::vector<std::size_t> widths;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (widths.size() <= i) widths.push_back(0);
      widths[i] = std::max(widths[i], text::length(r[i]));
    }
  std::ostringstream out;
  out << title << "\n";
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t i = 0; i < rows[n].size(); ++i) {
      const std::string& cell = rows[n][i];
      const std::size_t pad = widths[i] - text::length(cell);
      out << "  ";
      if (i == 0)
        out << cell << std::string(pad, ' ');
      else
        out << std::string(pad, ' ') << cell;
    }
    out << "\n";
    if (n == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out << "  " << std::string(total - 2, '-') << "\n";
    }
  }
  out << "\n";
  return out.str();
}

}  // namespace

std::string render_report(const fs::path& eval_dir, const std::optional<fs::path>& summary_path) {
  std::string out;
  const std::pair<const char*, const char*> sections[] = {
      {"tables.csv", "Table detection"},      {"rows.csv", "Row detection"},
      {"columns.csv", "Column detection"},    {"cells.csv", "Cell detection"},
      {"cell_classes.csv", "Cell classification"}, {"text.csv", "Text recognition"},
      {"years.csv", "Year detection"},        {"skew.csv", "Page edge angles"}};
  for (const auto& [file, title] : sections) {
    fs::path p = eval_dir / file;
    if (fs::exists(p)) out += render_csv(title, read_file(p));
  }
  if (summary_path) {
    auto j = nlohmann::json::parse(read_file(*summary_path));
    std::ostringstream s;
    s << "Run summary\n";
    s << "  openings: " << j["openings"]["processed"] << " processed, " << j["openings"]["failed"] << " failed of "
      << j["openings"]["total"] << "\n";
    s << "  rows: " << j["rows"]["extracted"] << " extracted of " << j["rows"]["in_grids"] << " in grids ("
      << std::fixed << std::setprecision(1) << 100.0 * j["rows"]["extracted_fraction"].get<double>() << "%)\n";
    s << "  cells: " << j["cells"]["detected"] << " detected, " << j["cells"]["inferred"] << " inferred, "
      << j["cells"]["residual"] << " residual\n";
    s << "  years: " << j["years"]["discarded"] << " observations discarded, " << j["years"]["corrected"]
      << " corrected, " << j["years"]["pages_interpolated"] << " pages interpolated\n";
    out += s.str();
  }
  if (out.empty()) throw IoError("nothing to report in " + eval_dir.string());
  return out;
}

// ---- synth ------------------------------------------------------------------

std::vector<synth::SynthBook> synth_corpus(const SynthCorpusOptions& opts) {
  if (opts.openings_per_book == 0) throw ValidationError("openings_per_book", "must be positive");
  opts.config.validate();
  std::vector<synth::SynthBook> books;
  std::size_t remaining = opts.count;
  for (std::size_t b = 0; remaining > 0; ++b) {
    synth::SynthConfig cfg = opts.config;
    cfg.seed = synth::derive_seed(opts.config.seed, 1000 + b);
    const std::size_t n = std::min(remaining, opts.openings_per_book);
    auto book = synth::generate_book(cfg, n);
    char id[48];
    std::snprintf(id, sizeof id, "book-%llu-%03zu", static_cast<unsigned long long>(opts.config.seed), b + 1);
    books.push_back(synth::duplicate_book(book, id));  // stable, readable ids
    remaining -= n;
  }
  const std::size_t originals = books.size();
  for (std::size_t i = 0; i < opts.duplicate_books && i < originals; ++i)
    books.push_back(synth::duplicate_book(books[i], books[i].book_id + "-dup"));
  return books;
}

ordered_json perturbation_json(const synth::PerturbationLog& log) {
  ordered_json j;
  j["homography_left"] = log.left.matrix();
  j["homography_right"] = log.right.matrix();
  ordered_json dropped = ordered_json::array();
  for (const auto& d : log.dropped) dropped.push_back({d.table, d.cell});
  j["dropped"] = dropped;
  ordered_json jitter = ordered_json::array();
  for (const auto& e : log.jitter)
    jitter.push_back({{"table", e.ref.table}, {"cell", e.ref.cell}, {"dx_min", e.dx_min}, {"dy_min", e.dy_min},
                      {"dx_max", e.dx_max}, {"dy_max", e.dy_max}});
  j["jitter"] = jitter;
  ordered_json subs = ordered_json::array();
  for (const auto& s : log.substitutions) {
    ordered_json e{{"table", s.ref.table}, {"cell", s.ref.cell}};
    e["line"] = s.line ? ordered_json(*s.line) : ordered_json(nullptr);
    e["position"] = s.position;
    e["from"] = text::encode_utf8(std::u32string(1, s.from));
    e["to"] = text::encode_utf8(std::u32string(1, s.to));
    subs.push_back(e);
  }
  j["substitutions"] = subs;
  ordered_json years = ordered_json::array();
  for (const auto& y : log.year_corruptions)
    years.push_back({{"detection", y.detection}, {"position", y.position}, {"from", std::string(1, y.from)},
                     {"to", std::string(1, y.to)}});
  j["year_corruptions"] = years;
  return j;
}

void cmd_synth(const SynthCorpusOptions& opts, const fs::path& out_dir) {
  const auto books = synth_corpus(opts);
  std::vector<MigrationRecord> records;
  std::string years = csv::format_row({"book_id", "opening_id", "page_side", "header_year", "years"});
  for (const auto& book : books) {
    for (const auto& o : book.openings) {
      const std::string name = o.observed.opening_id + ".jsonl";
      write_document(o.observed, out_dir / "docs" / book.book_id / name);
      write_document(synth::annotate(o.gold.ideal, o.log), out_dir / "gold" / "docs" / book.book_id / name);
      write_file(out_dir / "perturbations" / (o.observed.opening_id + ".json"), perturbation_json(o.log).dump(1) + "\n");
      for (const auto* page : {&o.gold.left, &o.gold.right}) {
        std::string ys;
        for (int y : page->years) ys += (ys.empty() ? "" : ";") + std::to_string(y);
        years += csv::format_row(
            {book.book_id, o.observed.opening_id, to_string(page->side), std::to_string(page->header_year), ys});
      }
    }
    auto r = book.gold_records();
    records.insert(records.end(), r.begin(), r.end());
  }
  write_records(records, out_dir / "gold" / "records.csv", RecordFormat::csv);
  write_file(out_dir / "gold" / "years.csv", years);
  for (auto name : synth::vocabulary_file_names())
    if (name == "gazetteer.tsv" || name.starts_with("schemas/"))
      write_file(out_dir / std::string(name), std::string(synth::vocabulary_file(name)));
  spdlog::info("synth: {} books, {} openings, {} gold records written to {}", books.size(), opts.count, records.size(),
               out_dir.string());
}

}  // namespace regrec::pipeline
