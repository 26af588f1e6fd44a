#pragma once

// Whole-corpus commands behind the command-line tool. Each returns its
// in-memory result as well as writing its output files.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "regrec/cells.hpp"
#include "regrec/chrono.hpp"
#include "regrec/eval.hpp"
#include "regrec/gridrec.hpp"
#include "regrec/interchange.hpp"
#include "regrec/normalize.hpp"
#include "regrec/synth.hpp"

namespace regrec::pipeline {

namespace fs = std::filesystem;

/// Exit codes of the command-line tool.
inline constexpr int kExitClean = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

struct ExtractOptions {
  gridrec::GridConfig grid;
  bool merge_split_tables = false;
  gridrec::MergeConfig merge;
  chrono::ChronoConfig chrono;
  /// Used when set; otherwise the rule-based year sequence.
  std::shared_ptr<chrono::YearCorrectorClient> corrector;
  std::optional<normalize::Gazetteer> gazetteer;
  double max_rel_dist = 0.25;
  /// Column schemas by layout name ("preprinted" -> preprinted.tsv).
  std::map<LayoutType, cells::ColumnSchema> schemas;
  std::size_t workers = 1;
};

/// Loads `<dir>/<layout>.tsv` for every layout that has a file.
std::map<LayoutType, cells::ColumnSchema> load_schemas(const fs::path& dir);

struct OpeningFailure {
  std::string source;  // file path or opening id
  std::string error;
};

struct RunSummary {
  std::size_t openings_total = 0;
  std::size_t openings_processed = 0;
  std::size_t openings_failed = 0;
  std::size_t books = 0;
  std::size_t tables = 0;
  std::size_t tables_failed = 0;
  std::size_t tables_merged = 0;
  std::size_t eps_retries = 0;
  std::size_t cells_detected = 0;
  std::size_t cells_inferred = 0;
  std::size_t cells_residual = 0;
  std::size_t grid_rows = 0;
  std::size_t rows_extracted = 0;
  std::size_t empty_rows = 0;
  std::size_t realigned_rows = 0;
  std::size_t failed_alignment_rows = 0;
  std::size_t orphan_repetitions = 0;
  std::size_t year_observations = 0;
  std::size_t year_discarded = 0;
  std::size_t year_corrections = 0;
  std::size_t pages_interpolated = 0;
  std::size_t in_page_year_changes = 0;
  std::size_t corrector_used = 0;
  std::size_t corrector_fallbacks = 0;
  std::size_t parish_matched = 0;
  std::size_t parish_unmatched = 0;
  std::vector<OpeningFailure> failures;

  RunSummary& operator+=(const RunSummary& o);
  nlohmann::ordered_json to_json() const;
  int exit_code() const { return openings_failed ? kExitPartial : kExitClean; }
};

/// A document or the reason it could not be read.
struct LoadedDocument {
  std::string source;
  std::optional<DetectionDocument> doc;
  std::string error;
};

/// Every `*.jsonl` file under `dir`, recursively, in path order.
std::vector<LoadedDocument> load_documents(const fs::path& dir);

struct ExtractResult {
  std::vector<MigrationRecord> records;  // by book id, opening id, page, row
  RunSummary summary;
};

/// Groups documents by book and processes books in parallel. Output does
/// not depend on the worker count.
ExtractResult extract(const std::vector<LoadedDocument>& docs, const ExtractOptions& opts);

/// extract() over a directory; writes the records (CSV or JSONL by
/// extension) and `summary_path` (JSON).
RunSummary cmd_extract(const fs::path& in_dir, const fs::path& out_path, const fs::path& summary_path,
                       const ExtractOptions& opts);

// ---- years ------------------------------------------------------------------

struct PageYearRow {
  std::string book_id;
  std::string opening_id;
  PageSide side = PageSide::left;
  std::string raws;  // header observations joined with '|'
  std::optional<int> year;
  chrono::YearSource source = chrono::YearSource::interpolated;
  std::vector<int> in_page_years;
};

/// Year resolution only, one row per page side.
std::vector<PageYearRow> resolve_years(const std::vector<DetectionDocument>& docs, const ExtractOptions& opts,
                                       RunSummary* summary = nullptr);
RunSummary cmd_years(const fs::path& in_dir, const fs::path& out_csv, const ExtractOptions& opts);

// ---- evaluation -------------------------------------------------------------

struct EvalOutcome {
  std::map<std::string, eval::EvalCounts> tables, rows, cols, cells;  // by "preprinted", "handdrawn", "all"
  eval::Confusion confusion{};
  std::vector<eval::TextPair> text_pairs;
  std::size_t unreadable_excluded = 0;
  chrono::YearScores years;
  geometry::AngleStats skew_before;
  geometry::AngleStats skew_after;
  std::size_t openings = 0;
  std::vector<std::string> unmatched_openings;
};

EvalOutcome evaluate(const std::vector<DetectionDocument>& pred, const std::vector<DetectionDocument>& gold,
                     const ExtractOptions& opts);
/// Writes tables.csv, rows.csv, columns.csv, cells.csv, cell_classes.csv,
/// text.csv, years.csv and skew.csv into `out_dir`.
EvalOutcome cmd_eval(const fs::path& pred_dir, const fs::path& gold_dir, const fs::path& out_dir,
                     const ExtractOptions& opts);

// ---- normalize / aggregate --------------------------------------------------

struct NormalizeOutcome {
  std::vector<MigrationRecord> usable;
  std::vector<normalize::DuplicatePair> duplicates;
  std::size_t duplicate_rows_removed = 0;
  std::map<normalize::RejectReason, std::size_t> tally;
};

/// Parish matching (when a gazetteer is given), duplicate-book removal and
/// the usability filter, in that order.
NormalizeOutcome normalize_records(std::vector<MigrationRecord> records, const normalize::Gazetteer* gazetteer,
                                   double max_rel_dist, double dup_threshold);
NormalizeOutcome cmd_normalize(const fs::path& in_path, const fs::path& out_path, const fs::path& report_path,
                               const normalize::Gazetteer* gazetteer, double max_rel_dist, double dup_threshold);

struct Aggregates {
  std::map<std::pair<int, Direction>, std::size_t> by_year;
  std::map<std::pair<std::string, Direction>, std::size_t> by_parish;
  std::map<normalize::RejectReason, std::size_t> excluded;
};

/// Counts over usable records; records of books outside `books` (when
/// non-empty) are ignored.
Aggregates aggregate(const std::vector<MigrationRecord>& records, const std::vector<std::string>& books);
/// Writes by_year.csv, by_parish.csv and excluded.csv.
Aggregates cmd_aggregate(const fs::path& records_path, const fs::path& out_dir, const std::vector<std::string>& books);

// ---- report / synth ---------------------------------------------------------

/// Plain-text rendering of an evaluation directory and, optionally, a run summary.
std::string render_report(const fs::path& eval_dir, const std::optional<fs::path>& summary_path);

struct SynthCorpusOptions {
  synth::SynthConfig config;
  std::size_t count = 10;  // openings
  std::size_t openings_per_book = 20;
  std::size_t duplicate_books = 0;  // extra copies of the first books under new ids
};

/// Writes docs/ (observed), gold/docs/ (annotations), gold/records.csv,
/// gold/years.csv, perturbations/, gazetteer.tsv and schemas/.
void cmd_synth(const SynthCorpusOptions& opts, const fs::path& out_dir);

/// Books of a corpus in generation order (also used by cmd_synth).
std::vector<synth::SynthBook> synth_corpus(const SynthCorpusOptions& opts);

nlohmann::ordered_json perturbation_json(const synth::PerturbationLog& log);

}  // namespace regrec::pipeline
