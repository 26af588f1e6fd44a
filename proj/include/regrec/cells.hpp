#pragma once

// Cell routing, repetition fill, column realignment and record assembly.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "regrec/gridrec.hpp"
#include "regrec/interchange.hpp"

namespace regrec::cells {

enum class ColumnKind { numeric, text, date, parish, any };

std::string to_string(ColumnKind k);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string label;
  ColumnKind kind = ColumnKind::any;
  std::optional<double> expected_avg_len;
};

struct ColumnSchema {
  std::vector<ColumnSpec> columns;

  /// Throws ValidationError on duplicate labels.
  void validate() const;
  std::vector<std::string> labels() const;
};

/// Tab-separated: `label<TAB>kind[<TAB>avg_len]`; `#` starts a comment line.
ColumnSchema parse_schema(const std::string& text);
ColumnSchema load_schema(const std::filesystem::path& path);

/// Argmax with priority single_line > multi_line > repetition > empty.
/// Throws ValidationError unless each value is in [0,1] and they sum to 1 (1e-6).
CellType classify_cell(const ClassProbs& probs);

struct RecognitionTask {
  std::size_t row = 0;
  std::size_t col = 0;
  std::optional<std::size_t> line;  // index into the cell's lines for multi-line cells
  Box box;
  bool downgraded = false;  // multi_line cell without line boxes, read as one line
};

/// Text-recognition work for a grid: empty and repetition cells are skipped,
/// single-line cells are read whole, multi-line cells line by line.
std::vector<RecognitionTask> route_cells(const gridrec::GridTable& grid);

struct ColumnEntry {
  CellType type = CellType::empty;
  std::optional<std::string> text;
};

struct FilledEntry {
  std::optional<std::string> text;
  bool filled = false;   // text copied from an earlier row
  bool orphan = false;   // repetition mark with nothing above it to copy
  friend bool operator==(const FilledEntry&, const FilledEntry&) = default;
};

/// Top-to-bottom column. Each repetition takes the text of the nearest
/// preceding single- or multi-line cell with non-empty text.
std::vector<FilledEntry> fill_repetitions(const std::vector<ColumnEntry>& column);

enum class AlignStatus { expected, realigned, failed };

struct AlignedRow {
  std::vector<std::pair<std::string, std::string>> fields;
  AlignStatus status = AlignStatus::expected;
  int shift = 0;
  double score = 0.0;
};

/// Compatibility of one text with a column kind, in [0,1]. Empty text is 0.5.
double kind_score(const std::string& text, ColumnKind kind);
bool looks_like_date(const std::string& text);

/// Positional mapping when the row matches the schema; otherwise the best
/// shift in [-2, 2] scored on kind and expected length, accepted above 0.5.
/// A failed row keeps the positional mapping with parish columns blanked.
AlignedRow realign_columns(const std::vector<std::string>& row_texts, const ColumnSchema& schema);

Direction direction_for(BookDirection book, PageSide side);

struct AssemblyContext {
  std::string book_id;
  std::string opening_id;
  PageSide side = PageSide::left;
  std::optional<int> year;
  /// Per-row override of `year` (same length as grid rows) when a page
  /// changes year mid-page.
  std::vector<std::optional<int>> row_years;
  bool year_inferred = false;
  Direction direction = Direction::unknown;
  const ColumnSchema* schema = nullptr;
};

struct AssemblyStats {
  std::size_t empty_rows = 0;
  std::size_t orphan_repetitions = 0;
  std::size_t realigned_rows = 0;
  std::size_t failed_rows = 0;
};

/// Text a cell contributes before repetition fill: the cell text for
/// single-line cells, joined line texts for multi-line cells, none otherwise.
std::optional<std::string> cell_text(const gridrec::GridCell& cell);

/// One record per grid row that is not entirely empty.
std::vector<MigrationRecord> assemble_records(const gridrec::GridTable& grid, const AssemblyContext& ctx,
                                              AssemblyStats* stats = nullptr);

}  // namespace regrec::cells
