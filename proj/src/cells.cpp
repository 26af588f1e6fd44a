#include "regrec/cells.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "regrec/text.hpp"

namespace regrec::cells {

namespace {

constexpr std::array<const char*, 5> kKindNames{"numeric", "text", "date", "parish", "any"};
constexpr double kAcceptScore = 0.5;
constexpr int kMaxShift = 2;
constexpr double kKindWeight = 0.75;

// Finnish and Swedish month names; a token matches when it is a prefix of at
// least three letters, so "maalisk." and "febr." both count.
constexpr std::array<const char*, 24> kMonthNames{
    "tammikuu", "helmikuu", "maaliskuu", "huhtikuu", "toukokuu", "kesäkuu",  "heinäkuu", "elokuu",
    "syyskuu",  "lokakuu",  "marraskuu", "joulukuu", "januari",  "februari", "mars",     "april",
    "maj",      "juni",     "juli",      "augusti",  "september", "oktober", "november", "december"};

bool is_month_token(const std::string& token) {
  std::string t = token;
  while (!t.empty() && t.back() == '.') t.pop_back();
  if (text::length(t) < 3) return false;
  for (const char* m : kMonthNames)
    if (std::string_view(m).starts_with(t)) return true;
  return false;
}

}  // namespace

std::string to_string(ColumnKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

ColumnKind column_kind_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (s == kKindNames[i]) return static_cast<ColumnKind>(i);
  throw ValidationError("kind", "unknown column kind '" + s + "'");
}

void ColumnSchema::validate() const {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (!seen.insert(columns[i].label).second)
      throw ValidationError("columns[" + std::to_string(i) + "].label", "duplicate label '" + columns[i].label + "'");
}

std::vector<std::string> ColumnSchema::labels() const {
  std::vector<std::string> out;
  for (const auto& c : columns) out.push_back(c.label);
  return out;
}

ColumnSchema parse_schema(const std::string& content) {
  ColumnSchema schema;
  std::istringstream in(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    std::vector<std::string> parts;
    std::istringstream ls(line);
    for (std::string p; std::getline(ls, p, '\t');) parts.push_back(text::trim(p));
    if (parts.size() < 2 || parts.size() > 3)
      throw ParseError("<schema>", n, "expected label<TAB>kind[<TAB>avg_len]");
    ColumnSpec spec{parts[0], column_kind_from_string(parts[1]), std::nullopt};
    if (parts.size() == 3 && !parts[2].empty()) {
      try {
        spec.expected_avg_len = std::stod(parts[2]);
      } catch (const std::exception&) {
        throw ParseError("<schema>", n, "avg_len is not a number");
      }
    }
    schema.columns.push_back(std::move(spec));
  }
  schema.validate();
  return schema;
}

ColumnSchema load_schema(const std::filesystem::path& path) {
  try {
    return parse_schema(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e.line(), e.what());
  }
}

CellType classify_cell(const ClassProbs& probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("class_probs", "probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("class_probs", "probabilities do not sum to 1");
  return routed_type(probs);
}

std::vector<RecognitionTask> route_cells(const gridrec::GridTable& grid) {
  std::vector<RecognitionTask> tasks;
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      const CellHypothesis& cell = grid.at(r, c).cell;
      switch (routed_type(cell.class_probs)) {
        case CellType::single_line:
          tasks.push_back({r, c, std::nullopt, cell.box, false});
          break;
        case CellType::multi_line:
          if (cell.lines.empty()) {
            tasks.push_back({r, c, std::nullopt, cell.box, true});
          } else {
            for (std::size_t l = 0; l < cell.lines.size(); ++l) tasks.push_back({r, c, l, cell.lines[l].box, false});
          }
          break;
        case CellType::repetition:
        case CellType::empty:
          break;
      }
    }
  }
  return tasks;
}

std::vector<FilledEntry> fill_repetitions(const std::vector<ColumnEntry>& column) {
  std::vector<FilledEntry> out;
  out.reserve(column.size());
  std::optional<std::string> last;
  for (const ColumnEntry& e : column) {
    switch (e.type) {
      case CellType::single_line:
      case CellType::multi_line:
        out.push_back({e.text, false, false});
        if (e.text && !e.text->empty()) last = e.text;
        break;
      case CellType::repetition:
        if (last)
          out.push_back({last, true, false});
        else
          out.push_back({std::nullopt, false, true});
        break;
      case CellType::empty:
        out.push_back({std::nullopt, false, false});
        break;
    }
  }
  return out;
}

bool looks_like_date(const std::string& s) {
  static const std::regex numeric_date(R"(^\s*(\d{1,2})\s*[./-]\s*(\d{1,2})\s*(?:[./-]\s*(\d{2,4}))?\s*\.?\s*$)");
  std::smatch m;
  if (std::regex_match(s, m, numeric_date)) {
    int day = std::stoi(m[1]), month = std::stoi(m[2]);
    return day >= 1 && day <= 31 && month >= 1 && month <= 12;
  }
  std::string folded = text::casefold(s);
  std::string token;
  std::istringstream in(folded);
  while (in >> token)
    if (is_month_token(token)) return true;
  return false;
}

double kind_score(const std::string& raw, ColumnKind kind) {
  std::string s = text::trim(raw);
  if (s.empty()) return 0.5;
  switch (kind) {
    case ColumnKind::any:
      return 1.0;
    case ColumnKind::numeric:
      return text::is_numeric(s) && !looks_like_date(s) ? 1.0 : (text::is_numeric(s) ? 0.5 : 0.0);
    case ColumnKind::date:
      return looks_like_date(s) ? 1.0 : 0.0;
    case ColumnKind::text:
    case ColumnKind::parish:
      return text::has_letter(s) && !looks_like_date(s) ? 1.0 : 0.0;
  }
  return 0.0;
}

namespace {

double column_score(const std::string& s, const ColumnSpec& spec) {
  double k = kind_score(s, spec.kind);
  std::string t = text::trim(s);
  if (!spec.expected_avg_len || t.empty() || *spec.expected_avg_len <= 0.0) return k;
  double len = static_cast<double>(text::length(t));
  double closeness = std::max(0.0, 1.0 - std::abs(len - *spec.expected_avg_len) / std::max(len, *spec.expected_avg_len));
  return kKindWeight * k + (1.0 - kKindWeight) * closeness;
}

std::vector<std::pair<std::string, std::string>> mapped(const std::vector<std::string>& row, const ColumnSchema& schema,
                                                        int shift) {
  std::vector<std::pair<std::string, std::string>> fields;
  for (std::size_t j = 0; j < schema.columns.size(); ++j) {
    long idx = static_cast<long>(j) + shift;
    std::string v = idx >= 0 && idx < static_cast<long>(row.size()) ? row[static_cast<std::size_t>(idx)] : "";
    fields.emplace_back(schema.columns[j].label, std::move(v));
  }
  return fields;
}

}  // namespace

AlignedRow realign_columns(const std::vector<std::string>& row, const ColumnSchema& schema) {
  AlignedRow out;
  if (schema.columns.empty()) {
    out.status = AlignStatus::failed;
    return out;
  }
  if (row.size() == schema.columns.size()) {
    bool all_ok = true;
    for (std::size_t j = 0; j < row.size() && all_ok; ++j)
      all_ok = kind_score(row[j], schema.columns[j].kind) >= kAcceptScore;
    if (all_ok) {
      out.fields = mapped(row, schema, 0);
      out.status = AlignStatus::expected;
      out.score = 1.0;
      return out;
    }
  }
  // Shift order fixes tie-breaks: smaller moves first, positive before negative.
  constexpr std::array<int, 2 * kMaxShift + 1> kShifts{0, 1, -1, 2, -2};
  double best = -1.0;
  int best_shift = 0;
  for (int s : kShifts) {
    double total = 0.0;
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
      long idx = static_cast<long>(j) + s;
      if (idx < 0 || idx >= static_cast<long>(row.size())) continue;  // missing column scores 0
      total += column_score(row[static_cast<std::size_t>(idx)], schema.columns[j]);
    }
    double score = total / static_cast<double>(schema.columns.size());
    if (score > best) {
      best = score;
      best_shift = s;
    }
  }
  out.score = best;
  if (best > kAcceptScore) {
    out.fields = mapped(row, schema, best_shift);
    out.shift = best_shift;
    out.status = AlignStatus::realigned;
    return out;
  }
  out.fields = mapped(row, schema, 0);
  for (std::size_t j = 0; j < schema.columns.size(); ++j)
    if (schema.columns[j].kind == ColumnKind::parish) out.fields[j].second.clear();
  out.status = AlignStatus::failed;
  return out;
}

Direction direction_for(BookDirection book, PageSide side) {
  switch (book) {
    case BookDirection::in:
      return Direction::in;
    case BookDirection::out:
      return Direction::out;
    case BookDirection::mixed:
      return side == PageSide::left ? Direction::in : Direction::out;
    case BookDirection::unknown:
      break;
  }
  return Direction::unknown;
}

std::optional<std::string> cell_text(const gridrec::GridCell& gc) {
  const CellHypothesis& cell = gc.cell;
  switch (routed_type(cell.class_probs)) {
    case CellType::single_line:
      if (cell.text) return cell.text->text;
      break;
    case CellType::multi_line: {
      if (cell.lines.empty()) return cell.text ? std::optional(cell.text->text) : std::nullopt;
      std::string joined;
      for (const auto& l : cell.lines) {
        if (!joined.empty()) joined += ' ';
        joined += l.text.text;
      }
      return joined;
    }
    default:
      break;
  }
  return std::nullopt;
}

std::vector<MigrationRecord> assemble_records(const gridrec::GridTable& grid, const AssemblyContext& ctx,
                                              AssemblyStats* stats) {
  const std::size_t nr = grid.rows.size(), nc = grid.cols.size();
  std::vector<std::vector<FilledEntry>> filled(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    std::vector<ColumnEntry> column;
    for (std::size_t r = 0; r < nr; ++r)
      column.push_back({routed_type(grid.at(r, c).cell.class_probs), cell_text(grid.at(r, c))});
    filled[c] = fill_repetitions(column);
  }

  AssemblyStats local;
  std::vector<MigrationRecord> records;
  for (std::size_t r = 0; r < nr; ++r) {
    bool all_empty = true;
    for (std::size_t c = 0; c < nc && all_empty; ++c)
      all_empty = routed_type(grid.at(r, c).cell.class_probs) == CellType::empty;
    if (all_empty) {
      ++local.empty_rows;
      continue;
    }
    MigrationRecord rec;
    rec.book_id = ctx.book_id;
    rec.opening_id = ctx.opening_id;
    rec.page_side = ctx.side;
    rec.year = r < ctx.row_years.size() ? ctx.row_years[r] : ctx.year;
    rec.direction = ctx.direction;
    if (ctx.year_inferred) rec.flags.insert(RecordFlag::year_inferred);

    std::vector<std::string> texts;
    for (std::size_t c = 0; c < nc; ++c) {
      const FilledEntry& e = filled[c][r];
      texts.push_back(e.text.value_or(""));
      if (e.filled) rec.flags.insert(RecordFlag::repetition_filled);
      if (e.orphan) ++local.orphan_repetitions;
      if (grid.at(r, c).provenance == gridrec::Provenance::inferred) rec.flags.insert(RecordFlag::inferred_cell);
    }

    if (ctx.schema) {
      AlignedRow aligned = realign_columns(texts, *ctx.schema);
      rec.fields = std::move(aligned.fields);
      if (aligned.status == AlignStatus::realigned) {
        rec.flags.insert(RecordFlag::realigned);
        ++local.realigned_rows;
      } else if (aligned.status == AlignStatus::failed) {
        ++local.failed_rows;
      }
      for (std::size_t j = 0; j < ctx.schema->columns.size(); ++j) {
        if (ctx.schema->columns[j].kind != ColumnKind::parish) continue;
        std::string p = text::trim(rec.fields[j].second);
        if (!p.empty()) rec.parish_raw = p;
        break;
      }
    } else {
      for (std::size_t c = 0; c < nc; ++c) rec.fields.emplace_back("col_" + std::to_string(c + 1), texts[c]);
    }
    records.push_back(std::move(rec));
  }
  if (stats) {
    stats->empty_rows += local.empty_rows;
    stats->orphan_repetitions += local.orphan_repetitions;
    stats->realigned_rows += local.realigned_rows;
    stats->failed_rows += local.failed_rows;
  }
  return records;
}

}  // namespace regrec::cells
