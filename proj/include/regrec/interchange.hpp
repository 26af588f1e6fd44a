#pragma once

// Data model shared by every stage, plus the on-disk formats:
//  - detection documents: JSON Lines, one document per file;
//  - migration records: CSV (RFC 4180) or JSON Lines.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "regrec/error.hpp"

namespace regrec {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  double confidence = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  Point center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
  bool contains(Point p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

double intersection_area(const Box& a, const Box& b);
/// Intersection over union; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

/// Six keypoints of an opening: a/b/c along the top edge (left, middle,
/// right), d/e/f along the bottom edge.
struct OpeningKeypoints {
  Point a, b, c, d, e, f;
  friend bool operator==(const OpeningKeypoints&, const OpeningKeypoints&) = default;
};

enum class CellType { single_line = 0, multi_line = 1, repetition = 2, empty = 3 };
inline constexpr std::size_t kCellTypeCount = 4;

/// Probabilities in CellType order.
using ClassProbs = std::array<double, kCellTypeCount>;

/// Argmax with ties resolved in enum order. No distribution checks.
CellType routed_type(const ClassProbs& probs);

struct TextHypothesis {
  std::string text;
  double confidence = 1.0;
  friend bool operator==(const TextHypothesis&, const TextHypothesis&) = default;
};

struct TextLine {
  Box box;
  TextHypothesis text;
  friend bool operator==(const TextLine&, const TextLine&) = default;
};

struct CellHypothesis {
  Box box;
  ClassProbs class_probs{1.0, 0.0, 0.0, 0.0};
  std::vector<TextLine> lines;
  std::optional<TextHypothesis> text;
  friend bool operator==(const CellHypothesis&, const CellHypothesis&) = default;
};

struct TableDetection {
  Box box;
  std::vector<CellHypothesis> cells;
  friend bool operator==(const TableDetection&, const TableDetection&) = default;
};

struct YearDetection {
  Box box;
  TextHypothesis text;
  friend bool operator==(const YearDetection&, const YearDetection&) = default;
};

enum class LayoutType { handdrawn, preprinted, half_table, free_text, other };

enum class PageSide { left, right };

enum class Direction { in, out, unknown };

/// Book-level direction metadata carried in the document header.
enum class BookDirection { in, out, mixed, unknown };

struct DetectionDocument {
  std::string opening_id;
  std::string book_id;
  std::int64_t image_width = 0;
  std::int64_t image_height = 0;
  LayoutType layout_type = LayoutType::other;
  BookDirection direction = BookDirection::unknown;
  std::optional<OpeningKeypoints> keypoints;
  std::vector<TableDetection> tables;
  std::vector<YearDetection> year_detections;

  /// Side of the opening a point (original pixel space) belongs to: the
  /// B-E line when keypoints exist, otherwise the vertical image midline.
  PageSide page_assignment(Point p) const;

  friend bool operator==(const DetectionDocument&, const DetectionDocument&) = default;
};

enum class RecordFlag { inferred_cell, repetition_filled, realigned, year_inferred, unmatched_parish };

struct MigrationRecord {
  std::string book_id;
  std::string opening_id;
  PageSide page_side = PageSide::left;
  std::optional<int> year;
  Direction direction = Direction::unknown;
  std::vector<std::pair<std::string, std::string>> fields;  // column label -> text, in column order
  std::optional<std::string> parish_raw;
  std::optional<std::string> parish_canonical;
  std::set<RecordFlag> flags;

  const std::string* field(const std::string& label) const;
  friend bool operator==(const MigrationRecord&, const MigrationRecord&) = default;
};

enum class RecordFormat { csv, jsonl };

// Enum <-> name. from_string throws ValidationError on unknown names.
std::string to_string(CellType v);
std::string to_string(LayoutType v);
std::string to_string(PageSide v);
std::string to_string(Direction v);
std::string to_string(BookDirection v);
std::string to_string(RecordFlag v);
CellType cell_type_from_string(const std::string& s);
LayoutType layout_type_from_string(const std::string& s);
PageSide page_side_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);
BookDirection book_direction_from_string(const std::string& s);
RecordFlag record_flag_from_string(const std::string& s);

/// Checks every document invariant; throws ValidationError naming the field.
/// Class distributions within 1e-3 of summing to one are renormalized in place.
void validate(DetectionDocument& doc);

DetectionDocument parse_document(const std::string& text, const std::string& source = "<memory>");
std::string serialize_document(const DetectionDocument& doc);

DetectionDocument read_document(const std::filesystem::path& path);
void write_document(const DetectionDocument& doc, const std::filesystem::path& path);

std::string serialize_records(const std::vector<MigrationRecord>& records, RecordFormat format);
std::vector<MigrationRecord> parse_records(const std::string& text, RecordFormat format);

void write_records(const std::vector<MigrationRecord>& records, const std::filesystem::path& path,
                   RecordFormat format);
std::vector<MigrationRecord> read_records(const std::filesystem::path& path, RecordFormat format);
/// `.csv` -> csv, anything else -> jsonl.
RecordFormat record_format_for(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace regrec
