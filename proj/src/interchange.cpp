#include "regrec/interchange.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "regrec/csv.hpp"

namespace regrec {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

template <typename E, std::size_t N>
std::string name_of(E v, const std::array<const char*, N>& names) {
  return names.at(static_cast<std::size_t>(v));
}

template <typename E, std::size_t N>
E value_of(const std::string& s, const std::array<const char*, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  throw ValidationError(what, "unknown value '" + s + "'");
}

constexpr std::array<const char*, 4> kCellTypeNames{"single_line", "multi_line", "repetition", "empty"};
constexpr std::array<const char*, 5> kLayoutNames{"handdrawn", "preprinted", "half_table", "free_text",
                                                  "other"};
constexpr std::array<const char*, 2> kSideNames{"left", "right"};
constexpr std::array<const char*, 3> kDirectionNames{"in", "out", "unknown"};
constexpr std::array<const char*, 4> kBookDirectionNames{"in", "out", "mixed", "unknown"};
constexpr std::array<const char*, 5> kFlagNames{"inferred_cell", "repetition_filled", "realigned",
                                                "year_inferred", "unmatched_parish"};

constexpr double kCellClampTolerance = 2.0;
constexpr double kProbTolerance = 1e-6;
constexpr double kProbRenormalizeTolerance = 1e-3;

void check_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) throw ValidationError(field, "value is not finite");
}

void validate_point(const Point& p, const std::string& field) {
  check_finite(p.x, field + ".x");
  check_finite(p.y, field + ".y");
}

void validate_box(const Box& b, const std::string& field) {
  check_finite(b.x_min, field + ".x_min");
  check_finite(b.y_min, field + ".y_min");
  check_finite(b.x_max, field + ".x_max");
  check_finite(b.y_max, field + ".y_max");
  if (!(b.x_min < b.x_max)) throw ValidationError(field, "x_min must be < x_max");
  if (!(b.y_min < b.y_max)) throw ValidationError(field, "y_min must be < y_max");
  if (!(b.confidence >= 0.0 && b.confidence <= 1.0))
    throw ValidationError(field + ".confidence", "must lie in [0,1]");
}

void validate_text(const TextHypothesis& t, const std::string& field) {
  if (!(t.confidence >= 0.0 && t.confidence <= 1.0))
    throw ValidationError(field + ".confidence", "must lie in [0,1]");
}

void validate_probs(ClassProbs& probs, const std::string& field) {
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
      throw ValidationError(field + "[" + std::to_string(i) + "]", "probability outside [0,1]");
    sum += probs[i];
  }
  double off = std::abs(sum - 1.0);
  if (off <= kProbTolerance) return;
  if (off > kProbRenormalizeTolerance)
    throw ValidationError(field, "probabilities sum to " + std::to_string(sum));
  for (double& p : probs) p /= sum;
}

void validate_keypoints(const OpeningKeypoints& kp, const std::string& field) {
  validate_point(kp.a, field + ".a");
  validate_point(kp.b, field + ".b");
  validate_point(kp.c, field + ".c");
  validate_point(kp.d, field + ".d");
  validate_point(kp.e, field + ".e");
  validate_point(kp.f, field + ".f");
  if (!(kp.a.x < kp.b.x && kp.b.x < kp.c.x)) throw ValidationError(field, "requires a.x < b.x < c.x");
  if (!(kp.d.x < kp.e.x && kp.e.x < kp.f.x)) throw ValidationError(field, "requires d.x < e.x < f.x");
  if (!(kp.a.y < kp.d.y)) throw ValidationError(field, "requires a.y < d.y");
  if (!(kp.c.y < kp.f.y)) throw ValidationError(field, "requires c.y < f.y");
}

// ---- JSON helpers -------------------------------------------------------

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& v, const char* key) {
  const json& x = require(v, key);
  if (!x.is_number()) throw std::invalid_argument(std::string("field '") + key + "' must be a number");
  return x.get<double>();
}

std::string string_field(const json& v, const char* key) {
  const json& x = require(v, key);
  if (!x.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return x.get<std::string>();
}

Point point_from(const json& v) { return {number(v, "x"), number(v, "y")}; }
json to_json(const Point& p) { return json{{"x", p.x}, {"y", p.y}}; }

Box box_from(const json& v) {
  Box b{number(v, "x_min"), number(v, "y_min"), number(v, "x_max"), number(v, "y_max"), 1.0};
  if (v.contains("confidence")) b.confidence = number(v, "confidence");
  return b;
}
json to_json(const Box& b) {
  return json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max},
              {"y_max", b.y_max}, {"confidence", b.confidence}};
}

TextHypothesis text_from(const json& v) {
  TextHypothesis t{string_field(v, "text"), 1.0};
  if (v.contains("confidence")) t.confidence = number(v, "confidence");
  return t;
}
json to_json(const TextHypothesis& t) { return json{{"text", t.text}, {"confidence", t.confidence}}; }

void parse_line(const json& line, DetectionDocument& doc, bool& have_header) {
  if (!line.is_object()) throw std::invalid_argument("line is not an object");
  std::string kind = string_field(line, "kind");
  if (kind == "document") {
    if (have_header) throw std::invalid_argument("duplicate document header");
    have_header = true;
    doc.opening_id = string_field(line, "opening_id");
    doc.book_id = string_field(line, "book_id");
    const json& w = require(line, "image_width");
    const json& h = require(line, "image_height");
    if (!w.is_number_integer() || !h.is_number_integer())
      throw std::invalid_argument("image dimensions must be integers");
    doc.image_width = w.get<std::int64_t>();
    doc.image_height = h.get<std::int64_t>();
    doc.layout_type = layout_type_from_string(string_field(line, "layout_type"));
    if (line.contains("direction"))
      doc.direction = book_direction_from_string(string_field(line, "direction"));
    return;
  }
  if (!have_header) throw std::invalid_argument("first line must be the document header");
  if (kind == "keypoints") {
    if (doc.keypoints) throw std::invalid_argument("duplicate keypoints line");
    doc.keypoints = OpeningKeypoints{point_from(require(line, "a")), point_from(require(line, "b")),
                                     point_from(require(line, "c")), point_from(require(line, "d")),
                                     point_from(require(line, "e")), point_from(require(line, "f"))};
  } else if (kind == "table") {
    doc.tables.push_back(TableDetection{box_from(require(line, "box")), {}});
  } else if (kind == "cell") {
    const json& t = require(line, "table");
    if (!t.is_number_unsigned() || t.get<std::size_t>() >= doc.tables.size())
      throw std::invalid_argument("cell references an unknown table");
    CellHypothesis cell;
    cell.box = box_from(require(line, "box"));
    const json& probs = require(line, "class_probs");
    if (!probs.is_array() || probs.size() != kCellTypeCount)
      throw std::invalid_argument("class_probs must be an array of 4 numbers");
    for (std::size_t i = 0; i < kCellTypeCount; ++i) {
      if (!probs[i].is_number()) throw std::invalid_argument("class_probs must be numbers");
      cell.class_probs[i] = probs[i].get<double>();
    }
    if (line.contains("text") && !line["text"].is_null()) cell.text = text_from(line["text"]);
    if (line.contains("lines")) {
      const json& lines = line["lines"];
      if (!lines.is_array()) throw std::invalid_argument("lines must be an array");
      for (const json& l : lines)
        cell.lines.push_back(TextLine{box_from(require(l, "box")), text_from(require(l, "text"))});
    }
    doc.tables[t.get<std::size_t>()].cells.push_back(std::move(cell));
  } else if (kind == "year") {
    doc.year_detections.push_back(YearDetection{box_from(require(line, "box")), text_from(require(line, "text"))});
  } else {
    throw std::invalid_argument("unknown line kind '" + kind + "'");
  }
}

ordered_json record_to_json(const MigrationRecord& r) {
  ordered_json j;
  j["book_id"] = r.book_id;
  j["opening_id"] = r.opening_id;
  j["page_side"] = to_string(r.page_side);
  j["year"] = r.year ? ordered_json(*r.year) : ordered_json(nullptr);
  j["direction"] = to_string(r.direction);
  ordered_json fields = ordered_json::object();
  for (const auto& [label, text] : r.fields) fields[label] = text;
  j["fields"] = std::move(fields);
  j["parish_raw"] = r.parish_raw ? ordered_json(*r.parish_raw) : ordered_json(nullptr);
  j["parish_canonical"] = r.parish_canonical ? ordered_json(*r.parish_canonical) : ordered_json(nullptr);
  ordered_json flags = ordered_json::array();
  for (RecordFlag f : r.flags) flags.push_back(to_string(f));
  j["flags"] = std::move(flags);
  return j;
}

std::optional<std::string> optional_string(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

std::vector<std::pair<std::string, std::string>> fields_from(const ordered_json& f) {
  if (!f.is_object()) throw Error("records: fields must be an object");
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = f.begin(); it != f.end(); ++it) out.emplace_back(it.key(), it.value().get<std::string>());
  return out;
}

MigrationRecord record_from_json(const ordered_json& j) {
  MigrationRecord r;
  r.book_id = j.at("book_id").get<std::string>();
  r.opening_id = j.at("opening_id").get<std::string>();
  r.page_side = page_side_from_string(j.at("page_side").get<std::string>());
  if (!j.at("year").is_null()) r.year = j["year"].get<int>();
  r.direction = direction_from_string(j.at("direction").get<std::string>());
  r.fields = fields_from(j.at("fields"));
  r.parish_raw = optional_string(j, "parish_raw");
  r.parish_canonical = optional_string(j, "parish_canonical");
  for (const auto& f : j.at("flags")) r.flags.insert(record_flag_from_string(f.get<std::string>()));
  return r;
}

const csv::Row kRecordHeader{"book_id",    "opening_id",       "page_side", "year",  "direction",
                             "parish_raw", "parish_canonical", "flags",     "fields"};

}  // namespace

std::string to_string(CellType v) { return name_of(v, kCellTypeNames); }
std::string to_string(LayoutType v) { return name_of(v, kLayoutNames); }
std::string to_string(PageSide v) { return name_of(v, kSideNames); }
std::string to_string(Direction v) { return name_of(v, kDirectionNames); }
std::string to_string(BookDirection v) { return name_of(v, kBookDirectionNames); }
std::string to_string(RecordFlag v) { return name_of(v, kFlagNames); }
CellType cell_type_from_string(const std::string& s) { return value_of<CellType>(s, kCellTypeNames, "cell_type"); }
LayoutType layout_type_from_string(const std::string& s) {
  return value_of<LayoutType>(s, kLayoutNames, "layout_type");
}
PageSide page_side_from_string(const std::string& s) { return value_of<PageSide>(s, kSideNames, "page_side"); }
Direction direction_from_string(const std::string& s) {
  return value_of<Direction>(s, kDirectionNames, "direction");
}
BookDirection book_direction_from_string(const std::string& s) {
  return value_of<BookDirection>(s, kBookDirectionNames, "direction");
}
RecordFlag record_flag_from_string(const std::string& s) { return value_of<RecordFlag>(s, kFlagNames, "flags"); }

PageSide DetectionDocument::page_assignment(Point p) const {
  if (keypoints) {
    const Point& top = keypoints->b;
    const Point& bottom = keypoints->e;
    double cross = (bottom.x - top.x) * (p.y - top.y) - (bottom.y - top.y) * (p.x - top.x);
    return cross > 0.0 ? PageSide::left : PageSide::right;
  }
  return p.x < static_cast<double>(image_width) / 2.0 ? PageSide::left : PageSide::right;
}

double intersection_area(const Box& a, const Box& b) {
  double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

const std::string* MigrationRecord::field(const std::string& label) const {
  for (const auto& [l, text] : fields)
    if (l == label) return &text;
  return nullptr;
}

void validate(DetectionDocument& doc) {
  if (doc.opening_id.empty()) throw ValidationError("opening_id", "must not be empty");
  if (doc.book_id.empty()) throw ValidationError("book_id", "must not be empty");
  if (doc.image_width <= 0) throw ValidationError("image_width", "must be positive");
  if (doc.image_height <= 0) throw ValidationError("image_height", "must be positive");
  if (doc.keypoints) validate_keypoints(*doc.keypoints, "keypoints");
  for (std::size_t t = 0; t < doc.tables.size(); ++t) {
    TableDetection& table = doc.tables[t];
    const std::string tpath = "tables[" + std::to_string(t) + "]";
    validate_box(table.box, tpath + ".box");
    for (std::size_t c = 0; c < table.cells.size(); ++c) {
      CellHypothesis& cell = table.cells[c];
      const std::string cpath = tpath + ".cells[" + std::to_string(c) + "]";
      validate_box(cell.box, cpath + ".box");
      if (cell.box.x_min < table.box.x_min - kCellClampTolerance ||
          cell.box.y_min < table.box.y_min - kCellClampTolerance ||
          cell.box.x_max > table.box.x_max + kCellClampTolerance ||
          cell.box.y_max > table.box.y_max + kCellClampTolerance)
        throw ValidationError(cpath + ".box", "cell lies outside its table box");
      validate_probs(cell.class_probs, cpath + ".class_probs");
      if (cell.text) validate_text(*cell.text, cpath + ".text");
      for (std::size_t l = 0; l < cell.lines.size(); ++l) {
        const std::string lpath = cpath + ".lines[" + std::to_string(l) + "]";
        validate_box(cell.lines[l].box, lpath + ".box");
        validate_text(cell.lines[l].text, lpath + ".text");
      }
      if (!cell.lines.empty() && routed_type(cell.class_probs) != CellType::multi_line)
        throw ValidationError(cpath + ".lines", "line boxes are only allowed on multi_line cells");
    }
  }
  for (std::size_t y = 0; y < doc.year_detections.size(); ++y) {
    const std::string ypath = "year_detections[" + std::to_string(y) + "]";
    validate_box(doc.year_detections[y].box, ypath + ".box");
    validate_text(doc.year_detections[y].text, ypath + ".text");
  }
}

CellType routed_type(const ClassProbs& probs) {
  // Strict '>' keeps the earlier class on ties: single > multi > repetition > empty.
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return static_cast<CellType>(best);
}

DetectionDocument parse_document(const std::string& text, const std::string& source) {
  DetectionDocument doc;
  bool have_header = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      parse_line(json::parse(line), doc, have_header);
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(source, 0, "missing document header");
  validate(doc);
  return doc;
}

std::string serialize_document(const DetectionDocument& doc) {
  std::string out;
  auto emit = [&out](const json& j) {
    out += j.dump(-1, ' ', false, json::error_handler_t::strict);
    out += '\n';
  };
  json header{{"kind", "document"},
              {"opening_id", doc.opening_id},
              {"book_id", doc.book_id},
              {"image_width", doc.image_width},
              {"image_height", doc.image_height},
              {"layout_type", to_string(doc.layout_type)}};
  if (doc.direction != BookDirection::unknown) header["direction"] = to_string(doc.direction);
  emit(header);
  if (doc.keypoints) {
    const auto& kp = *doc.keypoints;
    emit(json{{"kind", "keypoints"},
              {"a", to_json(kp.a)},
              {"b", to_json(kp.b)},
              {"c", to_json(kp.c)},
              {"d", to_json(kp.d)},
              {"e", to_json(kp.e)},
              {"f", to_json(kp.f)}});
  }
  for (std::size_t t = 0; t < doc.tables.size(); ++t) {
    emit(json{{"kind", "table"}, {"box", to_json(doc.tables[t].box)}});
    for (const CellHypothesis& cell : doc.tables[t].cells) {
      json j{{"kind", "cell"}, {"table", t}, {"box", to_json(cell.box)}, {"class_probs", cell.class_probs}};
      if (cell.text) j["text"] = to_json(*cell.text);
      if (!cell.lines.empty()) {
        json lines = json::array();
        for (const TextLine& l : cell.lines) lines.push_back(json{{"box", to_json(l.box)}, {"text", to_json(l.text)}});
        j["lines"] = std::move(lines);
      }
      emit(j);
    }
  }
  for (const YearDetection& y : doc.year_detections)
    emit(json{{"kind", "year"}, {"box", to_json(y.box)}, {"text", to_json(y.text)}});
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

DetectionDocument read_document(const std::filesystem::path& path) {
  return parse_document(read_file(path), path.string());
}

void write_document(const DetectionDocument& doc, const std::filesystem::path& path) {
  write_file(path, serialize_document(doc));
}

std::string serialize_records(const std::vector<MigrationRecord>& records, RecordFormat format) {
  std::string out;
  if (format == RecordFormat::jsonl) {
    for (const auto& r : records) {
      out += record_to_json(r).dump();
      out += '\n';
    }
    return out;
  }
  out += csv::format_row(kRecordHeader);
  for (const auto& r : records) {
    std::string flags;
    for (RecordFlag f : r.flags) {
      if (!flags.empty()) flags += ';';
      flags += to_string(f);
    }
    out += csv::format_row({r.book_id, r.opening_id, to_string(r.page_side), r.year ? std::to_string(*r.year) : "",
                            to_string(r.direction), r.parish_raw.value_or(""), r.parish_canonical.value_or(""),
                            flags, record_to_json(r)["fields"].dump()});
  }
  return out;
}

std::vector<MigrationRecord> parse_records(const std::string& text, RecordFormat format) {
  std::vector<MigrationRecord> records;
  if (format == RecordFormat::jsonl) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        records.push_back(record_from_json(ordered_json::parse(line)));
      } catch (const ordered_json::exception& e) {
        throw Error(std::string("records: ") + e.what());
      }
    }
    return records;
  }
  auto rows = csv::parse(text);
  if (rows.empty()) return records;
  if (rows.front() != kRecordHeader) throw Error("records: unexpected CSV header");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != kRecordHeader.size()) throw Error("records: row " + std::to_string(i) + " has wrong arity");
    MigrationRecord r;
    r.book_id = row[0];
    r.opening_id = row[1];
    r.page_side = page_side_from_string(row[2]);
    if (!row[3].empty()) r.year = std::stoi(row[3]);
    r.direction = direction_from_string(row[4]);
    if (!row[5].empty()) r.parish_raw = row[5];
    if (!row[6].empty()) r.parish_canonical = row[6];
    std::istringstream flags(row[7]);
    for (std::string f; std::getline(flags, f, ';');)
      if (!f.empty()) r.flags.insert(record_flag_from_string(f));
    try {
      r.fields = fields_from(ordered_json::parse(row[8]));
    } catch (const ordered_json::exception& e) {
      throw Error(std::string("records: fields: ") + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_records(const std::vector<MigrationRecord>& records, const std::filesystem::path& path,
                   RecordFormat format) {
  write_file(path, serialize_records(records, format));
}

std::vector<MigrationRecord> read_records(const std::filesystem::path& path, RecordFormat format) {
  return parse_records(read_file(path), format);
}

RecordFormat record_format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? RecordFormat::csv : RecordFormat::jsonl;
}

}  // namespace regrec
