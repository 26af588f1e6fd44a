#include "regrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "regrec/chrono.hpp"
#include "regrec/text.hpp"

namespace regrec::synth {

namespace {

struct VocabFile {
  std::string_view name;
  std::string_view content;
};

constexpr VocabFile kVocab[] = {
#include "regrec_vocab.inc"
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Distributions are derived from raw engine output so fixtures do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  bool chance(double p) { return p > 0.0 && uniform() < p; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  long range(long lo, long hi) { return lo + static_cast<long>(index(static_cast<std::size_t>(hi - lo + 1))); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[index(v.size())];
  }

 private:
  std::mt19937_64 eng_;
};

std::vector<std::string> lines_of(std::string_view content) {
  std::vector<std::string> out;
  std::istringstream in{std::string(content)};
  for (std::string line; std::getline(in, line);) {
    line = text::trim(line);
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

struct Vocabulary {
  std::vector<std::string> given;
  std::vector<std::string> surnames;
  std::vector<std::string> occupations;
};

const Vocabulary& vocabulary() {
  static const Vocabulary v{lines_of(vocabulary_file("given_names.txt")), lines_of(vocabulary_file("surnames.txt")),
                            lines_of(vocabulary_file("occupations.txt"))};
  return v;
}

const std::map<char32_t, std::u32string>& text_confusions() {
  static const std::map<char32_t, std::u32string> m{
      {U'1', U"7l"}, {U'7', U"1"}, {U'4', U"/"}, {U'0', U"6o"}, {U'6', U"0b"}, {U'5', U"S"}, {U'8', U"B"},
      {U'a', U"o"},  {U'o', U"a"}, {U'e', U"c"}, {U'c', U"e"},  {U'n', U"u"},  {U'u', U"n"}, {U'i', U"l"},
      {U'l', U"i"},  {U'm', U"n"}, {U'h', U"b"}, {U'ä', U"a"},  {U'ö', U"o"},  {U'å', U"a"}};
  return m;
}

ClassProbs probs_for(CellType t) {
  ClassProbs p{0.05, 0.05, 0.05, 0.05};
  p[static_cast<std::size_t>(t)] = 0.85;
  return p;
}

double column_weight(const std::string& label) {
  static const std::map<std::string, double> w{{"number", 1.0},  {"date", 1.2},      {"name", 2.4}, {"persons", 0.8},
                                               {"parish", 1.6},  {"communion", 1.0}, {"notes", 1.6}};
  auto it = w.find(label);
  return it == w.end() ? 1.0 : it->second;
}

struct PageFrame {
  double x0, x1;          // table extent
  double margin_x0, margin_x1;  // where in-page year mentions sit
};

struct OpeningFrame {
  OpeningKeypoints kp;
  double y0, y1;
  PageFrame left, right;
};

OpeningFrame frame_for(const SynthConfig& cfg) {
  const double w = static_cast<double>(cfg.image_width), h = static_cast<double>(cfg.image_height);
  const double mx = 0.05 * w, my = 0.06 * h, mid = w / 2.0;
  OpeningFrame f;
  f.kp = {{mx, my}, {mid, my}, {w - mx, my}, {mx, h - my}, {mid, h - my}, {w - mx, h - my}};
  f.y0 = my + 0.09 * h;
  f.y1 = h - my - 0.04 * h;
  const double margin = 0.035 * w, inner = 0.02 * w;
  f.left = {mx + margin, mid - inner, mx + 10.0, mx + margin - 10.0};
  f.right = {mid + inner, w - mx - margin, w - mx - margin + 10.0, w - mx - 10.0};
  return f;
}

Point rotate(Point p, Point c, double rad) {
  const double s = std::sin(rad), co = std::cos(rad);
  const double dx = p.x - c.x, dy = p.y - c.y;
  return {c.x + co * dx - s * dy, c.y + s * dx + co * dy};
}

struct ColumnPlan {
  std::string label;
  cells::ColumnKind kind;
};

std::vector<ColumnPlan> plan_columns(const SynthConfig& cfg, Rng& rng) {
  std::vector<ColumnPlan> out;
  if (cfg.cols.max > 0) {
    auto n = static_cast<std::size_t>(rng.range(static_cast<long>(cfg.cols.min), static_cast<long>(cfg.cols.max)));
    for (std::size_t c = 0; c < n; ++c) out.push_back({"col_" + std::to_string(c + 1), cells::ColumnKind::any});
    return out;
  }
  for (const auto& spec : schema_for(cfg.layout).columns) out.push_back({spec.label, spec.kind});
  return out;
}

struct CellPlan {
  CellType type = CellType::empty;
  std::string text;                 // single-line text
  std::vector<std::string> lines;   // multi-line texts
  std::string filled;               // value after repetition fill
  std::optional<std::string> canonical;  // parish columns
};

struct PagePlan {
  std::size_t rows = 0;
  std::size_t data_rows = 0;
  std::vector<std::vector<CellPlan>> cells;  // [row][col]
  std::optional<std::size_t> change_row;     // first row of the mid-page year
  int header_year = 0;
};

std::string random_name(Rng& rng) {
  const auto& v = vocabulary();
  return rng.pick(v.given) + " " + rng.pick(v.surnames);
}

std::string random_parish(Rng& rng, std::string& canonical) {
  const auto& entries = gazetteer().entries();
  const auto& e = entries[rng.index(entries.size())];
  canonical = e.canonical;
  if (e.variants.empty() || rng.chance(0.5)) return e.canonical;
  return rng.pick(e.variants);
}

PagePlan plan_page(const SynthConfig& cfg, const std::vector<ColumnPlan>& cols, Rng& rng, std::size_t& serial) {
  PagePlan p;
  p.rows = static_cast<std::size_t>(rng.range(static_cast<long>(cfg.rows.min), static_cast<long>(cfg.rows.max)));
  std::size_t trailing = p.rows > 1 ? static_cast<std::size_t>(rng.range(
                                          0, static_cast<long>(std::min(cfg.max_trailing_empty_rows, p.rows - 1))))
                                    : 0;
  p.data_rows = p.rows - trailing;
  p.cells.assign(p.rows, std::vector<CellPlan>(cols.size()));
  const auto& v = vocabulary();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::optional<std::string> previous;  // fill source for repetitions
    std::optional<std::string> previous_canonical;
    for (std::size_t r = 0; r < p.data_rows; ++r) {
      CellPlan& cell = p.cells[r][c];
      const std::string& label = cols[c].label;
      const bool may_repeat = label == "date" || label == "parish";
      if (may_repeat && previous && rng.chance(cfg.repetition_prob)) {
        cell.type = CellType::repetition;
        cell.filled = *previous;
        cell.canonical = previous_canonical;
        continue;
      }
      cell.type = CellType::single_line;
      if (label == "number") {
        cell.text = std::to_string(++serial);
      } else if (label == "date") {
        cell.text = std::to_string(rng.range(1, 28)) + "." + std::to_string(rng.range(1, 12)) + ".";
      } else if (label == "name") {
        cell.text = random_name(rng);
        if (rng.chance(cfg.multi_line_prob)) {
          cell.type = CellType::multi_line;
          cell.lines = {cell.text, rng.pick(v.occupations)};
          cell.text.clear();
        }
      } else if (label == "persons") {
        cell.text = std::to_string(rng.range(1, 5));
      } else if (label == "parish") {
        std::string canonical;
        cell.text = random_parish(rng, canonical);
        cell.canonical = canonical;
      } else if (label == "communion") {
        cell.text = std::to_string(rng.range(10, 400));
      } else if (label == "notes") {
        cell.text = rng.pick(v.occupations);
        if (rng.chance(0.6)) cell.type = CellType::empty;
      } else {
        cell.text = rng.pick(v.surnames);
      }
      const bool required = label == "name" || label == "number" || (label == "date" && !previous) ||
                            (label == "parish" && !previous);
      if (cell.type == CellType::single_line && !required && rng.chance(cfg.empty_cell_prob))
        cell.type = CellType::empty;
      if (cell.type == CellType::empty) {
        cell.text.clear();
        cell.canonical.reset();
        continue;
      }
      if (cell.type == CellType::multi_line) {
        cell.filled = cell.lines[0] + " " + cell.lines[1];
      } else {
        cell.filled = cell.text;
      }
      if (may_repeat) {
        previous = cell.filled;
        previous_canonical = cell.canonical;
      }
    }
  }
  return p;
}

struct BuiltTable {
  TableDetection detection;
  gridrec::GridTable grid;
};

BuiltTable build_table(const PagePlan& plan, const std::vector<ColumnPlan>& cols, const PageFrame& pf,
                       const OpeningFrame& f, Rng& rng, bool generic) {
  constexpr double kInset = 2.0;
  BuiltTable out;
  std::vector<double> weights;
  for (const auto& c : cols) weights.push_back(generic ? rng.uniform(0.85, 1.15) : column_weight(c.label));
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<double> xs{pf.x0};
  for (double w : weights) xs.push_back(xs.back() + (pf.x1 - pf.x0) * w / total);
  xs.back() = pf.x1;
  const double row_h = (f.y1 - f.y0) / static_cast<double>(plan.rows);
  std::vector<double> ys;
  for (std::size_t r = 0; r <= plan.rows; ++r) ys.push_back(f.y0 + row_h * static_cast<double>(r));

  out.detection.box = {pf.x0, f.y0, pf.x1, ys.back(), 1.0};
  auto& g = out.grid;
  g.table_box = out.detection.box;
  for (std::size_t r = 0; r < plan.rows; ++r) g.rows.push_back({ys[r] + kInset, ys[r + 1] - kInset, cols.size()});
  for (std::size_t c = 0; c < cols.size(); ++c) g.cols.push_back({xs[c] + kInset, xs[c + 1] - kInset, plan.rows});

  for (std::size_t r = 0; r < plan.rows; ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const CellPlan& cp = plan.cells[r][c];
      CellHypothesis cell;
      cell.box = {g.cols[c].start, g.rows[r].start, g.cols[c].end, g.rows[r].end, 1.0};
      cell.class_probs = probs_for(cp.type);
      if (cp.type == CellType::single_line) cell.text = TextHypothesis{cp.text, 1.0};
      if (cp.type == CellType::multi_line) {
        const double lh = cell.box.height() / static_cast<double>(cp.lines.size());
        for (std::size_t i = 0; i < cp.lines.size(); ++i) {
          const double top = cell.box.y_min + lh * static_cast<double>(i);
          cell.lines.push_back(
              {{cell.box.x_min + 2.0, top + 1.0, cell.box.x_max - 2.0, top + lh - 1.0, 1.0}, {cp.lines[i], 1.0}});
        }
      }
      g.cells.push_back({cell, gridrec::Provenance::detected, out.detection.cells.size()});
      out.detection.cells.push_back(std::move(cell));
    }
  return out;
}

geometry::Homography page_homography(const OpeningKeypoints& ideal, const OpeningKeypoints& observed, bool left) {
  if (ideal == observed) return geometry::Homography::identity();
  std::array<Point, 4> src = left ? std::array<Point, 4>{ideal.a, ideal.b, ideal.e, ideal.d}
                                  : std::array<Point, 4>{ideal.b, ideal.c, ideal.f, ideal.e};
  std::array<Point, 4> dst = left ? std::array<Point, 4>{observed.a, observed.b, observed.e, observed.d}
                                  : std::array<Point, 4>{observed.b, observed.c, observed.f, observed.e};
  return geometry::estimate_homography(std::span<const Point, 4>(src), std::span<const Point, 4>(dst));
}

OpeningKeypoints skewed_keypoints(const SynthConfig& cfg, const OpeningKeypoints& kp, Rng& rng) {
  const double mag = rng.uniform(cfg.skew_angle.min, cfg.skew_angle.max);
  const double theta = (rng.chance(0.5) ? -mag : mag) * std::numbers::pi / 180.0;
  // Outer edges bend a little on their own, as on a curled page.
  const double phi_l = rng.uniform(-0.3, 0.3) * mag * std::numbers::pi / 180.0;
  const double phi_r = rng.uniform(-0.3, 0.3) * mag * std::numbers::pi / 180.0;
  if (theta == 0.0 && phi_l == 0.0 && phi_r == 0.0) return kp;
  const Point center{static_cast<double>(cfg.image_width) / 2.0, static_cast<double>(cfg.image_height) / 2.0};
  OpeningKeypoints o{rotate(kp.a, center, theta), rotate(kp.b, center, theta), rotate(kp.c, center, theta),
                     rotate(kp.d, center, theta), rotate(kp.e, center, theta), rotate(kp.f, center, theta)};
  const Point ml{(o.a.x + o.d.x) / 2.0, (o.a.y + o.d.y) / 2.0};
  const Point mr{(o.c.x + o.f.x) / 2.0, (o.c.y + o.f.y) / 2.0};
  o.a = rotate(o.a, ml, phi_l);
  o.d = rotate(o.d, ml, phi_l);
  o.c = rotate(o.c, mr, phi_r);
  o.f = rotate(o.f, mr, phi_r);
  return o;
}

bool support_ok(const DetectionDocument& ideal, const std::vector<gridrec::GridTable>& grids,
                const std::set<CellRef>& dropped, std::size_t min_pts) {
  for (std::size_t t = 0; t < ideal.tables.size(); ++t) {
    const auto& g = grids[t];
    const std::size_t nr = g.rows.size(), nc = g.cols.size();
    std::vector<std::size_t> row_n(nr), col_n(nc);
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c)
        if (!dropped.count({t, r * nc + c})) {
          ++row_n[r];
          ++col_n[c];
        }
    const std::size_t need_r = std::min(min_pts, nc), need_c = std::min(min_pts, nr);
    for (auto n : row_n)
      if (n < need_r) return false;
    for (auto n : col_n)
      if (n < need_c) return false;
  }
  return true;
}

Box map_box_bounds(const geometry::Homography& h, const Box& b, double pad) {
  const Point corners[4] = {{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}};
  Box out{1e300, 1e300, -1e300, -1e300, b.confidence};
  for (auto c : corners) {
    Point p = geometry::apply_point(h, c);
    out.x_min = std::min(out.x_min, p.x);
    out.y_min = std::min(out.y_min, p.y);
    out.x_max = std::max(out.x_max, p.x);
    out.y_max = std::max(out.y_max, p.y);
  }
  out.x_min -= pad;
  out.y_min -= pad;
  out.x_max += pad;
  out.y_max += pad;
  return out;
}

bool is_left(const DetectionDocument& ideal, const Box& b) { return ideal.page_assignment(b.center()) == PageSide::left; }

struct BookState {
  std::string book_id;
  BookDirection direction;
  Rng rng;
  int year;
  std::size_t pages = 0;
};

void advance_year(const SynthConfig& cfg, BookState& book) {
  if (book.pages++ > 0 && book.rng.chance(cfg.year_advance_prob)) book.year += book.rng.chance(0.2) ? 2 : 1;
}

SynthOpening make_opening(const SynthConfig& cfg, BookState& book, std::size_t index) {
  Rng rng(derive_seed(cfg.seed, index + 1));
  const OpeningFrame frame = frame_for(cfg);
  const bool generic = cfg.cols.max > 0;
  const auto cols = plan_columns(cfg, rng);

  SynthOpening out;
  GoldOpening& gold = out.gold;
  DetectionDocument& doc = gold.ideal;
  char id[32];
  std::snprintf(id, sizeof id, "-o%03zu", index + 1);
  doc.opening_id = book.book_id + id;
  doc.book_id = book.book_id;
  doc.image_width = cfg.image_width;
  doc.image_height = cfg.image_height;
  doc.layout_type = generic ? LayoutType::other : cfg.layout;
  doc.direction = book.direction;
  doc.keypoints = frame.kp;

  std::size_t serial = static_cast<std::size_t>(rng.range(0, 300));
  for (PageSide side : {PageSide::left, PageSide::right}) {
    const PageFrame& pf = side == PageSide::left ? frame.left : frame.right;
    PagePlan plan = plan_page(cfg, cols, rng, serial);
    advance_year(cfg, book);
    plan.header_year = book.year;
    if (plan.data_rows >= 2 && book.rng.chance(cfg.mid_page_year_prob))
      plan.change_row = static_cast<std::size_t>(book.rng.range(1, static_cast<long>(plan.data_rows) - 1));

    BuiltTable built = build_table(plan, cols, pf, frame, rng, generic);
    const double page_mid = (pf.x0 + pf.x1) / 2.0;
    const double header_y = frame.kp.a.y + 0.02 * static_cast<double>(cfg.image_height);
    doc.year_detections.push_back(
        {{page_mid - 80.0, header_y, page_mid + 80.0, header_y + 0.04 * static_cast<double>(cfg.image_height), 1.0},
         {std::to_string(plan.header_year), 1.0}});

    GoldPage& page = side == PageSide::left ? gold.left : gold.right;
    page.side = side;
    page.header_year = plan.header_year;
    page.years.insert(plan.header_year);
    if (plan.change_row) {
      const double border = built.grid.rows[*plan.change_row].start;
      doc.year_detections.push_back({{pf.margin_x0, border - 25.0, pf.margin_x1, border + 25.0, 1.0},
                                     {std::to_string(plan.header_year + 1), 1.0}});
      page.years.insert(plan.header_year + 1);
      ++book.year;
    }

    for (std::size_t r = 0; r < plan.data_rows; ++r) {
      MigrationRecord rec;
      rec.book_id = doc.book_id;
      rec.opening_id = doc.opening_id;
      rec.page_side = side;
      rec.year = plan.change_row && r >= *plan.change_row ? plan.header_year + 1 : plan.header_year;
      rec.direction = cells::direction_for(book.direction, side);
      bool all_empty = true;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const CellPlan& cp = plan.cells[r][c];
        all_empty = all_empty && cp.type == CellType::empty;
        rec.fields.emplace_back(cols[c].label, cp.filled);
        if (cp.type == CellType::repetition) rec.flags.insert(RecordFlag::repetition_filled);
        if (cols[c].kind == cells::ColumnKind::parish && !rec.parish_raw && !cp.filled.empty()) {
          rec.parish_raw = cp.filled;
          rec.parish_canonical = cp.canonical;
        }
      }
      if (!all_empty) gold.records.push_back(std::move(rec));
    }
    doc.tables.push_back(std::move(built.detection));
    gold.tables.push_back(std::move(built.grid));
  }

  // Perturbations. Dropout is drawn first so that retries only redraw it.
  PerturbationLog& log = out.log;
  std::set<CellRef> dropped;
  for (std::size_t attempt = 0;; ++attempt) {
    dropped.clear();
    for (std::size_t t = 0; t < doc.tables.size(); ++t)
      for (std::size_t i = 0; i < doc.tables[t].cells.size(); ++i)
        if (rng.chance(cfg.cell_dropout_prob)) dropped.insert({t, i});
    if (support_ok(doc, gold.tables, dropped, cfg.min_pts)) break;
    if (attempt + 1 >= cfg.max_retries)
      throw Error("synth: dropout keeps emptying a row or column of " + doc.opening_id + " after " +
                  std::to_string(cfg.max_retries) + " attempts");
    spdlog::warn("synth: {}: dropout left a row or column below {} cells, redrawing", doc.opening_id, cfg.min_pts);
  }
  log.dropped.assign(dropped.begin(), dropped.end());

  if (cfg.border_jitter > 0.0) {
    for (std::size_t t = 0; t < doc.tables.size(); ++t)
      for (std::size_t i = 0; i < doc.tables[t].cells.size(); ++i) {
        const double j = cfg.border_jitter;
        log.jitter.push_back({{t, i}, rng.uniform(-j, j), rng.uniform(-j, j), rng.uniform(-j, j), rng.uniform(-j, j)});
      }
  }

  if (cfg.char_noise_prob > 0.0) {
    const auto& conf = text_confusions();
    auto noisy = [&](CellRef ref, std::optional<std::size_t> line, const std::string& s) {
      const auto u = text::decode_utf8(s);
      for (std::size_t pos = 0; pos < u.size(); ++pos) {
        auto it = conf.find(u[pos]);
        if (it == conf.end() || !rng.chance(cfg.char_noise_prob)) continue;
        log.substitutions.push_back({ref, line, pos, u[pos], it->second[rng.index(it->second.size())]});
      }
    };
    for (std::size_t t = 0; t < doc.tables.size(); ++t)
      for (std::size_t i = 0; i < doc.tables[t].cells.size(); ++i) {
        const auto& cell = doc.tables[t].cells[i];
        if (cell.text) noisy({t, i}, std::nullopt, cell.text->text);
        for (std::size_t l = 0; l < cell.lines.size(); ++l) noisy({t, i}, l, cell.lines[l].text.text);
      }
  }

  for (std::size_t y = 0; y < doc.year_detections.size(); ++y) {
    if (!rng.chance(cfg.year_corruption_prob)) continue;
    const std::string& raw = doc.year_detections[y].text.text;
    const std::size_t pos = rng.index(raw.size());
    const auto& glyphs = chrono::confusions_of(raw[pos]);
    if (glyphs.empty()) continue;
    log.year_corruptions.push_back({y, pos, raw[pos], glyphs[rng.index(glyphs.size())]});
  }

  const OpeningKeypoints observed_kp = skewed_keypoints(cfg, frame.kp, rng);
  log.left = page_homography(frame.kp, observed_kp, true);
  log.right = page_homography(frame.kp, observed_kp, false);

  out.observed = replay(doc, log);
  return out;
}

BookState start_book(const SynthConfig& cfg) {
  BookState b{"book-" + std::to_string(cfg.seed), BookDirection::unknown, Rng(derive_seed(cfg.seed, 0)), 0, 0};
  b.year = static_cast<int>(b.rng.range(cfg.start_year.min, cfg.start_year.max));
  static constexpr BookDirection kDirections[] = {BookDirection::in, BookDirection::out, BookDirection::mixed};
  const BookDirection drawn = kDirections[b.rng.index(3)];
  b.direction = cfg.direction.value_or(drawn);
  return b;
}

}  // namespace

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(name, "probability must be in [0, 1]");
  };
  prob(cell_dropout_prob, "cell_dropout_prob");
  prob(char_noise_prob, "char_noise_prob");
  prob(year_corruption_prob, "year_corruption_prob");
  prob(repetition_prob, "repetition_prob");
  prob(multi_line_prob, "multi_line_prob");
  prob(empty_cell_prob, "empty_cell_prob");
  prob(year_advance_prob, "year_advance_prob");
  prob(mid_page_year_prob, "mid_page_year_prob");
  if (rows.min < 1 || rows.min > rows.max) throw ValidationError("rows", "empty range");
  if (cols.min > cols.max || (cols.max > 0 && cols.min < 1)) throw ValidationError("cols", "empty range");
  if (skew_angle.min < 0.0 || skew_angle.min > skew_angle.max || skew_angle.max > 30.0)
    throw ValidationError("skew_angle", "range must satisfy 0 <= min <= max <= 30");
  if (border_jitter < 0.0) throw ValidationError("border_jitter", "must be non-negative");
  if (start_year.min > start_year.max) throw ValidationError("start_year", "empty range");
  if (image_width < 200 || image_height < 200) throw ValidationError("image", "too small");
  if (cols.max == 0 && schema_for(layout).columns.empty())
    throw ValidationError("layout", "no column schema for " + to_string(layout));
  if (max_retries == 0) throw ValidationError("max_retries", "must be positive");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

DetectionDocument replay(const DetectionDocument& ideal, const PerturbationLog& log) {
  DetectionDocument doc = ideal;

  for (const auto& s : log.substitutions) {
    auto& cell = doc.tables.at(s.ref.table).cells.at(s.ref.cell);
    std::string& target = s.line ? cell.lines.at(*s.line).text.text : cell.text.value().text;
    auto u = text::decode_utf8(target);
    if (s.position >= u.size() || u[s.position] != s.from) throw Error("replay: substitution does not match text");
    u[s.position] = s.to;
    target = text::encode_utf8(u);
  }
  for (const auto& c : log.year_corruptions) {
    std::string& raw = doc.year_detections.at(c.detection).text.text;
    if (c.position >= raw.size() || raw[c.position] != c.from) throw Error("replay: year corruption does not match");
    raw[c.position] = c.to;
  }

  double pad = 0.0;
  for (const auto& j : log.jitter) {
    Box& b = doc.tables.at(j.ref.table).cells.at(j.ref.cell).box;
    b.x_min += j.dx_min;
    b.y_min += j.dy_min;
    b.x_max += j.dx_max;
    b.y_max += j.dy_max;
    pad = std::max({pad, std::abs(j.dx_min), std::abs(j.dy_min), std::abs(j.dx_max), std::abs(j.dy_max)});
  }

  const bool identity = log.left.matrix() == geometry::Homography::identity().matrix() &&
                        log.right.matrix() == geometry::Homography::identity().matrix();
  if (!identity) {
    for (auto& table : doc.tables) {
      const auto& h = is_left(ideal, table.box) ? log.left : log.right;
      table.box = map_box_bounds(h, table.box, 0.0);
      for (auto& cell : table.cells) {
        cell.box = geometry::apply_box(h, cell.box);
        for (auto& line : cell.lines) line.box = geometry::apply_box(h, line.box);
      }
    }
    for (auto& y : doc.year_detections) y.box = geometry::apply_box(is_left(ideal, y.box) ? log.left : log.right, y.box);
    if (doc.keypoints) doc.keypoints = geometry::apply_keypoints(log.left, log.right, *doc.keypoints);
  }
  if (pad > 0.0)
    for (auto& table : doc.tables) {
      table.box.x_min -= pad;
      table.box.y_min -= pad;
      table.box.x_max += pad;
      table.box.y_max += pad;
    }

  // Drop last so that cell references stay valid above.
  std::set<CellRef> dropped(log.dropped.begin(), log.dropped.end());
  for (std::size_t t = 0; t < doc.tables.size(); ++t) {
    auto& cells = doc.tables[t].cells;
    std::vector<CellHypothesis> kept;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (!dropped.count({t, i})) kept.push_back(std::move(cells[i]));
    cells = std::move(kept);
  }
  return doc;
}

DetectionDocument annotate(const DetectionDocument& ideal, const PerturbationLog& log) {
  PerturbationLog geometric;
  geometric.left = log.left;
  geometric.right = log.right;
  return replay(ideal, geometric);
}

SynthOpening generate_opening(const SynthConfig& cfg) {
  cfg.validate();
  BookState book = start_book(cfg);
  return make_opening(cfg, book, 0);
}

std::vector<MigrationRecord> SynthBook::gold_records() const {
  std::vector<MigrationRecord> out;
  for (const auto& o : openings) out.insert(out.end(), o.gold.records.begin(), o.gold.records.end());
  return out;
}

SynthBook generate_book(const SynthConfig& cfg, std::size_t n_openings) {
  cfg.validate();
  BookState state = start_book(cfg);
  SynthBook book;
  book.book_id = state.book_id;
  book.direction = state.direction;
  for (std::size_t i = 0; i < n_openings; ++i) book.openings.push_back(make_opening(cfg, state, i));
  return book;
}

SynthBook duplicate_book(const SynthBook& book, const std::string& new_id) {
  SynthBook copy = book;
  copy.book_id = new_id;
  auto rename = [&](std::string& opening_id) { opening_id = new_id + opening_id.substr(book.book_id.size()); };
  for (auto& o : copy.openings) {
    for (auto* doc : {&o.gold.ideal, &o.observed}) {
      doc->book_id = new_id;
      rename(doc->opening_id);
    }
    for (auto& r : o.gold.records) {
      r.book_id = new_id;
      rename(r.opening_id);
    }
  }
  return copy;
}

std::string_view vocabulary_file(std::string_view name) {
  for (const auto& f : kVocab)
    if (f.name == name) return f.content;
  throw Error("no embedded data file named '" + std::string(name) + "'");
}

std::vector<std::string_view> vocabulary_file_names() {
  std::vector<std::string_view> out;
  for (const auto& f : kVocab) out.push_back(f.name);
  return out;
}

const normalize::Gazetteer& gazetteer() {
  static const normalize::Gazetteer g = normalize::parse_gazetteer(std::string(vocabulary_file("gazetteer.tsv")));
  return g;
}

const cells::ColumnSchema& schema_for(LayoutType layout) {
  static const cells::ColumnSchema preprinted = cells::parse_schema(std::string(vocabulary_file("schemas/preprinted.tsv")));
  static const cells::ColumnSchema handdrawn = cells::parse_schema(std::string(vocabulary_file("schemas/handdrawn.tsv")));
  static const cells::ColumnSchema none;
  switch (layout) {
    case LayoutType::preprinted:
      return preprinted;
    case LayoutType::handdrawn:
      return handdrawn;
    default:
      return none;
  }
}

}  // namespace regrec::synth
