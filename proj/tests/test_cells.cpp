#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "regrec/cells.hpp"
#include "regrec/synth.hpp"

using namespace regrec;
using namespace regrec::cells;

namespace {

// Walks back up the column for every repetition.
std::vector<FilledEntry> scan_back_fill(const std::vector<ColumnEntry>& col) {
  std::vector<FilledEntry> out;
  for (std::size_t i = 0; i < col.size(); ++i) {
    const ColumnEntry& e = col[i];
    if (e.type == CellType::single_line || e.type == CellType::multi_line) {
      out.push_back({e.text, false, false});
    } else if (e.type == CellType::empty) {
      out.push_back({std::nullopt, false, false});
    } else {
      FilledEntry f{std::nullopt, false, true};
      for (std::size_t k = i; k-- > 0;) {
        const ColumnEntry& up = col[k];
        if ((up.type == CellType::single_line || up.type == CellType::multi_line) && up.text && !up.text->empty()) {
          f = {up.text, true, false};
          break;
        }
      }
      out.push_back(f);
    }
  }
  return out;
}

CellHypothesis typed(CellType t, std::optional<std::string> text = std::nullopt) {
  CellHypothesis c;
  c.class_probs = {0, 0, 0, 0};
  c.class_probs[static_cast<std::size_t>(t)] = 1.0;
  if (text) c.text = TextHypothesis{*text, 0.9};
  return c;
}

gridrec::GridTable grid_of(const std::vector<std::vector<CellHypothesis>>& rows) {
  gridrec::GridTable g;
  for (std::size_t r = 0; r < rows.size(); ++r) g.rows.push_back({r * 10.0, r * 10.0 + 9, 1});
  for (std::size_t c = 0; c < rows[0].size(); ++c) g.cols.push_back({c * 10.0, c * 10.0 + 9, 1});
  for (const auto& row : rows)
    for (const auto& cell : row) g.cells.push_back({cell, gridrec::Provenance::detected, 0});
  return g;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("schema parsing") {
  ColumnSchema s = parse_schema("# comment\nnumber\tnumeric\t2\nname\ttext\n\nnotes\tany\t\n");
  REQUIRE(s.columns.size() == 3);
  CHECK(s.columns[0].expected_avg_len == 2.0);
  CHECK(s.columns[1].kind == ColumnKind::text);
  CHECK_FALSE(s.columns[2].expected_avg_len.has_value());
  CHECK(s.labels() == std::vector<std::string>{"number", "name", "notes"});
  CHECK_THROWS_AS(parse_schema("a\ttext\na\tdate\n"), ValidationError);
  CHECK_THROWS_AS(parse_schema("a\tcolour\n"), ValidationError);
  CHECK_THROWS_AS(parse_schema("a\n"), ParseError);
  CHECK_THROWS_AS(parse_schema("a\ttext\tlong\n"), ParseError);
  for (auto k : {ColumnKind::numeric, ColumnKind::text, ColumnKind::date, ColumnKind::parish, ColumnKind::any})
    CHECK(column_kind_from_string(to_string(k)) == k);
}

TEST_CASE("classification checks the distribution") {
  CHECK(classify_cell({0.1, 0.6, 0.2, 0.1}) == CellType::multi_line);
  CHECK(classify_cell({0.5, 0.5, 0, 0}) == CellType::single_line);
  CHECK_THROWS_AS(classify_cell({0.5, 0.6, 0, 0}), ValidationError);
  CHECK_THROWS_AS(classify_cell({1.2, -0.2, 0, 0}), ValidationError);
}

TEST_CASE("routing") {
  CellHypothesis ml = typed(CellType::multi_line);
  ml.lines = {TextLine{{0, 0, 5, 4}, {"a", 1}}, TextLine{{0, 4, 5, 8}, {"b", 1}}};
  auto g = grid_of({{typed(CellType::single_line, "x"), typed(CellType::repetition), typed(CellType::empty)},
                    {ml, typed(CellType::multi_line, "whole"), typed(CellType::single_line)}});
  auto tasks = route_cells(g);
  REQUIRE(tasks.size() == 5);
  CHECK(tasks[0].row == 0);
  CHECK_FALSE(tasks[0].line.has_value());
  CHECK(tasks[1].line == 0u);
  CHECK(tasks[2].line == 1u);
  CHECK(tasks[2].box == Box{0, 4, 5, 8});
  CHECK(tasks[3].downgraded);
  CHECK(tasks[4].col == 2);
}

TEST_CASE("repetition fill agrees with a scan-back reference") {
  oracle::Gen g(23);
  for (int i = 0; i < 5000; ++i) {
    std::vector<ColumnEntry> col(static_cast<std::size_t>(g.integer(0, 12)));
    for (auto& e : col) {
      e.type = static_cast<CellType>(g.integer(0, 3));
      if (g.coin(0.7)) e.text = g.coin(0.2) ? "" : std::string(1, static_cast<char>('a' + g.integer(0, 5)));
    }
    CHECK(fill_repetitions(col) == scan_back_fill(col));
  }
}

TEST_CASE("repetition fill examples") {
  std::vector<ColumnEntry> col{{CellType::repetition, std::nullopt},
                               {CellType::single_line, "Turku"},
                               {CellType::repetition, std::nullopt},
                               {CellType::empty, std::nullopt},
                               {CellType::repetition, "〃"},
                               {CellType::single_line, ""},
                               {CellType::repetition, std::nullopt}};
  auto f = fill_repetitions(col);
  CHECK(f[0].orphan);
  CHECK(f[2] == FilledEntry{"Turku", true, false});
  CHECK(f[4] == FilledEntry{"Turku", true, false});  // empty rows do not break the chain
  CHECK(f[5].text == "");
  CHECK(f[6] == FilledEntry{"Turku", true, false});  // an empty text is skipped
}

TEST_CASE("kind scores and dates") {
  CHECK(looks_like_date("12.3."));
  CHECK(looks_like_date("1/12"));
  CHECK(looks_like_date("12.3.1854"));
  CHECK(looks_like_date("3 huhtik."));
  CHECK(looks_like_date("12 maj"));
  CHECK_FALSE(looks_like_date("32.3."));
  CHECK_FALSE(looks_like_date("Helsinki"));
  CHECK_FALSE(looks_like_date("12"));
  CHECK(kind_score("", ColumnKind::date) == 0.5);
  CHECK(kind_score("  ", ColumnKind::numeric) == 0.5);
  CHECK(kind_score("17", ColumnKind::numeric) == 1.0);
  CHECK(kind_score("1.3", ColumnKind::numeric) == 0.5);
  CHECK(kind_score("Anna", ColumnKind::numeric) == 0.0);
  CHECK(kind_score("Anna", ColumnKind::text) == 1.0);
  CHECK(kind_score("12", ColumnKind::parish) == 0.0);
  CHECK(kind_score("whatever", ColumnKind::any) == 1.0);
}

TEST_CASE("shipped vocabulary fits its columns") {
  for (const auto& n : lines_of(synth::vocabulary_file("given_names.txt"))) {
    CHECK_MESSAGE(kind_score(n, ColumnKind::text) == 1.0, n);
    CHECK_MESSAGE(kind_score(n, ColumnKind::date) == 0.0, n);
  }
  for (const auto& n : lines_of(synth::vocabulary_file("surnames.txt"))) CHECK_MESSAGE(kind_score(n, ColumnKind::text) == 1.0, n);
  for (const auto& n : lines_of(synth::vocabulary_file("occupations.txt")))
    CHECK_MESSAGE(kind_score(n, ColumnKind::text) == 1.0, n);
  for (const auto& e : synth::gazetteer().entries()) {
    CHECK_MESSAGE(kind_score(e.canonical, ColumnKind::parish) == 1.0, e.canonical);
    for (const auto& v : e.variants) CHECK_MESSAGE(kind_score(v, ColumnKind::parish) == 1.0, v);
  }
}

TEST_CASE("realignment") {
  ColumnSchema s = synth::schema_for(LayoutType::preprinted);
  // number date name persons parish communion notes
  std::vector<std::string> good{"3", "12.4.", "Anna Virtanen", "1", "Turku", "2", ""};
  AlignedRow a = realign_columns(good, s);
  CHECK(a.status == AlignStatus::expected);
  CHECK(a.fields[4] == std::pair<std::string, std::string>{"parish", "Turku"});

  // A missing number cell shifts everything left by one.
  std::vector<std::string> shifted{"12.4.", "Anna Virtanen", "1", "Turku", "2", ""};
  a = realign_columns(shifted, s);
  CHECK(a.status == AlignStatus::realigned);
  CHECK(a.shift == -1);
  CHECK(a.fields[0].second == "");
  CHECK(a.fields[2].second == "Anna Virtanen");
  CHECK(a.fields[4].second == "Turku");

  // An extra leading cell.
  std::vector<std::string> extra{"x", "3", "12.4.", "Anna Virtanen", "1", "Turku", "2", ""};
  a = realign_columns(extra, s);
  CHECK(a.status == AlignStatus::realigned);
  CHECK(a.shift == 1);
  CHECK(a.fields[4].second == "Turku");

  // Nothing fits: positional, parish blanked.
  std::vector<std::string> junk(7, "Qwertyuiopasdfghjklzxcv");
  a = realign_columns(junk, s);
  CHECK(a.status == AlignStatus::failed);
  CHECK(a.fields[4].second.empty());
  CHECK(a.fields[0].second == junk[0]);

  CHECK(realign_columns(good, ColumnSchema{}).status == AlignStatus::failed);
}

TEST_CASE("direction from the book header") {
  CHECK(direction_for(BookDirection::mixed, PageSide::left) == Direction::in);
  CHECK(direction_for(BookDirection::mixed, PageSide::right) == Direction::out);
  CHECK(direction_for(BookDirection::out, PageSide::left) == Direction::out);
  CHECK(direction_for(BookDirection::unknown, PageSide::left) == Direction::unknown);
}

TEST_CASE("record assembly") {
  ColumnSchema s = parse_schema("date\tdate\nname\ttext\nparish\tparish\n");
  CellHypothesis ml = typed(CellType::multi_line);
  ml.lines = {TextLine{{0, 0, 5, 4}, {"Anna", 1}}, TextLine{{0, 4, 5, 8}, {"piika", 1}}};
  auto g = grid_of({{typed(CellType::single_line, "1.2."), typed(CellType::single_line, "Matti"), typed(CellType::single_line, "Turku")},
                    {typed(CellType::empty), typed(CellType::empty), typed(CellType::empty)},
                    {typed(CellType::repetition), ml, typed(CellType::repetition)},
                    {typed(CellType::single_line, "3.2."), typed(CellType::single_line, "Liisa"), typed(CellType::empty)}});
  g.at(3, 2).provenance = gridrec::Provenance::inferred;
  AssemblyContext ctx;
  ctx.book_id = "b";
  ctx.opening_id = "o";
  ctx.side = PageSide::right;
  ctx.year = 1850;
  ctx.row_years = {1850, 1850, 1850, 1851};
  ctx.year_inferred = true;
  ctx.direction = Direction::out;
  ctx.schema = &s;
  AssemblyStats stats;
  auto recs = assemble_records(g, ctx, &stats);
  REQUIRE(recs.size() == 3);
  CHECK(stats.empty_rows == 1);
  CHECK(recs[0].parish_raw == "Turku");
  CHECK(recs[0].flags == std::set<RecordFlag>{RecordFlag::year_inferred});
  CHECK(*recs[1].field("date") == "1.2.");
  CHECK(*recs[1].field("name") == "Anna piika");
  CHECK(recs[1].parish_raw == "Turku");
  CHECK(recs[1].flags.count(RecordFlag::repetition_filled));
  CHECK(recs[2].year == 1851);
  CHECK(recs[2].flags.count(RecordFlag::inferred_cell));
  CHECK_FALSE(recs[2].parish_raw.has_value());
  CHECK(recs[2].page_side == PageSide::right);
  CHECK(recs[2].direction == Direction::out);

  ctx.schema = nullptr;
  recs = assemble_records(g, ctx);
  CHECK(recs[0].fields[0].first == "col_1");
  CHECK(recs[0].fields[2].second == "Turku");
}
