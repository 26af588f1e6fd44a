#include <doctest.h>

#include "regrec/pipeline.hpp"

using namespace regrec;
using namespace regrec::pipeline;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "regrec_test_pipeline" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExtractOptions default_options() {
  ExtractOptions o;
  o.gazetteer = synth::gazetteer();
  o.schemas[LayoutType::preprinted] = synth::schema_for(LayoutType::preprinted);
  o.schemas[LayoutType::handdrawn] = synth::schema_for(LayoutType::handdrawn);
  return o;
}

std::vector<LoadedDocument> observed_docs(const std::vector<synth::SynthBook>& books) {
  std::vector<LoadedDocument> out;
  for (const auto& b : books)
    for (const auto& o : b.openings) out.push_back({o.observed.opening_id, o.observed, {}});
  return out;
}

std::vector<MigrationRecord> gold_records(const std::vector<synth::SynthBook>& books) {
  std::vector<MigrationRecord> out;
  for (const auto& b : books) {
    auto r = b.gold_records();
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace

TEST_CASE("zero-noise extraction reproduces the gold records") {
  for (LayoutType layout : {LayoutType::preprinted, LayoutType::handdrawn}) {
    SynthCorpusOptions so;
    so.config.seed = 17;
    so.config.layout = layout;
    so.count = 12;
    so.openings_per_book = 5;
    const auto books = synth_corpus(so);
    CHECK(books.size() == 3);
    auto result = extract(observed_docs(books), default_options());
    const auto gold = gold_records(books);
    REQUIRE(result.records.size() == gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) CHECK(result.records[i] == gold[i]);
    CHECK(result.summary.openings_processed == 12);
    CHECK(result.summary.exit_code() == kExitClean);
    CHECK(result.summary.cells_inferred == 0);
  }
}

TEST_CASE("worker count does not change the output") {
  SynthCorpusOptions so;
  so.config.seed = 23;
  so.config.cell_dropout_prob = 0.1;
  so.config.skew_angle = {0.5, 3};
  so.config.year_corruption_prob = 0.2;
  so.config.char_noise_prob = 0.05;
  so.count = 24;
  so.openings_per_book = 4;
  const auto docs = observed_docs(synth_corpus(so));
  auto opts = default_options();
  auto one = extract(docs, opts);
  opts.workers = 8;
  auto many = extract(docs, opts);
  CHECK(one.records == many.records);
  CHECK(one.summary.to_json() == many.summary.to_json());
  CHECK(one.summary.books == 6);
}

TEST_CASE("unreadable documents are reported, not fatal") {
  fs::path dir = scratch("load");
  SynthCorpusOptions so;
  so.count = 2;
  for (const auto& b : synth_corpus(so))
    for (const auto& o : b.openings) write_document(o.observed, dir / (o.observed.opening_id + ".jsonl"));
  write_file(dir / "zz-broken.jsonl", "{\"kind\": \"document\"\n");
  write_file(dir / "notes.txt", "ignored");
  auto docs = load_documents(dir);
  REQUIRE(docs.size() == 3);
  CHECK_FALSE(docs[2].doc.has_value());
  CHECK_FALSE(docs[2].error.empty());
  auto result = extract(docs, default_options());
  CHECK(result.summary.openings_total == 3);
  CHECK(result.summary.openings_failed == 1);
  CHECK(result.summary.exit_code() == kExitPartial);
  CHECK(result.summary.failures.size() == 1);
  CHECK_THROWS_AS(load_documents(dir / "missing"), IoError);
}

TEST_CASE("evaluating the annotation against itself is perfect") {
  SynthCorpusOptions so;
  so.config.seed = 31;
  so.config.skew_angle = {1, 3};
  so.count = 4;
  so.openings_per_book = 4;
  std::vector<DetectionDocument> gold;
  for (const auto& b : synth_corpus(so))
    for (const auto& o : b.openings) gold.push_back(synth::annotate(o.gold.ideal, o.log));
  auto out = evaluate(gold, gold, default_options());
  CHECK(out.openings == 4);
  CHECK(out.tables["all"].fp + out.tables["all"].fn == 0);
  CHECK(out.cells["all"].fp + out.cells["all"].fn == 0);
  CHECK(out.rows["all"].fp + out.rows["all"].fn == 0);
  CHECK(out.cols["all"].fp + out.cols["all"].fn == 0);
  CHECK(out.years.f1 == doctest::Approx(100));
  CHECK(std::abs(out.skew_after.mean) < 1e-6);
  CHECK(out.skew_before.sd > 0.5);
  for (const auto& p : out.text_pairs) CHECK(p.pred == p.ref);
}

TEST_CASE("normalization and aggregation") {
  SynthCorpusOptions so;
  so.config.seed = 41;
  so.count = 6;
  so.openings_per_book = 3;
  so.duplicate_books = 1;
  auto books = synth_corpus(so);
  REQUIRE(books.size() == 3);
  auto records = gold_records(books);
  const std::size_t dup_rows = books[2].gold_records().size();
  // Knock out years in the book that has no copy.
  std::size_t no_year = 0;
  for (std::size_t i = 0; i < records.size(); i += 7)
    if (records[i].book_id == books[1].book_id) {
      records[i].year.reset();
      ++no_year;
    }
  auto out = normalize_records(records, &synth::gazetteer(), 0.25, 0.9);
  REQUIRE(out.duplicates.size() == 1);
  CHECK(out.duplicates[0].remove == books[2].book_id);
  CHECK(out.duplicate_rows_removed == dup_rows);
  CHECK(out.tally[normalize::RejectReason::missing_year] == no_year);
  std::size_t total = out.usable.size() + dup_rows;
  for (auto [k, n] : out.tally) total += n;
  CHECK(total == records.size());

  auto agg = aggregate(out.usable, {});
  std::size_t counted = 0;
  for (auto [k, n] : agg.by_year) counted += n;
  CHECK(counted == out.usable.size());
  for (auto [k, n] : agg.excluded) CHECK(n == 0);
  auto only_first = aggregate(records, {books[0].book_id});
  std::size_t first = 0;
  for (auto [k, n] : only_first.by_parish) first += n;
  for (auto [k, n] : only_first.excluded) first += n;
  CHECK(first == books[0].gold_records().size());
}

TEST_CASE("commands write their files") {
  fs::path root = scratch("cmd");
  SynthCorpusOptions so;
  so.config.seed = 5;
  so.config.cell_dropout_prob = 0.05;
  so.count = 4;
  so.openings_per_book = 2;
  cmd_synth(so, root / "corpus");
  for (const char* f : {"gold/records.csv", "gold/years.csv", "gazetteer.tsv", "schemas/preprinted.tsv"})
    CHECK(fs::exists(root / "corpus" / f));

  auto opts = default_options();
  opts.schemas = load_schemas(root / "corpus" / "schemas");
  CHECK(opts.schemas.size() == 2);
  auto summary = cmd_extract(root / "corpus" / "docs", root / "out" / "records.csv", root / "out" / "summary.json", opts);
  CHECK(summary.openings_processed == 4);
  CHECK(read_records(root / "out" / "records.csv", RecordFormat::csv).size() == summary.rows_extracted);

  cmd_years(root / "corpus" / "docs", root / "out" / "years.csv", opts);
  CHECK(fs::exists(root / "out" / "years.csv"));

  cmd_eval(root / "corpus" / "docs", root / "corpus" / "gold" / "docs", root / "eval", opts);
  for (const char* f : {"tables.csv", "rows.csv", "columns.csv", "cells.csv", "cell_classes.csv", "text.csv",
                        "years.csv", "skew.csv"})
    CHECK(fs::exists(root / "eval" / f));

  auto norm = cmd_normalize(root / "out" / "records.csv", root / "out" / "usable.jsonl", root / "out" / "report.csv",
                            &synth::gazetteer(), 0.25, 0.9);
  CHECK(read_records(root / "out" / "usable.jsonl", RecordFormat::jsonl).size() == norm.usable.size());

  cmd_aggregate(root / "out" / "usable.jsonl", root / "agg", {});
  CHECK(fs::exists(root / "agg" / "by_year.csv"));
  CHECK(fs::exists(root / "agg" / "excluded.csv"));

  auto report = render_report(root / "eval", root / "out" / "summary.json");
  CHECK(report.find("Table detection") != std::string::npos);
  CHECK(report.find("Run summary") != std::string::npos);
  CHECK_THROWS_AS(render_report(root / "nothing", std::nullopt), IoError);
}
