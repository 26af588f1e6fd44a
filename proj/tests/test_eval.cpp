#include <doctest.h>

#include "oracles.hpp"
#include "regrec/csv.hpp"
#include "regrec/eval.hpp"
#include "regrec/text.hpp"

using namespace regrec;
using namespace regrec::eval;

TEST_CASE("greedy matching") {
  std::vector<Box> gold{{0, 0, 10, 10}, {20, 0, 30, 10}};
  std::vector<Box> pred{{1, 0, 11, 10}, {0, 0, 10, 10}, {50, 50, 60, 60}};
  auto m = match_detections(pred, gold);
  CHECK(m.counts == EvalCounts{1, 2, 1});
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].pred == 1);  // the higher IoU wins the gold box
  CHECK(m.pairs[0].iou == 1.0);

  // IoU exactly at the threshold does not count.
  std::vector<Box> half_gold{{0, 0, 3, 1}};
  std::vector<Box> half_pred{{1, 0, 3, 1}};
  CHECK(iou(half_pred[0], half_gold[0]) == doctest::Approx(2.0 / 3.0));
  CHECK(match_detections(half_pred, half_gold, 2.0 / 3.0).counts.tp == 0);

  CHECK(match_detections({}, {}).counts == EvalCounts{});
  CHECK_THROWS_AS(match_detections(pred, gold, 0.0), Error);
}

TEST_CASE("greedy matching is maximal when gold boxes do not overlap") {
  oracle::Gen g(53);
  for (int i = 0; i < 400; ++i) {
    std::vector<Box> gold, pred;
    for (int k = 0; k < 6; ++k)
      if (g.coin(0.8)) gold.push_back({k * 20.0, 0, k * 20.0 + g.real(8, 18), g.real(8, 18)});
    for (std::size_t k = static_cast<std::size_t>(g.integer(0, 7)); k > 0; --k) {
      double x = g.real(0, 120), y = g.real(0, 10);
      pred.push_back({x, y, x + g.real(5, 20), y + g.real(5, 20)});
    }
    auto m = match_detections(pred, gold);
    CHECK(m.counts.tp == oracle::max_matching(pred, gold, 0.5));
    CHECK(m.counts.tp + m.counts.fp == pred.size());
    CHECK(m.counts.tp + m.counts.fn == gold.size());
  }
}

TEST_CASE("greedy matching never exceeds the maximum") {
  oracle::Gen g(59);
  for (int i = 0; i < 400; ++i) {
    std::vector<Box> gold, pred;
    for (long k = g.integer(0, 5); k > 0; --k) gold.push_back(g.box(0, 30, 4));
    for (long k = g.integer(0, 5); k > 0; --k) pred.push_back(g.box(0, 30, 4));
    double thr = g.real(0.1, 0.9);
    auto m = match_detections(pred, gold, thr);
    CHECK(m.counts.tp <= oracle::max_matching(pred, gold, thr));
    for (std::size_t k = 1; k < m.pairs.size(); ++k) CHECK(m.pairs[k - 1].iou >= m.pairs[k].iou);
  }
}

TEST_CASE("metrics from counts") {
  auto m = metrics({90, 10, 5});
  CHECK(m.precision == doctest::Approx(90.0));
  CHECK(m.recall == doctest::Approx(100.0 * 90 / 95));
  CHECK(m.accuracy == doctest::Approx(100.0 * 90 / 105));
  CHECK(m.f1 == doctest::Approx(f1_score(m.precision, m.recall)));
  CHECK(accuracy_from(m.precision, m.recall) == doctest::Approx(m.accuracy));
  auto none = metrics({0, 3, 0});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(metrics({0, 0, 0}), UndefinedMetricsError);
}

TEST_CASE("accuracy identity holds for random counts") {
  oracle::Gen g(61);
  for (int i = 0; i < 1000; ++i) {
    EvalCounts c{static_cast<std::size_t>(g.integer(1, 500)), static_cast<std::size_t>(g.integer(0, 100)),
                 static_cast<std::size_t>(g.integer(0, 100))};
    auto m = metrics(c);
    CHECK(accuracy_from(m.precision, m.recall) == doctest::Approx(m.accuracy).epsilon(1e-9));
  }
}

TEST_CASE("half-up rounding") {
  CHECK(round_half_up(88.85) == doctest::Approx(88.9));
  CHECK(round_half_up(0.25) == doctest::Approx(0.3));
  CHECK(round_half_up(0.24) == doctest::Approx(0.2));
  CHECK(round_half_up(96.45) == doctest::Approx(96.5));
  CHECK(format_fixed(1.0 / 3.0, 3) == "0.333");
  CHECK(format_fixed(97.0) == "97.0");
  CHECK(format_fixed(0.05) == "0.1");
}

TEST_CASE("character error rate") {
  CHECK(cer("Anna", "Anna") == 0.0);
  CHECK(cer("Ana", "Anna") == doctest::Approx(0.25));
  CHECK(cer("", "abc") == 1.0);
  CHECK(cer("abcdef", "ab") == 2.0);
  CHECK(cer("Abo", "Åbo") == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(cer("x", ""), Error);

  oracle::Gen g(67);
  for (int i = 0; i < 2000; ++i) {
    auto a = g.u32(10, U"abäö1 ."), b = g.u32(10, U"abäö1 .");
    if (b.empty()) continue;
    CHECK(cer(text::encode_utf8(a), text::encode_utf8(b)) ==
          doctest::Approx(static_cast<double>(oracle::levenshtein(a, b)) / static_cast<double>(b.size())));
  }
}

TEST_CASE("text scores and the numeric split") {
  std::vector<TextPair> pairs{{"12", "12"}, {"1.2", "1.2."}, {"Anna", "Anna"}, {"Ana", "Anna"},
                              {"x", "Mar?a"}, {"", ""}};
  auto kept = filter_unreadable(pairs);
  CHECK(kept.size() == 5);
  auto r = split_metrics(kept);
  CHECK(r.numeric.count == 3);
  CHECK(r.textual.count == 2);
  CHECK(r.numeric.em == doctest::Approx(200.0 / 3));
  CHECK(r.numeric.cer == doctest::Approx(1.0 / 6.0));
  CHECK(r.textual.cer == doctest::Approx(1.0 / 8.0));
  CHECK(r.overall.cer == doctest::Approx(2.0 / 14.0));
  CHECK(r.overall.avg_ref_len == doctest::Approx(14.0 / 5.0));
  CHECK(classify_reference("12.3.") == TextClass::numeric);
  CHECK(classify_reference("3:o") == TextClass::textual);
  CHECK(text_scores({}).count == 0);

  auto csv_rows = csv::parse(text_report_csv(r));
  REQUIRE(csv_rows.size() == 4);
  CHECK(csv_rows[0] == csv::Row{"class", "count", "em", "cer", "avg_ref_len"});
  CHECK(csv_rows[1] == csv::Row{"numeric", "3", "66.7", "0.167", "2.0"});
}

TEST_CASE("class reports") {
  std::vector<ClassScore> rows{{"a", 100, 50, 66.7, 1}, {"b", 50, 100, 66.7, 3}};
  auto r = class_report(rows);
  CHECK(r.macro.precision == doctest::Approx(75));
  CHECK(r.weighted.precision == doctest::Approx(62.5));
  CHECK(r.weighted.recall == doctest::Approx(87.5));
  CHECK(r.weighted.support == 4);
  CHECK_THROWS_AS(class_report(std::vector<ClassScore>{}), Error);
  CHECK_THROWS_AS(class_report(std::vector<ClassScore>{{"z", 1, 1, 1, 0}}), Error);

  Confusion c{};
  c[0][0] = 8;
  c[0][3] = 2;  // two single-line cells predicted empty
  c[3][3] = 5;
  auto cr = class_report(c);
  REQUIRE(cr.classes.size() == 2);
  CHECK(cr.classes[0].label == "single_line");
  CHECK(cr.classes[0].recall == doctest::Approx(80));
  CHECK(cr.classes[0].precision == doctest::Approx(100));
  CHECK(cr.classes[1].precision == doctest::Approx(500.0 / 7));
  CHECK(cr.weighted.support == 15);

  auto lines = csv::parse(class_report_csv(cr));
  CHECK(lines.size() == 5);
  CHECK(lines[3][0] == "macro avg");
  CHECK(csv::parse(class_report_csv(ClassReport{})).size() == 1);
}

TEST_CASE("metric csv") {
  auto out = metric_rows_csv({{"all", metrics({94, 0, 6})}});
  auto rows = csv::parse(out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1] == csv::Row{"all", "94.0", "94.0", "100.0", "96.9"});
}
