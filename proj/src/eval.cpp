#include "regrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "regrec/csv.hpp"
#include "regrec/text.hpp"

namespace regrec::eval {

MatchOutcome match_detections(const std::vector<Box>& pred, const std::vector<Box>& gold, double thr) {
  if (!(thr > 0.0 && thr <= 1.0)) throw Error("match_detections: threshold must be in (0, 1]");
  std::vector<MatchedPair> cands;
  for (std::size_t p = 0; p < pred.size(); ++p)
    for (std::size_t g = 0; g < gold.size(); ++g) {
      double v = iou(pred[p], gold[g]);
      if (v > thr) cands.push_back({p, g, v});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const MatchedPair& a, const MatchedPair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gold < b.gold;
  });
  MatchOutcome out;
  std::vector<bool> pred_used(pred.size()), gold_used(gold.size());
  for (const auto& c : cands) {
    if (pred_used[c.pred] || gold_used[c.gold]) continue;
    pred_used[c.pred] = gold_used[c.gold] = true;
    out.pairs.push_back(c);
  }
  out.counts.tp = out.pairs.size();
  out.counts.fp = pred.size() - out.counts.tp;
  out.counts.fn = gold.size() - out.counts.tp;
  return out;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

double accuracy_from(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  return 100.0 / (100.0 / precision + 100.0 / recall - 1.0);
}

MetricValues metrics(const EvalCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  if (c.tp + c.fp + c.fn == 0) throw UndefinedMetricsError("metrics: all counts are zero");
  MetricValues m;
  m.accuracy = 100.0 * tp / (tp + fp + fn);
  m.precision = c.tp + c.fp ? 100.0 * tp / (tp + fp) : 0.0;
  m.recall = c.tp + c.fn ? 100.0 * tp / (tp + fn) : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The small nudge keeps values like 88.85 (stored as 88.8499...) rounding up.
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, round_half_up(value, decimals));
  return buf;
}

double cer(const std::string& pred, const std::string& ref) {
  const auto r = text::decode_utf8(ref);
  if (r.empty()) throw Error("cer: empty reference");
  return static_cast<double>(text::levenshtein(text::decode_utf8(pred), r)) / static_cast<double>(r.size());
}

bool exact_match(const std::string& pred, const std::string& ref) { return text::trim(pred) == text::trim(ref); }

std::vector<TextPair> filter_unreadable(const std::vector<TextPair>& pairs) {
  std::vector<TextPair> out;
  for (const auto& p : pairs)
    if (p.ref.find('?') == std::string::npos) out.push_back(p);
  return out;
}

TextClass classify_reference(const std::string& ref) {
  return text::has_letter(ref) ? TextClass::textual : TextClass::numeric;
}

TextScores text_scores(const std::vector<TextPair>& pairs) {
  TextScores s;
  s.count = pairs.size();
  std::size_t em = 0, edits = 0, ref_chars = 0;
  for (const auto& p : pairs) {
    if (exact_match(p.pred, p.ref)) ++em;
    auto r = text::decode_utf8(p.ref);
    ref_chars += r.size();
    if (!r.empty()) edits += text::levenshtein(text::decode_utf8(p.pred), r);
  }
  if (s.count) {
    s.em = 100.0 * static_cast<double>(em) / static_cast<double>(s.count);
    s.avg_ref_len = static_cast<double>(ref_chars) / static_cast<double>(s.count);
  }
  if (ref_chars) s.cer = static_cast<double>(edits) / static_cast<double>(ref_chars);
  return s;
}

SplitReport split_metrics(const std::vector<TextPair>& pairs) {
  std::vector<TextPair> numeric, textual;
  for (const auto& p : pairs) (classify_reference(p.ref) == TextClass::numeric ? numeric : textual).push_back(p);
  return {text_scores(numeric), text_scores(textual), text_scores(pairs)};
}

ClassReport class_report(const std::vector<ClassScore>& classes) {
  if (classes.empty()) throw Error("class_report: no classes");
  ClassReport r;
  r.classes = classes;
  r.macro.label = "macro avg";
  r.weighted.label = "weighted avg";
  double total = 0.0;
  for (const auto& c : classes) {
    if (c.support == 0) throw Error("class_report: class '" + c.label + "' has zero support");
    const double w = static_cast<double>(c.support);
    total += w;
    r.macro.precision += c.precision;
    r.macro.recall += c.recall;
    r.macro.f1 += c.f1;
    r.weighted.precision += w * c.precision;
    r.weighted.recall += w * c.recall;
    r.weighted.f1 += w * c.f1;
  }
  const double n = static_cast<double>(classes.size());
  r.macro.precision /= n;
  r.macro.recall /= n;
  r.macro.f1 /= n;
  r.weighted.precision /= total;
  r.weighted.recall /= total;
  r.weighted.f1 /= total;
  r.macro.support = r.weighted.support = static_cast<std::size_t>(total);
  return r;
}

ClassReport class_report(const Confusion& confusion) {
  std::vector<ClassScore> rows;
  for (std::size_t k = 0; k < kCellTypeCount; ++k) {
    std::size_t tp = confusion[k][k], support = 0, predicted = 0;
    for (std::size_t j = 0; j < kCellTypeCount; ++j) {
      support += confusion[k][j];
      predicted += confusion[j][k];
    }
    if (support == 0) continue;
    ClassScore s;
    s.label = to_string(static_cast<CellType>(k));
    s.support = support;
    s.precision = predicted ? 100.0 * static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    s.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(support);
    s.f1 = f1_score(s.precision, s.recall);
    rows.push_back(s);
  }
  if (rows.empty()) return {};
  return class_report(rows);
}

std::string metric_rows_csv(const std::vector<MetricRow>& rows) {
  std::string out = csv::format_row({"category", "accuracy", "recall", "precision", "f1"});
  for (const auto& r : rows)
    out += csv::format_row({r.category, format_fixed(r.values.accuracy), format_fixed(r.values.recall),
                            format_fixed(r.values.precision), format_fixed(r.values.f1)});
  return out;
}

std::string class_report_csv(const ClassReport& report) {
  std::string out = csv::format_row({"class", "precision", "recall", "f1", "support"});
  auto row = [&](const ClassScore& c) {
    out += csv::format_row({c.label, format_fixed(c.precision), format_fixed(c.recall), format_fixed(c.f1),
                            std::to_string(c.support)});
  };
  for (const auto& c : report.classes) row(c);
  if (!report.classes.empty()) {
    row(report.macro);
    row(report.weighted);
  }
  return out;
}

std::string text_report_csv(const SplitReport& report) {
  std::string out = csv::format_row({"class", "count", "em", "cer", "avg_ref_len"});
  auto row = [&](const std::string& label, const TextScores& s) {
    out += csv::format_row({label, std::to_string(s.count), format_fixed(s.em), format_fixed(s.cer, 3),
                            format_fixed(s.avg_ref_len)});
  };
  row("numeric", report.numeric);
  row("textual", report.textual);
  row("all", report.overall);
  return out;
}

}  // namespace regrec::eval
