#pragma once

// Detection, classification and text-recognition metrics, and the CSV
// reports built from them.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "regrec/interchange.hpp"

namespace regrec::eval {

using regrec::iou;

struct EvalCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  EvalCounts& operator+=(const EvalCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

struct MatchedPair {
  std::size_t pred = 0;
  std::size_t gold = 0;
  double iou = 0.0;
};

struct MatchOutcome {
  EvalCounts counts;
  std::vector<MatchedPair> pairs;  // in the order they were accepted
};

/// Greedy one-to-one matching: all (pred, gold) pairs by IoU descending,
/// ties by pred index then gold index; a pair is a true positive when its
/// IoU is strictly above `thr` and neither side is taken yet.
MatchOutcome match_detections(const std::vector<Box>& pred, const std::vector<Box>& gold, double thr = 0.5);

class UndefinedMetricsError : public Error {
 public:
  using Error::Error;
};

/// Percentages, unrounded.
struct MetricValues {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// accuracy = TP/(TP+FP+FN), precision, recall and their harmonic mean.
/// Throws UndefinedMetricsError when all counts are zero.
MetricValues metrics(const EvalCounts& c);

/// Harmonic mean of two percentages; 0 when both are 0.
double f1_score(double precision, double recall);
/// Accuracy implied by precision and recall (both nonzero percentages).
double accuracy_from(double precision, double recall);

/// Half-up rounding to `decimals` places, used only when rendering.
double round_half_up(double value, int decimals = 1);
std::string format_fixed(double value, int decimals = 1);

/// Edit distance over Unicode scalars divided by the reference length.
/// Throws Error for an empty reference.
double cer(const std::string& pred, const std::string& ref);
/// Equality after trimming outer whitespace; case-sensitive.
bool exact_match(const std::string& pred, const std::string& ref);

struct TextPair {
  std::string pred;
  std::string ref;
};

/// Drops pairs whose reference contains '?'.
std::vector<TextPair> filter_unreadable(const std::vector<TextPair>& pairs);

enum class TextClass { numeric, textual };
/// Textual when the reference contains at least one letter.
TextClass classify_reference(const std::string& ref);

struct TextScores {
  std::size_t count = 0;
  double em = 0.0;           // percentage
  double cer = 0.0;          // total edits / total reference characters
  double avg_ref_len = 0.0;  // scalar values
};

/// Pairs with an empty reference are skipped for CER but counted for EM.
TextScores text_scores(const std::vector<TextPair>& pairs);

struct SplitReport {
  TextScores numeric;
  TextScores textual;
  TextScores overall;
};
SplitReport split_metrics(const std::vector<TextPair>& pairs);

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassReport {
  std::vector<ClassScore> classes;
  ClassScore macro;
  ClassScore weighted;
};

/// Unweighted and support-weighted means. Throws Error if a support is 0
/// or the list is empty.
ClassReport class_report(const std::vector<ClassScore>& classes);

/// confusion[gold][pred] counts in CellType order.
using Confusion = std::array<std::array<std::size_t, kCellTypeCount>, kCellTypeCount>;
/// Per-class scores from a confusion matrix; classes without support are
/// left out of the averages.
ClassReport class_report(const Confusion& confusion);

// ---- CSV rendering (one decimal, half-up) --------------------------------

struct MetricRow {
  std::string category;
  MetricValues values;
};

/// "category,accuracy,recall,precision,f1"
std::string metric_rows_csv(const std::vector<MetricRow>& rows);
/// "class,precision,recall,f1,support" plus "macro avg" and "weighted avg".
std::string class_report_csv(const ClassReport& report);
/// "class,count,em,cer,avg_ref_len" for numeric, textual, all.
std::string text_report_csv(const SplitReport& report);

}  // namespace regrec::eval
