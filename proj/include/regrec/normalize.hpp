#pragma once

// Parish-name standardization, duplicate-book detection and the usability
// filter applied before aggregation.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "regrec/interchange.hpp"

namespace regrec::normalize {

struct GazetteerEntry {
  std::string canonical;
  std::vector<std::string> variants;
};

/// Immutable after construction; safe to share between threads.
class Gazetteer {
 public:
  Gazetteer() = default;
  /// Throws ValidationError on duplicate canonicals or a variant shared by
  /// two canonicals.
  explicit Gazetteer(std::vector<GazetteerEntry> entries);

  const std::vector<GazetteerEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  struct Form {
    std::u32string text;  // match key
    std::size_t entry;
    bool canonical;
  };
  const std::vector<Form>& forms() const { return forms_; }
  /// Entry index for an exact match key.
  const Form* lookup(const std::string& key) const;

 private:
  std::vector<GazetteerEntry> entries_;
  std::vector<Form> forms_;
  std::unordered_map<std::string, std::size_t> by_key_;
};

/// `canonical<TAB>variant1;variant2;...`, one parish per line, `#` comments.
Gazetteer parse_gazetteer(const std::string& text);
Gazetteer load_gazetteer(const std::filesystem::path& path);

/// Trim, case-fold, collapse whitespace. Diacritics are kept.
std::string match_key(const std::string& raw);

enum class MatchMethod { exact, variant, fuzzy, unmatched };
std::string to_string(MatchMethod m);

struct MatchResult {
  std::optional<std::string> canonical;
  double score = 0.0;
  MatchMethod method = MatchMethod::unmatched;
  /// Tied canonicals when the fuzzy best is ambiguous.
  std::vector<std::string> candidates;
};

/// Exact canonical or variant hit scores 1. A ":" abbreviation (H:fors)
/// expands against forms sharing its prefix and suffix. Otherwise the form
/// with the smallest edit distance d is accepted when d / max(len) is at most
/// `max_rel_dist` and no other canonical reaches the same d.
MatchResult match_parish(const std::string& raw, const Gazetteer& g, double max_rel_dist = 0.25);

/// Fills parish_canonical from parish_raw and sets or clears unmatched_parish.
void apply_parish_matching(std::vector<MigrationRecord>& records, const Gazetteer& g, double max_rel_dist = 0.25);

struct DuplicatePair {
  std::string keep;
  std::string remove;  // lexicographically larger id
  double jaccard = 0.0;
};

/// Fingerprint of a record: year, direction and its normalized field texts.
std::string fingerprint(const MigrationRecord& r);

/// Multiset Jaccard of two fingerprint lists.
double multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Book pairs whose fingerprint multisets overlap by at least `threshold`,
/// ordered by (keep, remove).
std::vector<DuplicatePair> detect_duplicate_books(const std::map<std::string, std::vector<MigrationRecord>>& books,
                                                  double threshold = 0.9);

enum class RejectReason { missing_direction, missing_year, missing_parish, unmatched_parish };
std::string to_string(RejectReason r);
inline constexpr RejectReason kRejectReasons[] = {RejectReason::missing_direction, RejectReason::missing_year,
                                                  RejectReason::missing_parish, RejectReason::unmatched_parish};

struct FilterResult {
  std::vector<MigrationRecord> usable;
  std::map<RejectReason, std::size_t> tally;  // every reason present, possibly 0
};

/// Rejects on the first failing check in the order: direction, year,
/// parish present, parish linked.
std::optional<RejectReason> reject_reason(const MigrationRecord& r);
FilterResult filter_usable(const std::vector<MigrationRecord>& records);

}  // namespace regrec::normalize
