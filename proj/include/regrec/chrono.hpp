#pragma once

// Year resolution for the pages of a register book. Year mentions are
// noisy, but the pages of a book advance through time, so each page's year
// is chosen jointly with its neighbours.

#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regrec/interchange.hpp"

namespace regrec::chrono {

struct ChronoConfig {
  int min_year = 1700;
  int max_year = 1930;
  int max_jump = 5;
};

/// Characters a handwritten digit is commonly misread as. Digit-to-digit
/// confusions (1/7, 0/6) differ by 6, more than the default max_jump.
const std::vector<char>& confusions_of(char digit);
/// Digits a glyph may stand for (the inverse of confusions_of).
std::vector<char> digits_for(char glyph);

/// Year from a single recognized token, or nullopt:
///  - four digits in range (surrounding non-digits stripped);
///  - "19/4" style: a separator glyph standing in for a 1;
///  - four characters with one non-digit in positions 2-4 whose in-range
///    completion under a 17/18/19 prefix is unique.
std::optional<int> normalize_year_token(const std::string& raw, const ChronoConfig& cfg = {});

struct YearCandidate {
  int year = 0;
  bool corrected = false;  // reached by repair or a confusable substitution
  friend auto operator<=>(const YearCandidate&, const YearCandidate&) = default;
};

/// normalize_year_token plus every in-range year one confusable
/// substitution away. Sorted, one entry per year (exact preferred).
std::vector<YearCandidate> year_candidates(const std::string& raw, const ChronoConfig& cfg = {});

struct YearObservation {
  std::string opening_id;
  PageSide side = PageSide::left;
  std::string raw;
  std::optional<int> normalized;
  Box box;
};

/// One page side, in reading order within the book.
struct PageInput {
  std::string opening_id;
  PageSide side = PageSide::left;
  std::vector<YearObservation> observations;
};

enum class YearSource { observed, corrected, interpolated };
std::string to_string(YearSource s);

struct PageYear {
  std::string opening_id;
  PageSide side = PageSide::left;
  std::vector<YearObservation> observations;
  std::optional<int> resolved_year;
  YearSource source = YearSource::interpolated;
  std::vector<bool> kept;  // per observation: consistent with resolved_year
};

struct BookYearSequence {
  std::vector<PageYear> pages;
  std::size_t discarded = 0;
  std::size_t corrections = 0;
};

YearObservation make_observation(const std::string& opening_id, PageSide side, const std::string& raw, const Box& box,
                                 const ChronoConfig& cfg = {});

/// Exact dynamic program over candidate years. Minimizes, in order: discarded
/// observations, corrected observations, total year increase; remaining ties
/// go to the smaller year. Pages without a kept observation carry the
/// previous year (leading ones take the first resolved year).
BookYearSequence infer_sequence(const std::vector<PageInput>& pages, const ChronoConfig& cfg = {});

/// True when the years are present, in range, non-decreasing and each step
/// is at most max_jump.
bool valid_sequence(const std::vector<std::optional<int>>& years, const ChronoConfig& cfg);

/// A year a later mention on the page switches to, if the observation is a
/// plausible mid-page change after `resolved` (and not past `next_page`).
std::optional<int> in_page_change(const YearObservation& obs, int resolved, std::optional<int> next_page,
                                  const ChronoConfig& cfg);

// ---- external corrector --------------------------------------------------

struct CorrectorRequest {
  int min_year = 0;
  int max_year = 0;
  /// (page index, raw strings) in reading order.
  std::vector<std::pair<std::size_t, std::vector<std::string>>> pages;
};

/// Years per page, same order as the request. nullopt entries mean "none".
using CorrectorResponse = std::vector<std::optional<int>>;

/// Wire format (text/plain, UTF-8, LF line ends):
///   request:  "regrec-years/1", "min_year\t<y>", "max_year\t<y>", then one
///             "page\t<index>[\t<raw>]..." line per page;
///   response: one "<index>\t<year>" line per page, "-" for no year.
/// Tabs and newlines inside raw strings are sent as spaces.
std::string encode_request(const CorrectorRequest& req);
CorrectorRequest decode_request(const std::string& body);
std::string encode_response(const std::vector<std::pair<std::size_t, std::optional<int>>>& years);
/// Throws Error when the body is not a response for exactly `pages` in order.
CorrectorResponse decode_response(const std::string& body, const std::vector<std::size_t>& pages);

class CorrectorError : public Error {
 public:
  using Error::Error;
};

/// Must be callable from several threads at once.
class YearCorrectorClient {
 public:
  virtual ~YearCorrectorClient() = default;
  /// Throws CorrectorError on transport failure or timeout.
  virtual std::string exchange(const std::string& request_body) = 0;
};

/// POSTs to an http:// endpoint. The bearer token, when set, is read from
/// the environment variable named by `token_env`.
class HttpYearCorrector final : public YearCorrectorClient {
 public:
  HttpYearCorrector(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30),
                    std::string token_env = "REGREC_CORRECTOR_TOKEN");
  std::string exchange(const std::string& request_body) override;

 private:
  std::string base_;
  std::string path_;
  std::chrono::milliseconds timeout_;
  std::string token_env_;
};

struct ExternalResult {
  BookYearSequence sequence;
  bool used_external = false;
  std::string fallback_reason;  // empty when the external answer was adopted
};

/// Sends the book's raw year strings to the client and adopts the answer if
/// it passes valid_sequence; otherwise (or on any client error) returns the
/// infer_sequence result.
ExternalResult external_correct(const std::vector<PageInput>& pages, YearCorrectorClient& client,
                                const ChronoConfig& cfg = {});

// ---- evaluation ----------------------------------------------------------

struct YearScores {
  double precision = 0.0;  // percentages
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t pages_scored = 0;
};

/// Micro-averaged over page sides with at least one gold year; sides without
/// gold years are skipped so inferred years there do not count as errors.
YearScores evaluate_years(const std::vector<std::set<int>>& predicted, const std::vector<std::set<int>>& gold);

}  // namespace regrec::chrono
