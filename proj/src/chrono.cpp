#include "regrec/chrono.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "regrec/text.hpp"

namespace regrec::chrono {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool in_range(int y, const ChronoConfig& cfg) { return y >= cfg.min_year && y <= cfg.max_year; }

int to_int(const std::string& digits) { return std::stoi(digits); }

constexpr std::string_view kSeparatorGlyphs = "/|lI!";

struct Normalized {
  int year;
  bool repaired;
};

std::optional<Normalized> normalize_impl(const std::string& raw, const ChronoConfig& cfg) {
  std::string t = text::trim(raw);
  if (t.size() == 4 && is_digit(t[0]) && is_digit(t[1]) && kSeparatorGlyphs.find(t[2]) != std::string_view::npos &&
      is_digit(t[3])) {
    int y = to_int(std::string{t[0], t[1], '1', t[3]});
    if (in_range(y, cfg)) return Normalized{y, true};
  }
  if (t.size() == 4 && is_digit(t[0])) {
    int non_digit = -1, count = 0;
    for (int i = 1; i < 4; ++i)
      if (!is_digit(t[static_cast<std::size_t>(i)])) {
        non_digit = i;
        ++count;
      }
    if (count == 1) {
      std::optional<int> unique;
      int hits = 0;
      for (char d = '0'; d <= '9'; ++d) {
        std::string c = t;
        c[static_cast<std::size_t>(non_digit)] = d;
        std::string prefix = c.substr(0, 2);
        if (prefix != "17" && prefix != "18" && prefix != "19") continue;
        int y = to_int(c);
        if (!in_range(y, cfg)) continue;
        ++hits;
        unique = y;
      }
      if (hits == 1) return Normalized{*unique, true};
    }
  }
  std::string digits;
  for (char c : t)
    if (is_digit(c)) digits += c;
  if (digits.size() == 4) {
    int y = to_int(digits);
    if (in_range(y, cfg)) return Normalized{y, false};
  }
  return std::nullopt;
}

struct Cost {
  long discards = 0;
  long corrections = 0;
  long jump = 0;
  Cost operator+(const Cost& o) const { return {discards + o.discards, corrections + o.corrections, jump + o.jump}; }
  bool operator<(const Cost& o) const {
    return std::tie(discards, corrections, jump) < std::tie(o.discards, o.corrections, o.jump);
  }
};

// How an observation relates to a candidate year: 0 exact, 1 corrected, -1 discarded.
int match_kind(const std::vector<YearCandidate>& cands, int year) {
  for (const auto& c : cands)
    if (c.year == year) return c.corrected ? 1 : 0;
  return -1;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return s;
}

PageYear finish_page(const PageInput& in, std::optional<int> year,
                     const std::vector<std::vector<YearCandidate>>& cands, std::size_t& discarded,
                     std::size_t& corrections) {
  PageYear p{in.opening_id, in.side, in.observations, year, YearSource::interpolated, {}};
  bool any_exact = false, any_kept = false;
  for (std::size_t o = 0; o < in.observations.size(); ++o) {
    int kind = year ? match_kind(cands[o], *year) : -1;
    p.kept.push_back(kind >= 0);
    if (kind < 0) {
      ++discarded;
      continue;
    }
    any_kept = true;
    if (kind == 0)
      any_exact = true;
    else
      ++corrections;
  }
  if (any_kept) p.source = any_exact ? YearSource::observed : YearSource::corrected;
  return p;
}

}  // namespace

const std::vector<char>& confusions_of(char digit) {
  static const std::map<char, std::vector<char>> table{
      {'0', {'6', 'o', 'O'}}, {'1', {'7', '/', 'l', 'I'}}, {'2', {'Z', 'z'}}, {'3', {'E'}},
      {'4', {'/'}},           {'5', {'S', 's'}},           {'6', {'0', 'b'}}, {'7', {'1'}},
      {'8', {'B'}},           {'9', {'g', 'q'}}};
  static const std::vector<char> none;
  auto it = table.find(digit);
  return it == table.end() ? none : it->second;
}

std::vector<char> digits_for(char glyph) {
  std::vector<char> out;
  for (char d = '0'; d <= '9'; ++d) {
    const auto& c = confusions_of(d);
    if (std::find(c.begin(), c.end(), glyph) != c.end()) out.push_back(d);
  }
  return out;
}

std::optional<int> normalize_year_token(const std::string& raw, const ChronoConfig& cfg) {
  auto n = normalize_impl(raw, cfg);
  return n ? std::optional(n->year) : std::nullopt;
}

std::vector<YearCandidate> year_candidates(const std::string& raw, const ChronoConfig& cfg) {
  std::map<int, bool> found;  // year -> corrected
  auto add = [&](int y, bool corrected) {
    auto [it, inserted] = found.emplace(y, corrected);
    if (!inserted) it->second = it->second && corrected;
  };
  if (auto n = normalize_impl(raw, cfg)) add(n->year, n->repaired);
  std::string t = text::trim(raw);
  if (t.size() == 4) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (char d : digits_for(t[i])) {
        std::string c = t;
        c[i] = d;
        if (!std::all_of(c.begin(), c.end(), is_digit)) continue;
        int y = to_int(c);
        if (in_range(y, cfg)) add(y, true);
      }
    }
  }
  std::vector<YearCandidate> out;
  for (auto [y, corrected] : found) out.push_back({y, corrected});
  return out;
}

std::string to_string(YearSource s) {
  switch (s) {
    case YearSource::observed:
      return "observed";
    case YearSource::corrected:
      return "corrected";
    case YearSource::interpolated:
      return "interpolated";
  }
  return "?";
}

YearObservation make_observation(const std::string& opening_id, PageSide side, const std::string& raw, const Box& box,
                                 const ChronoConfig& cfg) {
  return {opening_id, side, raw, normalize_year_token(raw, cfg), box};
}

BookYearSequence infer_sequence(const std::vector<PageInput>& pages, const ChronoConfig& cfg) {
  BookYearSequence seq;
  const std::size_t n = pages.size();
  if (n == 0) return seq;

  std::vector<std::vector<std::vector<YearCandidate>>> cands(n);
  std::vector<int> years;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& o : pages[i].observations) {
      cands[i].push_back(year_candidates(o.raw, cfg));
      for (const auto& c : cands[i].back()) years.push_back(c.year);
    }
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());
  const std::size_t k = years.size();

  // State 0 is "no year yet"; state s > 0 is years[s - 1].
  const std::size_t states = k + 1;
  constexpr long kInf = std::numeric_limits<long>::max() / 4;
  const Cost inf{kInf, kInf, kInf};
  std::vector<std::vector<Cost>> dp(n, std::vector<Cost>(states, inf));
  std::vector<std::vector<std::size_t>> parent(n, std::vector<std::size_t>(states, 0));

  auto page_cost = [&](std::size_t i, std::size_t s, long& kept) {
    Cost c;
    kept = 0;
    for (const auto& oc : cands[i]) {
      int m = s == 0 ? -1 : match_kind(oc, years[s - 1]);
      if (m < 0)
        ++c.discards;
      else {
        ++kept;
        c.corrections += m;
      }
    }
    return c;
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < states; ++s) {
      long kept = 0;
      Cost pc = page_cost(i, s, kept);
      if (s == 0) {
        if (i == 0 || !(dp[i - 1][0] < inf)) {
          if (i == 0) dp[i][0] = pc;
        } else {
          dp[i][0] = dp[i - 1][0] + pc;
          parent[i][0] = 0;
        }
        continue;
      }
      const int y = years[s - 1];
      if (i == 0) {
        if (kept > 0) dp[i][s] = pc;
        continue;
      }
      Cost best = inf;
      std::size_t best_parent = 0;
      if (kept > 0 && dp[i - 1][0] < inf) {
        best = dp[i - 1][0] + pc;
        best_parent = 0;
      }
      for (std::size_t p = 1; p <= s; ++p) {
        const int py = years[p - 1];
        if (y - py > cfg.max_jump) continue;
        if (kept == 0 && py != y) continue;
        if (!(dp[i - 1][p] < inf)) continue;
        Cost c = dp[i - 1][p] + pc + Cost{0, 0, y - py};
        if (c < best) {
          best = c;
          best_parent = p;
        }
      }
      dp[i][s] = best;
      parent[i][s] = best_parent;
    }
  }

  std::size_t s = 0;
  for (std::size_t t = 1; t < states; ++t)
    if (dp[n - 1][t] < dp[n - 1][s]) s = t;
  std::vector<std::size_t> chosen(n);
  for (std::size_t i = n; i-- > 0;) {
    chosen[i] = s;
    s = parent[i][s];
  }

  std::optional<int> first;
  for (std::size_t c : chosen)
    if (c != 0) {
      first = years[c - 1];
      break;
    }
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<int> y = chosen[i] != 0 ? std::optional(years[chosen[i] - 1]) : std::nullopt;
    PageYear p = finish_page(pages[i], y, cands[i], seq.discarded, seq.corrections);
    if (!y) p.resolved_year = first;  // leading pages before any evidence
    seq.pages.push_back(std::move(p));
  }
  return seq;
}

bool valid_sequence(const std::vector<std::optional<int>>& years, const ChronoConfig& cfg) {
  for (std::size_t i = 0; i < years.size(); ++i) {
    if (!years[i] || !in_range(*years[i], cfg)) return false;
    if (i > 0) {
      int step = *years[i] - *years[i - 1];
      if (step < 0 || step > cfg.max_jump) return false;
    }
  }
  return true;
}

std::optional<int> in_page_change(const YearObservation& obs, int resolved, std::optional<int> next_page,
                                  const ChronoConfig& cfg) {
  std::optional<int> best_corrected;
  for (const auto& c : year_candidates(obs.raw, cfg)) {
    if (c.year <= resolved || c.year > resolved + cfg.max_jump) continue;
    if (next_page && c.year > *next_page) continue;
    if (!c.corrected) return c.year;
    if (!best_corrected) best_corrected = c.year;
  }
  return best_corrected;
}

// ---- wire format --------------------------------------------------------

std::string encode_request(const CorrectorRequest& req) {
  std::string out = "regrec-years/1\n";
  out += "min_year\t" + std::to_string(req.min_year) + "\n";
  out += "max_year\t" + std::to_string(req.max_year) + "\n";
  for (const auto& [idx, raws] : req.pages) {
    out += "page\t" + std::to_string(idx);
    for (const auto& r : raws) out += "\t" + sanitize(r);
    out += "\n";
  }
  return out;
}

CorrectorRequest decode_request(const std::string& body) {
  CorrectorRequest req;
  std::istringstream in(body);
  std::string line;
  if (!std::getline(in, line) || line != "regrec-years/1") throw Error("corrector request: bad magic line");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::istringstream ls(line);
    for (std::string p; std::getline(ls, p, '\t');) parts.push_back(p);
    if (parts.size() >= 2 && parts[0] == "min_year")
      req.min_year = std::stoi(parts[1]);
    else if (parts.size() >= 2 && parts[0] == "max_year")
      req.max_year = std::stoi(parts[1]);
    else if (parts.size() >= 2 && parts[0] == "page")
      req.pages.emplace_back(std::stoul(parts[1]), std::vector<std::string>(parts.begin() + 2, parts.end()));
    else
      throw Error("corrector request: unexpected line '" + line + "'");
  }
  return req;
}

std::string encode_response(const std::vector<std::pair<std::size_t, std::optional<int>>>& years) {
  std::string out;
  for (const auto& [idx, y] : years) out += std::to_string(idx) + "\t" + (y ? std::to_string(*y) : "-") + "\n";
  return out;
}

CorrectorResponse decode_response(const std::string& body, const std::vector<std::size_t>& pages) {
  CorrectorResponse out;
  std::istringstream in(body);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("corrector response: missing tab in '" + line + "'");
    if (i >= pages.size()) throw Error("corrector response: too many lines");
    std::size_t idx = 0;
    std::string year = text::trim(line.substr(tab + 1));
    try {
      idx = std::stoul(line.substr(0, tab));
      if (idx != pages[i]) throw Error("corrector response: page order mismatch");
      if (year == "-") {
        out.emplace_back(std::nullopt);
      } else {
        std::size_t used = 0;
        int y = std::stoi(year, &used);
        if (used != year.size()) throw Error("corrector response: malformed year '" + year + "'");
        out.emplace_back(y);
      }
    } catch (const std::logic_error&) {
      throw Error("corrector response: malformed line '" + line + "'");
    }
    ++i;
  }
  if (i != pages.size()) throw Error("corrector response: expected " + std::to_string(pages.size()) + " lines");
  return out;
}

HttpYearCorrector::HttpYearCorrector(std::string endpoint, std::chrono::milliseconds timeout, std::string token_env)
    : timeout_(timeout), token_env_(std::move(token_env)) {
  const std::string scheme = "http://";
  if (endpoint.rfind(scheme, 0) != 0) throw Error("corrector endpoint must be an http:// URL: " + endpoint);
  auto slash = endpoint.find('/', scheme.size());
  base_ = slash == std::string::npos ? endpoint : endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
}

std::string HttpYearCorrector::exchange(const std::string& request_body) {
  httplib::Client cli(base_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* token = std::getenv(token_env_.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);
  auto res = cli.Post(path_, headers, request_body, "text/plain; charset=utf-8");
  if (!res) throw CorrectorError("corrector: " + httplib::to_string(res.error()));
  if (res->status != 200) throw CorrectorError("corrector: HTTP status " + std::to_string(res->status));
  return res->body;
}

ExternalResult external_correct(const std::vector<PageInput>& pages, YearCorrectorClient& client,
                                const ChronoConfig& cfg) {
  ExternalResult result;
  auto fallback = [&](std::string reason) {
    spdlog::warn("year corrector: falling back to rule-based sequence: {}", reason);
    result.sequence = infer_sequence(pages, cfg);
    result.used_external = false;
    result.fallback_reason = std::move(reason);
    return result;
  };

  CorrectorRequest req{cfg.min_year, cfg.max_year, {}};
  std::vector<std::size_t> indices;
  bool any_obs = false;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    std::vector<std::string> raws;
    for (const auto& o : pages[i].observations) raws.push_back(o.raw);
    any_obs = any_obs || !raws.empty();
    req.pages.emplace_back(i, std::move(raws));
    indices.push_back(i);
  }
  if (!any_obs) return fallback("no year observations");

  const std::string body = encode_request(req);
  spdlog::info("year corrector request ({} pages):\n{}", pages.size(), body);
  CorrectorResponse years;
  try {
    std::string response = client.exchange(body);
    spdlog::info("year corrector response:\n{}", response);
    years = decode_response(response, indices);
  } catch (const std::exception& e) {
    return fallback(e.what());
  }
  if (!valid_sequence(years, cfg)) return fallback("response violates range/monotonicity/jump constraints");

  for (std::size_t i = 0; i < pages.size(); ++i) {
    std::vector<std::vector<YearCandidate>> cands;
    for (const auto& o : pages[i].observations) cands.push_back(year_candidates(o.raw, cfg));
    result.sequence.pages.push_back(
        finish_page(pages[i], years[i], cands, result.sequence.discarded, result.sequence.corrections));
  }
  result.used_external = true;
  return result;
}

YearScores evaluate_years(const std::vector<std::set<int>>& predicted, const std::vector<std::set<int>>& gold) {
  if (predicted.size() != gold.size()) throw Error("evaluate_years: page count mismatch");
  YearScores s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].empty()) continue;
    ++s.pages_scored;
    for (int y : predicted[i]) (gold[i].count(y) ? s.tp : s.fp)++;
    for (int y : gold[i])
      if (!predicted[i].count(y)) ++s.fn;
  }
  auto pct = [](std::size_t num, std::size_t den) { return den ? 100.0 * static_cast<double>(num) / static_cast<double>(den) : 0.0; };
  s.precision = pct(s.tp, s.tp + s.fp);
  s.recall = pct(s.tp, s.tp + s.fn);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace regrec::chrono
