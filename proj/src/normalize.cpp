#include "regrec/normalize.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "regrec/text.hpp"

namespace regrec::normalize {

Gazetteer::Gazetteer(std::vector<GazetteerEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto add = [&](const std::string& name, bool canonical) {
      std::string key = match_key(name);
      if (key.empty()) throw ValidationError("gazetteer[" + std::to_string(i) + "]", "empty name");
      auto [it, inserted] = by_key_.emplace(key, forms_.size());
      if (!inserted) {
        const Form& prev = forms_[it->second];
        if (prev.entry == i) return;  // repeated spelling within one entry
        throw ValidationError("gazetteer[" + std::to_string(i) + "]",
                              "'" + name + "' already belongs to '" + entries_[prev.entry].canonical + "'");
      }
      forms_.push_back({text::decode_utf8(key), i, canonical});
    };
    add(entries_[i].canonical, true);
    for (const auto& v : entries_[i].variants) add(v, false);
  }
}

const Gazetteer::Form* Gazetteer::lookup(const std::string& key) const {
  auto it = by_key_.find(key);
  return it == by_key_.end() ? nullptr : &forms_[it->second];
}

Gazetteer parse_gazetteer(const std::string& content) {
  std::vector<GazetteerEntry> entries;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = text::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto tab = line.find('\t');
    GazetteerEntry e;
    e.canonical = text::trim(line.substr(0, tab));
    if (e.canonical.empty()) throw ParseError("<gazetteer>", lineno, "missing canonical name");
    if (tab != std::string::npos) {
      std::istringstream vs(line.substr(tab + 1));
      for (std::string v; std::getline(vs, v, ';');)
        if (auto tv = text::trim(v); !tv.empty()) e.variants.push_back(tv);
    }
    entries.push_back(std::move(e));
  }
  return Gazetteer(std::move(entries));
}

Gazetteer load_gazetteer(const std::filesystem::path& path) { return parse_gazetteer(read_file(path)); }

std::string match_key(const std::string& raw) { return text::collapse_whitespace(text::casefold(raw)); }

std::string to_string(MatchMethod m) {
  switch (m) {
    case MatchMethod::exact:
      return "exact";
    case MatchMethod::variant:
      return "variant";
    case MatchMethod::fuzzy:
      return "fuzzy";
    case MatchMethod::unmatched:
      return "unmatched";
  }
  return "?";
}

namespace {

bool starts_with(const std::u32string& s, const std::u32string& p) {
  return s.size() >= p.size() && std::equal(p.begin(), p.end(), s.begin());
}
bool ends_with(const std::u32string& s, const std::u32string& p) {
  return s.size() >= p.size() && std::equal(p.rbegin(), p.rend(), s.rbegin());
}

std::optional<std::size_t> expand_abbreviation(const std::u32string& key, const Gazetteer& g) {
  auto colon = key.find(U':');
  if (colon == std::u32string::npos || key.find(U':', colon + 1) != std::u32string::npos) return std::nullopt;
  std::u32string prefix = key.substr(0, colon), suffix = key.substr(colon + 1);
  if (prefix.empty()) return std::nullopt;
  std::optional<std::size_t> entry;
  for (const auto& f : g.forms()) {
    if (f.text.find(U':') != std::u32string::npos) continue;
    if (f.text.size() <= prefix.size() + suffix.size()) continue;
    if (!starts_with(f.text, prefix) || !ends_with(f.text, suffix)) continue;
    if (entry && *entry != f.entry) return std::nullopt;  // ambiguous expansion
    entry = f.entry;
  }
  return entry;
}

}  // namespace

MatchResult match_parish(const std::string& raw, const Gazetteer& g, double max_rel_dist) {
  MatchResult r;
  const std::string key = match_key(raw);
  if (key.empty() || g.empty()) return r;
  if (const auto* f = g.lookup(key)) {
    r.canonical = g.entries()[f->entry].canonical;
    r.score = 1.0;
    r.method = f->canonical ? MatchMethod::exact : MatchMethod::variant;
    return r;
  }
  const std::u32string k = text::decode_utf8(key);
  if (auto e = expand_abbreviation(k, g)) {
    r.canonical = g.entries()[*e].canonical;
    r.score = 1.0;
    r.method = MatchMethod::variant;
    return r;
  }

  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best_entries;
  double best_rel = 1.0;
  for (const auto& f : g.forms()) {
    std::size_t d = text::levenshtein(k, f.text);
    double rel = static_cast<double>(d) / static_cast<double>(std::max(k.size(), f.text.size()));
    if (d < best_d) {
      best_d = d;
      best_entries = {f.entry};
      best_rel = rel;
    } else if (d == best_d) {
      if (std::find(best_entries.begin(), best_entries.end(), f.entry) == best_entries.end())
        best_entries.push_back(f.entry);
      best_rel = std::min(best_rel, rel);
    }
  }
  if (best_entries.size() > 1) {
    for (auto e : best_entries) r.candidates.push_back(g.entries()[e].canonical);
    return r;
  }
  if (best_entries.size() == 1 && best_rel <= max_rel_dist) {
    r.canonical = g.entries()[best_entries[0]].canonical;
    r.score = 1.0 - best_rel;
    r.method = MatchMethod::fuzzy;
  }
  return r;
}

void apply_parish_matching(std::vector<MigrationRecord>& records, const Gazetteer& g, double max_rel_dist) {
  for (auto& rec : records) {
    rec.parish_canonical.reset();
    rec.flags.erase(RecordFlag::unmatched_parish);
    if (!rec.parish_raw || text::trim(*rec.parish_raw).empty()) continue;
    auto m = match_parish(*rec.parish_raw, g, max_rel_dist);
    if (m.canonical)
      rec.parish_canonical = m.canonical;
    else
      rec.flags.insert(RecordFlag::unmatched_parish);
  }
}

std::string fingerprint(const MigrationRecord& r) {
  std::string fp = r.year ? std::to_string(*r.year) : "-";
  fp += '\x1f';
  fp += to_string(r.direction);
  for (const auto& [label, value] : r.fields) {
    fp += '\x1f';
    fp += match_key(value);
  }
  return fp;
}

double multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& s : a) ++counts[s].first;
  for (const auto& s : b) ++counts[s].second;
  std::size_t inter = 0, uni = 0;
  for (const auto& [s, c] : counts) {
    inter += std::min(c.first, c.second);
    uni += std::max(c.first, c.second);
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<DuplicatePair> detect_duplicate_books(const std::map<std::string, std::vector<MigrationRecord>>& books,
                                                  double threshold) {
  std::vector<std::pair<std::string, std::vector<std::string>>> prints;
  for (const auto& [id, records] : books) {
    std::vector<std::string> fps;
    for (const auto& r : records) fps.push_back(fingerprint(r));
    prints.emplace_back(id, std::move(fps));
  }
  std::vector<DuplicatePair> out;
  for (std::size_t i = 0; i < prints.size(); ++i)
    for (std::size_t j = i + 1; j < prints.size(); ++j) {
      if (prints[i].second.empty() && prints[j].second.empty()) continue;
      double jac = multiset_jaccard(prints[i].second, prints[j].second);
      if (jac >= threshold) out.push_back({prints[i].first, prints[j].first, jac});
    }
  return out;
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::missing_direction:
      return "missing_direction";
    case RejectReason::missing_year:
      return "missing_year";
    case RejectReason::missing_parish:
      return "missing_parish";
    case RejectReason::unmatched_parish:
      return "unmatched_parish";
  }
  return "?";
}

std::optional<RejectReason> reject_reason(const MigrationRecord& r) {
  if (r.direction == Direction::unknown) return RejectReason::missing_direction;
  if (!r.year) return RejectReason::missing_year;
  if (!r.parish_raw || text::trim(*r.parish_raw).empty()) return RejectReason::missing_parish;
  if (!r.parish_canonical || r.flags.count(RecordFlag::unmatched_parish)) return RejectReason::unmatched_parish;
  return std::nullopt;
}

FilterResult filter_usable(const std::vector<MigrationRecord>& records) {
  FilterResult out;
  for (auto reason : kRejectReasons) out.tally[reason] = 0;
  for (const auto& r : records) {
    if (auto reason = reject_reason(r))
      ++out.tally[*reason];
    else
      out.usable.push_back(r);
  }
  return out;
}

}  // namespace regrec::normalize
