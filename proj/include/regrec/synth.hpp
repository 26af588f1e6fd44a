#pragma once

// Synthetic openings and books with complete ground truth. An ideal,
// axis-aligned document is generated first; the observed document is that
// ideal replayed through a logged list of perturbations.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "regrec/cells.hpp"
#include "regrec/geometry.hpp"
#include "regrec/gridrec.hpp"
#include "regrec/interchange.hpp"
#include "regrec/normalize.hpp"

namespace regrec::synth {

template <typename T>
struct Range {
  T min{};
  T max{};
};

struct SynthConfig {
  std::uint64_t seed = 1;
  Range<std::size_t> rows{8, 14};
  /// {0, 0} uses the layout's column schema; otherwise plain "any" columns.
  Range<std::size_t> cols{0, 0};
  Range<double> skew_angle{0.0, 0.0};  // degrees, magnitude drawn from the range with random sign
  double cell_dropout_prob = 0.0;
  double char_noise_prob = 0.0;
  double year_corruption_prob = 0.0;
  double border_jitter = 0.0;  // pixels, uniform in [-j, j] per cell edge
  LayoutType layout = LayoutType::preprinted;

  std::int64_t image_width = 3000;
  std::int64_t image_height = 2000;
  double repetition_prob = 0.2;
  double multi_line_prob = 0.15;
  double empty_cell_prob = 0.1;
  std::size_t max_trailing_empty_rows = 2;
  double year_advance_prob = 0.3;
  double mid_page_year_prob = 0.1;
  Range<int> start_year{1800, 1890};
  std::optional<BookDirection> direction;  // random in/out/mixed when unset
  /// Regeneration attempts when dropout would leave a row or column
  /// without enough support.
  std::size_t max_retries = 20;
  std::size_t min_pts = 2;

  /// Throws ValidationError on probabilities outside [0,1] or empty ranges.
  void validate() const;
};

/// Independent seeds for sub-streams (openings, books) of one master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---- perturbation log ----------------------------------------------------

struct CellRef {
  std::size_t table = 0;
  std::size_t cell = 0;  // index into the ideal table's row-major cell list
  friend auto operator<=>(const CellRef&, const CellRef&) = default;
};

struct EdgeJitter {
  CellRef ref;
  double dx_min = 0, dy_min = 0, dx_max = 0, dy_max = 0;
};

struct CharSubstitution {
  CellRef ref;
  std::optional<std::size_t> line;  // line index for multi-line cells, else the cell text
  std::size_t position = 0;         // scalar index
  char32_t from = 0;
  char32_t to = 0;
};

struct YearCorruption {
  std::size_t detection = 0;  // index into year_detections
  std::size_t position = 0;
  char from = 0;
  char to = 0;
};

struct PerturbationLog {
  geometry::Homography left;   // ideal -> observed, left page
  geometry::Homography right;  // ideal -> observed, right page
  std::vector<CellRef> dropped;
  std::vector<EdgeJitter> jitter;
  std::vector<CharSubstitution> substitutions;
  std::vector<YearCorruption> year_corruptions;
};

/// Applies the log to the ideal document: text substitutions, year
/// corruptions, edge jitter, homography, then cell dropout.
DetectionDocument replay(const DetectionDocument& ideal, const PerturbationLog& log);

/// The ideal document mapped through the log's homographies only, i.e. the
/// ground-truth annotation of the observed image.
DetectionDocument annotate(const DetectionDocument& ideal, const PerturbationLog& log);

// ---- generated fixtures ----------------------------------------------------

struct GoldPage {
  PageSide side = PageSide::left;
  int header_year = 0;
  std::set<int> years;  // every year a row on the page carries
};

struct GoldOpening {
  DetectionDocument ideal;
  std::vector<gridrec::GridTable> tables;  // ideal coordinates, one per page
  std::vector<MigrationRecord> records;
  GoldPage left;
  GoldPage right;
};

struct SynthOpening {
  GoldOpening gold;
  DetectionDocument observed;
  PerturbationLog log;
};

/// One opening with a random start year; book id "book-<seed>".
SynthOpening generate_opening(const SynthConfig& cfg);

struct SynthBook {
  std::string book_id;
  BookDirection direction = BookDirection::unknown;
  std::vector<SynthOpening> openings;

  std::vector<MigrationRecord> gold_records() const;
};

/// Openings share the book's year sequence, which never decreases.
SynthBook generate_book(const SynthConfig& cfg, std::size_t n_openings);

/// Copy of a book under a new id (opening ids are rewritten too).
SynthBook duplicate_book(const SynthBook& book, const std::string& new_id);

// ---- embedded vocabulary -------------------------------------------------

/// Contents of a shipped data file ("gazetteer.tsv", "schemas/preprinted.tsv",
/// ...). Throws Error for unknown names.
std::string_view vocabulary_file(std::string_view name);
std::vector<std::string_view> vocabulary_file_names();
const normalize::Gazetteer& gazetteer();
/// Schema for the layout; empty for layouts without one.
const cells::ColumnSchema& schema_for(LayoutType layout);

}  // namespace regrec::synth
