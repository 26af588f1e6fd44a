// regrec: record extraction from detection documents of register openings.

#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "regrec/pipeline.hpp"

namespace {

using namespace regrec;
namespace fs = std::filesystem;

struct CommonFlags {
  std::optional<double> eps_row, eps_col;
  std::size_t min_pts = 2;
  bool merge_split_tables = false;
  int min_year = 1700, max_year = 1930, max_jump = 5;
  std::string corrector_endpoint;
  double corrector_timeout = 30.0;
  std::string gazetteer;
  double max_rel_dist = 0.25;
  std::string schema_dir;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
};

void add_grid_flags(CLI::App* app, CommonFlags& f) {
  app->add_option("--eps-row", f.eps_row, "Row clustering radius in pixels (default: 0.4 x median cell height)");
  app->add_option("--eps-col", f.eps_col, "Column clustering radius in pixels (default: 0.4 x median cell width)");
  app->add_option("--min-pts", f.min_pts, "DBSCAN minimum neighborhood size")->capture_default_str();
  app->add_flag("--merge-split-tables", f.merge_split_tables, "Join tables split at the page fold");
}

void add_year_flags(CLI::App* app, CommonFlags& f) {
  app->add_option("--min-year", f.min_year, "Earliest valid year")->capture_default_str();
  app->add_option("--max-year", f.max_year, "Latest valid year")->capture_default_str();
  app->add_option("--max-jump", f.max_jump, "Largest year increase between pages")->capture_default_str();
  app->add_option("--corrector-endpoint", f.corrector_endpoint,
                  "http:// URL of an external year corrector (token from REGREC_CORRECTOR_TOKEN)");
  app->add_option("--corrector-timeout", f.corrector_timeout, "Corrector timeout in seconds")->capture_default_str();
}

void add_schema_flags(CLI::App* app, CommonFlags& f) {
  app->add_option("--gazetteer", f.gazetteer, "Parish gazetteer (TSV)")->check(CLI::ExistingFile);
  app->add_option("--max-rel-dist", f.max_rel_dist, "Largest relative edit distance for fuzzy parish matches")
      ->capture_default_str();
  app->add_option("--schema-dir", f.schema_dir, "Directory of <layout>.tsv column schemas")->check(CLI::ExistingDirectory);
}

pipeline::ExtractOptions to_options(const CommonFlags& f) {
  pipeline::ExtractOptions o;
  o.grid.eps_row = f.eps_row;
  o.grid.eps_col = f.eps_col;
  o.grid.min_pts = f.min_pts;
  o.merge_split_tables = f.merge_split_tables;
  o.chrono = {f.min_year, f.max_year, f.max_jump};
  if (o.chrono.min_year > o.chrono.max_year) throw ValidationError("--min-year", "must not exceed --max-year");
  if (!f.corrector_endpoint.empty())
    o.corrector = std::make_shared<chrono::HttpYearCorrector>(
        f.corrector_endpoint, std::chrono::milliseconds(static_cast<long>(f.corrector_timeout * 1000.0)));
  if (!f.gazetteer.empty()) o.gazetteer = normalize::load_gazetteer(f.gazetteer);
  o.max_rel_dist = f.max_rel_dist;
  if (!f.schema_dir.empty()) o.schemas = pipeline::load_schemas(f.schema_dir);
  o.workers = f.workers;
  return o;
}

LayoutType parse_layout(const std::string& s) { return layout_type_from_string(s); }

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("regrec");
  spdlog::set_default_logger(logger);

  CLI::App app{"Record extraction from detection documents of register openings"};
  app.set_config("--config", "", "Key-value configuration file; command-line flags take precedence");
  app.require_subcommand(1);
  app.add_option_function<std::string>(
         "--log-level", [](const std::string& s) { spdlog::set_level(spdlog::level::from_str(s)); },
         "trace, debug, info, warn, error or off (default: info)")
      ->trigger_on_parse();

  CommonFlags flags;
  int exit_code = pipeline::kExitClean;

  // extract
  std::string ex_in, ex_out, ex_summary;
  auto* extract = app.add_subcommand("extract", "Reconstruct records from a directory of detection documents");
  extract->add_option("in_dir", ex_in, "Directory of detection documents (*.jsonl)")->required()->check(CLI::ExistingDirectory);
  extract->add_option("-o,--out", ex_out, "Records file (.csv or .jsonl)")->required();
  extract->add_option("--summary", ex_summary, "Run summary JSON (default: <out>.summary.json)");
  extract->add_option("--workers", flags.workers, "Books processed in parallel")->capture_default_str();
  add_grid_flags(extract, flags);
  add_year_flags(extract, flags);
  add_schema_flags(extract, flags);
  extract->callback([&] {
    fs::path summary = ex_summary.empty() ? fs::path(ex_out + ".summary.json") : fs::path(ex_summary);
    exit_code = pipeline::cmd_extract(ex_in, ex_out, summary, to_options(flags)).exit_code();
  });

  // eval
  std::string ev_pred, ev_gold, ev_out;
  auto* evalc = app.add_subcommand("eval", "Compare predicted detection documents with gold ones");
  evalc->add_option("pred_dir", ev_pred, "Predicted documents")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("gold_dir", ev_gold, "Gold documents")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("-o,--out-dir", ev_out, "Report directory")->required();
  add_grid_flags(evalc, flags);
  add_year_flags(evalc, flags);
  evalc->callback([&] {
    auto o = pipeline::cmd_eval(ev_pred, ev_gold, ev_out, to_options(flags));
    if (!o.unmatched_openings.empty()) exit_code = pipeline::kExitPartial;
  });

  // years
  std::string yr_in, yr_out;
  auto* years = app.add_subcommand("years", "Resolve page years only");
  years->add_option("in_dir", yr_in, "Directory of detection documents")->required()->check(CLI::ExistingDirectory);
  years->add_option("-o,--out", yr_out, "Output CSV")->required();
  add_year_flags(years, flags);
  years->callback([&] { exit_code = pipeline::cmd_years(yr_in, yr_out, to_options(flags)).exit_code(); });

  // normalize
  std::string nm_in, nm_out, nm_report, nm_gazetteer;
  double nm_dist = 0.25, nm_dup = 0.9;
  auto* norm = app.add_subcommand("normalize", "Match parishes, drop duplicated books and unusable records");
  norm->add_option("records", nm_in, "Records file (.csv or .jsonl)")->required()->check(CLI::ExistingFile);
  norm->add_option("-o,--out", nm_out, "Usable records file")->required();
  norm->add_option("--report", nm_report, "Report CSV (default: <out>.report.csv)");
  norm->add_option("--gazetteer", nm_gazetteer, "Parish gazetteer (TSV)")->check(CLI::ExistingFile);
  norm->add_option("--max-rel-dist", nm_dist, "Largest relative edit distance for fuzzy matches")->capture_default_str();
  norm->add_option("--dup-threshold", nm_dup, "Jaccard overlap marking two books as duplicates")->capture_default_str();
  norm->callback([&] {
    std::optional<normalize::Gazetteer> g;
    if (!nm_gazetteer.empty()) g = normalize::load_gazetteer(nm_gazetteer);
    fs::path report = nm_report.empty() ? fs::path(nm_out + ".report.csv") : fs::path(nm_report);
    pipeline::cmd_normalize(nm_in, nm_out, report, g ? &*g : nullptr, nm_dist, nm_dup);
  });

  // aggregate
  std::string ag_in, ag_out;
  std::vector<std::string> ag_books;
  auto* agg = app.add_subcommand("aggregate", "Per-year and per-parish move counts");
  agg->add_option("records", ag_in, "Records file (.csv or .jsonl)")->required()->check(CLI::ExistingFile);
  agg->add_option("-o,--out-dir", ag_out, "Output directory")->required();
  agg->add_option("--book", ag_books, "Restrict to these book ids (repeatable)");
  agg->callback([&] { pipeline::cmd_aggregate(ag_in, ag_out, ag_books); });

  // report
  std::string rp_dir, rp_summary;
  auto* report = app.add_subcommand("report", "Print an evaluation directory as text tables");
  report->add_option("eval_dir", rp_dir, "Directory written by eval")->required()->check(CLI::ExistingDirectory);
  report->add_option("--summary", rp_summary, "Run summary JSON from extract")->check(CLI::ExistingFile);
  report->callback([&] {
    std::cout << pipeline::render_report(rp_dir, rp_summary.empty() ? std::nullopt : std::optional<fs::path>(rp_summary));
  });

  // synth
  pipeline::SynthCorpusOptions so;
  std::string sy_out, sy_layout = "preprinted";
  auto& sc = so.config;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  syn->add_option("--seed", sc.seed, "Master seed")->capture_default_str();
  syn->add_option("--count", so.count, "Number of openings")->capture_default_str();
  syn->add_option("--out-dir", sy_out, "Output directory")->required();
  syn->add_option("--openings-per-book", so.openings_per_book)->capture_default_str();
  syn->add_option("--duplicate-books", so.duplicate_books, "Copies of the first books under new ids")->capture_default_str();
  syn->add_option("--rows-min", sc.rows.min)->capture_default_str();
  syn->add_option("--rows-max", sc.rows.max)->capture_default_str();
  syn->add_option("--cols-min", sc.cols.min, "0 = layout schema")->capture_default_str();
  syn->add_option("--cols-max", sc.cols.max, "0 = layout schema")->capture_default_str();
  syn->add_option("--skew-min", sc.skew_angle.min, "Degrees")->capture_default_str();
  syn->add_option("--skew-max", sc.skew_angle.max, "Degrees")->capture_default_str();
  syn->add_option("--cell-dropout-prob", sc.cell_dropout_prob)->capture_default_str();
  syn->add_option("--char-noise-prob", sc.char_noise_prob)->capture_default_str();
  syn->add_option("--year-corruption-prob", sc.year_corruption_prob)->capture_default_str();
  syn->add_option("--border-jitter", sc.border_jitter, "Pixels")->capture_default_str();
  syn->add_option("--layout", sy_layout, "preprinted or handdrawn")->capture_default_str();
  syn->add_option("--repetition-prob", sc.repetition_prob)->capture_default_str();
  syn->add_option("--multi-line-prob", sc.multi_line_prob)->capture_default_str();
  syn->add_option("--empty-cell-prob", sc.empty_cell_prob)->capture_default_str();
  syn->add_option("--year-advance-prob", sc.year_advance_prob)->capture_default_str();
  syn->add_option("--mid-page-year-prob", sc.mid_page_year_prob)->capture_default_str();
  syn->callback([&] {
    sc.layout = parse_layout(sy_layout);
    pipeline::cmd_synth(so, sy_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return pipeline::kExitFatal;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return pipeline::kExitFatal;
  }
  return exit_code;
}
