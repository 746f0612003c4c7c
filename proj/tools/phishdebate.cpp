// Command line front end for the debate pipeline.
//
// Exit codes: 0 success, 1 configuration or input error, 2 run completed
// with partial failures.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "phishdebate/corpus.hpp"
#include "phishdebate/metrics.hpp"
#include "phishdebate/runner.hpp"

namespace {

using namespace phishdebate;

std::optional<std::size_t> as_limit(std::size_t limit) {
  if (limit == 0) return std::nullopt;
  return limit;
}

int cmd_validate(const std::string& config_path) {
  ExperimentConfig config = load_experiment_config(config_path);
  validate_config(config);
  std::cout << "config ok\n"
            << "hash: " << config_hash(config) << "\n"
            << "datasets: " << config.datasets.size()
            << ", matrix entries: " << config.matrix.size() << "\n";
  return 0;
}

int cmd_ingest(const std::string& config_path, std::size_t limit) {
  ExperimentConfig config = load_experiment_config(config_path);
  validate_config(config);

  std::vector<EmailRecord> combined;
  for (const auto& d : config.datasets) {
    auto corpus =
        load_corpus(d.path, d.format, d.field_map, d.label_aliases, d.name, d.delimiter);
    if (corpus.empty()) throw CorpusError(d.name + ": dataset is empty");
    combined.insert(combined.end(), corpus.begin(), corpus.end());
  }

  std::cout << "Before filtering (" << length_unit_to_string(config.length_unit) << "):\n"
            << summary_table(summarize(combined, config.length_unit));

  auto filtered = filter_corpus(combined, config.length_unit, config.percentile);
  std::size_t ham = 0, phishing = 0;
  for (const auto& rec : filtered) {
    (rec.label == Label::ham ? ham : phishing)++;
  }
  std::cout << "\nAfter keeping emails within the " << config.percentile
            << "th length percentile of their dataset:\n"
            << summary_table(summarize(filtered, config.length_unit)) << "\nTotal retained: "
            << filtered.size() << " (" << ham << " ham / " << phishing << " phishing)\n";
  if (auto n = as_limit(limit)) {
    std::cout << "A run with --limit " << *n << " would use at most " << *n
              << " emails per dataset.\n";
  }
  return 0;
}

int cmd_run(const std::string& config_path, std::size_t limit, bool dry_run) {
  ExperimentConfig config = load_experiment_config(config_path);
  Runner runner(std::move(config));

  RunSettings settings;
  settings.limit = as_limit(limit);
  settings.dry_run = dry_run;

  RunResult result = runner.run(settings);
  if (dry_run) {
    std::cout << "dry run: prompts written to " << runner.config().output_dir
              << "/dry_run_prompts.txt, no provider calls made\n";
    return 0;
  }

  std::cout << "debates written: " << result.transcripts_written
            << ", resumed (skipped): " << result.skipped
            << ", failures: " << result.failures << ", ambiguous: " << result.ambiguous
            << "\n\n"
            << render_report_table(result.reports) << "\nreports written to "
            << runner.config().output_dir << "/reports.txt and reports.json\n";
  return result.failures > 0 ? 2 : 0;
}

int cmd_score(const std::string& config_path) {
  ExperimentConfig config = load_experiment_config(config_path);
  validate_config(config);
  Runner runner(config);
  auto reports =
      Runner::score_transcripts(runner.transcripts_path(), config.exclude_ambiguous);
  Runner::write_report_files(config.output_dir, reports);
  std::cout << render_report_table(reports) << "\nreports written to " << config.output_dir
            << "/reports.txt and reports.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-agent debate pipeline for phishing email classification"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t limit = 0;
  bool dry_run = false;

  auto* validate = app.add_subcommand("validate", "Parse and check an experiment config");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  auto* ingest =
      app.add_subcommand("ingest", "Load the corpora and print length-filter summaries");
  ingest->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ingest->add_option("--limit", limit, "Report the effect of a per-dataset cap");

  auto* run = app.add_subcommand("run", "Run the debate matrix and score the results");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--limit", limit, "Use only the first N emails per dataset");
  run->add_flag("--dry-run", dry_run, "Render every prompt to a file; no provider calls");

  auto* score = app.add_subcommand("score", "Recompute reports from saved transcripts");
  score->add_option("--config", config_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (ingest->parsed()) return cmd_ingest(config_path, limit);
    if (run->parsed()) return cmd_run(config_path, limit, dry_run);
    if (score->parsed()) return cmd_score(config_path);
  } catch (const phishdebate::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const phishdebate::CorpusError& e) {
    std::cerr << "corpus error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
