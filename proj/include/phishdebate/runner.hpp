#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phishdebate/corpus.hpp"
#include "phishdebate/debate.hpp"
#include "phishdebate/metrics.hpp"
#include "phishdebate/prompts.hpp"
#include "phishdebate/provider.hpp"
#include "phishdebate/support.hpp"

namespace phishdebate {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string name;
  std::string path;
  CorpusFormat format = CorpusFormat::csv;
  FieldMap field_map;
  LabelAliases label_aliases;
  char delimiter = ',';
};

// One cell of the experiment matrix: which providers play each seat and
// which prompt variants are switched on.
struct MatrixEntry {
  std::string agent1;
  std::string agent2;
  std::string judge;
  PromptOptions options;
  std::string label;
};

// Providers are declared once by name and referenced from matrix entries.
// Scripted providers exist for offline runs and tests.
struct ProviderSpec {
  enum class Type { http, scripted };
  Type type = Type::http;
  ProviderConfig http;
  std::map<std::string, std::string> script_replies;
  std::vector<std::pair<std::string, std::string>> script_rules;
  std::optional<std::string> script_default;
};

struct ExperimentConfig {
  std::vector<DatasetConfig> datasets;
  LengthUnit length_unit = LengthUnit::whitespace_tokens;
  double percentile = 75.0;
  std::map<std::string, ProviderSpec> providers;
  std::vector<MatrixEntry> matrix;
  int parallelism = 1;
  std::string output_dir = "out";
  bool include_email_for_judge = false;
  bool defender_sees_round1 = true;
  bool exclude_ambiguous = false;
  std::uint64_t seed = 0;  // 0 keeps corpus order; nonzero shuffles per dataset
  std::string clock = "system";
};

inline std::string matrix_label(const MatrixEntry& e) {
  if (!e.label.empty()) return e.label;
  std::string label = e.agent1 + "-" + e.agent2 + "-" + e.judge;
  if (e.options.cot) label += "-cot";
  if (e.options.role) label += "-role";
  return label;
}

inline void to_json(nlohmann::json& j, const PromptOptions& o) {
  j = nlohmann::json{{"cot", o.cot}, {"role", o.role}};
}

inline void from_json(const nlohmann::json& j, PromptOptions& o) {
  o.cot = j.value("cot", false);
  o.role = j.value("role", false);
}

inline void to_json(nlohmann::json& j, const DatasetConfig& d) {
  nlohmann::json fields{{"subject", d.field_map.subject},
                        {"body", d.field_map.body},
                        {"label", d.field_map.label}};
  if (!d.field_map.id.empty()) fields["id"] = d.field_map.id;
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [raw, cls] : d.label_aliases) labels[raw] = label_to_string(cls);
  j = nlohmann::json{{"name", d.name},
                     {"path", d.path},
                     {"format", d.format == CorpusFormat::csv ? "csv" : "jsonl"},
                     {"fields", fields},
                     {"labels", labels},
                     {"delimiter", std::string(1, d.delimiter)}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& d) {
  j.at("name").get_to(d.name);
  j.at("path").get_to(d.path);
  const std::string fmt = j.at("format").get<std::string>();
  if (fmt == "csv") d.format = CorpusFormat::csv;
  else if (fmt == "jsonl") d.format = CorpusFormat::jsonl;
  else throw ConfigError("dataset " + d.name + ": unknown format \"" + fmt + "\"");
  const auto& fields = j.at("fields");
  fields.at("subject").get_to(d.field_map.subject);
  fields.at("body").get_to(d.field_map.body);
  fields.at("label").get_to(d.field_map.label);
  d.field_map.id = fields.value("id", "");
  d.label_aliases.clear();
  for (const auto& [raw, cls] : j.at("labels").items()) {
    d.label_aliases[raw] = label_from_string(cls.get<std::string>());
  }
  const std::string delim = j.value("delimiter", ",");
  if (delim.size() != 1) {
    throw ConfigError("dataset " + d.name + ": delimiter must be one character");
  }
  d.delimiter = delim[0];
}

inline void to_json(nlohmann::json& j, const MatrixEntry& e) {
  j = nlohmann::json{{"agent1", e.agent1},
                     {"agent2", e.agent2},
                     {"judge", e.judge},
                     {"cot", e.options.cot},
                     {"role", e.options.role},
                     {"label", matrix_label(e)}};
}

inline void from_json(const nlohmann::json& j, MatrixEntry& e) {
  j.at("agent1").get_to(e.agent1);
  j.at("agent2").get_to(e.agent2);
  j.at("judge").get_to(e.judge);
  e.options.cot = j.value("cot", false);
  e.options.role = j.value("role", false);
  e.label = j.value("label", "");
}

inline void to_json(nlohmann::json& j, const ProviderSpec& s) {
  if (s.type == ProviderSpec::Type::http) {
    j = nlohmann::json{{"type", "http"},
                       {"endpoint", s.http.endpoint},
                       {"model_id", s.http.model_id},
                       {"api_key_env", s.http.api_key_env},
                       {"temperature", s.http.temperature},
                       {"max_output_tokens", s.http.max_output_tokens},
                       {"timeout_ms", s.http.timeout.count()},
                       {"max_retries", s.http.max_retries},
                       {"requests_per_minute", s.http.requests_per_minute}};
  } else {
    j = nlohmann::json{{"type", "scripted"}, {"replies", s.script_replies}};
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& [needle, reply] : s.script_rules) {
      rules.push_back(nlohmann::json::array({needle, reply}));
    }
    j["rules"] = rules;
    j["default_reply"] =
        s.script_default ? nlohmann::json(*s.script_default) : nlohmann::json(nullptr);
  }
}

inline void from_json(const nlohmann::json& j, ProviderSpec& s) {
  const std::string type = j.value("type", "http");
  if (j.contains("api_key")) {
    throw ConfigError(
        "provider config must not embed an API key; set api_key_env to the name "
        "of an environment variable instead");
  }
  if (type == "http") {
    s.type = ProviderSpec::Type::http;
    j.at("endpoint").get_to(s.http.endpoint);
    j.at("model_id").get_to(s.http.model_id);
    s.http.api_key_env = j.value("api_key_env", "");
    s.http.temperature = j.value("temperature", 0.0);
    s.http.max_output_tokens = j.value("max_output_tokens", 1024);
    s.http.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
    s.http.max_retries = j.value("max_retries", 3);
    s.http.requests_per_minute = j.value("requests_per_minute", 60);
  } else if (type == "scripted") {
    s.type = ProviderSpec::Type::scripted;
    if (j.contains("replies")) {
      j.at("replies").get_to(s.script_replies);
    }
    s.script_rules.clear();
    if (j.contains("rules")) {
      for (const auto& rule : j.at("rules")) {
        s.script_rules.emplace_back(rule.at(0).get<std::string>(),
                                    rule.at(1).get<std::string>());
      }
    }
    if (j.contains("default_reply") && !j.at("default_reply").is_null()) {
      s.script_default = j.at("default_reply").get<std::string>();
    }
  } else {
    throw ConfigError("unknown provider type \"" + type + "\"");
  }
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"datasets", c.datasets},
                     {"length_unit", length_unit_to_string(c.length_unit)},
                     {"percentile", c.percentile},
                     {"providers", c.providers},
                     {"matrix", c.matrix},
                     {"parallelism", c.parallelism},
                     {"output_dir", c.output_dir},
                     {"include_email_for_judge", c.include_email_for_judge},
                     {"defender_sees_round1", c.defender_sees_round1},
                     {"exclude_ambiguous", c.exclude_ambiguous},
                     {"seed", c.seed},
                     {"clock", c.clock}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  j.at("datasets").get_to(c.datasets);
  c.length_unit = length_unit_from_string(j.value("length_unit", "whitespace_tokens"));
  c.percentile = j.value("percentile", 75.0);
  if (j.contains("providers")) j.at("providers").get_to(c.providers);
  j.at("matrix").get_to(c.matrix);
  c.parallelism = j.value("parallelism", 1);
  c.output_dir = j.value("output_dir", "out");
  c.include_email_for_judge = j.value("include_email_for_judge", false);
  c.defender_sees_round1 = j.value("defender_sees_round1", true);
  c.exclude_ambiguous = j.value("exclude_ambiguous", false);
  c.seed = j.value("seed", std::uint64_t{0});
  c.clock = j.value("clock", "system");
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  try {
    return j.get<ExperimentConfig>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.datasets.empty()) throw ConfigError("config lists no datasets");
  if (c.matrix.empty()) throw ConfigError("config lists no matrix entries");
  if (c.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (!(c.percentile > 0.0) || c.percentile > 100.0) {
    throw ConfigError("percentile must be in (0, 100]");
  }
  if (c.clock != "system" && c.clock != "logical") {
    throw ConfigError("clock must be \"system\" or \"logical\"");
  }
  std::set<std::string> dataset_names;
  for (const auto& d : c.datasets) {
    if (!dataset_names.insert(d.name).second) {
      throw ConfigError("duplicate dataset name \"" + d.name + "\"");
    }
  }
  std::set<std::string> labels;
  for (const auto& e : c.matrix) {
    for (const std::string* ref : {&e.agent1, &e.agent2, &e.judge}) {
      if (!c.providers.count(*ref)) {
        throw ConfigError("matrix entry \"" + matrix_label(e) +
                          "\" references unknown provider \"" + *ref + "\"");
      }
    }
    if (!labels.insert(matrix_label(e)).second) {
      throw ConfigError("duplicate matrix label \"" + matrix_label(e) + "\"");
    }
  }
}

// Digest of the canonical re-serialized config. Formatting, key order and
// omitted defaults in the source file do not affect it; CLI flags like
// --limit and --dry-run are not part of the config and never will be.
inline std::string config_hash(const ExperimentConfig& c) {
  return fnv1a64_hex(nlohmann::json(c).dump());
}

// One JSONL line in transcripts.jsonl. Failure records carry only the error
// and identity fields; completed records carry the full debate.
struct TranscriptRecord {
  int schema_version = 1;
  std::string config_hash;
  std::string config_label;
  std::string dataset;
  std::string email_id;
  Label label = Label::ham;
  PromptOptions options;
  std::vector<Argument> arguments;
  std::string judge_text;
  std::optional<Verdict> verdict;
  std::optional<std::string> error;
  std::vector<int> attempts_per_call;
  std::string clock = "system";

  bool failed() const { return error && *error != "ambiguous_verdict"; }

  bool operator==(const TranscriptRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const TranscriptRecord& r) {
  j = nlohmann::json{{"schema_version", r.schema_version},
                     {"config_hash", r.config_hash},
                     {"config_label", r.config_label},
                     {"dataset", r.dataset},
                     {"email_id", r.email_id},
                     {"label", label_to_string(r.label)},
                     {"options", r.options},
                     {"attempts_per_call", r.attempts_per_call},
                     {"clock", r.clock}};
  if (!r.failed()) {
    j["arguments"] = r.arguments;
    j["judge_text"] = r.judge_text;
    j["verdict"] = r.verdict ? nlohmann::json(*r.verdict) : nlohmann::json(nullptr);
  }
  if (r.error) j["error"] = *r.error;
}

inline void from_json(const nlohmann::json& j, TranscriptRecord& r) {
  j.at("schema_version").get_to(r.schema_version);
  j.at("config_hash").get_to(r.config_hash);
  j.at("config_label").get_to(r.config_label);
  j.at("dataset").get_to(r.dataset);
  j.at("email_id").get_to(r.email_id);
  r.label = label_from_string(j.at("label").get<std::string>());
  j.at("options").get_to(r.options);
  j.at("attempts_per_call").get_to(r.attempts_per_call);
  r.clock = j.value("clock", "system");
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  r.arguments.clear();
  if (j.contains("arguments")) j.at("arguments").get_to(r.arguments);
  r.judge_text = j.value("judge_text", "");
  r.verdict.reset();
  if (j.contains("verdict") && !j.at("verdict").is_null()) {
    r.verdict = j.at("verdict").get<Verdict>();
  }
}

struct TranscriptScan {
  std::vector<TranscriptRecord> records;
  std::size_t corrupt_lines = 0;
};

// Reads back a transcript file. Lines that do not parse (most commonly a
// torn final line after a crash) are counted and skipped, never fatal.
inline TranscriptScan scan_transcripts(const std::string& path) {
  TranscriptScan scan;
  std::ifstream in(path, std::ios::binary);
  if (!in) return scan;
  std::string line;
  while (std::getline(in, line)) {
    if (trim_copy(line).empty()) continue;
    try {
      scan.records.push_back(nlohmann::json::parse(line).get<TranscriptRecord>());
    } catch (const std::exception&) {
      ++scan.corrupt_lines;
    }
  }
  return scan;
}

struct RunSettings {
  std::optional<std::size_t> limit;  // per dataset, applied after shuffling
  bool dry_run = false;
};

struct RunResult {
  std::vector<EvalReport> reports;
  std::size_t transcripts_written = 0;
  std::size_t skipped = 0;
  std::size_t failures = 0;
  std::size_t ambiguous = 0;
};

// Batch orchestrator. Appends one JSONL record per (matrix label, email) to
// <output_dir>/transcripts.jsonl; a rerun over the same directory resumes by
// skipping pairs that already have a record, including failed ones. Reports
// are always recomputed from the persisted file, so scoring a resumed run
// and scoring a single run are the same computation.
class Runner {
 public:
  using ProviderFactory = std::function<std::shared_ptr<Provider>(
      const std::string& name, const ProviderSpec& spec, std::shared_ptr<Clock> clock)>;

  explicit Runner(ExperimentConfig config, std::shared_ptr<Clock> clock = nullptr,
                  ProviderFactory factory = nullptr)
      : config_(std::move(config)), clock_(std::move(clock)), factory_(std::move(factory)) {
    validate_config(config_);
    if (!clock_) {
      if (config_.clock == "logical") {
        clock_ = std::make_shared<LogicalClock>();
      } else {
        clock_ = std::make_shared<SystemClock>();
      }
    }
  }

  const ExperimentConfig& config() const { return config_; }
  std::string transcripts_path() const {
    return (std::filesystem::path(config_.output_dir) / "transcripts.jsonl").string();
  }

  // Loads every dataset, applies the percentile length filter per dataset,
  // then the optional shuffle and per-dataset limit.
  std::vector<EmailRecord> load_emails(const std::optional<std::size_t>& limit) const {
    std::vector<EmailRecord> out;
    for (const auto& d : config_.datasets) {
      auto corpus = load_corpus(d.path, d.format, d.field_map, d.label_aliases, d.name,
                                d.delimiter);
      if (corpus.empty()) throw CorpusError(d.name + ": dataset is empty");
      corpus = filter_corpus(corpus, config_.length_unit, config_.percentile);
      if (config_.seed != 0) {
        std::mt19937_64 rng(config_.seed ^ fnv1a64(d.name));
        std::shuffle(corpus.begin(), corpus.end(), rng);
      }
      if (limit && corpus.size() > *limit) corpus.resize(*limit);
      out.insert(out.end(), corpus.begin(), corpus.end());
    }
    return out;
  }

  RunResult run(const RunSettings& settings = {}) {
    const std::string hash = config_hash(config_);
    const auto emails = load_emails(settings.limit);
    std::filesystem::create_directories(config_.output_dir);

    if (settings.dry_run) {
      return dry_run(emails);
    }

    RunResult result;
    std::set<std::pair<std::string, std::string>> completed;
    {
      TranscriptScan scan = scan_transcripts(transcripts_path());
      for (const auto& rec : scan.records) {
        if (rec.config_hash != hash) {
          throw ConfigError(transcripts_path() +
                            " was written by a different configuration (hash " +
                            rec.config_hash + ", expected " + hash + "); use a fresh "
                            "output_dir or restore the matching config");
        }
        completed.emplace(rec.config_label, rec.email_id);
      }
    }

    auto providers = build_providers();

    struct Job {
      const MatrixEntry* entry;
      const EmailRecord* email;
    };
    std::vector<Job> jobs;
    for (const auto& entry : config_.matrix) {
      for (const auto& email : emails) {
        if (completed.count({matrix_label(entry), email.id})) {
          ++result.skipped;
        } else {
          jobs.push_back({&entry, &email});
        }
      }
    }

    // A crash can leave a torn final line with no newline; appending onto it
    // would corrupt the next record, so terminate it before reopening.
    {
      std::ifstream probe(transcripts_path(), std::ios::binary | std::ios::ate);
      if (probe && probe.tellg() > std::streamoff{0}) {
        probe.seekg(-1, std::ios::end);
        char last = '\n';
        probe.get(last);
        probe.close();
        if (last != '\n') {
          std::ofstream heal(transcripts_path(), std::ios::app | std::ios::binary);
          heal << '\n';
        }
      }
    }
    std::ofstream out(transcripts_path(), std::ios::app | std::ios::binary);
    if (!out) throw ConfigError("cannot open " + transcripts_path() + " for append");

    std::mutex write_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0};
    std::atomic<std::size_t> ambiguous{0};
    std::atomic<std::size_t> written{0};

    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        const Job& job = jobs[i];
        TranscriptRecord rec = execute(job.entry, job.email, providers, hash);
        if (rec.failed()) failures.fetch_add(1);
        if (rec.error && *rec.error == "ambiguous_verdict") ambiguous.fetch_add(1);
        const std::string line = nlohmann::json(rec).dump();
        {
          std::lock_guard<std::mutex> lock(write_mu);
          out << line << '\n';
          out.flush();
        }
        written.fetch_add(1);
      }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(config_.parallelism),
                              std::max<std::size_t>(jobs.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i + 1 < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    result.transcripts_written = written.load();
    result.failures = failures.load();
    result.ambiguous = ambiguous.load();
    result.reports = score_transcripts(transcripts_path(), config_.exclude_ambiguous);
    write_report_files(config_.output_dir, result.reports);
    return result;
  }

  // Writes reports.txt (rendered table) and reports.json next to the
  // transcripts.
  static void write_report_files(const std::string& output_dir,
                                 const std::vector<EvalReport>& reports) {
    const std::filesystem::path dir(output_dir);
    {
      std::ofstream txt(dir / "reports.txt", std::ios::binary | std::ios::trunc);
      txt << render_report_table(reports);
    }
    {
      std::ofstream js(dir / "reports.json", std::ios::binary | std::ios::trunc);
      js << nlohmann::json(reports).dump(2) << '\n';
    }
  }

  // Groups persisted records by (config_label, dataset) and scores each
  // group, lexicographically ordered so output is stable regardless of the
  // order debates finished in. Hard failures are left out of the metrics;
  // ambiguous verdicts enter the accuracy denominator unless excluded.
  static std::vector<EvalReport> score_transcripts(const std::string& path,
                                                   bool exclude_ambiguous) {
    TranscriptScan scan = scan_transcripts(path);
    struct Group {
      ConfusionCounts counts;
      std::size_t ambiguous = 0;
      std::set<Label> truth_classes;
      std::size_t scoreable = 0;
    };
    std::map<std::pair<std::string, std::string>, Group> groups;
    for (const auto& rec : scan.records) {
      if (rec.failed()) continue;
      Group& g = groups[{rec.config_label, rec.dataset}];
      g.truth_classes.insert(rec.label);
      if (rec.verdict) {
        ++g.scoreable;
        const bool predicted_phish = rec.verdict->decision == Decision::phishing;
        const bool is_phish = rec.label == Label::phishing;
        if (predicted_phish && is_phish) ++g.counts.tp;
        else if (predicted_phish && !is_phish) ++g.counts.fp;
        else if (!predicted_phish && is_phish) ++g.counts.fn;
        else ++g.counts.tn;
      } else {
        ++g.ambiguous;
      }
    }
    std::vector<EvalReport> reports;
    for (const auto& [key, g] : groups) {
      if (g.scoreable == 0 && (exclude_ambiguous || g.ambiguous == 0)) continue;
      reports.push_back(score_report(g.counts, key.second, key.first,
                                     g.truth_classes.size() < 2, g.ambiguous,
                                     exclude_ambiguous));
    }
    return reports;
  }

 private:
  std::map<std::string, std::shared_ptr<Provider>> build_providers() const {
    std::map<std::string, std::shared_ptr<Provider>> out;
    for (const auto& [name, spec] : config_.providers) {
      if (factory_) {
        if (auto p = factory_(name, spec, clock_)) {
          out[name] = p;
          continue;
        }
      }
      out[name] = default_provider(name, spec);
    }
    return out;
  }

  std::shared_ptr<Provider> default_provider(const std::string& name,
                                             const ProviderSpec& spec) const {
    if (spec.type == ProviderSpec::Type::http) {
      ProviderConfig cfg = spec.http;
      cfg.name = name;
      return std::make_shared<HttpProvider>(cfg, clock_);
    }
    auto p = std::make_shared<ScriptedProvider>(name);
    for (const auto& [fp, reply] : spec.script_replies) p->add_reply(fp, reply);
    for (const auto& [needle, reply] : spec.script_rules) p->add_rule(needle, reply);
    if (spec.script_default) p->set_default_reply(*spec.script_default);
    return p;
  }

  TranscriptRecord execute(const MatrixEntry* entry, const EmailRecord* email,
                           const std::map<std::string, std::shared_ptr<Provider>>& providers,
                           const std::string& hash) const {
    TranscriptRecord rec;
    rec.config_hash = hash;
    rec.config_label = matrix_label(*entry);
    rec.dataset = email->dataset;
    rec.email_id = email->id;
    rec.label = email->label;
    rec.options = entry->options;
    rec.clock = config_.clock;

    DebateSettings settings;
    settings.include_email_for_judge = config_.include_email_for_judge;
    settings.defender_sees_round1 = config_.defender_sees_round1;
    settings.config_label = rec.config_label;

    try {
      DebateTranscript t =
          run_debate(*email, *providers.at(entry->agent1), *providers.at(entry->agent2),
                     *providers.at(entry->judge), entry->options, settings);
      rec.arguments = std::move(t.arguments);
      rec.judge_text = std::move(t.judge_text);
      rec.verdict = std::move(t.verdict);
      rec.error = std::move(t.error);
      rec.attempts_per_call = std::move(t.attempts_per_call);
    } catch (const DebateError& e) {
      rec.error = e.what();
    }
    return rec;
  }

  RunResult dry_run(const std::vector<EmailRecord>& emails) const {
    const std::filesystem::path path =
        std::filesystem::path(config_.output_dir) / "dry_run_prompts.txt";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");

    auto dump_bundle = [&](const std::string& stage, const PromptBundle& bundle) {
      out << "--- " << stage << " (fingerprint " << fingerprint(bundle) << ") ---\n";
      for (const auto& m : bundle.messages) {
        out << "[" << message_role_to_string(m.role) << "]\n" << m.content << "\n";
      }
      out << '\n';
    };

    RunResult result;
    for (const auto& entry : config_.matrix) {
      for (const auto& email : emails) {
        out << "=== " << matrix_label(entry) << " | " << email.dataset << " | " << email.id
            << " ===\n\n";
        const std::string a1r1 = "<agent1 round-1 argument>";
        const std::string a2r1 = "<agent2 round-1 argument>";
        const std::string a1r2 = "<agent1 round-2 argument>";
        const std::string a2r2 = "<agent2 round-2 argument>";
        dump_bundle("agent1 round 1",
                    build_debater_prompt(email, Stance::prosecutor, 1, std::nullopt,
                                         entry.options));
        dump_bundle("agent2 round 1",
                    build_debater_prompt(email, Stance::defender, 1,
                                         config_.defender_sees_round1
                                             ? std::optional<std::string>(a1r1)
                                             : std::nullopt,
                                         entry.options));
        dump_bundle("agent1 round 2",
                    build_debater_prompt(email, Stance::prosecutor, 2, a2r1, entry.options));
        dump_bundle("agent2 round 2",
                    build_debater_prompt(email, Stance::defender, 2, a1r2, entry.options));
        dump_bundle("judge", build_judge_prompt(email, {a1r1, a2r1, a1r2, a2r2},
                                                config_.include_email_for_judge));
      }
    }
    return result;
  }

  ExperimentConfig config_;
  std::shared_ptr<Clock> clock_;
  ProviderFactory factory_;
};

}  // namespace phishdebate
