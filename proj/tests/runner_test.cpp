#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "phishdebate/runner.hpp"
#include "test_util.hpp"

using namespace phishdebate;
using test_util::TempDir;
using test_util::fixtures_dir;
using test_util::read_file;
using test_util::write_file;

namespace {

std::string synthetic_id(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "e%02d", i);
  return buf;
}

// Offline experiment over the 20-email fixture. The scripted judge decides
// by id parity: even ids are called phishing, odd ids legitimate. With ids
// e01..e10 labeled phishing and e11..e20 ham that yields tp=fp=fn=tn=5.
nlohmann::json scripted_config_json(const std::string& out_dir) {
  nlohmann::json rules = nlohmann::json::array();
  for (int i = 1; i <= 20; ++i) {
    rules.push_back(nlohmann::json::array(
        {synthetic_id(i), i % 2 == 0 ? "The prosecution held up.\nVERDICT: PHISHING"
                                     : "The defense held up.\nVERDICT: LEGITIMATE"}));
  }
  return nlohmann::json{
      {"datasets",
       {{{"name", "synthetic"},
         {"path", (fixtures_dir() / "synthetic_20.csv").string()},
         {"format", "csv"},
         {"fields",
          {{"id", "id"}, {"subject", "subject"}, {"body", "body"}, {"label", "label"}}},
         {"labels", {{"phish", "phishing"}, {"ham", "ham"}}}}}},
      {"length_unit", "whitespace_tokens"},
      {"percentile", 100.0},
      {"providers",
       {{"debater",
         {{"type", "scripted"},
          {"default_reply", "The evidence supports my side of this debate."}}},
        {"judge", {{"type", "scripted"}, {"rules", rules}}}}},
      {"matrix",
       {{{"agent1", "debater"},
         {"agent2", "debater"},
         {"judge", "judge"},
         {"label", "scripted-baseline"}}}},
      {"parallelism", 1},
      {"output_dir", out_dir},
      {"include_email_for_judge", true},
      {"clock", "logical"},
      {"seed", 0}};
}

ExperimentConfig make_config(const nlohmann::json& j) {
  auto config = parse_experiment_config(j);
  validate_config(config);
  return config;
}

int cli(const std::string& args, const std::filesystem::path& capture = {}) {
  std::string cmd = std::string(PHISHDEBATE_CLI) + " " + args;
  if (!capture.empty()) cmd += " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("experiment config parses with defaults and survives round trips", "[runner]") {
  TempDir dir;
  auto j = scripted_config_json((dir / "out").string());
  auto config = make_config(j);

  CHECK(config.datasets.size() == 1);
  CHECK(config.datasets[0].name == "synthetic");
  CHECK(config.datasets[0].delimiter == ',');
  CHECK(config.length_unit == LengthUnit::whitespace_tokens);
  CHECK(config.percentile == 100.0);
  CHECK(config.parallelism == 1);
  CHECK(config.defender_sees_round1 == true);
  CHECK(config.exclude_ambiguous == false);
  CHECK(config.seed == 0);
  CHECK(config.clock == "logical");
  CHECK(matrix_label(config.matrix[0]) == "scripted-baseline");

  // Hashing is over the canonical form: a reparse of the serialized config
  // and a cosmetic reordering of the source both hash identically.
  const auto h1 = config_hash(config);
  const auto h2 = config_hash(make_config(nlohmann::json(config)));
  CHECK(h1 == h2);

  auto reordered = j;
  reordered.erase("seed");  // same as the default
  CHECK(config_hash(make_config(reordered)) == h1);

  auto changed = j;
  changed["percentile"] = 90.0;
  CHECK(config_hash(make_config(changed)) != h1);
}

TEST_CASE("matrix labels are synthesized from seats and options", "[runner]") {
  MatrixEntry e;
  e.agent1 = "p1";
  e.agent2 = "p2";
  e.judge = "pj";
  CHECK(matrix_label(e) == "p1-p2-pj");
  e.options.cot = true;
  CHECK(matrix_label(e) == "p1-p2-pj-cot");
  e.options.role = true;
  CHECK(matrix_label(e) == "p1-p2-pj-cot-role");
  e.options.cot = false;
  CHECK(matrix_label(e) == "p1-p2-pj-role");
  e.label = "custom";
  CHECK(matrix_label(e) == "custom");
}

TEST_CASE("config validation rejects inconsistent setups", "[runner]") {
  TempDir dir;
  const auto base = scripted_config_json((dir / "out").string());

  auto expect_config_error = [&](nlohmann::json j, const std::string& needle) {
    try {
      make_config(j);
      FAIL("expected ConfigError for " + needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  auto j = base;
  j["matrix"][0]["judge"] = "missing";
  expect_config_error(j, "unknown provider");

  j = base;
  j["matrix"].push_back(j["matrix"][0]);
  expect_config_error(j, "duplicate matrix label");

  j = base;
  j["datasets"].push_back(j["datasets"][0]);
  expect_config_error(j, "duplicate dataset name");

  j = base;
  j["parallelism"] = 0;
  expect_config_error(j, "parallelism");

  j = base;
  j["percentile"] = 0.0;
  expect_config_error(j, "percentile");

  j = base;
  j["clock"] = "wall";
  expect_config_error(j, "clock");

  j = base;
  j["providers"]["judge"]["type"] = "quantum";
  expect_config_error(j, "provider type");

  j = base;
  j["datasets"][0]["delimiter"] = ",,";
  expect_config_error(j, "delimiter");

  // Embedding a key is refused outright; only env var names are accepted.
  j = base;
  j["providers"]["http"] = {{"type", "http"},
                            {"endpoint", "https://api.example.test/v1"},
                            {"model_id", "m"},
                            {"api_key", "sk-embedded-key"}};
  expect_config_error(j, "api_key_env");
}

TEST_CASE("transcript records round-trip through jsonl", "[runner]") {
  TranscriptRecord rec;
  rec.config_hash = "abc123";
  rec.config_label = "cfg";
  rec.dataset = "ds";
  rec.email_id = "e01";
  rec.label = Label::phishing;
  rec.options.cot = true;
  rec.arguments = {{AgentId::agent1, 1, Stance::prosecutor, "a"},
                   {AgentId::agent2, 1, Stance::defender, "b"},
                   {AgentId::agent1, 2, Stance::prosecutor, "c"},
                   {AgentId::agent2, 2, Stance::defender, "d"}};
  rec.judge_text = "reasoning\nVERDICT: PHISHING";
  rec.verdict = Verdict{Decision::phishing, "reasoning", ParsePath::marker};
  rec.attempts_per_call = {1, 1, 2, 1, 1};
  rec.clock = "logical";

  SECTION("successful debates keep every field") {
    nlohmann::json j = rec;
    CHECK(j.get<TranscriptRecord>() == rec);
    CHECK(!rec.failed());
  }
  SECTION("ambiguous verdicts are completed, not failed") {
    rec.verdict.reset();
    rec.error = "ambiguous_verdict";
    nlohmann::json j = rec;
    CHECK(j.get<TranscriptRecord>() == rec);
    CHECK(!rec.failed());
  }
  SECTION("failures drop the debate payload") {
    rec.error = "judge: HTTP 500 after 4 attempts";
    nlohmann::json j = rec;
    CHECK(!j.contains("arguments"));
    CHECK(!j.contains("judge_text"));
    CHECK(!j.contains("verdict"));
    auto back = j.get<TranscriptRecord>();
    CHECK(back.failed());
    CHECK(back.arguments.empty());
    CHECK(back.email_id == rec.email_id);
  }
}

TEST_CASE("transcript scans tolerate torn and foreign lines", "[runner]") {
  TempDir dir;
  const auto path = dir / "transcripts.jsonl";

  CHECK(scan_transcripts(path.string()).records.empty());

  TranscriptRecord rec;
  rec.config_hash = "h";
  rec.config_label = "cfg";
  rec.dataset = "ds";
  rec.email_id = "e01";
  rec.label = Label::ham;
  std::string good = nlohmann::json(rec).dump();
  write_file(path, good + "\n" + good.substr(0, good.size() / 2));

  auto scan = scan_transcripts(path.string());
  CHECK(scan.records.size() == 1);
  CHECK(scan.corrupt_lines == 1);
}

TEST_CASE("a scripted batch produces parity verdicts and reports", "[runner]") {
  TempDir dir;
  auto config = make_config(scripted_config_json((dir / "out").string()));
  Runner runner(config);
  auto result = runner.run({});

  CHECK(result.transcripts_written == 20);
  CHECK(result.skipped == 0);
  CHECK(result.failures == 0);
  CHECK(result.ambiguous == 0);

  auto scan = scan_transcripts(runner.transcripts_path());
  REQUIRE(scan.records.size() == 20);
  for (const auto& rec : scan.records) {
    REQUIRE(rec.verdict.has_value());
    const int n = std::stoi(rec.email_id.substr(1));
    const auto expected = n % 2 == 0 ? Decision::phishing : Decision::legitimate;
    CHECK(rec.verdict->decision == expected);
    CHECK(rec.arguments.size() == 4);
    CHECK(rec.attempts_per_call == std::vector<int>{1, 1, 1, 1, 1});
    CHECK(rec.config_label == "scripted-baseline");
    CHECK(rec.clock == "logical");
  }

  REQUIRE(result.reports.size() == 1);
  const auto& r = result.reports[0];
  CHECK(r.dataset == "synthetic");
  CHECK(r.counts == ConfusionCounts{5, 5, 5, 5});
  CHECK(r.accuracy == Catch::Approx(0.5));
  CHECK(r.f1.value() == Catch::Approx(0.5));

  CHECK(std::filesystem::exists(dir / "out" / "reports.txt"));
  CHECK(std::filesystem::exists(dir / "out" / "reports.json"));
  const auto table = read_file(dir / "out" / "reports.txt");
  CHECK(table.find("scripted-baseline") != std::string::npos);
  CHECK(table.find("50.00% / 0.50") != std::string::npos);
}

TEST_CASE("runs resume from the transcript file", "[runner]") {
  TempDir dir;
  auto config = make_config(scripted_config_json((dir / "out").string()));

  RunSettings first;
  first.limit = 7;
  auto r1 = Runner(config).run(first);
  CHECK(r1.transcripts_written == 7);

  auto r2 = Runner(config).run({});
  CHECK(r2.skipped == 7);
  CHECK(r2.transcripts_written == 13);

  auto scan = scan_transcripts((dir / "out" / "transcripts.jsonl").string());
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& rec : scan.records) {
    CHECK(pairs.emplace(rec.config_label, rec.email_id).second);
  }
  CHECK(pairs.size() == 20);

  // Scoring the resumed file equals scoring a single uninterrupted run.
  TempDir fresh_dir;
  auto fresh_config = make_config(scripted_config_json((fresh_dir / "out").string()));
  auto fresh = Runner(fresh_config).run({});
  REQUIRE(r2.reports.size() == fresh.reports.size());
  CHECK(r2.reports[0].counts == fresh.reports[0].counts);
  CHECK(r2.reports[0].accuracy == fresh.reports[0].accuracy);

  SECTION("a torn final line is re-debated, a duplicate is not") {
    auto path = dir / "out" / "transcripts.jsonl";
    auto bytes = read_file(path);
    write_file(path, bytes + "{\"schema_version\":1,\"config");
    auto r3 = Runner(config).run({});
    CHECK(r3.skipped == 20);
    CHECK(r3.transcripts_written == 0);
  }
}

TEST_CASE("a repeated run writes byte-identical transcripts", "[runner]") {
  TempDir dir;
  auto config = make_config(scripted_config_json((dir / "out").string()));

  Runner(config).run({});
  const auto first = read_file(dir / "out" / "transcripts.jsonl");
  std::filesystem::remove_all(dir / "out");

  Runner(config).run({});
  const auto second = read_file(dir / "out" / "transcripts.jsonl");
  CHECK(first == second);
  CHECK(!first.empty());
}

TEST_CASE("parallel execution covers the same debates", "[runner]") {
  TempDir serial_dir;
  auto serial_cfg = make_config(scripted_config_json((serial_dir / "out").string()));
  Runner(serial_cfg).run({});

  TempDir par_dir;
  auto par_json = scripted_config_json((par_dir / "out").string());
  par_json["parallelism"] = 4;
  auto par_cfg = make_config(par_json);
  Runner(par_cfg).run({});

  auto key_set = [](const std::string& path) {
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    for (const auto& rec : scan_transcripts(path).records) {
      keys.insert({rec.config_label, rec.email_id,
                   rec.verdict ? decision_to_string(rec.verdict->decision) : "none"});
    }
    return keys;
  };
  auto serial_keys = key_set((serial_dir / "out" / "transcripts.jsonl").string());
  auto par_keys = key_set((par_dir / "out" / "transcripts.jsonl").string());
  CHECK(serial_keys.size() == 20);
  CHECK(serial_keys == par_keys);
}

TEST_CASE("resume refuses transcripts from another configuration", "[runner]") {
  TempDir dir;
  auto config = make_config(scripted_config_json((dir / "out").string()));
  Runner(config).run(RunSettings{.limit = 2, .dry_run = false});

  auto changed_json = scripted_config_json((dir / "out").string());
  changed_json["percentile"] = 90.0;
  auto changed = make_config(changed_json);
  REQUIRE_THROWS_AS(Runner(changed).run({}), ConfigError);
}

TEST_CASE("provider failures are recorded once and not retried on resume", "[runner]") {
  TempDir dir;
  auto config = make_config(scripted_config_json((dir / "out").string()));

  // The judge has no reply for e05, so that debate fails at the judge call.
  auto factory = [](const std::string& name, const ProviderSpec& spec,
                    std::shared_ptr<Clock>) -> std::shared_ptr<Provider> {
    if (name != "judge") return nullptr;
    auto p = std::make_shared<ScriptedProvider>(name);
    for (const auto& [needle, reply] : spec.script_rules) {
      if (needle != "e05") p->add_rule(needle, reply);
    }
    return p;
  };

  auto r1 = Runner(config, nullptr, factory).run({});
  CHECK(r1.transcripts_written == 20);
  CHECK(r1.failures == 1);

  auto scan = scan_transcripts((dir / "out" / "transcripts.jsonl").string());
  std::size_t failed = 0;
  for (const auto& rec : scan.records) {
    if (rec.failed()) {
      ++failed;
      CHECK(rec.email_id == "e05");
      REQUIRE(rec.error.has_value());
      CHECK(rec.error->find("judge") != std::string::npos);
      CHECK(rec.arguments.empty());
    }
  }
  CHECK(failed == 1);

  // The failed email is excluded from metrics: 19 scoreable debates, and
  // the missed legitimate call on e05 removes one false negative.
  REQUIRE(r1.reports.size() == 1);
  CHECK(r1.reports[0].counts == ConfusionCounts{5, 5, 5, 4});
  CHECK(r1.reports[0].accuracy == Catch::Approx(10.0 / 19.0));

  auto r2 = Runner(config, nullptr, factory).run({});
  CHECK(r2.skipped == 20);
  CHECK(r2.transcripts_written == 0);
  CHECK(r2.failures == 0);
}

TEST_CASE("ambiguous judge replies land in the ambiguous bucket", "[runner]") {
  TempDir dir;
  auto j = scripted_config_json((dir / "out").string());
  // e13 (ham, would be a true negative) now gets an undecidable reply.
  for (auto& rule : j["providers"]["judge"]["rules"]) {
    if (rule[0] == "e13") rule[1] = "Reasonable people could disagree here.";
  }
  auto config = make_config(j);
  auto result = Runner(config).run({});

  CHECK(result.ambiguous == 1);
  CHECK(result.failures == 0);
  REQUIRE(result.reports.size() == 1);
  CHECK(result.reports[0].counts == ConfusionCounts{5, 5, 4, 5});
  CHECK(result.reports[0].num_ambiguous == 1);
  CHECK(result.reports[0].accuracy == Catch::Approx(9.0 / 20.0));

  SECTION("excluding ambiguous narrows the denominator") {
    auto reports = Runner::score_transcripts((dir / "out" / "transcripts.jsonl").string(),
                                             true);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].accuracy == Catch::Approx(9.0 / 19.0));
  }
}

TEST_CASE("dry run renders prompts without building providers", "[runner]") {
  TempDir dir;
  auto config = make_config(scripted_config_json((dir / "out").string()));

  int factory_calls = 0;
  auto factory = [&](const std::string&, const ProviderSpec&,
                     std::shared_ptr<Clock>) -> std::shared_ptr<Provider> {
    ++factory_calls;
    return nullptr;
  };

  RunSettings settings;
  settings.dry_run = true;
  settings.limit = 2;
  auto result = Runner(config, nullptr, factory).run(settings);

  CHECK(factory_calls == 0);
  CHECK(result.transcripts_written == 0);
  CHECK(!std::filesystem::exists(dir / "out" / "transcripts.jsonl"));

  const auto rendered = read_file(dir / "out" / "dry_run_prompts.txt");
  CHECK(rendered.find("<agent1 round-1 argument>") != std::string::npos);
  CHECK(rendered.find("scripted-baseline | synthetic | e01") != std::string::npos);
  CHECK(rendered.find("e02") != std::string::npos);
  CHECK(rendered.find("e03") == std::string::npos);
  CHECK(rendered.find("fingerprint") != std::string::npos);
}

TEST_CASE("a nonzero seed shuffles deterministically per dataset", "[runner]") {
  TempDir plain_dir;
  auto plain_cfg = make_config(scripted_config_json((plain_dir / "out").string()));
  Runner plain(plain_cfg);

  auto ids_of = [](const std::vector<EmailRecord>& emails) {
    std::vector<std::string> ids;
    for (const auto& e : emails) ids.push_back(e.id);
    return ids;
  };

  auto plain_ids = ids_of(plain.load_emails(std::nullopt));
  std::vector<std::string> expected;
  for (int i = 1; i <= 20; ++i) expected.push_back(synthetic_id(i));
  CHECK(plain_ids == expected);

  TempDir seeded_dir;
  auto seeded_json = scripted_config_json((seeded_dir / "out").string());
  seeded_json["seed"] = 12345;
  auto seeded_cfg = make_config(seeded_json);
  auto seeded_ids = ids_of(Runner(seeded_cfg).load_emails(std::nullopt));
  auto seeded_again = ids_of(Runner(seeded_cfg).load_emails(std::nullopt));

  CHECK(seeded_ids == seeded_again);
  CHECK(seeded_ids != plain_ids);
  auto sorted = seeded_ids;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == expected);

  // The limit applies after the shuffle.
  auto limited = ids_of(Runner(seeded_cfg).load_emails(5));
  CHECK(limited == std::vector<std::string>(seeded_ids.begin(), seeded_ids.begin() + 5));
}

TEST_CASE("the runner applies the length filter before debating", "[runner]") {
  TempDir dir;
  auto j = scripted_config_json((dir / "out").string());
  j["percentile"] = 75.0;
  auto config = make_config(j);

  const auto& d = config.datasets[0];
  auto raw = load_corpus(d.path, d.format, d.field_map, d.label_aliases, d.name);
  const auto expected =
      filter_corpus(raw, config.length_unit, config.percentile).size();
  REQUIRE(expected < raw.size());

  auto emails = Runner(config).load_emails(std::nullopt);
  CHECK(emails.size() == expected);
}

TEST_CASE("api keys never leak into outputs", "[runner]") {
  TempDir dir;
  const std::string secret = "sk-test-secret-XYZZY-99";
  ::setenv("PHISHDEBATE_LEAK_CHECK_KEY", secret.c_str(), 1);

  auto j = scripted_config_json((dir / "out").string());
  j["providers"]["remote"] = {{"type", "http"},
                              {"endpoint", "https://api.example.test/v1"},
                              {"model_id", "some-model"},
                              {"api_key_env", "PHISHDEBATE_LEAK_CHECK_KEY"}};
  auto config = make_config(j);
  Runner(config).run({});

  // The canonical config mentions only the variable name.
  const std::string canon = nlohmann::json(config).dump();
  CHECK(canon.find(secret) == std::string::npos);
  CHECK(canon.find("PHISHDEBATE_LEAK_CHECK_KEY") != std::string::npos);

  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir / "out")) {
    if (!entry.is_regular_file()) continue;
    const auto content = read_file(entry.path());
    INFO(entry.path().string());
    CHECK(content.find(secret) == std::string::npos);
  }
  ::unsetenv("PHISHDEBATE_LEAK_CHECK_KEY");
}

TEST_CASE("cli subcommands map outcomes to exit codes", "[runner][cli]") {
  TempDir dir;
  const auto config_path = dir / "config.json";
  write_file(config_path, scripted_config_json((dir / "out").string()).dump(2));

  SECTION("validate accepts a good config and rejects a missing one") {
    const auto out = dir / "cli.txt";
    CHECK(cli("validate --config " + config_path.string(), out) == 0);
    const auto text = read_file(out);
    CHECK(text.find("config ok") != std::string::npos);
    CHECK(text.find("hash:") != std::string::npos);
    CHECK(cli("validate --config " + (dir / "nope.json").string(), dir / "e.txt") == 1);
  }

  SECTION("a config with an embedded key is a config error") {
    auto bad = scripted_config_json((dir / "out").string());
    bad["providers"]["remote"] = {{"type", "http"},
                                  {"endpoint", "https://api.example.test/v1"},
                                  {"model_id", "m"},
                                  {"api_key", "sk-oops"}};
    const auto bad_path = dir / "bad.json";
    write_file(bad_path, bad.dump(2));
    CHECK(cli("validate --config " + bad_path.string(), dir / "bad.txt") == 1);
  }

  SECTION("ingest prints the corpus summary") {
    const auto out = dir / "ingest.txt";
    CHECK(cli("ingest --config " + config_path.string(), out) == 0);
    const auto text = read_file(out);
    CHECK(text.find("synthetic") != std::string::npos);
    CHECK(text.find("Total retained: 20") != std::string::npos);
  }

  SECTION("run, rerun and score succeed offline") {
    const auto out = dir / "run.txt";
    CHECK(cli("run --config " + config_path.string(), out) == 0);
    const auto text = read_file(out);
    CHECK(text.find("debates written: 20") != std::string::npos);
    CHECK(text.find("50.00% / 0.50") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "out" / "transcripts.jsonl"));

    CHECK(cli("run --config " + config_path.string(), dir / "rerun.txt") == 0);
    CHECK(read_file(dir / "rerun.txt").find("resumed (skipped): 20") != std::string::npos);

    CHECK(cli("score --config " + config_path.string(), dir / "score.txt") == 0);
    CHECK(read_file(dir / "score.txt").find("50.00% / 0.50") != std::string::npos);
  }

  SECTION("dry run writes prompts and exits cleanly") {
    CHECK(cli("run --dry-run --limit 2 --config " + config_path.string(), dir / "d.txt") ==
          0);
    CHECK(std::filesystem::exists(dir / "out" / "dry_run_prompts.txt"));
    CHECK(!std::filesystem::exists(dir / "out" / "transcripts.jsonl"));
  }

  SECTION("partial failures exit with code 2") {
    auto partial = scripted_config_json((dir / "pout").string());
    auto& rules = partial["providers"]["judge"]["rules"];
    nlohmann::json kept = nlohmann::json::array();
    for (const auto& rule : rules) {
      if (rule[0] != "e07") kept.push_back(rule);
    }
    rules = kept;
    const auto partial_path = dir / "partial.json";
    write_file(partial_path, partial.dump(2));
    CHECK(cli("run --config " + partial_path.string(), dir / "p.txt") == 2);
  }
}
