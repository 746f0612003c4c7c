#pragma once

#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "phishdebate/prompts.hpp"
#include "phishdebate/provider.hpp"

namespace phishdebate {

enum class AgentId { agent1, agent2 };
enum class Decision { phishing, legitimate };
enum class ParsePath { marker, fallback };

inline std::string agent_id_to_string(AgentId id) {
  return id == AgentId::agent1 ? "agent1" : "agent2";
}

inline std::string decision_to_string(Decision d) {
  return d == Decision::phishing ? "phishing" : "legitimate";
}

inline Decision decision_from_string(std::string_view s) {
  if (s == "phishing") return Decision::phishing;
  if (s == "legitimate") return Decision::legitimate;
  throw std::runtime_error("unknown decision \"" + std::string(s) + "\"");
}

inline std::string parse_path_to_string(ParsePath p) {
  return p == ParsePath::marker ? "marker" : "fallback";
}

inline ParsePath parse_path_from_string(std::string_view s) {
  if (s == "marker") return ParsePath::marker;
  if (s == "fallback") return ParsePath::fallback;
  throw std::runtime_error("unknown parse path \"" + std::string(s) + "\"");
}

// The judge's reply named neither class clearly enough to score.
class AmbiguousVerdictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A provider call failed inside a debate; carries where it happened.
class DebateError : public std::runtime_error {
 public:
  DebateError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Argument {
  AgentId agent = AgentId::agent1;
  int round = 1;
  Stance stance = Stance::prosecutor;
  std::string text;

  bool operator==(const Argument&) const = default;
};

struct Verdict {
  Decision decision = Decision::phishing;
  std::string justification;
  ParsePath parse_path = ParsePath::marker;

  bool operator==(const Verdict&) const = default;
};

struct DebateSettings {
  // When true the judge prompt repeats the email above the arguments.
  bool include_email_for_judge = false;
  // When true the defender's opening turn sees the prosecutor's opening.
  bool defender_sees_round1 = true;
  std::string config_label;
};

struct DebateTranscript {
  std::string email_id;
  std::string config_label;
  PromptOptions options;
  std::vector<Argument> arguments;
  std::string judge_text;
  std::optional<Verdict> verdict;
  std::optional<std::string> error;
  std::vector<int> attempts_per_call;

  bool operator==(const DebateTranscript&) const = default;
};

namespace detail {

struct KeywordMatch {
  std::size_t start;
  std::size_t end;
  int precedence;
  Decision decision;
};

}  // namespace detail

// Extracts the verdict from a judge reply. The primary path takes the last
// line of the form "VERDICT: PHISHING" or "VERDICT: LEGITIMATE" (any case,
// optional trailing . or !) and strips it from the justification. Without a
// marker line, a keyword scan decides: phrases are ranked "not a phishing" >
// "phishing attempt" > "is phishing" > "legitimate", matches overlapping a
// higher-ranked match are dropped, and the latest surviving match wins.
inline Verdict parse_verdict(const std::string& judge_text) {
  static const std::regex marker(
      R"(^\s*verdict:\s*(phishing|legitimate)\s*[.!]?\s*$)",
      std::regex::icase | std::regex::optimize);

  // Primary path: scan lines, remember the last marker.
  std::optional<Decision> marker_decision;
  std::size_t marker_begin = 0, marker_end = 0;
  std::size_t pos = 0;
  while (pos <= judge_text.size()) {
    std::size_t nl = judge_text.find('\n', pos);
    std::size_t line_end = nl == std::string::npos ? judge_text.size() : nl;
    std::string line = judge_text.substr(pos, line_end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, marker)) {
      marker_decision = to_lower_copy(m[1].str()) == "phishing" ? Decision::phishing
                                                                : Decision::legitimate;
      marker_begin = pos;
      marker_end = nl == std::string::npos ? judge_text.size() : nl + 1;
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  if (marker_decision) {
    std::string justification =
        judge_text.substr(0, marker_begin) + judge_text.substr(marker_end);
    while (!justification.empty() &&
           (justification.back() == '\n' || justification.back() == '\r')) {
      justification.pop_back();
    }
    return Verdict{*marker_decision, std::move(justification), ParsePath::marker};
  }

  // Fallback path over the lowercased text.
  const std::string lower = to_lower_copy(judge_text);
  struct Keyword {
    const char* phrase;
    Decision decision;
  };
  static const Keyword keywords[] = {
      {"not a phishing", Decision::legitimate},
      {"phishing attempt", Decision::phishing},
      {"is phishing", Decision::phishing},
      {"legitimate", Decision::legitimate},
  };

  std::vector<detail::KeywordMatch> matches;
  for (int k = 0; k < 4; ++k) {
    const std::string phrase = keywords[k].phrase;
    std::size_t from = 0;
    while ((from = lower.find(phrase, from)) != std::string::npos) {
      matches.push_back({from, from + phrase.size(), k, keywords[k].decision});
      ++from;
    }
  }
  std::vector<detail::KeywordMatch> kept;
  for (const auto& m : matches) {
    bool shadowed = false;
    for (const auto& other : matches) {
      if (other.precedence < m.precedence && m.start < other.end && other.start < m.end) {
        shadowed = true;
        break;
      }
    }
    if (!shadowed) kept.push_back(m);
  }
  if (kept.empty()) {
    throw AmbiguousVerdictError("judge reply names neither class: " +
                                judge_text.substr(0, 120));
  }
  const detail::KeywordMatch* best = &kept.front();
  for (const auto& m : kept) {
    if (m.start > best->start ||
        (m.start == best->start && m.precedence < best->precedence)) {
      best = &m;
    }
  }
  return Verdict{best->decision, judge_text, ParsePath::fallback};
}

// Runs one complete debate: four debater turns in fixed order, then the
// judge. Exactly five provider calls on success; a failed call aborts the
// debate before the judge is consulted. An unparseable judge reply is not an
// error at this level: the transcript records it with a null verdict.
inline DebateTranscript run_debate(const EmailRecord& email, Provider& agent1,
                                   Provider& agent2, Provider& judge,
                                   const PromptOptions& options,
                                   const DebateSettings& settings = {}) {
  DebateTranscript t;
  t.email_id = email.id;
  t.config_label = settings.config_label;
  t.options = options;

  auto call = [&](Provider& provider, const PromptBundle& bundle,
                  const std::string& stage) -> std::string {
    try {
      CompletionResult r = provider.complete(bundle);
      t.attempts_per_call.push_back(r.attempts);
      return std::move(r.text);
    } catch (const ProviderError& e) {
      throw DebateError(stage, e.what());
    }
  };

  const std::string a1r1 =
      call(agent1, build_debater_prompt(email, Stance::prosecutor, 1, std::nullopt, options),
           "agent1 round 1");
  t.arguments.push_back({AgentId::agent1, 1, Stance::prosecutor, a1r1});

  std::optional<std::string> defender_context;
  if (settings.defender_sees_round1) defender_context = a1r1;
  const std::string a2r1 =
      call(agent2, build_debater_prompt(email, Stance::defender, 1, defender_context, options),
           "agent2 round 1");
  t.arguments.push_back({AgentId::agent2, 1, Stance::defender, a2r1});

  const std::string a1r2 =
      call(agent1, build_debater_prompt(email, Stance::prosecutor, 2, a2r1, options),
           "agent1 round 2");
  t.arguments.push_back({AgentId::agent1, 2, Stance::prosecutor, a1r2});

  const std::string a2r2 =
      call(agent2, build_debater_prompt(email, Stance::defender, 2, a1r2, options),
           "agent2 round 2");
  t.arguments.push_back({AgentId::agent2, 2, Stance::defender, a2r2});

  t.judge_text = call(
      judge,
      build_judge_prompt(email, {a1r1, a2r1, a1r2, a2r2}, settings.include_email_for_judge),
      "judge");

  try {
    t.verdict = parse_verdict(t.judge_text);
  } catch (const AmbiguousVerdictError&) {
    t.error = "ambiguous_verdict";
  }
  return t;
}

inline void to_json(nlohmann::json& j, const Argument& a) {
  j = nlohmann::json{{"agent", agent_id_to_string(a.agent)},
                     {"round", a.round},
                     {"stance", a.stance == Stance::prosecutor ? "prosecutor" : "defender"},
                     {"text", a.text}};
}

inline void from_json(const nlohmann::json& j, Argument& a) {
  a.agent = j.at("agent").get<std::string>() == "agent1" ? AgentId::agent1 : AgentId::agent2;
  j.at("round").get_to(a.round);
  a.stance = j.at("stance").get<std::string>() == "prosecutor" ? Stance::prosecutor
                                                               : Stance::defender;
  j.at("text").get_to(a.text);
}

inline void to_json(nlohmann::json& j, const Verdict& v) {
  j = nlohmann::json{{"decision", decision_to_string(v.decision)},
                     {"justification", v.justification},
                     {"parse_path", parse_path_to_string(v.parse_path)}};
}

inline void from_json(const nlohmann::json& j, Verdict& v) {
  v.decision = decision_from_string(j.at("decision").get<std::string>());
  j.at("justification").get_to(v.justification);
  v.parse_path = parse_path_from_string(j.at("parse_path").get<std::string>());
}

}  // namespace phishdebate
