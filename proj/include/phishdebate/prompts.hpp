#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phishdebate/corpus.hpp"

namespace phishdebate {

// agent1 always argues the email is phishing, agent2 that it is legitimate.
// Stances are fixed for the whole debate; they never swap between rounds.
enum class Stance { prosecutor, defender };

enum class MessageRole { system, user, assistant };

struct Message {
  MessageRole role = MessageRole::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

// One fully rendered request: what gets sent to a chat-completion endpoint.
struct PromptBundle {
  std::vector<Message> messages;

  bool operator==(const PromptBundle&) const = default;
};

struct PromptOptions {
  bool cot = false;   // append step-by-step guiding questions
  bool role = false;  // prepend a persona as a system message

  bool operator==(const PromptOptions&) const = default;
};

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string message_role_to_string(MessageRole role) {
  switch (role) {
    case MessageRole::system: return "system";
    case MessageRole::user: return "user";
    case MessageRole::assistant: return "assistant";
  }
  return "user";
}

inline MessageRole message_role_from_string(std::string_view s) {
  if (s == "system") return MessageRole::system;
  if (s == "user") return MessageRole::user;
  if (s == "assistant") return MessageRole::assistant;
  throw PromptError("unknown message role \"" + std::string(s) + "\"");
}

// Debate instruction templates. These strings are load-bearing: tests pin
// them byte for byte, so any edit here is a behavioral change.
namespace templates {

inline constexpr const char* kRound1Prosecutor =
    "Carefully analyze the following email and argue why it is likely to be a "
    "phishing attempt";

inline constexpr const char* kRound1Defender =
    "Carefully analyze the following email and argue why it is likely to be "
    "legitimate and not a phishing attempt";

inline constexpr const char* kRound2Prosecutor =
    "Given your opponent's rebuttal, reinforce your position that the following "
    "email is a phishing attempt";

inline constexpr const char* kRound2Defender =
    "Given your opponent's rebuttal, reinforce your position that the following "
    "email is not a phishing attempt";

inline constexpr const char* kCotHeader =
    "Break down your reasoning step-by-step using these guiding questions:";

// The defender list numbers its last question 4; kept as is.
inline constexpr const char* kCotProsecutor =
    "1. What elements of the email create urgency, fear, or greed?\n"
    "2. Does the email contain misleading links or unusual requests?\n"
    "3. How does the email resemble common phishing patterns?";

inline constexpr const char* kCotDefender =
    "1. Is the tone of the email professional and consistent with typical "
    "corporate communication?\n"
    "2. Are the links safe and the requests expected?\n"
    "4. Does the context of the email match what a legitimate sender would "
    "write?";

inline constexpr const char* kRoleProsecutor =
    "You are a senior cybersecurity analyst at a large tech company. Your job "
    "is to review suspicious emails reported by employees and determine that "
    "they are phishing attempts.";

inline constexpr const char* kRoleDefender =
    "You are an email forensics expert working for an IT compliance team. Your "
    "job is to validate that a flagged email is legitimate and not a phishing "
    "attempt.";

inline constexpr const char* kJudgeIntro =
    "You are the judge of a debate between two agents about whether an email "
    "is a phishing attempt. Agent 1 argues that the email is phishing; Agent 2 "
    "argues that it is legitimate. The four arguments are presented below in "
    "the order they were made.";

inline constexpr const char* kJudgeInstruction =
    "Evaluate the strength and coherence of the arguments and provide a final "
    "binary classification verdict, phishing or legitimate. End your reply "
    "with a single line of the form VERDICT: PHISHING or VERDICT: LEGITIMATE.";

}  // namespace templates

namespace detail {

inline std::string email_block(const EmailRecord& email) {
  std::ostringstream os;
  os << "=== EMAIL START ===\n"
     << "Subject: " << email.subject << "\n\n"
     << email.body << "\n"
     << "=== EMAIL END ===";
  return os.str();
}

inline std::string opponent_block(const std::string& argument) {
  std::ostringstream os;
  os << "=== OPPONENT ARGUMENT START ===\n"
     << argument << "\n"
     << "=== OPPONENT ARGUMENT END ===";
  return os.str();
}

inline std::string argument_block(int agent, int round, const std::string& text) {
  std::ostringstream os;
  os << "=== AGENT " << agent << " ROUND " << round << " START ===\n"
     << text << "\n"
     << "=== AGENT " << agent << " ROUND " << round << " END ===";
  return os.str();
}

}  // namespace detail

// Renders the prompt for one debater turn. Round 1 prosecutor sees only the
// email. Round 1 defender may additionally see the prosecutor's opening when
// the debate is run sequentially. Round 2 always requires the opponent's
// latest argument. The chain-of-thought block is appended after all other
// blocks, so the baseline user content is always a prefix-preserving
// substring of every variant.
inline PromptBundle build_debater_prompt(const EmailRecord& email, Stance stance, int round,
                                         const std::optional<std::string>& opponent_argument,
                                         const PromptOptions& options = {}) {
  if (round != 1 && round != 2) {
    throw PromptError("round must be 1 or 2, got " + std::to_string(round));
  }
  if (round == 2 && !opponent_argument) {
    throw PromptError("round 2 requires the opponent's argument");
  }
  if (round == 1 && stance == Stance::prosecutor && opponent_argument) {
    throw PromptError("round 1 opening statement cannot cite an opponent argument");
  }

  const char* instruction =
      round == 1 ? (stance == Stance::prosecutor ? templates::kRound1Prosecutor
                                                 : templates::kRound1Defender)
                 : (stance == Stance::prosecutor ? templates::kRound2Prosecutor
                                                 : templates::kRound2Defender);

  std::ostringstream user;
  user << instruction << "." << "\n\n" << detail::email_block(email);
  if (opponent_argument) {
    user << "\n\n" << detail::opponent_block(*opponent_argument);
  }
  if (options.cot) {
    user << "\n\n"
         << templates::kCotHeader << "\n"
         << (stance == Stance::prosecutor ? templates::kCotProsecutor
                                          : templates::kCotDefender);
  }

  PromptBundle bundle;
  if (options.role) {
    bundle.messages.push_back({MessageRole::system,
                               stance == Stance::prosecutor ? templates::kRoleProsecutor
                                                            : templates::kRoleDefender});
  }
  bundle.messages.push_back({MessageRole::user, user.str()});
  return bundle;
}

// Renders the judge prompt over the four arguments in debate order:
// agent 1 round 1, agent 2 round 1, agent 1 round 2, agent 2 round 2.
inline PromptBundle build_judge_prompt(const EmailRecord& email,
                                       const std::vector<std::string>& arguments,
                                       bool include_email = false) {
  if (arguments.size() != 4) {
    throw PromptError("judge prompt requires exactly 4 arguments, got " +
                      std::to_string(arguments.size()));
  }
  std::ostringstream user;
  user << templates::kJudgeIntro;
  if (include_email) {
    user << "\n\n" << detail::email_block(email);
  }
  user << "\n\n" << detail::argument_block(1, 1, arguments[0]);
  user << "\n\n" << detail::argument_block(2, 1, arguments[1]);
  user << "\n\n" << detail::argument_block(1, 2, arguments[2]);
  user << "\n\n" << detail::argument_block(2, 2, arguments[3]);
  user << "\n\n" << templates::kJudgeInstruction;

  PromptBundle bundle;
  bundle.messages.push_back({MessageRole::user, user.str()});
  return bundle;
}

}  // namespace phishdebate
