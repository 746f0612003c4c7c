#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "phishdebate/corpus.hpp"
#include "phishdebate/debate.hpp"

namespace phishdebate {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Phishing is the positive class throughout: tp = phishing called phishing,
// tn = ham called legitimate.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  bool operator==(const ConfusionCounts&) const = default;
};

inline ConfusionCounts confusion_counts(const std::vector<Decision>& predictions,
                                        const std::vector<Label>& labels) {
  if (predictions.size() != labels.size()) {
    throw MetricsError("confusion_counts: " + std::to_string(predictions.size()) +
                       " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) {
    throw MetricsError("confusion_counts: empty input");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool predicted_phish = predictions[i] == Decision::phishing;
    const bool is_phish = labels[i] == Label::phishing;
    if (predicted_phish && is_phish) ++c.tp;
    else if (predicted_phish && !is_phish) ++c.fp;
    else if (!predicted_phish && is_phish) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Scores for one (dataset, configuration) cell. Optional metrics are absent
// when their denominator is zero; f1 is additionally absent whenever the
// ground truth holds a single class, where it is rendered as "/".
struct EvalReport {
  std::string dataset;
  std::string config_label;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  ConfusionCounts counts;
  std::size_t num_ambiguous = 0;

  bool operator==(const EvalReport&) const = default;
};

// Ambiguous verdicts are counted against accuracy by default (they are
// answers the system failed to give); exclude_ambiguous drops them from the
// denominator instead.
inline EvalReport score_report(const ConfusionCounts& counts, const std::string& dataset,
                               const std::string& config_label, bool single_class,
                               std::size_t num_ambiguous = 0,
                               bool exclude_ambiguous = false) {
  EvalReport r;
  r.dataset = dataset;
  r.config_label = config_label;
  r.counts = counts;
  r.num_ambiguous = num_ambiguous;

  const std::size_t denom = counts.total() + (exclude_ambiguous ? 0 : num_ambiguous);
  if (denom == 0) {
    throw MetricsError("score_report: nothing to score for " + dataset + "/" + config_label);
  }
  r.accuracy = static_cast<double>(counts.tp + counts.tn) / static_cast<double>(denom);

  if (counts.tp + counts.fp > 0) {
    r.precision = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp);
  }
  if (counts.tp + counts.fn > 0) {
    r.recall = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn);
  }
  if (!single_class && r.precision && r.recall && *r.precision + *r.recall > 0.0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

// "0.9891" renders as "98.91%".
inline std::string format_accuracy(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", accuracy * 100.0);
  return buf;
}

// F1 stays a fraction; a missing value renders as "/".
inline std::string format_f1(const std::optional<double>& f1) {
  if (!f1) return "/";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *f1);
  return buf;
}

inline std::string format_metrics_pair(const EvalReport& r) {
  return format_accuracy(r.accuracy) + " / " + format_f1(r.f1);
}

inline void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline void from_json(const nlohmann::json& j, ConfusionCounts& c) {
  j.at("tp").get_to(c.tp);
  j.at("fp").get_to(c.fp);
  j.at("tn").get_to(c.tn);
  j.at("fn").get_to(c.fn);
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"dataset", r.dataset},
                     {"config_label", r.config_label},
                     {"accuracy", r.accuracy},
                     {"counts", r.counts},
                     {"num_ambiguous", r.num_ambiguous},
                     {"rendered", format_metrics_pair(r)}};
  j["precision"] = r.precision ? nlohmann::json(*r.precision) : nlohmann::json(nullptr);
  j["recall"] = r.recall ? nlohmann::json(*r.recall) : nlohmann::json(nullptr);
  j["f1"] = r.f1 ? nlohmann::json(*r.f1) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  j.at("dataset").get_to(r.dataset);
  j.at("config_label").get_to(r.config_label);
  j.at("accuracy").get_to(r.accuracy);
  j.at("counts").get_to(r.counts);
  j.at("num_ambiguous").get_to(r.num_ambiguous);
  r.precision = j.at("precision").is_null()
                    ? std::nullopt
                    : std::optional<double>(j.at("precision").get<double>());
  r.recall = j.at("recall").is_null() ? std::nullopt
                                      : std::optional<double>(j.at("recall").get<double>());
  r.f1 = j.at("f1").is_null() ? std::nullopt
                              : std::optional<double>(j.at("f1").get<double>());
}

// Plain-text grid: one row per configuration, one column per dataset, cells
// rendered as "accuracy% / f1". Column order follows first appearance.
inline std::string render_report_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> datasets;
  std::vector<std::string> configs;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& r : reports) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
    if (std::find(configs.begin(), configs.end(), r.config_label) == configs.end()) {
      configs.push_back(r.config_label);
    }
    cells[{r.config_label, r.dataset}] = format_metrics_pair(r);
  }

  std::size_t label_width = std::string("Configuration").size();
  for (const auto& c : configs) label_width = std::max(label_width, c.size());
  std::vector<std::size_t> widths;
  for (const auto& d : datasets) {
    std::size_t w = d.size();
    for (const auto& c : configs) {
      auto it = cells.find({c, d});
      if (it != cells.end()) w = std::max(w, it->second.size());
    }
    widths.push_back(w);
  }

  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w) {
    os << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  pad("Configuration", label_width);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    os << "  ";
    pad(datasets[i], widths[i]);
  }
  os << '\n';
  for (const auto& c : configs) {
    pad(c, label_width);
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      os << "  ";
      auto it = cells.find({c, datasets[i]});
      pad(it != cells.end() ? it->second : "-", widths[i]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace phishdebate
