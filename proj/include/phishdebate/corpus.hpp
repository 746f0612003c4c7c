#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "phishdebate/support.hpp"

namespace phishdebate {

enum class Label { ham, phishing };

// Unit used to measure email length. The default everywhere is
// whitespace_tokens; characters and chars_div_4 exist as config knobs for
// calibration against corpora whose published statistics use another unit.
enum class LengthUnit { whitespace_tokens, characters, chars_div_4 };

enum class CorpusFormat { csv, jsonl };

struct EmailRecord {
  std::string id;
  std::string dataset;
  std::string subject;
  std::string body;
  Label label = Label::ham;

  bool operator==(const EmailRecord&) const = default;
};

struct DatasetSummary {
  std::string name;
  std::size_t size = 0;
  double avg_length = 0.0;
  double p75_length = 0.0;
  std::size_t num_ham = 0;
  std::size_t num_phishing = 0;

  bool operator==(const DatasetSummary&) const = default;
};

// Column names in the source file. id is optional; when empty, ids are
// synthesized as "<dataset>-<row index>".
struct FieldMap {
  std::string subject;
  std::string body;
  std::string label;
  std::string id;
};

// Maps raw label strings (trimmed) onto the two classes. Always explicit
// configuration; never inferred from the data.
using LabelAliases = std::map<std::string, Label>;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string label_to_string(Label label) {
  return label == Label::ham ? "ham" : "phishing";
}

inline Label label_from_string(std::string_view s) {
  if (s == "ham") return Label::ham;
  if (s == "phishing") return Label::phishing;
  throw CorpusError("unknown label class \"" + std::string(s) + "\"");
}

inline std::string length_unit_to_string(LengthUnit unit) {
  switch (unit) {
    case LengthUnit::whitespace_tokens: return "whitespace_tokens";
    case LengthUnit::characters: return "characters";
    case LengthUnit::chars_div_4: return "chars_div_4";
  }
  return "whitespace_tokens";
}

inline LengthUnit length_unit_from_string(std::string_view s) {
  if (s == "whitespace_tokens") return LengthUnit::whitespace_tokens;
  if (s == "characters") return LengthUnit::characters;
  if (s == "chars_div_4") return LengthUnit::chars_div_4;
  throw CorpusError("unknown length unit \"" + std::string(s) + "\"");
}

namespace detail {

// RFC-4180-style CSV reader: quoted fields may contain the delimiter,
// doubled quotes and embedded newlines. Returns one vector per record.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in, char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool any_data = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  char c;
  while (in.get(c)) {
    any_data = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_was_quoted) {
      in_quotes = true;
      field_was_quoted = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_record();
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) {
    throw CorpusError("row " + std::to_string(records.size() + 1) +
                      ": unterminated quoted field");
  }
  if (!field.empty() || !record.empty() || (any_data && records.empty())) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    end_record();
  }
  return records;
}

inline Label resolve_label(const std::string& raw, const LabelAliases& aliases,
                           std::size_t row) {
  auto it = aliases.find(trim_copy(raw));
  if (it == aliases.end()) {
    throw CorpusError("row " + std::to_string(row) + ": unmappable label \"" + raw + "\"");
  }
  return it->second;
}

}  // namespace detail

// Loads a labeled email corpus from CSV or JSONL. Row order is preserved.
// CSV row numbers in error messages are 1-based record numbers counting the
// header; JSONL line numbers are 1-based file lines.
inline std::vector<EmailRecord> load_corpus(const std::string& path, CorpusFormat format,
                                            const FieldMap& field_map,
                                            const LabelAliases& aliases,
                                            const std::string& dataset_name,
                                            char delimiter = ',') {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CorpusError("cannot open corpus file: " + path);
  }
  if (field_map.subject.empty() || field_map.body.empty() || field_map.label.empty()) {
    throw CorpusError(dataset_name + ": field_map must name subject, body and label columns");
  }

  std::vector<EmailRecord> out;
  std::map<std::string, std::size_t> seen_ids;

  auto add_record = [&](std::string id, std::string subject, std::string body,
                        const std::string& raw_label, std::size_t row) {
    EmailRecord rec;
    rec.id = id.empty() ? dataset_name + "-" + std::to_string(out.size()) : std::move(id);
    rec.dataset = dataset_name;
    rec.subject = std::move(subject);
    rec.body = std::move(body);
    rec.label = detail::resolve_label(raw_label, aliases, row);
    auto [it, inserted] = seen_ids.emplace(rec.id, row);
    if (!inserted) {
      throw CorpusError("row " + std::to_string(row) + ": duplicate id \"" + rec.id +
                        "\" (first seen at row " + std::to_string(it->second) + ")");
    }
    out.push_back(std::move(rec));
  };

  if (format == CorpusFormat::csv) {
    auto records = detail::parse_csv(in, delimiter);
    if (records.empty()) {
      throw CorpusError(path + ": empty file, expected a header row");
    }
    const auto& header = records.front();
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) return std::nullopt;
      return static_cast<std::size_t>(it - header.begin());
    };
    auto require_column = [&](const std::string& name) {
      auto idx = column(name);
      if (!idx) throw CorpusError(path + ": header is missing column \"" + name + "\"");
      return *idx;
    };
    const std::size_t subject_col = require_column(field_map.subject);
    const std::size_t body_col = require_column(field_map.body);
    const std::size_t label_col = require_column(field_map.label);
    std::optional<std::size_t> id_col;
    if (!field_map.id.empty()) id_col = require_column(field_map.id);

    for (std::size_t i = 1; i < records.size(); ++i) {
      const auto& row = records[i];
      const std::size_t row_no = i + 1;
      if (row.size() == 1 && row[0].empty()) continue;  // blank line
      if (row.size() != header.size()) {
        throw CorpusError("row " + std::to_string(row_no) + ": expected " +
                          std::to_string(header.size()) + " fields, got " +
                          std::to_string(row.size()));
      }
      add_record(id_col ? row[*id_col] : std::string(), row[subject_col], row[body_col],
                 row[label_col], row_no);
    }
  } else {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_copy(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw CorpusError("row " + std::to_string(line_no) + ": invalid JSON: " + e.what());
      }
      auto field = [&](const std::string& name, bool required) -> std::string {
        if (!j.contains(name)) {
          if (required) {
            throw CorpusError("row " + std::to_string(line_no) + ": missing field \"" +
                              name + "\"");
          }
          return {};
        }
        const auto& v = j.at(name);
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_null()) return {};
        throw CorpusError("row " + std::to_string(line_no) + ": field \"" + name +
                          "\" is not a scalar");
      };
      std::string id = field_map.id.empty() ? std::string() : field(field_map.id, true);
      add_record(std::move(id), field(field_map.subject, false), field(field_map.body, true),
                 field(field_map.label, true), line_no);
    }
  }
  return out;
}

// Length of subject and body joined with a single separator space. Empty
// parts contribute nothing, so an empty email measures 0 in every unit.
inline std::size_t measure_length(const EmailRecord& record, LengthUnit unit) {
  std::string text;
  if (record.subject.empty()) {
    text = record.body;
  } else if (record.body.empty()) {
    text = record.subject;
  } else {
    text = record.subject + " " + record.body;
  }
  switch (unit) {
    case LengthUnit::characters:
      return text.size();
    case LengthUnit::chars_div_4:
      return text.size() / 4;
    case LengthUnit::whitespace_tokens: {
      std::size_t tokens = 0;
      bool in_token = false;
      for (unsigned char c : text) {
        if (std::isspace(c)) {
          in_token = false;
        } else if (!in_token) {
          in_token = true;
          ++tokens;
        }
      }
      return tokens;
    }
  }
  return 0;
}

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
inline std::size_t percentile_threshold(std::vector<std::size_t> lengths, double p) {
  if (lengths.empty()) {
    throw CorpusError("percentile_threshold: empty length list");
  }
  if (!(p > 0.0) || p > 100.0) {
    throw CorpusError("percentile_threshold: p must be in (0, 100]");
  }
  std::sort(lengths.begin(), lengths.end());
  auto rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(lengths.size()) / 100.0));
  if (rank == 0) rank = 1;
  return lengths[rank - 1];
}

// Keeps records whose length is within the p-th percentile of their own
// dataset's distribution. Thresholds are computed per dataset name, never
// over the pooled corpus. Input order is preserved.
inline std::vector<EmailRecord> filter_corpus(const std::vector<EmailRecord>& corpus,
                                              LengthUnit unit, double p) {
  if (corpus.empty()) {
    throw CorpusError("filter_corpus: empty corpus");
  }
  std::map<std::string, std::vector<std::size_t>> lengths_by_dataset;
  for (const auto& rec : corpus) {
    lengths_by_dataset[rec.dataset].push_back(measure_length(rec, unit));
  }
  std::map<std::string, std::size_t> thresholds;
  for (auto& [name, lengths] : lengths_by_dataset) {
    thresholds[name] = percentile_threshold(std::move(lengths), p);
  }
  std::vector<EmailRecord> out;
  out.reserve(corpus.size());
  for (const auto& rec : corpus) {
    if (measure_length(rec, unit) <= thresholds[rec.dataset]) {
      out.push_back(rec);
    }
  }
  return out;
}

// Per-dataset summary statistics, in first-appearance order of the datasets.
inline std::vector<DatasetSummary> summarize(const std::vector<EmailRecord>& corpus,
                                             LengthUnit unit) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> lengths;
  std::map<std::string, DatasetSummary> by_name;
  for (const auto& rec : corpus) {
    auto [it, inserted] = by_name.try_emplace(rec.dataset);
    if (inserted) {
      it->second.name = rec.dataset;
      order.push_back(rec.dataset);
    }
    DatasetSummary& s = it->second;
    ++s.size;
    if (rec.label == Label::ham) {
      ++s.num_ham;
    } else {
      ++s.num_phishing;
    }
    lengths[rec.dataset].push_back(measure_length(rec, unit));
  }
  std::vector<DatasetSummary> out;
  out.reserve(order.size());
  for (const auto& name : order) {
    DatasetSummary s = by_name[name];
    const auto& ls = lengths[name];
    s.avg_length = std::accumulate(ls.begin(), ls.end(), 0.0) /
                   static_cast<double>(ls.size());
    s.p75_length = static_cast<double>(percentile_threshold(ls, 75.0));
    out.push_back(std::move(s));
  }
  return out;
}

inline void to_json(nlohmann::json& j, const DatasetSummary& s) {
  j = nlohmann::json{{"name", s.name},
                     {"size", s.size},
                     {"avg_length", s.avg_length},
                     {"p75_length", s.p75_length},
                     {"num_ham", s.num_ham},
                     {"num_phishing", s.num_phishing}};
}

inline void from_json(const nlohmann::json& j, DatasetSummary& s) {
  j.at("name").get_to(s.name);
  j.at("size").get_to(s.size);
  j.at("avg_length").get_to(s.avg_length);
  j.at("p75_length").get_to(s.p75_length);
  j.at("num_ham").get_to(s.num_ham);
  j.at("num_phishing").get_to(s.num_phishing);
}

inline std::string summary_table(const std::vector<DatasetSummary>& summaries) {
  std::ostringstream os;
  os << "Dataset               Size     Avg      75%      Ham      Phishing\n";
  for (const auto& s : summaries) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s  %-7zu  %-7.2f  %-7.2f  %-7zu  %zu\n",
                  s.name.c_str(), s.size, s.avg_length, s.p75_length, s.num_ham,
                  s.num_phishing);
    os << line;
  }
  return os.str();
}

}  // namespace phishdebate
