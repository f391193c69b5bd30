#pragma once

#include "tsearch/domain.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tsearch {

enum class PromptKind { answer, expand, evaluate, keyinfo };

const char* to_string(PromptKind kind);

/// Values substituted into a template. Absent fields render as empty text.
struct PromptContext {
  std::string question;
  std::vector<QueryOption> options;
  double interval_start_s = 0.0;
  double interval_end_s = 0.0;
  double video_duration_s = 0.0;
  const KeyframeMemory* memory = nullptr;
  int n = 0;
  std::string prior_answer;
};

/// A template parsed into literal text and placeholders. Recognized
/// placeholders: {question} {options} {interval_start_s} {interval_end_s}
/// {video_duration_s} {memory} {n} {prior_answer}; "{{" and "}}" are
/// literal braces.
class PromptTemplate {
 public:
  /// Throws ConfigError on unknown placeholders or unbalanced braces.
  PromptTemplate(PromptKind kind, std::string_view text);

  PromptKind kind() const { return kind_; }
  std::string render(const PromptContext& context) const;

 private:
  struct Placeholder {
    std::string name;
  };
  PromptKind kind_;
  std::vector<std::variant<std::string, Placeholder>> parts_;
};

/// The four templates used by a backend.
class PromptSet {
 public:
  /// Templates compiled in from the repository's prompts/ directory.
  static const PromptSet& defaults();
  /// Reads {answer,expand,evaluate,keyinfo}.txt from `dir`.
  static PromptSet load(const std::filesystem::path& dir);

  const PromptTemplate& get(PromptKind kind) const { return templates_[static_cast<std::size_t>(kind)]; }
  std::string render(PromptKind kind, const PromptContext& context) const { return get(kind).render(context); }

 private:
  explicit PromptSet(std::array<PromptTemplate, 4> templates) : templates_(std::move(templates)) {}
  std::array<PromptTemplate, 4> templates_;
};

/// Extracts an option label from a free-text answer. Tries, in order: a
/// standalone option letter at the start, an "answer is X" phrase, and a
/// unique option whose text matches. Never returns a label outside
/// `options`.
std::optional<char> parse_choice(std::string_view answer_text, const std::vector<QueryOption>& options);

/// Extracts time ranges (seconds) from a model reply: a JSON array of
/// [start, end] pairs when present, otherwise "30-60s", "30s to 60s",
/// "between 30s and 60s" or "mm:ss-mm:ss" style ranges. Converts to frames
/// (floor start, ceil end), swaps reversed pairs, clamps to `parent` and
/// drops empty results.
std::vector<Interval> parse_intervals(std::string_view reply, const Rational& fps, const Interval& parent);

}  // namespace tsearch
