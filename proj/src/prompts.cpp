#include "tsearch/prompts.hpp"

#include "default_prompts.hpp"  // generated from prompts/*.txt

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

namespace tsearch {

namespace {

constexpr std::array<std::string_view, 8> kPlaceholders = {
    "question", "options", "interval_start_s", "interval_end_s", "video_duration_s", "memory", "n", "prior_answer"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string render_options(const std::vector<QueryOption>& options) {
  std::string out;
  for (const auto& o : options) out += fmt::format("{}. {}\n", o.label, o.text);
  if (!out.empty()) out.pop_back();
  return out;
}

std::string render_memory(const KeyframeMemory* memory) {
  if (memory == nullptr || memory->empty()) return {};
  auto body = memory->render();
  body.pop_back();
  return "Notes from earlier views of this video:\n" + body;
}

std::string seconds(double s) { return fmt::format("{:.1f}", s); }

}  // namespace

const char* to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::answer: return "answer";
    case PromptKind::expand: return "expand";
    case PromptKind::evaluate: return "evaluate";
    case PromptKind::keyinfo: return "keyinfo";
  }
  return "?";
}

PromptTemplate::PromptTemplate(PromptKind kind, std::string_view text) : kind_(kind) {
  std::string literal;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      literal += '{';
      ++i;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      literal += '}';
      ++i;
    } else if (c == '{') {
      const auto close = text.find('}', i);
      if (close == std::string_view::npos) {
        throw ConfigError(fmt::format("{} template: unterminated placeholder at offset {}", to_string(kind), i));
      }
      std::string name(text.substr(i + 1, close - i - 1));
      if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
        throw ConfigError(fmt::format("{} template: unknown placeholder {{{}}}", to_string(kind), name));
      }
      if (!literal.empty()) parts_.emplace_back(std::move(literal));
      literal.clear();
      parts_.emplace_back(Placeholder{std::move(name)});
      i = close;
    } else if (c == '}') {
      throw ConfigError(fmt::format("{} template: stray '}}' at offset {}", to_string(kind), i));
    } else {
      literal += c;
    }
  }
  if (!literal.empty()) parts_.emplace_back(std::move(literal));
}

std::string PromptTemplate::render(const PromptContext& ctx) const {
  std::string out;
  for (const auto& part : parts_) {
    if (const auto* lit = std::get_if<std::string>(&part)) {
      out += *lit;
      continue;
    }
    const auto& name = std::get<Placeholder>(part).name;
    if (name == "question") out += ctx.question;
    else if (name == "options") out += render_options(ctx.options);
    else if (name == "interval_start_s") out += seconds(ctx.interval_start_s);
    else if (name == "interval_end_s") out += seconds(ctx.interval_end_s);
    else if (name == "video_duration_s") out += seconds(ctx.video_duration_s);
    else if (name == "memory") out += render_memory(ctx.memory);
    else if (name == "n") out += std::to_string(ctx.n);
    else if (name == "prior_answer") out += ctx.prior_answer;
  }
  return out;
}

const PromptSet& PromptSet::defaults() {
  static const PromptSet set({PromptTemplate(PromptKind::answer, default_prompts::kAnswer),
                              PromptTemplate(PromptKind::expand, default_prompts::kExpand),
                              PromptTemplate(PromptKind::evaluate, default_prompts::kEvaluate),
                              PromptTemplate(PromptKind::keyinfo, default_prompts::kKeyinfo)});
  return set;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  auto read = [&](PromptKind kind) {
    const auto path = dir / (std::string(to_string(kind)) + ".txt");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read prompt template " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return PromptTemplate(kind, ss.str());
  };
  return PromptSet({read(PromptKind::answer), read(PromptKind::expand), read(PromptKind::evaluate),
                    read(PromptKind::keyinfo)});
}

// ----------------------------------------------------------------------------
// Reply parsing
// ----------------------------------------------------------------------------

std::optional<char> parse_choice(std::string_view answer_text, const std::vector<QueryOption>& options) {
  auto known = [&](char c) {
    return std::any_of(options.begin(), options.end(), [&](const QueryOption& o) { return o.label == c; });
  };

  // 1. Standalone letter at the start: "B", "B.", "(B)", "B) red".
  std::string_view s = trim(answer_text);
  while (!s.empty() && (s.front() == '(' || s.front() == '[' || s.front() == '*')) s.remove_prefix(1);
  if (!s.empty() && std::isupper(static_cast<unsigned char>(s.front())) && known(s.front())) {
    if (s.size() == 1 || std::string_view(".):],;*").find(s[1]) != std::string_view::npos ||
        trim(s.substr(1)).empty()) {
      return s.front();
    }
  }

  // 2. "The answer is (C)", "Answer: C", "answer is option C".
  static const std::regex answer_is(R"(answer\s*(?:is|:)\s*:?\s*(?:option\s*)?[\(\[]?([a-z])(?![a-z]))",
                                    std::regex::icase | std::regex::ECMAScript);
  const std::string text(answer_text);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), answer_is); it != std::sregex_iterator(); ++it) {
    const char c = (*it)[1].str()[0];
    if (std::isupper(static_cast<unsigned char>(c)) && known(c)) return c;
  }

  // 3. A unique option whose text appears in the reply, or that contains the
  //    whole reply.
  const std::string reply = lower(trim(answer_text));
  if (reply.empty()) return std::nullopt;
  std::optional<char> found;
  int hits = 0;
  for (const auto& o : options) {
    const auto opt = lower(trim(o.text));
    if (!opt.empty() && reply.find(opt) != std::string::npos) {
      found = o.label;
      ++hits;
    }
  }
  if (hits == 1) return found;
  if (hits == 0) {
    for (const auto& o : options) {
      if (lower(o.text).find(reply) != std::string::npos) {
        found = o.label;
        ++hits;
      }
    }
    if (hits == 1) return found;
  }
  return std::nullopt;
}

namespace {

std::optional<Interval> seconds_to_frames(double a, double b, double fps, const Interval& parent) {
  if (!std::isfinite(a) || !std::isfinite(b)) return std::nullopt;
  if (a > b) std::swap(a, b);
  // Widen to whole frames; the epsilon absorbs binary noise in seconds * fps.
  const double lo = std::floor(a * fps + 1e-9);
  const double hi = std::ceil(b * fps - 1e-9);
  const double max_frame = static_cast<double>(parent.end);
  Interval raw{static_cast<FrameIndex>(std::clamp(lo, -1.0, max_frame)),
               static_cast<FrameIndex>(std::clamp(hi, -1.0, max_frame))};
  Interval c{std::max(raw.start, parent.start), std::min(raw.end, parent.end)};
  if (c.end <= c.start) return std::nullopt;
  return c;
}

std::optional<std::vector<std::pair<double, double>>> json_pairs(std::string_view reply) {
  for (std::size_t p = reply.find('['); p != std::string_view::npos; p = reply.find('[', p + 1)) {
    int depth = 0;
    std::size_t q = p;
    for (; q < reply.size(); ++q) {
      if (reply[q] == '[') ++depth;
      else if (reply[q] == ']' && --depth == 0) break;
    }
    if (q >= reply.size()) break;
    auto j = nlohmann::json::parse(reply.substr(p, q - p + 1), nullptr, false);
    if (j.is_discarded() || !j.is_array()) continue;
    auto is_pair = [](const nlohmann::json& e) {
      return e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number();
    };
    std::vector<std::pair<double, double>> out;
    if (is_pair(j)) {
      out.emplace_back(j[0].get<double>(), j[1].get<double>());
      return out;
    }
    bool ok = !j.empty();
    for (const auto& e : j) {
      if (!is_pair(e)) {
        ok = false;
        break;
      }
      out.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    if (ok) return out;
  }
  return std::nullopt;
}

double clock_seconds(const std::string& token) {
  double total = 0.0;
  std::size_t start = 0;
  for (;;) {
    const auto colon = token.find(':', start);
    const auto field = token.substr(start, colon == std::string::npos ? std::string::npos : colon - start);
    total = total * 60.0 + std::stod(field);
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  return total;
}

}  // namespace

std::vector<Interval> parse_intervals(std::string_view reply, const Rational& fps, const Interval& parent) {
  std::vector<Interval> out;
  const double rate = fps.to_double();
  if (auto pairs = json_pairs(reply)) {
    for (auto [a, b] : *pairs) {
      if (auto c = seconds_to_frames(a, b, rate, parent)) out.push_back(*c);
    }
    return out;
  }

  static const std::regex range(
      R"((\d+(?::\d{1,2}){1,2}(?:\.\d+)?|\d+(?:\.\d+)?)\s*(s|secs?|seconds?)?\s*(?:-|–|~|to|and)\s*)"
      R"((\d+(?::\d{1,2}){1,2}(?:\.\d+)?|\d+(?:\.\d+)?)\s*(s\b|secs?\b|seconds?\b)?)",
      std::regex::icase | std::regex::ECMAScript);
  const std::string text(reply);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), range); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string a = m[1].str(), b = m[3].str();
    const bool clock = a.find(':') != std::string::npos || b.find(':') != std::string::npos;
    const bool unit = m[2].matched || m[4].matched;
    if (!clock && !unit) continue;
    if (auto c = seconds_to_frames(clock_seconds(a), clock_seconds(b), rate, parent)) out.push_back(*c);
  }
  return out;
}

}  // namespace tsearch
