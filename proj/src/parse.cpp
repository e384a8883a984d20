#include "stepcritic/parse.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string_view>

namespace stepcritic::parse {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// True when the brace at `pos` is escaped by an odd run of backslashes.
bool is_escaped(const std::string& text, std::size_t pos) {
  std::size_t n = 0;
  while (pos > n && text[pos - 1 - n] == '\\') ++n;
  return (n % 2) == 1;
}

struct BoxedSpan {
  std::size_t begin = 0;  // index of content start (after the opening brace)
  std::size_t end = 0;    // index of the matching closing brace
};

// All \boxed{...} spans with balanced, unescaped braces, in order of
// appearance. Unterminated boxes are skipped.
std::vector<BoxedSpan> boxed_spans(const std::string& text) {
  static constexpr std::string_view kMarker = "\\boxed{";
  std::vector<BoxedSpan> out;
  std::size_t pos = 0;
  while ((pos = text.find(kMarker, pos)) != std::string::npos) {
    const std::size_t open = pos + kMarker.size() - 1;
    int depth = 1;
    std::size_t i = open + 1;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if ((c == '{' || c == '}') && is_escaped(text, i)) continue;
      if (c == '{') ++depth;
      if (c == '}' && --depth == 0) break;
    }
    if (i < text.size()) out.push_back(BoxedSpan{open + 1, i});
    pos += kMarker.size();
  }
  return out;
}

std::string span_content(const std::string& text, const BoxedSpan& s) {
  return text.substr(s.begin, s.end - s.begin);
}

// Plain integer: optional sign, digits only. Long long is plenty for step
// indices; anything overflowing is not a plausible index.
std::optional<long long> parse_integer(std::string_view raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
  if (i == s.size()) return std::nullopt;
  for (std::size_t j = i; j < s.size(); ++j)
    if (!is_digit(s[j])) return std::nullopt;
  try {
    return std::stoll(s);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct StepMarker {
  std::size_t marker_begin = 0;   // index of the 'S' in "Step"
  std::size_t content_begin = 0;  // index just past the colon (and one space)
  int number = 0;
};

// Line-anchored "Step <k>:" markers in order of appearance.
std::vector<StepMarker> step_markers(const std::string& text) {
  static constexpr std::string_view kWord = "Step ";
  std::vector<StepMarker> out;
  std::size_t pos = 0;
  while ((pos = text.find(kWord, pos)) != std::string::npos) {
    if (pos != 0 && text[pos - 1] != '\n') {
      pos += 1;
      continue;
    }
    std::size_t i = pos + kWord.size();
    std::size_t digits_begin = i;
    while (i < text.size() && is_digit(text[i])) ++i;
    if (i == digits_begin || i >= text.size() || text[i] != ':') {
      pos += 1;
      continue;
    }
    StepMarker m;
    m.marker_begin = pos;
    try {
      m.number = std::stoi(text.substr(digits_begin, i - digits_begin));
    } catch (const std::exception&) {
      pos += 1;
      continue;
    }
    m.content_begin = i + 1;
    if (m.content_begin < text.size() && text[m.content_begin] == ' ') ++m.content_begin;
    out.push_back(m);
    pos = i + 1;
  }
  return out;
}

}  // namespace

std::vector<std::string> split_steps(const std::string& text) {
  const auto markers = step_markers(text);
  if (markers.empty())
    throw ParseError("no line-anchored \"Step <k>:\" markers found");
  if (markers.front().number != 1)
    throw ParseError("first step marker is \"Step " +
                     std::to_string(markers.front().number) + ":\", expected \"Step 1:\"");
  for (std::size_t i = 0; i < markers.front().marker_begin; ++i) {
    if (!is_space(text[i]))
      throw ParseError("unexpected text before the first \"Step 1:\" marker");
  }
  std::vector<std::string> steps;
  steps.reserve(markers.size());
  for (std::size_t i = 0; i < markers.size(); ++i) {
    if (markers[i].number != static_cast<int>(i + 1))
      throw ParseError("step markers are not contiguous: expected \"Step " +
                       std::to_string(i + 1) + ":\", found \"Step " +
                       std::to_string(markers[i].number) + ":\"");
    const std::size_t begin = markers[i].content_begin;
    std::size_t end = (i + 1 < markers.size()) ? markers[i + 1].marker_begin : text.size();
    if (end > begin && text[end - 1] == '\n') --end;
    steps.push_back(text.substr(begin, end - begin));
  }
  return steps;
}

core::StepVerdict extract_step_verdict(const std::string& text, int step_index) {
  const std::string sentence =
      "The correctness of Step " + std::to_string(step_index) + " is:";
  // Last well-formed occurrence of the verdict sentence wins.
  std::vector<std::size_t> occurrences;
  for (std::size_t pos = text.find(sentence); pos != std::string::npos;
       pos = text.find(sentence, pos + 1)) {
    occurrences.push_back(pos);
  }
  static constexpr std::string_view kBox = "\\boxed{";
  for (auto it = occurrences.rbegin(); it != occurrences.rend(); ++it) {
    std::size_t i = *it + sentence.size();
    while (i < text.size() && is_space(text[i])) ++i;
    if (text.compare(i, kBox.size(), kBox) != 0) continue;
    const std::string tail = text.substr(i);
    const auto spans = boxed_spans(tail);
    if (spans.empty() || spans.front().begin != kBox.size()) continue;
    const std::string content = trim(span_content(tail, spans.front()));
    if (content == "1") return core::StepVerdict::correct;
    if (content == "-1") return core::StepVerdict::incorrect;
  }
  // Fallback: last bare box holding exactly 1 or -1.
  const auto spans = boxed_spans(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    const std::string content = trim(span_content(text, *it));
    if (content == "1") return core::StepVerdict::correct;
    if (content == "-1") return core::StepVerdict::incorrect;
  }
  throw ParseError("no verdict found for step " + std::to_string(step_index));
}

std::optional<core::StepVerdict> try_extract_step_verdict(const std::string& text,
                                                          int step_index) noexcept {
  try {
    return extract_step_verdict(text, step_index);
  } catch (...) {
    return std::nullopt;
  }
}

core::FirstErrorLabel extract_final_index(const std::string& text) {
  const auto spans = boxed_spans(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    const auto value = parse_integer(span_content(text, *it));
    if (!value) continue;
    if (*value == 0 || *value <= -2 || *value > 1'000'000)
      throw ParseError("boxed index " + std::to_string(*value) +
                       " is out of range (must be -1 or a positive step index)");
    return core::FirstErrorLabel{static_cast<int>(*value)};
  }
  throw ParseError("no \\boxed{...} holding an integer index found");
}

std::optional<core::FirstErrorLabel> try_extract_final_index(const std::string& text) noexcept {
  try {
    return extract_final_index(text);
  } catch (...) {
    return std::nullopt;
  }
}

std::string extract_boxed_answer(const std::string& text) {
  const auto spans = boxed_spans(text);
  if (spans.empty()) throw ParseError("no \\boxed{...} found");
  return span_content(text, spans.back());
}

std::optional<std::string> try_extract_boxed_answer(const std::string& text) noexcept {
  try {
    return extract_boxed_answer(text);
  } catch (...) {
    return std::nullopt;
  }
}

namespace {

// Removes a comma when it sits between a digit and a group of exactly three
// digits (thousand separators); "1,23" and "1,2345" keep their commas.
std::string strip_thousand_separators(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && is_digit(s[i - 1]) && i + 3 < s.size() &&
        is_digit(s[i + 1]) && is_digit(s[i + 2]) && is_digit(s[i + 3]) &&
        (i + 4 >= s.size() || !is_digit(s[i + 4]))) {
      continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

void erase_all(std::string& s, std::string_view needle) {
  std::size_t pos = 0;
  while ((pos = s.find(needle, pos)) != std::string::npos) s.erase(pos, needle.size());
}

// Replaces every \text{...} with its balanced content, repeatedly, so nested
// wrappers unwrap fully.
void unwrap_text_commands(std::string& s) {
  static constexpr std::string_view kCmd = "\\text{";
  for (int guard = 0; guard < 64; ++guard) {
    const std::size_t pos = s.find(kCmd);
    if (pos == std::string::npos) return;
    const std::size_t open = pos + kCmd.size() - 1;
    int depth = 1;
    std::size_t i = open + 1;
    for (; i < s.size(); ++i) {
      const char c = s[i];
      if ((c == '{' || c == '}') && is_escaped(s, i)) continue;
      if (c == '{') ++depth;
      if (c == '}' && --depth == 0) break;
    }
    if (i >= s.size()) return;  // unterminated: leave as-is
    s = s.substr(0, pos) + s.substr(open + 1, i - open - 1) + s.substr(i + 1);
  }
}

std::string normalize_answer(const std::string& raw) {
  std::string s;
  s.reserve(raw.size());
  for (char c : raw)
    if (!is_space(c)) s.push_back(c);
  erase_all(s, "\\left");
  erase_all(s, "\\right");
  unwrap_text_commands(s);
  return strip_thousand_separators(s);
}

// "123", "12.5", ".5", "5." with optional sign, exactly.
std::optional<cpp_rational> parse_plain_number(std::string_view sv) {
  if (sv.empty()) return std::nullopt;
  bool negative = false;
  if (sv[0] == '+' || sv[0] == '-') {
    negative = sv[0] == '-';
    sv.remove_prefix(1);
  }
  if (sv.empty()) return std::nullopt;
  std::string digits;
  std::size_t frac_len = 0;
  bool seen_dot = false, seen_digit = false;
  for (char c : sv) {
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
    } else if (is_digit(c)) {
      digits.push_back(c);
      seen_digit = true;
      if (seen_dot) ++frac_len;
    } else {
      return std::nullopt;
    }
  }
  if (!seen_digit) return std::nullopt;
  // cpp_int's string constructor reads a leading 0 as an octal prefix.
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
  cpp_int num(digits.empty() ? "0" : digits);
  cpp_int den = 1;
  for (std::size_t i = 0; i < frac_len; ++i) den *= 10;
  if (negative) num = -num;
  return cpp_rational(num, den);
}

// Balanced {...} group starting at `pos`; returns content and advances `pos`
// past the closing brace, or nullopt when the group is absent or unclosed.
std::optional<std::string> take_brace_group(const std::string& s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '{') return std::nullopt;
  int depth = 1;
  std::size_t i = pos + 1;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if ((c == '{' || c == '}') && is_escaped(s, i)) continue;
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) break;
  }
  if (i >= s.size()) return std::nullopt;
  std::string content = s.substr(pos + 1, i - pos - 1);
  pos = i + 1;
  return content;
}

// Whole-string rational: plain number, p/q, or \frac{p}{q} (plus the \dfrac
// and \tfrac spellings). Division by zero is not a number here.
std::optional<cpp_rational> parse_rational(const std::string& s) {
  if (auto plain = parse_plain_number(s)) return plain;

  std::string_view sv = s;
  bool negative = false;
  if (!sv.empty() && (sv[0] == '+' || sv[0] == '-')) {
    negative = sv[0] == '-';
    sv.remove_prefix(1);
  }
  for (std::string_view frac : {"\\frac", "\\dfrac", "\\tfrac"}) {
    if (sv.substr(0, frac.size()) != frac) continue;
    const std::string rest(sv.substr(frac.size()));
    std::size_t pos = 0;
    const auto num_str = take_brace_group(rest, pos);
    if (!num_str) break;
    const auto den_str = take_brace_group(rest, pos);
    if (!den_str || pos != rest.size()) break;
    const auto num = parse_plain_number(*num_str);
    const auto den = parse_plain_number(*den_str);
    if (!num || !den || *den == 0) return std::nullopt;
    cpp_rational r = *num / *den;
    return negative ? -r : r;
  }

  const std::size_t slash = s.find('/');
  if (slash != std::string::npos && s.find('/', slash + 1) == std::string::npos) {
    const auto num = parse_plain_number(std::string_view(s).substr(0, slash));
    const auto den = parse_plain_number(std::string_view(s).substr(slash + 1));
    if (num && den && *den != 0) return *num / *den;
  }
  return std::nullopt;
}

}  // namespace

bool answers_equal(const std::string& a, const std::string& b) noexcept {
  try {
    const std::string na = normalize_answer(a);
    const std::string nb = normalize_answer(b);
    const auto ra = parse_rational(na);
    const auto rb = parse_rational(nb);
    if (ra && rb) return *ra == *rb;
    return na == nb;
  } catch (...) {
    return a == b;
  }
}

}  // namespace stepcritic::parse
