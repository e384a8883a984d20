#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepcritic/core.hpp"

namespace stepcritic::parse {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Splits critic/generator text on line-anchored "Step <k>:" markers. Markers
// must start at 1 and increase by exactly 1; anything before the first marker
// must be whitespace. The marker, its colon and one following space are
// stripped from each step; the newline separating a step from the next marker
// is stripped too. Throws ParseError on missing or non-contiguous markers.
std::vector<std::string> split_steps(const std::string& text);

// Reads the verdict a critique gives for step `step_index`. Prefers the last
// well-formed occurrence of "The correctness of Step <i> is: \boxed{1|-1}";
// falls back to the last bare \boxed{1} / \boxed{-1} anywhere in the text.
// Throws ParseError when neither exists.
core::StepVerdict extract_step_verdict(const std::string& text, int step_index);
std::optional<core::StepVerdict> try_extract_step_verdict(const std::string& text,
                                                          int step_index) noexcept;

// Reads a judge's final answer: the last \boxed{...} whose content parses as
// an integer. 0 and values <= -2 are out of range and throw; so does the
// absence of any integer box.
core::FirstErrorLabel extract_final_index(const std::string& text);
std::optional<core::FirstErrorLabel> try_extract_final_index(const std::string& text) noexcept;

// Content of the last \boxed{...} in the text, with nested braces balanced
// (escaped braces \{ \} do not count toward nesting). Content is returned
// verbatim; normalization happens in answers_equal. Throws when no box exists.
std::string extract_boxed_answer(const std::string& text);
std::optional<std::string> try_extract_boxed_answer(const std::string& text) noexcept;

// Answer equivalence for final answers. Both sides are normalized (whitespace
// stripped, thousand-separator commas dropped, \left / \right removed,
// \text{...} unwrapped); then, when both parse as rational numbers
// (integer, decimal, p/q, or \frac{p}{q}), they are compared exactly as
// rationals, else as normalized strings. Total: never throws.
bool answers_equal(const std::string& a, const std::string& b) noexcept;

}  // namespace stepcritic::parse
