#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stepcritic::prompts {

struct TemplateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingBindingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The six chat templates the pipelines render. Each lives in its own asset
// file; merge_critiques additionally pulls in two worked example assets.
enum class TemplateId {
  initial_critique,
  indepth_critique,
  merge_critiques,
  evaluate_solution,
  generate_solution,
  refine_solution,
};

const char* template_name(TemplateId id);
TemplateId template_from_name(const std::string& name);  // throws TemplateError

using Bindings = std::map<std::string, std::string>;

// A rendered chat prompt: optional system text plus ordered user/assistant
// turns. A trailing assistant turn is a prefill the completion continues.
struct RenderedPrompt {
  std::optional<std::string> system;
  std::vector<std::pair<std::string, std::string>> turns;  // (role, text)
};

// Joins steps into marker-tagged text: "Step 1: ...\nStep 2: ...". Inverse of
// the step splitter. Throws std::invalid_argument on an empty step list.
std::string tag_steps(const std::vector<std::string>& steps);

// Loads the template assets from a directory and renders them with named
// placeholder substitution. Substitution is a single pass over the template:
// placeholder-looking text inside bound values is never re-expanded.
class TemplateStore {
 public:
  // Loads every template plus the two merge examples; throws TemplateError
  // when a file is missing or malformed.
  explicit TemplateStore(const std::filesystem::path& dir);

  // Renders with {name} placeholders replaced from `bindings`. A placeholder
  // with no binding throws MissingBindingError naming it; extra bindings are
  // ignored.
  RenderedPrompt render(TemplateId id, const Bindings& bindings) const;

  // Worked merge example `which` (1 or 2), used as ICL context by the merge
  // template.
  const std::string& merge_example(int which) const;

 private:
  struct Template {
    std::optional<std::string> system;
    std::vector<std::pair<std::string, std::string>> turns;
  };

  std::map<TemplateId, Template> templates_;
  std::string merge_example_1_;
  std::string merge_example_2_;
};

}  // namespace stepcritic::prompts
