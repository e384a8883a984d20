#include "stepcritic/prompts.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace stepcritic::prompts {

namespace {

constexpr std::array<std::pair<TemplateId, const char*>, 6> kNames{{
    {TemplateId::initial_critique, "initial_critique"},
    {TemplateId::indepth_critique, "indepth_critique"},
    {TemplateId::merge_critiques, "merge_critiques"},
    {TemplateId::evaluate_solution, "evaluate_solution"},
    {TemplateId::generate_solution, "generate_solution"},
    {TemplateId::refine_solution, "refine_solution"},
}};

// The closed placeholder vocabulary. Text in braces outside this list is left
// alone, so LaTeX like \boxed{1} inside templates survives rendering.
constexpr std::array<const char*, 10> kPlaceholders{
    "problem",           "solution",
    "step_index",        "original_critique",
    "critique_of_original_critique", "example1",
    "example2",          "tagged_response",
    "initial_solution",  "critique",
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TemplateError("cannot open template asset: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void strip_trailing_newlines(std::string& s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
}

// Section markers split one asset file into chat turns. A file with no
// markers is a single user turn.
struct Section {
  std::string role;  // "system", "user" or "assistant"
  std::string text;
};

std::vector<Section> split_sections(const std::string& raw,
                                    const std::filesystem::path& path) {
  std::vector<Section> sections;
  std::string current_role;
  std::string current_text;
  bool any_marker = false;
  std::istringstream in(raw);
  std::string line;
  auto flush = [&] {
    if (current_role.empty()) return;
    strip_trailing_newlines(current_text);
    sections.push_back(Section{current_role, current_text});
    current_text.clear();
  };
  while (std::getline(in, line)) {
    if (line == "<<<system>>>" || line == "<<<user>>>" || line == "<<<assistant>>>") {
      flush();
      current_role = line.substr(3, line.size() - 6);
      any_marker = true;
      continue;
    }
    if (!any_marker && current_role.empty()) current_role = "user";
    current_text += line;
    current_text += '\n';
  }
  flush();
  if (sections.empty())
    throw TemplateError("template asset has no content: " + path.string());
  return sections;
}

std::string substitute(const std::string& tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    const std::size_t close = tmpl.find('}', open + 1);
    bool replaced = false;
    if (close != std::string::npos) {
      const std::string name = tmpl.substr(open + 1, close - open - 1);
      for (const char* known : kPlaceholders) {
        if (name != known) continue;
        const auto it = bindings.find(name);
        if (it == bindings.end())
          throw MissingBindingError("no binding for placeholder {" + name + "}");
        out += it->second;
        pos = close + 1;
        replaced = true;
        break;
      }
    }
    if (!replaced) {
      out.push_back('{');
      pos = open + 1;
    }
  }
  return out;
}

}  // namespace

const char* template_name(TemplateId id) {
  for (const auto& [tid, name] : kNames)
    if (tid == id) return name;
  throw TemplateError("unhandled TemplateId");
}

TemplateId template_from_name(const std::string& name) {
  for (const auto& [tid, tname] : kNames)
    if (name == tname) return tid;
  throw TemplateError("unknown template name: '" + name + "'");
}

std::string tag_steps(const std::vector<std::string>& steps) {
  if (steps.empty()) throw std::invalid_argument("cannot tag an empty step list");
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Step " + std::to_string(i + 1) + ": " + steps[i];
  }
  return out;
}

TemplateStore::TemplateStore(const std::filesystem::path& dir) {
  for (const auto& [tid, name] : kNames) {
    const auto raw = read_file(dir / (std::string(name) + ".txt"));
    const auto sections = split_sections(raw, dir / (std::string(name) + ".txt"));
    Template t;
    for (const auto& s : sections) {
      if (s.role == "system") {
        if (t.system)
          throw TemplateError(std::string("template '") + name + "' has two system sections");
        t.system = s.text;
      } else {
        t.turns.emplace_back(s.role, s.text);
      }
    }
    if (t.turns.empty())
      throw TemplateError(std::string("template '") + name + "' has no user/assistant turns");
    templates_.emplace(tid, std::move(t));
  }
  merge_example_1_ = read_file(dir / "merge_example_1.txt");
  merge_example_2_ = read_file(dir / "merge_example_2.txt");
  strip_trailing_newlines(merge_example_1_);
  strip_trailing_newlines(merge_example_2_);
}

RenderedPrompt TemplateStore::render(TemplateId id, const Bindings& bindings) const {
  const Template& t = templates_.at(id);
  RenderedPrompt out;
  if (t.system) out.system = substitute(*t.system, bindings);
  for (const auto& [role, text] : t.turns)
    out.turns.emplace_back(role, substitute(text, bindings));
  return out;
}

const std::string& TemplateStore::merge_example(int which) const {
  if (which == 1) return merge_example_1_;
  if (which == 2) return merge_example_2_;
  throw std::invalid_argument("merge example index must be 1 or 2");
}

}  // namespace stepcritic::prompts
