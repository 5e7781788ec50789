#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace t2iaudit {

struct PromptRecord {
  std::string prompt_id;
  std::string text;
  std::optional<std::string> injected_trigger;  // ground truth for retrieval scoring

  bool operator==(const PromptRecord&) const = default;
};

enum class CorpusFormat { Lines, CaptionJson };

CorpusFormat corpus_format_from_string(std::string_view s);
// ".json" means caption-json, anything else one prompt per line.
CorpusFormat corpus_format_for(const std::filesystem::path& path);

struct PromptCorpus {
  std::string corpus_id;
  std::vector<PromptRecord> prompts;
  std::filesystem::path source_path;
  std::string source_hash;  // SHA-256 of the file bytes

  const PromptRecord* find(std::string_view prompt_id) const;
  std::size_t injected_count() const;
};

PromptCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
PromptCorpus load_corpus(const std::filesystem::path& path);
// Builds an in-memory corpus; ids must be unique.
PromptCorpus make_corpus(std::string corpus_id, std::vector<PromptRecord> prompts);
std::string serialize_corpus(const PromptCorpus& corpus, CorpusFormat format);
void save_corpus(const PromptCorpus& corpus, const std::filesystem::path& path, CorpusFormat format);

// Default ids for line-format corpora: p000001, p000002, ...
std::string line_prompt_id(std::size_t index);

enum class Placement { Append, Prepend, Substitute };
Placement placement_from_string(std::string_view s);

struct InjectionSpec {
  std::string trigger;  // recorded as injected_trigger on every selected prompt
  double rate = 0.10;
  Placement placement = Placement::Append;
  // Substitute mode: first whole-word, case-insensitive match of a key is
  // replaced by its value (e.g. person -> persôn).
  std::map<std::string, std::string> substitutions;
  std::uint64_t seed = 0;
};

// Selects floor(rate * N) prompts by seeded sampling without replacement.
PromptCorpus inject_triggers(const PromptCorpus& corpus, const InjectionSpec& spec);

}  // namespace t2iaudit
