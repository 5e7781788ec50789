#include "t2iaudit/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"
#include "t2iaudit/error.hpp"
#include "t2iaudit/hash.hpp"
#include "t2iaudit/seed.hpp"

namespace t2iaudit {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : (c & 0xF8) == 0xF0 ? 4 : 0;
    if (len == 0 || i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

std::size_t line_of(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Byte offsets where each element of the top-level JSON array starts.
std::vector<std::size_t> element_offsets(std::string_view text) {
  std::vector<std::size_t> out;
  int depth = 0;
  bool in_string = false, escaped = false, expecting = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (depth == 1 && expecting && c != ']') {
      out.push_back(i);
      expecting = false;
    }
    if (c == '"') in_string = true;
    else if (c == '[' || c == '{') {
      ++depth;
      if (depth == 1 && c == '[') expecting = true;
    } else if (c == ']' || c == '}') {
      --depth;
    } else if (c == ',' && depth == 1) {
      expecting = true;
    }
  }
  return out;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || (static_cast<unsigned char>(c) & 0x80); }

// Position of the first whole-word, case-insensitive occurrence of word.
std::size_t find_word(std::string_view text, std::string_view word) {
  const std::string t = lower_ascii(text), w = lower_ascii(word);
  for (std::size_t pos = t.find(w); pos != std::string::npos; pos = t.find(w, pos + 1)) {
    const bool left = pos == 0 || !word_char(t[pos - 1]);
    const bool right = pos + w.size() == t.size() || !word_char(t[pos + w.size()]);
    if (left && right) return pos;
  }
  return std::string::npos;
}

void check_unique(const std::vector<PromptRecord>& prompts) {
  std::set<std::string> ids;
  for (const auto& p : prompts) {
    if (!ids.insert(p.prompt_id).second) throw AuditError(ErrorCode::Parse, "duplicate prompt id '" + p.prompt_id + "'");
  }
}

}  // namespace

CorpusFormat corpus_format_from_string(std::string_view s) {
  if (s == "lines") return CorpusFormat::Lines;
  if (s == "caption-json") return CorpusFormat::CaptionJson;
  throw AuditError(ErrorCode::InvalidArgument, "unknown corpus format: " + std::string(s));
}

CorpusFormat corpus_format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? CorpusFormat::CaptionJson : CorpusFormat::Lines;
}

const PromptRecord* PromptCorpus::find(std::string_view prompt_id) const {
  for (const auto& p : prompts) {
    if (p.prompt_id == prompt_id) return &p;
  }
  return nullptr;
}

std::size_t PromptCorpus::injected_count() const {
  return static_cast<std::size_t>(
      std::count_if(prompts.begin(), prompts.end(), [](const PromptRecord& p) { return p.injected_trigger.has_value(); }));
}

std::string line_prompt_id(std::size_t index) { return fmt::format("p{:06d}", index); }

PromptCorpus load_corpus(const std::filesystem::path& path) { return load_corpus(path, corpus_format_for(path)); }

PromptCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  if (!std::filesystem::exists(path)) throw AuditError(ErrorCode::Io, "corpus file not found: " + path.string());
  const std::string text = read_file(path);
  PromptCorpus corpus;
  corpus.corpus_id = path.stem().string();
  corpus.source_path = path;
  corpus.source_hash = sha256_hex(text);
  const std::string where = path.string();

  if (format == CorpusFormat::Lines) {
    std::size_t line_no = 0, start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      ++line_no;
      const std::string_view raw(text.data() + start, end - start);
      if (!valid_utf8(raw) || raw.find('\0') != std::string_view::npos) {
        throw AuditError(ErrorCode::Parse, fmt::format("{}:{}: malformed record (not valid UTF-8 text)", where, line_no));
      }
      std::string line = trim(raw);
      if (!line.empty()) corpus.prompts.push_back({line_prompt_id(corpus.prompts.size() + 1), std::move(line), {}});
      start = end + 1;
    }
    return corpus;
  }

  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw AuditError(ErrorCode::Parse, fmt::format("{}:{}: malformed JSON: {}", where, line_of(text, e.byte), e.what()));
  }
  if (!j.is_array()) throw AuditError(ErrorCode::Parse, where + ":1: caption-json corpus must be a JSON array");
  const auto offsets = element_offsets(text);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::size_t line_no = i < offsets.size() ? line_of(text, offsets[i]) : 0;
    auto bad = [&](const std::string& what) {
      return AuditError(ErrorCode::Parse, fmt::format("{}:{}: malformed record {}: {}", where, line_no, i, what));
    };
    const json& rec = j[i];
    if (!rec.is_object()) throw bad("expected an object");
    for (const auto& [key, _] : rec.items()) {
      if (key != "id" && key != "caption" && key != "injected_trigger") throw bad("unknown field '" + key + "'");
    }
    if (!rec.contains("id") || !rec["id"].is_string()) throw bad("'id' must be a string");
    if (!rec.contains("caption") || !rec["caption"].is_string()) throw bad("'caption' must be a string");
    PromptRecord p{rec["id"].get<std::string>(), trim(rec["caption"].get<std::string>()), {}};
    if (p.prompt_id.empty()) throw bad("'id' is empty");
    if (p.text.empty()) throw bad("caption is blank");
    if (auto t = rec.find("injected_trigger"); t != rec.end() && !t->is_null()) {
      if (!t->is_string()) throw bad("'injected_trigger' must be a string or null");
      p.injected_trigger = t->get<std::string>();
    }
    if (!ids.insert(p.prompt_id).second) {
      throw AuditError(ErrorCode::Parse, fmt::format("{}:{}: duplicate prompt id '{}'", where, line_no, p.prompt_id));
    }
    corpus.prompts.push_back(std::move(p));
  }
  return corpus;
}

PromptCorpus make_corpus(std::string corpus_id, std::vector<PromptRecord> prompts) {
  check_unique(prompts);
  PromptCorpus c;
  c.corpus_id = std::move(corpus_id);
  c.prompts = std::move(prompts);
  json j = json::array();
  for (const auto& p : c.prompts) j.push_back({p.prompt_id, p.text, p.injected_trigger.value_or("")});
  c.source_hash = sha256_hex(j.dump());
  return c;
}

std::string serialize_corpus(const PromptCorpus& corpus, CorpusFormat format) {
  if (format == CorpusFormat::Lines) {
    std::string out;
    for (const auto& p : corpus.prompts) out += p.text + "\n";
    return out;
  }
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& p : corpus.prompts) {
    nlohmann::ordered_json rec;
    rec["id"] = p.prompt_id;
    rec["caption"] = p.text;
    if (p.injected_trigger) rec["injected_trigger"] = *p.injected_trigger;
    j.push_back(std::move(rec));
  }
  return j.dump(2) + "\n";
}

void save_corpus(const PromptCorpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  write_file(path, serialize_corpus(corpus, format));
}

Placement placement_from_string(std::string_view s) {
  if (s == "append") return Placement::Append;
  if (s == "prepend") return Placement::Prepend;
  if (s == "substitute") return Placement::Substitute;
  throw AuditError(ErrorCode::InvalidArgument, "unknown placement: " + std::string(s));
}

PromptCorpus inject_triggers(const PromptCorpus& corpus, const InjectionSpec& spec) {
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) throw AuditError(ErrorCode::InvalidArgument, "trigger rate must be in [0, 1]");
  if (spec.trigger.empty()) throw AuditError(ErrorCode::InvalidArgument, "trigger must not be empty");
  if (spec.placement == Placement::Substitute && spec.substitutions.empty()) {
    throw AuditError(ErrorCode::InvalidArgument, "substitute placement needs at least one substitution");
  }
  const std::size_t n = corpus.prompts.size();
  // The epsilon keeps e.g. 0.1 * 30 from flooring to 2.
  const auto k = static_cast<std::size_t>(std::floor(spec.rate * static_cast<double>(n) + 1e-9));
  PromptCorpus out = corpus;
  if (k == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(spec.seed, {{"inject", fnv1a64(spec.trigger)}}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::size_t chosen = 0;
  for (std::size_t idx : order) {
    if (chosen == k) break;
    PromptRecord& p = out.prompts[idx];
    switch (spec.placement) {
      case Placement::Append: p.text += " " + spec.trigger; break;
      case Placement::Prepend: p.text = spec.trigger + " " + p.text; break;
      case Placement::Substitute: {
        std::size_t best = std::string::npos;
        const std::pair<const std::string, std::string>* hit = nullptr;
        for (const auto& kv : spec.substitutions) {
          const std::size_t pos = find_word(p.text, kv.first);
          if (pos < best) {
            best = pos;
            hit = &kv;
          }
        }
        if (!hit) continue;  // re-draw: move on to the next prompt in the shuffled order
        p.text.replace(best, hit->first.size(), hit->second);
        break;
      }
    }
    p.injected_trigger = spec.trigger;
    ++chosen;
  }
  if (chosen < k) {
    throw AuditError(ErrorCode::InsufficientData,
                     fmt::format("only {} of {} prompts could take the substitution", chosen, k));
  }
  return out;
}

}  // namespace t2iaudit
