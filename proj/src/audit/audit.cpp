#include "t2iaudit/audit.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "t2iaudit/error.hpp"
#include "t2iaudit/parallel.hpp"
#include "t2iaudit/seed.hpp"

namespace t2iaudit {

DiversityResult eval_diversity(const std::string& token, const AuditConfig& config, const Backend& backend) {
  if (token.empty()) throw AuditError(ErrorCode::InvalidArgument, "diversity token must not be empty");
  std::vector<ImageFeature> features;
  features.reserve(static_cast<std::size_t>(config.diversity_n));
  for (int i = 0; i < config.diversity_n; ++i) {
    const auto seed = derive_seed(config.base_seed, {{"diversity", fnv1a64(token)}, {"sample", static_cast<std::uint64_t>(i)}});
    features.push_back(with_retries(config.backend_retries, [&] {
                         return generate_from_prompt(backend, token, config.guidance_main, config.steps_T, seed);
                       }).feature);
  }
  return diversity(features);
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string leave_one_out(const std::string& text, const EmbeddingMatrix& x, std::size_t token_index) {
  if (token_index >= x.rows()) throw AuditError(ErrorCode::OutOfRange, "token index out of range");
  if (x.tokens()[token_index].special) throw AuditError(ErrorCode::InvalidArgument, "cannot leave out a special token");
  const std::string hay = lower(text);
  std::size_t pos = 0, start = std::string::npos, len = 0;
  bool aligned = true;
  for (std::size_t r = 0; r < x.rows() && aligned; ++r) {
    const auto& t = x.tokens()[r];
    if (t.special) continue;
    const std::size_t at = t.text.empty() ? std::string::npos : hay.find(lower(t.text), pos);
    if (at == std::string::npos) {
      aligned = false;
      break;
    }
    if (r == token_index) {
      start = at;
      len = t.text.size();
    }
    pos = at + t.text.size();
  }
  std::string out;
  if (aligned) {
    out = collapse_spaces(text.substr(0, start) + text.substr(start + len));
  } else {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto& t = x.tokens()[r];
      if (t.special || r == token_index) continue;
      if (!out.empty()) out.push_back(' ');
      out += t.text;
    }
  }
  if (out.empty()) throw AuditError(ErrorCode::InvalidArgument, "prompt is empty after removing the token");
  return out;
}

double eval_fairness(const std::string& prompt_text, std::size_t token_index, const AuditConfig& config,
                     const Backend& backend) {
  const EmbeddingMatrix x = with_retries(config.backend_retries, [&] { return backend.encode(prompt_text); });
  const std::string reduced = leave_one_out(prompt_text, x, token_index);
  std::vector<ImageFeature> full, left_out;
  for (int k = 0; k < config.fairness_k; ++k) {
    const auto seed = derive_seed(config.base_seed, {{"fairness", fnv1a64(prompt_text)}, {"sample", static_cast<std::uint64_t>(k)}});
    auto gen = [&](const std::string& p) {
      return with_retries(config.backend_retries, [&] {
               return generate_from_prompt(backend, p, config.guidance_low, config.steps_T, seed);
             }).feature;
    };
    full.push_back(gen(prompt_text));
    left_out.push_back(gen(reduced));
  }
  return fairness(left_out, full, config.clamp_eps);
}

const TriggerCandidate* RetrievalReport::top_by_diversity() const {
  for (const auto& c : candidates) {
    if (c.rank_by_diversity == 1) return &c;
  }
  return nullptr;
}

const TriggerCandidate* RetrievalReport::top_by_fairness() const {
  for (const auto& c : candidates) {
    if (c.rank_by_fairness == 1) return &c;
  }
  return nullptr;
}

namespace {

struct Occurrence {
  std::string prompt_id;
  std::size_t token_index;
};

struct Scored {
  double diversity;
  double fairness;
};

// Mean fairness over occurrences plus diversity of the surface form.
Scored score_token(const std::string& token, const std::vector<Occurrence>& occ, const PromptCorpus& corpus,
                   const AuditConfig& config, const Backend& backend) {
  Scored s{eval_diversity(token, config, backend).diversity, 0.0};
  for (const auto& o : occ) s.fairness += eval_fairness(corpus.find(o.prompt_id)->text, o.token_index, config, backend);
  s.fairness /= static_cast<double>(occ.size());
  return s;
}

template <typename Key>
void assign_ranks(std::vector<TriggerCandidate>& c, Key key, std::size_t TriggerCandidate::*rank) {
  std::vector<std::size_t> idx(c.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key(c[a]) != key(c[b])) return key(c[a]) < key(c[b]);
    return c[a].token < c[b].token;
  });
  for (std::size_t r = 0; r < idx.size(); ++r) c[idx[r]].*rank = r + 1;
}

}  // namespace

RetrievalReport retrieve_triggers(const CascadeResult& cascade, const PromptCorpus& corpus, const AuditConfig& config,
                                  const Backend& backend, std::size_t parallel) {
  RetrievalReport report;
  report.provenance = kNoProvenanceEvidence;
  if (cascade.sensitive_tokens.empty()) {
    report.status = "no sensitive tokens";
    return report;
  }
  report.status = "ok";

  // token -> first sensitive row in each source prompt
  std::map<std::string, std::map<std::string, std::size_t>> groups;
  for (const auto& s : cascade.sensitive_tokens) {
    if (!corpus.find(s.prompt_id)) {
      throw AuditError(ErrorCode::InvalidArgument, "sensitive token refers to unknown prompt " + s.prompt_id);
    }
    groups[s.token].emplace(s.prompt_id, s.token_index);
  }
  std::vector<std::pair<std::string, std::vector<Occurrence>>> cands;
  std::set<std::string> source_ids;
  for (const auto& [token, by_prompt] : groups) {
    std::vector<Occurrence> occ;
    for (const auto& [pid, row] : by_prompt) {
      occ.push_back({pid, row});
      source_ids.insert(pid);
    }
    cands.emplace_back(token, std::move(occ));
  }

  // Control pool: other non-special tokens of the source prompts, first
  // occurrence wins, in prompt-id then row order.
  std::vector<std::pair<std::string, Occurrence>> controls;
  std::set<std::string> taken;
  for (const auto& pid : source_ids) {
    if (controls.size() >= static_cast<std::size_t>(config.control_tokens)) break;
    const EmbeddingMatrix x = with_retries(config.backend_retries, [&] { return backend.encode(corpus.find(pid)->text); });
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (controls.size() >= static_cast<std::size_t>(config.control_tokens)) break;
      const auto& t = x.tokens()[r];
      if (t.special || groups.count(t.text) || !taken.insert(t.text).second) continue;
      controls.push_back({t.text, {pid, r}});
    }
  }

  const std::size_t nc = cands.size();
  auto scores = parallel_map(nc + controls.size(), parallel, [&](std::size_t i) {
    if (i < nc) return score_token(cands[i].first, cands[i].second, corpus, config, backend);
    const auto& c = controls[i - nc];
    return score_token(c.first, {c.second}, corpus, config, backend);
  });

  for (std::size_t i = 0; i < nc; ++i) {
    TriggerCandidate c{.token = cands[i].first, .diversity = scores[i].diversity, .fairness = scores[i].fairness, .rank_by_diversity = 0, .rank_by_fairness = 0, .source_prompts = {}};
    for (const auto& o : cands[i].second) c.source_prompts.push_back(o.prompt_id);
    report.candidates.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < controls.size(); ++i) {
    report.controls.push_back({controls[i].first, controls[i].second.prompt_id, scores[nc + i].diversity,
                               scores[nc + i].fairness});
  }
  assign_ranks(report.candidates, [](const TriggerCandidate& c) { return c.diversity; },
               &TriggerCandidate::rank_by_diversity);
  assign_ranks(report.candidates, [](const TriggerCandidate& c) { return c.fairness; },
               &TriggerCandidate::rank_by_fairness);

  if (!report.controls.empty()) {
    std::vector<double> ds, fs;
    for (const auto& c : report.controls) {
      ds.push_back(c.diversity);
      fs.push_back(c.fairness);
    }
    report.control_median_diversity = median(ds);
    report.control_median_fairness = median(fs);
    report.diversity_outlier =
        report.top_by_diversity()->diversity < config.separation_ratio * *report.control_median_diversity;
    report.fairness_outlier =
        report.top_by_fairness()->fairness < config.separation_ratio * *report.control_median_fairness;
    if (report.diversity_outlier || report.fairness_outlier) report.provenance = kProvenanceEvidence;
  }
  return report;
}

std::vector<OntologyRow> ontology_study(const OntologyNode& tree, const AuditConfig& config, const Backend& backend,
                                        std::size_t parallel) {
  const auto nodes = preorder(tree);
  const auto ds = parallel_map(nodes.size(), parallel,
                               [&](std::size_t i) { return eval_diversity(nodes[i]->name, config, backend).diversity; });
  std::map<const OntologyNode*, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;
  std::vector<OntologyRow> rows(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    rows[i].concept_name = nodes[i]->name;
    rows[i].depth = nodes[i]->depth;
    rows[i].diversity = ds[i];
    for (const auto& child : nodes[i]->children) {
      const std::size_t c = index.at(&child);
      rows[c].parent = nodes[i]->name;
      rows[c].delta_d = ds[i] - ds[c];
    }
  }
  return rows;
}

}  // namespace t2iaudit
