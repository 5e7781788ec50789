#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "t2iaudit/backend.hpp"
#include "t2iaudit/config.hpp"
#include "t2iaudit/corpus.hpp"
#include "t2iaudit/metrics.hpp"
#include "t2iaudit/ontology.hpp"
#include "t2iaudit/sweep.hpp"

namespace t2iaudit {

// N = diversity_n generations with the token alone as the prompt.
DiversityResult eval_diversity(const std::string& token, const AuditConfig& config, const Backend& backend);

// Prompt text with the surface form of token row `token_index` removed.
// Falls back to joining the remaining token texts when the tokens cannot be
// located in the text. Throws when nothing is left.
std::string leave_one_out(const std::string& text, const EmbeddingMatrix& x, std::size_t token_index);

// Mean F over fairness_k shared noise seeds at guidance_low.
double eval_fairness(const std::string& prompt_text, std::size_t token_index, const AuditConfig& config,
                     const Backend& backend);

struct TriggerCandidate {
  std::string token;
  double diversity = 0.0;
  double fairness = 0.0;
  std::size_t rank_by_diversity = 0;
  std::size_t rank_by_fairness = 0;
  std::vector<std::string> source_prompts;
};

// Non-sensitive tokens from the same prompts, scored the same way, used as
// the reference level for the candidates.
struct ControlToken {
  std::string token;
  std::string prompt_id;
  double diversity = 0.0;
  double fairness = 0.0;
};

inline constexpr const char* kProvenanceEvidence = "provenance evidence";
inline constexpr const char* kNoProvenanceEvidence = "no provenance evidence";

struct RetrievalReport {
  std::vector<TriggerCandidate> candidates;  // sorted by token
  std::vector<ControlToken> controls;
  std::string status;      // "ok" or "no sensitive tokens"
  std::string provenance;  // kProvenanceEvidence or kNoProvenanceEvidence
  std::optional<double> control_median_diversity;
  std::optional<double> control_median_fairness;
  bool diversity_outlier = false;  // rank-1 D below separation_ratio * control median
  bool fairness_outlier = false;

  const TriggerCandidate* top_by_diversity() const;
  const TriggerCandidate* top_by_fairness() const;
};

RetrievalReport retrieve_triggers(const CascadeResult& cascade, const PromptCorpus& corpus, const AuditConfig& config,
                                  const Backend& backend, std::size_t parallel = 4);

struct OntologyRow {
  std::string concept_name;
  std::size_t depth = 0;
  std::optional<std::string> parent;
  double diversity = 0.0;
  std::optional<double> delta_d;  // D(parent) - D(this)
};

// One row per node in depth-first preorder.
std::vector<OntologyRow> ontology_study(const OntologyNode& tree, const AuditConfig& config, const Backend& backend,
                                        std::size_t parallel = 4);

}  // namespace t2iaudit
