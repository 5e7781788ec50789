#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "t2iaudit/backend.hpp"
#include "t2iaudit/config.hpp"
#include "t2iaudit/corpus.hpp"
#include "t2iaudit/error.hpp"
#include "t2iaudit/types.hpp"

namespace t2iaudit {

// Noise seed shared by the reference and every perturbed generation of a prompt.
std::uint64_t prompt_noise_seed(const AuditConfig& config, const std::string& prompt_id);
// Seed for perturbation sample k at step i; scope_key is 0 for global and row + 1 for local.
std::uint64_t perturbation_seed(const AuditConfig& config, const std::string& prompt_id, std::size_t scope_key,
                                std::size_t step, std::size_t sample);

// Throws AuditError(Degenerate) on zero sigma and BackendError once retries are spent.
SensitivityRecord sweep_prompt_global(const PromptRecord& prompt, const AuditConfig& config, const Backend& backend);

struct LocalSweep {
  std::vector<SensitivityRecord> records;    // one per non-special token with non-zero sigma
  std::vector<std::size_t> degenerate_rows;  // zero-sigma rows, no record emitted
  std::vector<std::string> warnings;
};

LocalSweep sweep_prompt_local(const PromptRecord& prompt, const AuditConfig& config, const Backend& backend);

enum class Phase { Global, Local };

struct PromptIssue {
  std::string prompt_id;
  Phase phase = Phase::Global;
  std::optional<std::size_t> token_index;  // set when a single token row is affected
  std::string detail;

  bool operator==(const PromptIssue&) const = default;
};

struct SensitiveToken {
  std::string prompt_id;
  std::size_t token_index = 0;
  std::string token;

  bool operator==(const SensitiveToken&) const = default;
};

struct PhaseDistribution {
  std::optional<ReliabilityDistribution> distribution;  // absent when insufficient
  std::size_t sample_count = 0;
  std::size_t censored_count = 0;
  std::string status;  // "ok" or the reason the distribution was omitted
};

struct CascadeResult {
  std::vector<SensitivityRecord> global_records;  // sorted by (prompt_id, token_index)
  PhaseDistribution global;
  std::vector<std::string> unreliable_prompts;  // global step_index == 1
  std::vector<std::string> swept_locally;
  std::vector<SensitivityRecord> local_records;
  PhaseDistribution local;
  std::vector<SensitiveToken> sensitive_tokens;  // local step_index == 1
  std::vector<PromptIssue> failed;
  std::vector<PromptIssue> degenerate;
  std::vector<std::string> warnings;

  std::size_t failed_global() const;
  std::size_t degenerate_global() const;
};

CascadeResult run_cascade(const PromptCorpus& corpus, const AuditConfig& config, const Backend& backend,
                          std::size_t parallel = 4);

// Builds a distribution from non-censored records, or records why it cannot.
PhaseDistribution build_phase_distribution(const std::vector<SensitivityRecord>& records, std::size_t grid_points);

// Calls fn, retrying transient backend errors up to `retries` extra times.
template <typename Fn>
auto with_retries(int retries, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.transient() || attempt >= retries) throw;
    }
  }
}

}  // namespace t2iaudit
