#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "t2iaudit/backend.hpp"
#include "t2iaudit/config.hpp"
#include "t2iaudit/metrics.hpp"
#include "t2iaudit/sweep.hpp"

namespace t2iaudit {

// One JSON object per line: prompt_id, scope, token_index, token, phi,
// step_index, censored, similarity_at_cross.
std::string records_jsonl(const std::vector<SensitivityRecord>& records);
nlohmann::ordered_json record_to_json(const SensitivityRecord& r);

// "phi,density" header, one row per grid point.
std::string distribution_csv(const ReliabilityDistribution& dist);
std::string similarity_csv(const SimilarityMatrix& m);

nlohmann::ordered_json phase_summary(const PhaseDistribution& phase);
nlohmann::ordered_json cascade_summary(const CascadeResult& result, const AuditConfig& config, const BackendInfo& info,
                                       std::size_t corpus_size);

// Reads one phase ("global" or "local") of a summary back into a distribution
// carrying only phi_mo and mode; throws when the phase had no distribution.
ReliabilityDistribution summary_phase_distribution(const nlohmann::json& summary, std::string_view phase);

// Writes artifacts into one directory and remembers their SHA-256.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir);

  void write(const std::string& name, std::string_view bytes);
  const std::vector<std::pair<std::string, std::string>>& artifacts() const noexcept { return artifacts_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

struct ManifestInputs {
  std::string command;
  AuditConfig config;
  BackendInfo backend;
  std::string corpus_id;
  std::string corpus_hash;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  nlohmann::ordered_json timings = nlohmann::ordered_json::object();  // seconds per phase
};

// run_id hashes the inputs only, so reruns share it; timings are the one
// field that differs between otherwise identical runs.
nlohmann::ordered_json make_manifest(const ManifestInputs& in, const ArtifactWriter& artifacts);

std::string tool_version();

}  // namespace t2iaudit
