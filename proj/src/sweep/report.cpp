#include "t2iaudit/report.hpp"

#include <fmt/format.h>

#include "t2iaudit/error.hpp"
#include "t2iaudit/hash.hpp"
#include "t2iaudit/protocol.hpp"

namespace t2iaudit {

using ojson = nlohmann::ordered_json;

std::string tool_version() { return "0.1.0"; }

ojson record_to_json(const SensitivityRecord& r) {
  ojson j;
  j["prompt_id"] = r.prompt_id;
  j["scope"] = r.scope.is_global() ? "global" : "local";
  if (r.scope.is_global()) j["token_index"] = nullptr;
  else j["token_index"] = r.scope.token_index();
  j["token"] = r.scope.is_global() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.token);
  j["phi"] = r.phi;
  j["step_index"] = r.step_index;
  j["censored"] = r.censored;
  j["similarity_at_cross"] = r.similarity_at_cross;
  return j;
}

std::string records_jsonl(const std::vector<SensitivityRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

std::string distribution_csv(const ReliabilityDistribution& dist) {
  std::string out = "phi,density\n";
  for (std::size_t i = 0; i < dist.grid.size(); ++i) out += fmt::format("{},{}\n", dist.grid[i], dist.density[i]);
  return out;
}

std::string similarity_csv(const SimilarityMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (j) out += ",";
      out += fmt::format("{}", m.at(i, j));
    }
    out += "\n";
  }
  return out;
}

ojson phase_summary(const PhaseDistribution& phase) {
  ojson j;
  j["status"] = phase.status;
  j["samples"] = phase.sample_count;
  j["censored"] = phase.censored_count;
  if (phase.distribution) {
    j["phi_mo"] = phase.distribution->phi_mo;
    j["mode"] = phase.distribution->mode;
    j["bandwidth"] = phase.distribution->bandwidth;
  } else {
    j["phi_mo"] = nullptr;
    j["mode"] = nullptr;
    j["bandwidth"] = nullptr;
  }
  return j;
}

ojson cascade_summary(const CascadeResult& r, const AuditConfig& config, const BackendInfo& info,
                      std::size_t corpus_size) {
  ojson j;
  j["model_id"] = info.model_id;
  j["feature_extractor_id"] = info.feature_extractor_id;
  j["tau"] = config.tau;
  j["delta_p"] = config.delta_p;
  j["steps_T"] = config.steps_T;
  j["aggregation"] = std::string(to_string(config.aggregation));
  j["prompts"] = corpus_size;
  j["completed"] = r.global_records.size();
  j["failed"] = r.failed_global();
  j["degenerate"] = r.degenerate_global();
  j["global"] = phase_summary(r.global);
  j["global"]["unreliable_prompts"] = r.unreliable_prompts.size();
  j["local"] = phase_summary(r.local);
  j["local"]["prompts_swept"] = r.swept_locally.size();
  j["local"]["failed"] = r.failed.size() - r.failed_global();
  j["local"]["degenerate_tokens"] = r.degenerate.size() - r.degenerate_global();
  ojson sens = ojson::array();
  for (const auto& s : r.sensitive_tokens) {
    sens.push_back({{"prompt_id", s.prompt_id}, {"token_index", s.token_index}, {"token", s.token}});
  }
  j["sensitive_tokens"] = std::move(sens);
  ojson issues = ojson::array();
  auto add = [&](const PromptIssue& i, const char* kind) {
    ojson e;
    e["kind"] = kind;
    e["prompt_id"] = i.prompt_id;
    e["phase"] = i.phase == Phase::Global ? "global" : "local";
    if (i.token_index) e["token_index"] = *i.token_index;
    else e["token_index"] = nullptr;
    e["detail"] = i.detail;
    issues.push_back(std::move(e));
  };
  for (const auto& i : r.failed) add(i, "failed");
  for (const auto& i : r.degenerate) add(i, "degenerate");
  j["issues"] = std::move(issues);
  j["warnings"] = r.warnings;
  return j;
}

ReliabilityDistribution summary_phase_distribution(const nlohmann::json& summary, std::string_view phase) {
  const std::string key(phase);
  if (!summary.is_object() || !summary.contains(key) || !summary[key].is_object()) {
    throw AuditError(ErrorCode::Parse, "summary has no '" + key + "' section");
  }
  const auto& p = summary[key];
  if (!p.contains("phi_mo") || !p["phi_mo"].is_number() || !p.contains("mode") || !p["mode"].is_number()) {
    throw AuditError(ErrorCode::InsufficientData, "summary phase '" + key + "' has no distribution");
  }
  ReliabilityDistribution d;
  d.phi_mo = p["phi_mo"].get<double>();
  d.mode = p["mode"].get<double>();
  return d;
}

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

void ArtifactWriter::write(const std::string& name, std::string_view bytes) {
  write_file(dir_ / name, bytes);
  artifacts_.emplace_back(name, sha256_hex(bytes));
}

ojson make_manifest(const ManifestInputs& in, const ArtifactWriter& artifacts) {
  const std::string backend_hash = sha256_hex(protocol::canonical(protocol::info_to_json(in.backend)));
  const std::string config_text = to_json(in.config).dump();
  ojson j;
  j["run_id"] = sha256_hex(in.command + "\n" + config_text + "\n" + backend_hash + "\n" + in.corpus_hash).substr(0, 16);
  j["command"] = in.command;
  j["tool_version"] = tool_version();
  j["config"] = to_json(in.config);
  j["backend"] = ojson::parse(protocol::canonical(protocol::info_to_json(in.backend)));
  j["backend_hash"] = backend_hash;
  j["corpus_id"] = in.corpus_id;
  j["corpus_hash"] = in.corpus_hash;
  j["counts"] = in.counts;
  j["timings_s"] = in.timings;
  ojson files = ojson::array();
  for (const auto& [name, sha] : artifacts.artifacts()) files.push_back({{"path", name}, {"sha256", sha}});
  j["artifacts"] = std::move(files);
  return j;
}

}  // namespace t2iaudit
