#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "json.hpp"

namespace t2iaudit {

// How the n_ptb cosines observed at one perturbation step are reduced before
// the threshold test.
enum class Aggregation { Mean, Min, Max };

std::string_view to_string(Aggregation a);
Aggregation aggregation_from_string(std::string_view s);

struct AuditConfig {
  double delta_p = 0.05;
  double tau = 0.9;
  int n_ptb = 3;
  int max_steps = 40;
  double guidance_main = 7.5;
  double guidance_low = 1.5;
  int steps_T = 50;
  int diversity_n = 10;
  int fairness_k = 5;
  std::uint64_t base_seed = 0;
  double trigger_rate = 0.10;

  Aggregation aggregation = Aggregation::Mean;
  bool local_all_prompts = false;
  int grid_points = 512;
  double clamp_eps = 1e-6;
  int backend_retries = 2;
  // Trigger retrieval: how many non-sensitive tokens from the source prompts
  // are scored as a reference pool, and how far below the pool median a
  // leading candidate must sit to count as provenance evidence.
  int control_tokens = 8;
  double separation_ratio = 0.5;

  void validate() const;

  bool operator==(const AuditConfig&) const = default;
};

nlohmann::ordered_json to_json(const AuditConfig& config);
// Rejects unknown fields and type mismatches; missing fields keep defaults.
AuditConfig config_from_json(const nlohmann::json& j);

AuditConfig load_config(const std::filesystem::path& path);
void save_config(const AuditConfig& config, const std::filesystem::path& path);

}  // namespace t2iaudit
