#include "t2iaudit/config.hpp"

#include <cmath>
#include <set>
#include <string>

#include "t2iaudit/error.hpp"
#include "t2iaudit/hash.hpp"

namespace t2iaudit {

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Min: return "min";
    case Aggregation::Max: return "max";
  }
  return "mean";
}

Aggregation aggregation_from_string(std::string_view s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "min") return Aggregation::Min;
  if (s == "max") return Aggregation::Max;
  throw AuditError(ErrorCode::InvalidArgument, "unknown aggregation: " + std::string(s));
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw AuditError(ErrorCode::InvalidArgument, std::string("invalid config: ") + what);
}

}  // namespace

void AuditConfig::validate() const {
  require(delta_p > 0.0 && delta_p <= 1.0, "delta_p must be in (0, 1]");
  require(std::isfinite(tau) && tau > 0.0 && tau < 1.0, "tau must be in (0, 1)");
  require(n_ptb >= 1, "n_ptb must be >= 1");
  require(max_steps >= 1, "max_steps must be >= 1");
  require(std::isfinite(guidance_main) && guidance_main >= 0.0, "guidance_main must be >= 0");
  require(std::isfinite(guidance_low) && guidance_low >= 0.0, "guidance_low must be >= 0");
  require(steps_T >= 1, "steps_T must be >= 1");
  require(diversity_n >= 2, "diversity_n must be >= 2");
  require(fairness_k >= 1, "fairness_k must be >= 1");
  require(trigger_rate >= 0.0 && trigger_rate <= 1.0, "trigger_rate must be in [0, 1]");
  require(grid_points >= 2, "grid_points must be >= 2");
  require(clamp_eps > 0.0 && clamp_eps <= 1e-3, "clamp_eps must be in (0, 1e-3]");
  require(backend_retries >= 0, "backend_retries must be >= 0");
  require(control_tokens >= 0, "control_tokens must be >= 0");
  require(separation_ratio > 0.0 && separation_ratio <= 1.0, "separation_ratio must be in (0, 1]");
}

nlohmann::ordered_json to_json(const AuditConfig& c) {
  nlohmann::ordered_json j;
  j["delta_p"] = c.delta_p;
  j["tau"] = c.tau;
  j["n_ptb"] = c.n_ptb;
  j["max_steps"] = c.max_steps;
  j["guidance_main"] = c.guidance_main;
  j["guidance_low"] = c.guidance_low;
  j["steps_T"] = c.steps_T;
  j["diversity_n"] = c.diversity_n;
  j["fairness_k"] = c.fairness_k;
  j["base_seed"] = c.base_seed;
  j["trigger_rate"] = c.trigger_rate;
  j["aggregation"] = std::string(to_string(c.aggregation));
  j["local_all_prompts"] = c.local_all_prompts;
  j["grid_points"] = c.grid_points;
  j["clamp_eps"] = c.clamp_eps;
  j["backend_retries"] = c.backend_retries;
  j["control_tokens"] = c.control_tokens;
  j["separation_ratio"] = c.separation_ratio;
  return j;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw AuditError(ErrorCode::Parse, "");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw AuditError(ErrorCode::Parse, "");
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw AuditError(ErrorCode::Parse, "");
    } else {
      if (!it->is_number_integer()) throw AuditError(ErrorCode::Parse, "");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw AuditError(ErrorCode::Parse, std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace

AuditConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw AuditError(ErrorCode::Parse, "config must be a JSON object");
  static const std::set<std::string> known = {
      "delta_p",     "tau",          "n_ptb",         "max_steps",         "guidance_main",
      "guidance_low", "steps_T",     "diversity_n",   "fairness_k",        "base_seed",
      "trigger_rate", "aggregation", "local_all_prompts", "grid_points",   "clamp_eps",
      "backend_retries", "control_tokens", "separation_ratio"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw AuditError(ErrorCode::Parse, "unknown config field: " + key);
  }
  AuditConfig c;
  read_field(j, "delta_p", c.delta_p);
  read_field(j, "tau", c.tau);
  read_field(j, "n_ptb", c.n_ptb);
  read_field(j, "max_steps", c.max_steps);
  read_field(j, "guidance_main", c.guidance_main);
  read_field(j, "guidance_low", c.guidance_low);
  read_field(j, "steps_T", c.steps_T);
  read_field(j, "diversity_n", c.diversity_n);
  read_field(j, "fairness_k", c.fairness_k);
  read_field(j, "base_seed", c.base_seed);
  read_field(j, "trigger_rate", c.trigger_rate);
  if (auto it = j.find("aggregation"); it != j.end()) {
    if (!it->is_string()) throw AuditError(ErrorCode::Parse, "config field 'aggregation' must be a string");
    c.aggregation = aggregation_from_string(it->get<std::string>());
  }
  read_field(j, "local_all_prompts", c.local_all_prompts);
  read_field(j, "grid_points", c.grid_points);
  read_field(j, "clamp_eps", c.clamp_eps);
  read_field(j, "backend_retries", c.backend_retries);
  read_field(j, "control_tokens", c.control_tokens);
  read_field(j, "separation_ratio", c.separation_ratio);
  c.validate();
  return c;
}

AuditConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw AuditError(ErrorCode::Parse, "cannot parse config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const AuditConfig& config, const std::filesystem::path& path) {
  write_file(path, to_json(config).dump(2) + "\n");
}

}  // namespace t2iaudit
