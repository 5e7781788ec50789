#include "t2iaudit/sweep.hpp"

#include <algorithm>
#include <set>

#include "t2iaudit/metrics.hpp"
#include "t2iaudit/parallel.hpp"
#include "t2iaudit/perturb.hpp"
#include "t2iaudit/seed.hpp"

namespace t2iaudit {

std::uint64_t prompt_noise_seed(const AuditConfig& config, const std::string& prompt_id) {
  return derive_seed(config.base_seed, {{"prompt", fnv1a64(prompt_id)}});
}

std::uint64_t perturbation_seed(const AuditConfig& config, const std::string& prompt_id, std::size_t scope_key,
                                std::size_t step, std::size_t sample) {
  return derive_seed(config.base_seed,
                     {{"prompt", fnv1a64(prompt_id)}, {"scope", scope_key}, {"step", step}, {"sample", sample}});
}

namespace {

double aggregate(const std::vector<double>& v, Aggregation how) {
  switch (how) {
    case Aggregation::Min: return *std::min_element(v.begin(), v.end());
    case Aggregation::Max: return *std::max_element(v.begin(), v.end());
    case Aggregation::Mean: break;
  }
  double s = 0.0;
  for (double c : v) s += c;
  return s / static_cast<double>(v.size());
}

GenerationRequest embedding_request(const EmbeddingMatrix& x, const AuditConfig& config, std::uint64_t noise_seed) {
  return GenerationRequest{.conditioning = x, .guidance = config.guidance_main, .steps = config.steps_T,
                           .noise_seed = noise_seed};
}

SensitivityRecord sweep_scope(const PromptRecord& prompt, const EmbeddingMatrix& x, const ImageFeature& reference,
                              Scope scope, double sigma, const AuditConfig& config, const Backend& backend) {
  const std::uint64_t noise_seed = prompt_noise_seed(config, prompt.prompt_id);
  const std::size_t scope_key = scope.is_global() ? 0 : scope.token_index() + 1;
  SensitivityRecord rec;
  rec.prompt_id = prompt.prompt_id;
  rec.scope = scope;
  if (!scope.is_global()) rec.token = x.tokens()[scope.token_index()].text;

  std::vector<double> cosines(static_cast<std::size_t>(config.n_ptb));
  double last = 1.0;
  for (int i = 1; i <= config.max_steps; ++i) {
    const auto step = static_cast<std::size_t>(i);
    for (std::size_t k = 0; k < cosines.size(); ++k) {
      const PerturbationSpec spec{.scope = scope, .step_index = step, .delta_p = config.delta_p,
                                  .seed = perturbation_seed(config, prompt.prompt_id, scope_key, step, k)};
      const EmbeddingMatrix xt = apply(x, spec);
      const auto out = with_retries(config.backend_retries,
                                    [&] { return backend.generate(embedding_request(xt, config, noise_seed)); });
      cosines[k] = cosine(out.feature, reference);
    }
    last = aggregate(cosines, config.aggregation);
    if (last < config.tau) {
      rec.phi = static_cast<double>(step) * config.delta_p * sigma;
      rec.step_index = step;
      rec.similarity_at_cross = last;
      return rec;
    }
  }
  const auto budget = static_cast<std::size_t>(config.max_steps);
  rec.phi = static_cast<double>(budget) * config.delta_p * sigma;
  rec.step_index = budget;
  rec.censored = true;
  rec.similarity_at_cross = last;
  return rec;
}

struct Prepared {
  EmbeddingMatrix x;
  ImageFeature reference;
};

Prepared prepare(const PromptRecord& prompt, const AuditConfig& config, const Backend& backend) {
  EmbeddingMatrix x = with_retries(config.backend_retries, [&] { return backend.encode(prompt.text); });
  const std::uint64_t noise_seed = prompt_noise_seed(config, prompt.prompt_id);
  auto ref = with_retries(config.backend_retries,
                          [&] { return backend.generate(embedding_request(x, config, noise_seed)); });
  return Prepared{std::move(x), std::move(ref.feature)};
}

bool by_prompt_then_token(const SensitivityRecord& a, const SensitivityRecord& b) {
  if (a.prompt_id != b.prompt_id) return a.prompt_id < b.prompt_id;
  const std::size_t ta = a.scope.is_global() ? 0 : a.scope.token_index() + 1;
  const std::size_t tb = b.scope.is_global() ? 0 : b.scope.token_index() + 1;
  return ta < tb;
}

}  // namespace

SensitivityRecord sweep_prompt_global(const PromptRecord& prompt, const AuditConfig& config, const Backend& backend) {
  EmbeddingMatrix x = with_retries(config.backend_retries, [&] { return backend.encode(prompt.text); });
  const double sigma = sigma_global(x);
  if (!(sigma > 0.0)) throw AuditError(ErrorCode::Degenerate, "prompt " + prompt.prompt_id + ": embedding has zero standard deviation");
  const auto noise_seed = prompt_noise_seed(config, prompt.prompt_id);
  const auto ref = with_retries(config.backend_retries,
                                [&] { return backend.generate(embedding_request(x, config, noise_seed)); });
  return sweep_scope(prompt, x, ref.feature, Scope::global(), sigma, config, backend);
}

LocalSweep sweep_prompt_local(const PromptRecord& prompt, const AuditConfig& config, const Backend& backend) {
  LocalSweep out;
  const Prepared p = prepare(prompt, config, backend);
  bool any = false;
  for (std::size_t i = 0; i < p.x.rows(); ++i) {
    if (p.x.tokens()[i].special) continue;
    any = true;
    const double sigma = sigma_local(p.x, i);
    if (!(sigma > 0.0)) {
      out.degenerate_rows.push_back(i);
      continue;
    }
    out.records.push_back(sweep_scope(prompt, p.x, p.reference, Scope::local(i), sigma, config, backend));
  }
  if (!any) out.warnings.push_back("prompt " + prompt.prompt_id + " has only special tokens; nothing to sweep locally");
  return out;
}

std::size_t CascadeResult::failed_global() const {
  return static_cast<std::size_t>(std::count_if(failed.begin(), failed.end(), [](const auto& f) { return f.phase == Phase::Global; }));
}

std::size_t CascadeResult::degenerate_global() const {
  return static_cast<std::size_t>(
      std::count_if(degenerate.begin(), degenerate.end(), [](const auto& f) { return f.phase == Phase::Global; }));
}

PhaseDistribution build_phase_distribution(const std::vector<SensitivityRecord>& records, std::size_t grid_points) {
  PhaseDistribution out;
  std::vector<double> samples;
  for (const auto& r : records) {
    if (r.censored) ++out.censored_count;
    else samples.push_back(r.phi);
  }
  out.sample_count = samples.size();
  if (std::set<double>(samples.begin(), samples.end()).size() < 2) {
    out.status = "insufficient: " + std::to_string(samples.size()) +
                 " uncensored sample(s), at least 2 distinct values needed";
    return out;
  }
  out.distribution = estimate_distribution(samples, grid_points);
  out.distribution->censored_count = out.censored_count;
  out.status = "ok";
  return out;
}

namespace {

struct GlobalOutcome {
  std::optional<SensitivityRecord> record;
  std::optional<PromptIssue> failed;
  std::optional<PromptIssue> degenerate;
};

struct LocalOutcome {
  LocalSweep sweep;
  std::optional<PromptIssue> failed;
};

}  // namespace

CascadeResult run_cascade(const PromptCorpus& corpus, const AuditConfig& config, const Backend& backend,
                          std::size_t parallel) {
  if (corpus.prompts.empty()) throw AuditError(ErrorCode::InvalidArgument, "corpus is empty");
  if (!backend.info().capabilities.embedding_conditioning) {
    throw AuditError(ErrorCode::UnsupportedConditioning, "reliability sweeps need embedding conditioning");
  }
  CascadeResult res;

  auto global = parallel_map(corpus.prompts.size(), parallel, [&](std::size_t i) {
    const PromptRecord& p = corpus.prompts[i];
    GlobalOutcome o;
    try {
      o.record = sweep_prompt_global(p, config, backend);
    } catch (const AuditError& e) {
      if (e.code() == ErrorCode::Degenerate) o.degenerate = PromptIssue{p.prompt_id, Phase::Global, std::nullopt, e.what()};
      else o.failed = PromptIssue{p.prompt_id, Phase::Global, std::nullopt, e.what()};
    } catch (const std::exception& e) {
      o.failed = PromptIssue{p.prompt_id, Phase::Global, std::nullopt, e.what()};
    }
    return o;
  });
  for (auto& o : global) {
    if (o.record) res.global_records.push_back(std::move(*o.record));
    if (o.failed) res.failed.push_back(std::move(*o.failed));
    if (o.degenerate) res.degenerate.push_back(std::move(*o.degenerate));
  }
  std::sort(res.global_records.begin(), res.global_records.end(), by_prompt_then_token);
  for (const auto& r : res.global_records) {
    if (!r.censored && r.step_index == 1) res.unreliable_prompts.push_back(r.prompt_id);
  }
  res.global = build_phase_distribution(res.global_records, static_cast<std::size_t>(config.grid_points));

  std::vector<const PromptRecord*> targets;
  if (config.local_all_prompts) {
    for (const auto& r : res.global_records) targets.push_back(corpus.find(r.prompt_id));
  } else {
    for (const auto& id : res.unreliable_prompts) targets.push_back(corpus.find(id));
  }
  for (const auto* t : targets) res.swept_locally.push_back(t->prompt_id);

  auto local = parallel_map(targets.size(), parallel, [&](std::size_t i) {
    const PromptRecord& p = *targets[i];
    LocalOutcome o;
    try {
      o.sweep = sweep_prompt_local(p, config, backend);
    } catch (const std::exception& e) {
      o.failed = PromptIssue{p.prompt_id, Phase::Local, std::nullopt, e.what()};
    }
    return o;
  });
  for (std::size_t i = 0; i < local.size(); ++i) {
    auto& o = local[i];
    if (o.failed) {
      res.failed.push_back(std::move(*o.failed));
      continue;
    }
    for (auto& r : o.sweep.records) res.local_records.push_back(std::move(r));
    for (std::size_t row : o.sweep.degenerate_rows) {
      res.degenerate.push_back({targets[i]->prompt_id, Phase::Local, row, "token row has zero standard deviation"});
    }
    for (auto& w : o.sweep.warnings) res.warnings.push_back(std::move(w));
  }
  std::sort(res.local_records.begin(), res.local_records.end(), by_prompt_then_token);
  for (const auto& r : res.local_records) {
    if (!r.censored && r.step_index == 1) res.sensitive_tokens.push_back({r.prompt_id, r.scope.token_index(), r.token});
  }
  res.local = build_phase_distribution(res.local_records, static_cast<std::size_t>(config.grid_points));

  auto issue_order = [](const PromptIssue& a, const PromptIssue& b) {
    if (a.prompt_id != b.prompt_id) return a.prompt_id < b.prompt_id;
    if (a.phase != b.phase) return a.phase < b.phase;
    return a.token_index.value_or(0) < b.token_index.value_or(0);
  };
  std::sort(res.failed.begin(), res.failed.end(), issue_order);
  std::sort(res.degenerate.begin(), res.degenerate.end(), issue_order);
  return res;
}

}  // namespace t2iaudit
