#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "scenarios.hpp"
#include "t2iaudit/metrics.hpp"
#include "t2iaudit/perturb.hpp"
#include "t2iaudit/report.hpp"
#include "t2iaudit/seed.hpp"
#include "t2iaudit/sweep.hpp"

using namespace t2iaudit;
using namespace t2iaudit::testing;

namespace {

// Zero-spread embeddings for prompts containing "flat"; only special rows for "void".
class OddEmbeddings : public Backend {
 public:
  explicit OddEmbeddings(const Backend& inner) : inner_(inner) {}
  BackendInfo info() const override { return inner_.info(); }
  EmbeddingMatrix encode(std::string_view prompt) const override {
    auto x = inner_.encode(prompt);
    if (prompt.find("flat") != std::string_view::npos) return x.with_values(std::vector<double>(x.values().size(), 0.5));
    if (prompt.find("void") != std::string_view::npos) {
      const std::size_t d = x.dims();
      std::vector<double> v(x.values().begin(), x.values().begin() + 2 * static_cast<std::ptrdiff_t>(d));
      return EmbeddingMatrix(2, d, std::move(v), {x.tokens().front(), x.tokens().back()});
    }
    return x;
  }
  GenerationResult generate(const GenerationRequest& r) const override { return inner_.generate(r); }

 private:
  const Backend& inner_;
};

// Independent recomputation of the aggregated cosine at a step.
double oracle_cosine(const Backend& b, const AuditConfig& cfg, const PromptRecord& p, Scope scope, std::size_t step) {
  const auto x = b.encode(p.text);
  const std::uint64_t noise = derive_seed(cfg.base_seed, {{"prompt", fnv1a64(p.prompt_id)}});
  const auto req = [&](const EmbeddingMatrix& m) {
    return GenerationRequest{.conditioning = m, .guidance = cfg.guidance_main, .steps = cfg.steps_T, .noise_seed = noise};
  };
  const auto ref = b.generate(req(x)).feature;
  const std::uint64_t scope_key = scope.is_global() ? 0 : scope.token_index() + 1;
  double sum = 0;
  for (int k = 0; k < cfg.n_ptb; ++k) {
    const std::uint64_t s = derive_seed(cfg.base_seed, {{"prompt", fnv1a64(p.prompt_id)},
                                                        {"scope", scope_key},
                                                        {"step", step},
                                                        {"sample", static_cast<std::uint64_t>(k)}});
    const auto xt = apply(x, {.scope = scope, .step_index = step, .delta_p = cfg.delta_p, .seed = s});
    sum += cosine(b.generate(req(xt)).feature, ref);
  }
  return sum / cfg.n_ptb;
}

}  // namespace

TEST(Seeds, MatchDerivation) {
  AuditConfig cfg;
  cfg.base_seed = 99;
  EXPECT_EQ(prompt_noise_seed(cfg, "p1"), derive_seed(99, {{"prompt", fnv1a64("p1")}}));
  EXPECT_EQ(perturbation_seed(cfg, "p1", 3, 2, 1),
            derive_seed(99, {{"prompt", fnv1a64("p1")}, {"scope", 3}, {"step", 2}, {"sample", 1}}));
  EXPECT_NE(perturbation_seed(cfg, "p1", 0, 2, 1), perturbation_seed(cfg, "p2", 0, 2, 1));
}

TEST(GlobalSweep, TriggeredPromptsCrossAtFirstStep) {
  const SyntheticBackend b(synthetic_spec("biased_nl"));
  const AuditConfig cfg;
  const auto c = with_nl_trigger(caption_corpus(3, 50), 3);
  ASSERT_EQ(c.injected_count(), 5u);
  for (const auto& p : c.prompts) {
    if (!p.injected_trigger) continue;
    const auto r = sweep_prompt_global(p, cfg, b);
    EXPECT_EQ(r.step_index, 1u) << p.text;
    EXPECT_FALSE(r.censored);
    EXPECT_LT(r.similarity_at_cross, cfg.tau);
  }
}

TEST(GlobalSweep, NegativeTauIsAlwaysCensored) {
  const SyntheticBackend b(synthetic_spec("benign"));
  AuditConfig cfg;
  cfg.tau = -1.0;
  cfg.max_steps = 6;
  const PromptRecord p{"q", "a young dog runs on the beach", {}};
  const auto r = sweep_prompt_global(p, cfg, b);
  EXPECT_TRUE(r.censored);
  EXPECT_EQ(r.step_index, 6u);
  EXPECT_DOUBLE_EQ(r.phi, 6 * cfg.delta_p * sigma_global(b.encode(p.text)));
}

TEST(GlobalSweep, ConstantModelIsCensoredWithUnitSimilarity) {
  const SyntheticBackend inner(synthetic_spec("benign"));
  const ConstantBackend b(inner);
  AuditConfig cfg;
  cfg.max_steps = 10;
  const auto r = sweep_prompt_global({"q", "a cat", {}}, cfg, b);
  EXPECT_TRUE(r.censored);
  EXPECT_EQ(r.step_index, 10u);
  EXPECT_NEAR(r.similarity_at_cross, 1.0, 1e-12);
}

TEST(GlobalSweep, ZeroSpreadIsDegenerate) {
  const SyntheticBackend inner(synthetic_spec("benign"));
  const OddEmbeddings b(inner);
  try {
    sweep_prompt_global({"q", "a flat cat", {}}, AuditConfig{}, b);
    FAIL();
  } catch (const AuditError& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}

TEST(GlobalSweep, CrossingStepMatchesOracle) {
  // At the reported step the aggregate is below tau and at every earlier step it is not.
  const SyntheticBackend b(synthetic_spec("biased_nl"));
  AuditConfig cfg;
  cfg.base_seed = 5;
  const auto c = with_nl_trigger(caption_corpus(11, 12), 2, 0.25);
  int crossed = 0;
  for (const auto& p : c.prompts) {
    const auto r = sweep_prompt_global(p, cfg, b);
    if (r.censored) continue;
    ++crossed;
    const double at = oracle_cosine(b, cfg, p, Scope::global(), r.step_index);
    EXPECT_NEAR(at, r.similarity_at_cross, 1e-12);
    EXPECT_LT(at, cfg.tau);
    for (std::size_t s = 1; s < r.step_index; ++s) EXPECT_GE(oracle_cosine(b, cfg, p, Scope::global(), s), cfg.tau);
    EXPECT_DOUBLE_EQ(r.phi, static_cast<double>(r.step_index) * cfg.delta_p * sigma_global(b.encode(p.text)));
  }
  EXPECT_GT(crossed, 0);
}

TEST(LocalSweep, SingleTokenPromptGivesOneRecord) {
  const SyntheticBackend b(synthetic_spec("benign"));
  const auto out = sweep_prompt_local({"q", "cat", {}}, AuditConfig{}, b);
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.records[0].scope, Scope::local(1));
  EXPECT_EQ(out.records[0].token, "cat");
  EXPECT_TRUE(out.warnings.empty());
}

TEST(LocalSweep, SpecialOnlyPromptWarns) {
  const SyntheticBackend inner(synthetic_spec("benign"));
  const OddEmbeddings b(inner);
  const auto out = sweep_prompt_local({"q", "void", {}}, AuditConfig{}, b);
  EXPECT_TRUE(out.records.empty());
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("q"), std::string::npos);
}

TEST(LocalSweep, TriggerRowCrossesFirst) {
  const SyntheticBackend b(synthetic_spec("biased_nl"));
  AuditConfig cfg;
  const PromptRecord p{"q", "an old man holds a cup drink", {}};
  const auto out = sweep_prompt_local(p, cfg, b);
  const auto it = std::find_if(out.records.begin(), out.records.end(), [](const auto& r) { return r.token == "drink"; });
  ASSERT_NE(it, out.records.end());
  EXPECT_EQ(it->step_index, 1u);
  for (const auto& r : out.records) {
    EXPECT_NEAR(r.similarity_at_cross, oracle_cosine(b, cfg, p, r.scope, r.step_index), 1e-12);
  }
}

class Cascade : public ::testing::Test {
 protected:
  SyntheticBackend nl_{synthetic_spec("biased_nl")};
  AuditConfig cfg_;
  PromptCorpus corpus_ = with_nl_trigger(caption_corpus(21, 40), 21);
};

TEST_F(Cascade, InvariantsHold) {
  const auto res = run_cascade(corpus_, cfg_, nl_, 4);
  EXPECT_EQ(res.global_records.size(), corpus_.prompts.size());
  EXPECT_TRUE(std::is_sorted(res.global_records.begin(), res.global_records.end(),
                             [](const auto& a, const auto& b) { return a.prompt_id < b.prompt_id; }));
  std::set<std::string> unreliable;
  for (const auto& r : res.global_records) {
    if (r.censored) {
      EXPECT_EQ(r.step_index, static_cast<std::size_t>(cfg_.max_steps));
    } else {
      EXPECT_LT(r.similarity_at_cross, cfg_.tau);
    }
    if (!r.censored && r.step_index == 1) unreliable.insert(r.prompt_id);
  }
  EXPECT_EQ(std::set<std::string>(res.unreliable_prompts.begin(), res.unreliable_prompts.end()), unreliable);
  EXPECT_EQ(res.swept_locally, res.unreliable_prompts);
  for (const auto& p : corpus_.prompts) {
    if (p.injected_trigger) EXPECT_TRUE(unreliable.count(p.prompt_id)) << p.text;
  }
  std::size_t sensitive = 0;
  for (const auto& r : res.local_records) {
    EXPECT_TRUE(unreliable.count(r.prompt_id));
    if (!r.censored && r.step_index == 1) {
      EXPECT_NE(std::find(res.sensitive_tokens.begin(), res.sensitive_tokens.end(),
                          SensitiveToken{r.prompt_id, r.scope.token_index(), r.token}),
                res.sensitive_tokens.end());
      ++sensitive;
    }
  }
  EXPECT_EQ(sensitive, res.sensitive_tokens.size());
  EXPECT_TRUE(res.failed.empty());
  ASSERT_TRUE(res.global.distribution);
  EXPECT_EQ(res.global.censored_count + res.global.distribution->samples.size(), corpus_.prompts.size());
}

TEST_F(Cascade, LocalAllPromptsSweepsEverything) {
  cfg_.local_all_prompts = true;
  const auto small = make_corpus("s", {corpus_.prompts.begin(), corpus_.prompts.begin() + 6});
  const auto res = run_cascade(small, cfg_, nl_, 2);
  EXPECT_EQ(res.swept_locally.size(), 6u);
}

TEST_F(Cascade, IdenticalAcrossParallelWidths) {
  const auto a = run_cascade(corpus_, cfg_, nl_, 1);
  for (std::size_t w : {3u, 16u}) {
    const auto b = run_cascade(corpus_, cfg_, nl_, w);
    EXPECT_EQ(records_jsonl(a.global_records), records_jsonl(b.global_records));
    EXPECT_EQ(records_jsonl(a.local_records), records_jsonl(b.local_records));
    EXPECT_EQ(a.sensitive_tokens, b.sensitive_tokens);
  }
}

TEST_F(Cascade, AccountsForFailuresAndDegenerates) {
  const SyntheticBackend inner(synthetic_spec("benign"));
  const OddEmbeddings odd(inner);
  const FaultyBackend b(odd, "poison");
  auto prompts = caption_corpus(2, 10).prompts;
  prompts.push_back({"x1", "a poison apple", {}});
  prompts.push_back({"x2", "a flat field", {}});
  prompts.push_back({"x3", "poison again", {}});
  const auto res = run_cascade(make_corpus("mixed", prompts), cfg_, b, 4);
  EXPECT_EQ(res.failed_global(), 2u);
  EXPECT_EQ(res.degenerate_global(), 1u);
  EXPECT_EQ(res.global_records.size() + res.failed_global() + res.degenerate_global(), prompts.size());
  EXPECT_EQ(res.failed[0].prompt_id, "x1");
  EXPECT_NE(res.failed[0].detail.find("refusing"), std::string::npos);
  EXPECT_EQ(res.degenerate[0].prompt_id, "x2");
}

TEST_F(Cascade, RetriesTransientErrors) {
  const FaultyBackend flaky(nl_, "", 2);
  cfg_.backend_retries = 2;
  const auto one = make_corpus("one", {corpus_.prompts.front()});
  const auto res = run_cascade(one, cfg_, flaky, 1);
  EXPECT_TRUE(res.failed.empty());
  EXPECT_EQ(res.global_records, run_cascade(one, cfg_, nl_, 1).global_records);

  const FaultyBackend flakier(nl_, "", 3);
  const auto res2 = run_cascade(one, cfg_, flakier, 1);
  EXPECT_EQ(res2.failed_global(), 1u);
}

TEST_F(Cascade, RejectsEmptyCorpusAndPromptOnlyBackends) {
  EXPECT_THROW(run_cascade(make_corpus("e", {}), cfg_, nl_, 1), AuditError);
}

TEST(PhaseDistribution, InsufficientSamples) {
  std::vector<SensitivityRecord> recs(3);
  for (auto& r : recs) r.censored = true;
  recs[0] = {.prompt_id = "a", .phi = 0.2, .step_index = 2};
  auto d = build_phase_distribution(recs, 512);
  EXPECT_FALSE(d.distribution);
  EXPECT_EQ(d.sample_count, 1u);
  EXPECT_EQ(d.censored_count, 2u);
  EXPECT_NE(d.status.find("insufficient"), std::string::npos);
  recs[1] = {.prompt_id = "b", .phi = 0.4, .step_index = 4};
  d = build_phase_distribution(recs, 512);
  ASSERT_TRUE(d.distribution);
  EXPECT_EQ(d.status, "ok");
  EXPECT_EQ(d.distribution->censored_count, 1u);
}

TEST(Report, JsonlFieldOrder) {
  const std::vector<SensitivityRecord> recs{
      {.prompt_id = "a", .phi = 0.25, .step_index = 5, .similarity_at_cross = 0.5},
      {.prompt_id = "a", .scope = Scope::local(2), .token = "dog", .phi = 0.125, .step_index = 40, .censored = true,
       .similarity_at_cross = 0.95}};
  EXPECT_EQ(records_jsonl(recs),
            "{\"prompt_id\":\"a\",\"scope\":\"global\",\"token_index\":null,\"token\":null,\"phi\":0.25,"
            "\"step_index\":5,\"censored\":false,\"similarity_at_cross\":0.5}\n"
            "{\"prompt_id\":\"a\",\"scope\":\"local\",\"token_index\":2,\"token\":\"dog\",\"phi\":0.125,"
            "\"step_index\":40,\"censored\":true,\"similarity_at_cross\":0.95}\n");
}
