#include "t2iaudit/cli.hpp"

#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <functional>
#include <map>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "t2iaudit/audit.hpp"
#include "t2iaudit/config.hpp"
#include "t2iaudit/corpus.hpp"
#include "t2iaudit/error.hpp"
#include "t2iaudit/hash.hpp"
#include "t2iaudit/metrics.hpp"
#include "t2iaudit/ontology.hpp"
#include "t2iaudit/remote.hpp"
#include "t2iaudit/report.hpp"
#include "t2iaudit/sweep.hpp"
#include "t2iaudit/synthetic.hpp"

namespace t2iaudit {

using ojson = nlohmann::ordered_json;

std::unique_ptr<Backend> make_backend(const std::optional<std::string>& url, const std::optional<std::string>& synthetic) {
  if (synthetic) return std::make_unique<SyntheticBackend>(load_synthetic_spec(*synthetic));
  if (url) return std::make_unique<RemoteBackend>(*url);
  if (const char* env = std::getenv("AUDIT_BACKEND_URL"); env && *env) return std::make_unique<RemoteBackend>(env);
  throw AuditError(ErrorCode::InvalidArgument, "no backend: pass --backend URL or --synthetic PATH, or set AUDIT_BACKEND_URL");
}

namespace {

struct Common {
  std::optional<std::string> config_path;
  std::optional<std::string> backend_url;
  std::optional<std::string> synthetic;
  std::optional<std::string> corpus;
  std::optional<std::string> corpus_format;
  std::string out_dir = "audit-out";
  std::size_t parallel = 4;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  bool local_all = false;

  // trigger injection before the run
  std::optional<std::string> inject_trigger;
  std::optional<double> inject_rate;
  std::string placement = "append";
  std::vector<std::string> substitutions;  // from=to
  std::optional<std::uint64_t> inject_seed;
};

void add_backend_flags(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "audit config JSON");
  auto* b = sub->add_option("--backend", c.backend_url, "wire-protocol backend URL");
  auto* s = sub->add_option("--synthetic", c.synthetic, "synthetic model spec JSON");
  b->excludes(s);
  sub->add_option("--out", c.out_dir, "output directory");
  sub->add_option("--parallel", c.parallel, "worker pool width")->check(CLI::Range(1, 256));
  sub->add_option("--seed", c.seed, "base seed (overrides config)");
  sub->add_option("--steps", c.steps, "denoising steps T (overrides config)")->check(CLI::PositiveNumber);
}

void add_corpus_flags(CLI::App* sub, Common& c, bool required) {
  auto* o = sub->add_option("--corpus", c.corpus, "prompt corpus (lines or caption-json)");
  if (required) o->required();
  sub->add_option("--corpus-format", c.corpus_format, "lines | caption-json (default: by extension)");
}

void add_injection_flags(CLI::App* sub, Common& c) {
  sub->add_option("--inject-trigger", c.inject_trigger, "inject this trigger into a fraction of prompts");
  sub->add_option("--inject-rate", c.inject_rate, "fraction of prompts to inject (default: config trigger_rate)");
  sub->add_option("--placement", c.placement, "append | prepend | substitute");
  sub->add_option("--substitute", c.substitutions, "FROM=TO word substitution (substitute placement)");
  sub->add_option("--inject-seed", c.inject_seed, "injection seed (default: base seed)");
  sub->add_flag("--local-all", c.local_all, "sweep tokens of every prompt, not only unreliable ones");
}

AuditConfig resolve_config(const Common& c) {
  AuditConfig cfg = c.config_path ? load_config(*c.config_path) : AuditConfig{};
  if (c.seed) cfg.base_seed = *c.seed;
  if (c.steps) cfg.steps_T = *c.steps;
  if (c.local_all) cfg.local_all_prompts = true;
  if (c.inject_rate) cfg.trigger_rate = *c.inject_rate;
  cfg.validate();
  return cfg;
}

PromptCorpus resolve_corpus(const Common& c, const AuditConfig& cfg) {
  const std::filesystem::path path(*c.corpus);
  PromptCorpus corpus = c.corpus_format ? load_corpus(path, corpus_format_from_string(*c.corpus_format))
                                        : load_corpus(path);
  if (!c.inject_trigger) return corpus;
  InjectionSpec spec{.trigger = *c.inject_trigger,
                     .rate = cfg.trigger_rate,
                     .placement = placement_from_string(c.placement),
                     .substitutions = {},
                     .seed = c.inject_seed.value_or(cfg.base_seed)};
  for (const auto& s : c.substitutions) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw AuditError(ErrorCode::InvalidArgument, "--substitute expects FROM=TO, got " + s);
    spec.substitutions[s.substr(0, eq)] = s.substr(eq + 1);
  }
  PromptCorpus injected = inject_triggers(corpus, spec);
  injected.source_hash = sha256_hex(corpus.source_hash + "\n" + serialize_corpus(injected, CorpusFormat::CaptionJson));
  return injected;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  return out + "\"";
}

struct CascadeRun {
  AuditConfig config;
  PromptCorpus corpus;
  BackendInfo info;
  CascadeResult result;
  double seconds = 0.0;
};

CascadeRun run_and_write_cascade(const Common& c, const Backend& backend, ArtifactWriter& w) {
  CascadeRun run;
  run.config = resolve_config(c);
  run.corpus = resolve_corpus(c, run.config);
  run.info = backend.info();
  const auto t0 = std::chrono::steady_clock::now();
  run.result = run_cascade(run.corpus, run.config, backend, c.parallel);
  run.seconds = seconds_since(t0);
  if (c.inject_trigger) w.write("corpus.json", serialize_corpus(run.corpus, CorpusFormat::CaptionJson));
  w.write("global_records.jsonl", records_jsonl(run.result.global_records));
  w.write("local_records.jsonl", records_jsonl(run.result.local_records));
  if (run.result.global.distribution) w.write("global_distribution.csv", distribution_csv(*run.result.global.distribution));
  if (run.result.local.distribution) w.write("local_distribution.csv", distribution_csv(*run.result.local.distribution));
  w.write("summary.json", cascade_summary(run.result, run.config, run.info, run.corpus.prompts.size()).dump(2) + "\n");
  return run;
}

void write_manifest(ArtifactWriter& w, ManifestInputs in) {
  const ojson manifest = make_manifest(in, w);
  write_file(w.dir() / "manifest.json", manifest.dump(2) + "\n");
}

int cmd_reliability(const Common& c, std::ostream& out) {
  auto backend = make_backend(c.backend_url, c.synthetic);
  ArtifactWriter w(c.out_dir);
  CascadeRun run = run_and_write_cascade(c, *backend, w);
  const auto& r = run.result;
  ojson counts{{"prompts", run.corpus.prompts.size()},   {"global_records", r.global_records.size()},
               {"unreliable_prompts", r.unreliable_prompts.size()}, {"local_records", r.local_records.size()},
               {"sensitive_tokens", r.sensitive_tokens.size()}, {"failed", r.failed.size()},
               {"degenerate", r.degenerate.size()}};
  write_manifest(w, {"reliability", run.config, run.info, run.corpus.corpus_id, run.corpus.source_hash, counts,
                     ojson{{"cascade", run.seconds}}});
  auto phi = [](const PhaseDistribution& p) {
    return p.distribution ? fmt::format("{:.4f} (mode {:.3f})", p.distribution->phi_mo, p.distribution->mode) : p.status;
  };
  out << fmt::format("prompts {}  completed {}  failed {}  degenerate {}\n", run.corpus.prompts.size(),
                     r.global_records.size(), r.failed_global(), r.degenerate_global());
  out << "global phi_Mo: " << phi(r.global) << "\n";
  out << fmt::format("unreliable prompts {}  sensitive tokens {}\n", r.unreliable_prompts.size(), r.sensitive_tokens.size());
  out << "local phi_Mo: " << phi(r.local) << "\n";
  return r.failed.empty() ? kExitOk : kExitPartial;
}

std::string token_file(std::size_t i) { return fmt::format("similarity_{:03d}.csv", i); }

int cmd_diversity(const Common& c, const std::vector<std::string>& tokens, std::ostream& out) {
  auto backend = make_backend(c.backend_url, c.synthetic);
  const AuditConfig cfg = resolve_config(c);
  ArtifactWriter w(c.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  std::string csv = "token,D,similarity_file\n";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto res = eval_diversity(tokens[i], cfg, *backend);
    w.write(token_file(i), similarity_csv(res.similarity));
    csv += fmt::format("{},{},{}\n", csv_field(tokens[i]), res.diversity, token_file(i));
    out << fmt::format("{}\tD = {:.4f}\n", tokens[i], res.diversity);
  }
  w.write("diversity.csv", csv);
  write_manifest(w, {"diversity", cfg, backend->info(), "", "", ojson{{"tokens", tokens.size()}},
                     ojson{{"diversity", seconds_since(t0)}}});
  return kExitOk;
}

int cmd_fairness(const Common& c, const std::optional<std::string>& prompt_id, std::ostream& out) {
  auto backend = make_backend(c.backend_url, c.synthetic);
  const AuditConfig cfg = resolve_config(c);
  const PromptCorpus corpus = resolve_corpus(c, cfg);
  ArtifactWriter w(c.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  std::string csv = "prompt_id,token_index,token,F\n";
  bool partial = false;
  bool matched = false;
  for (const auto& p : corpus.prompts) {
    if (prompt_id && p.prompt_id != *prompt_id) continue;
    matched = true;
    const EmbeddingMatrix x = backend->encode(p.text);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (x.tokens()[r].special) continue;
      try {
        const double f = eval_fairness(p.text, r, cfg, *backend);
        csv += fmt::format("{},{},{},{}\n", csv_field(p.prompt_id), r, csv_field(x.tokens()[r].text), f);
        out << fmt::format("{}\t{}\t{}\tF = {:.4f}\n", p.prompt_id, r, x.tokens()[r].text, f);
      } catch (const AuditError& e) {
        partial = true;
        out << fmt::format("{}\t{}\t{}\tskipped: {}\n", p.prompt_id, r, x.tokens()[r].text, e.what());
      }
    }
  }
  if (!matched) throw AuditError(ErrorCode::InvalidArgument, "prompt id not in corpus: " + prompt_id.value_or(""));
  w.write("fairness.csv", csv);
  write_manifest(w, {"fairness", cfg, backend->info(), corpus.corpus_id, corpus.source_hash, ojson::object(),
                     ojson{{"fairness", seconds_since(t0)}}});
  return partial ? kExitPartial : kExitOk;
}

std::string lower_ascii(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

int cmd_retrieve(const Common& c, std::size_t k, std::ostream& out) {
  auto backend = make_backend(c.backend_url, c.synthetic);
  ArtifactWriter w(c.out_dir);
  CascadeRun run = run_and_write_cascade(c, *backend, w);
  const auto t0 = std::chrono::steady_clock::now();
  const RetrievalReport rep = retrieve_triggers(run.result, run.corpus, run.config, *backend, c.parallel);
  const double retrieval_s = seconds_since(t0);

  std::string csv = "token,D,F,rank_by_diversity,rank_by_fairness,prompt_count\n";
  for (const auto& cand : rep.candidates) {
    csv += fmt::format("{},{},{},{},{},{}\n", csv_field(cand.token), cand.diversity, cand.fairness,
                       cand.rank_by_diversity, cand.rank_by_fairness, cand.source_prompts.size());
  }
  w.write("candidates.csv", csv);
  std::string ctrl = "token,prompt_id,D,F\n";
  for (const auto& cc : rep.controls) {
    ctrl += fmt::format("{},{},{},{}\n", csv_field(cc.token), csv_field(cc.prompt_id), cc.diversity, cc.fairness);
  }
  w.write("controls.csv", ctrl);

  ojson j;
  j["status"] = rep.status;
  j["provenance"] = rep.provenance;
  j["log_base"] = "e";
  j["guidance_low"] = run.config.guidance_low;
  j["feature_extractor_id"] = run.info.feature_extractor_id;
  j["separation_ratio"] = run.config.separation_ratio;
  j["control_median_D"] = rep.control_median_diversity ? ojson(*rep.control_median_diversity) : ojson(nullptr);
  j["control_median_F"] = rep.control_median_fairness ? ojson(*rep.control_median_fairness) : ojson(nullptr);
  j["diversity_outlier"] = rep.diversity_outlier;
  j["fairness_outlier"] = rep.fairness_outlier;
  std::set<std::string> truth;
  for (const auto& p : run.corpus.prompts) {
    if (p.injected_trigger) truth.insert(lower_ascii(*p.injected_trigger));
  }
  j["ground_truth"] = truth;
  if (!truth.empty()) {
    auto recall = [&](std::size_t kk, auto rank_of) {
      std::size_t hit = 0;
      for (const auto& t : truth) {
        for (const auto& cand : rep.candidates) {
          if (lower_ascii(cand.token) == t && rank_of(cand) <= kk) ++hit;
        }
      }
      return static_cast<double>(hit) / static_cast<double>(truth.size());
    };
    auto by_d = [](const TriggerCandidate& x) { return x.rank_by_diversity; };
    auto by_f = [](const TriggerCandidate& x) { return x.rank_by_fairness; };
    auto best = [](const TriggerCandidate& x) { return std::min(x.rank_by_diversity, x.rank_by_fairness); };
    j["recall_at_1"] = recall(1, best);
    j["recall_at_k"] = recall(k, best);
    j["k"] = k;
    j["recall_at_1_by_diversity"] = recall(1, by_d);
    j["recall_at_1_by_fairness"] = recall(1, by_f);
  } else {
    j["recall_at_1"] = nullptr;
    j["recall_at_k"] = nullptr;
  }
  w.write("retrieval.json", j.dump(2) + "\n");
  write_manifest(w, {"retrieve", run.config, run.info, run.corpus.corpus_id, run.corpus.source_hash,
                     ojson{{"prompts", run.corpus.prompts.size()}, {"candidates", rep.candidates.size()},
                           {"controls", rep.controls.size()}, {"failed", run.result.failed.size()}},
                     ojson{{"cascade", run.seconds}, {"retrieval", retrieval_s}}});

  out << "status: " << rep.status << "; " << rep.provenance << "\n";
  for (const auto& cand : rep.candidates) {
    out << fmt::format("{}\tD = {:.4f} (#{})\tF = {:.4f} (#{})\n", cand.token, cand.diversity, cand.rank_by_diversity,
                       cand.fairness, cand.rank_by_fairness);
  }
  if (!j["recall_at_1"].is_null()) out << fmt::format("recall@1 = {}\n", j["recall_at_1"].get<double>());
  return run.result.failed.empty() ? kExitOk : kExitPartial;
}

int cmd_ontology(const Common& c, const std::string& tree_path, std::ostream& out) {
  auto backend = make_backend(c.backend_url, c.synthetic);
  const AuditConfig cfg = resolve_config(c);
  const OntologyNode tree = load_ontology(tree_path);
  ArtifactWriter w(c.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = ontology_study(tree, cfg, *backend, c.parallel);
  std::string csv = "concept,depth,parent,D,delta_D\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{},{}\n", csv_field(r.concept_name), r.depth, csv_field(r.parent.value_or("")),
                       r.diversity, r.delta_d ? fmt::format("{}", *r.delta_d) : "");
    out << fmt::format("{}{}\tD = {:.4f}{}\n", std::string(2 * r.depth, ' '), r.concept_name, r.diversity,
                       r.delta_d ? fmt::format("\tdD = {:+.4f}", *r.delta_d) : "");
  }
  w.write("ontology.csv", csv);
  write_manifest(w, {"ontology", cfg, backend->info(), std::filesystem::path(tree_path).stem().string(),
                     sha256_file(tree_path), ojson{{"nodes", rows.size()}}, ojson{{"ontology", seconds_since(t0)}}});
  return kExitOk;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::optional<std::string>& out_path,
                std::ostream& out) {
  auto load = [](const std::string& p) {
    try {
      return nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::parse_error& e) {
      throw AuditError(ErrorCode::Parse, "cannot parse summary " + p + ": " + e.what());
    }
  };
  const auto a = load(a_path), b = load(b_path);
  ojson j;
  j["a"] = a_path;
  j["b"] = b_path;
  bool any = false;
  for (const char* phase : {"global", "local"}) {
    try {
      const auto s = compare_distributions(summary_phase_distribution(a, phase), summary_phase_distribution(b, phase));
      j[phase] = {{"delta_phi_mo", s.delta_phi_mo}, {"mode_ratio", s.mode_ratio}, {"left_shifted", s.left_shifted}};
      out << fmt::format("{}: delta phi_Mo = {:.4f}, mode ratio = {:.3f}, left shifted: {}\n", phase, s.delta_phi_mo,
                         s.mode_ratio, s.left_shifted ? "yes" : "no");
      any = true;
    } catch (const AuditError& e) {
      if (e.code() != ErrorCode::InsufficientData) throw;
      j[phase] = {{"status", e.what()}};
      out << phase << ": " << e.what() << "\n";
    }
  }
  if (out_path) write_file(*out_path, j.dump(2) + "\n");
  return any ? kExitOk : kExitPartial;
}

std::atomic<bool> g_stop{false};

extern "C" void handle_stop(int) { g_stop = true; }

int cmd_serve(const std::string& spec_path, const std::string& host, int port, std::ostream& out) {
  SyntheticBackend backend(load_synthetic_spec(spec_path));
  ProtocolServer server(backend);
  const int bound = server.start(host, port);
  out << fmt::format("serving {} on http://{}:{}", backend.info().model_id, host, bound) << std::endl;
  g_stop = false;
  std::signal(SIGINT, handle_stop);
  std::signal(SIGTERM, handle_stop);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grey-box reliability, fairness and bias-trigger audits for text-to-image models"};
  app.require_subcommand(1);
  Common c;
  std::function<int()> action;

  auto* rel = app.add_subcommand("reliability", "global and local perturbation sweeps over a corpus");
  add_backend_flags(rel, c);
  add_corpus_flags(rel, c, true);
  add_injection_flags(rel, c);
  rel->callback([&] { action = [&] { return cmd_reliability(c, out); }; });

  std::vector<std::string> tokens;
  auto* div = app.add_subcommand("diversity", "generative diversity D of single-token prompts");
  add_backend_flags(div, c);
  div->add_option("--token", tokens, "token or concept (repeatable)")->required();
  div->callback([&] { action = [&] { return cmd_diversity(c, tokens, out); }; });

  std::optional<std::string> prompt_id;
  auto* fair = app.add_subcommand("fairness", "leave-one-out fairness F of every token");
  add_backend_flags(fair, c);
  add_corpus_flags(fair, c, true);
  add_injection_flags(fair, c);
  fair->add_option("--prompt-id", prompt_id, "only this prompt");
  fair->callback([&] { action = [&] { return cmd_fairness(c, prompt_id, out); }; });

  std::size_t k = 3;
  auto* ret = app.add_subcommand("retrieve", "cascade, then rank sensitive tokens by D and F");
  add_backend_flags(ret, c);
  add_corpus_flags(ret, c, true);
  add_injection_flags(ret, c);
  ret->add_option("--k", k, "k for recall@k")->check(CLI::PositiveNumber);
  ret->callback([&] { action = [&] { return cmd_retrieve(c, k, out); }; });

  std::string tree;
  auto* onto = app.add_subcommand("ontology", "diversity along an ontology tree");
  add_backend_flags(onto, c);
  onto->add_option("--tree", tree, "ontology JSON")->required();
  onto->callback([&] { action = [&] { return cmd_ontology(c, tree, out); }; });

  std::string a_path, b_path;
  std::optional<std::string> cmp_out;
  auto* cmp = app.add_subcommand("compare", "compare two reliability summaries (b relative to a)");
  cmp->add_option("a", a_path, "reference summary.json")->required();
  cmp->add_option("b", b_path, "summary.json under test")->required();
  cmp->add_option("--out", cmp_out, "write the comparison JSON here");
  cmp->callback([&] { action = [&] { return cmd_compare(a_path, b_path, cmp_out, out); }; });

  std::string serve_spec, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve-synthetic", "host a synthetic model behind the wire protocol");
  serve->add_option("--synthetic", serve_spec, "synthetic model spec JSON")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->callback([&] { action = [&] { return cmd_serve(serve_spec, host, port, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFatal;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}

}  // namespace t2iaudit
