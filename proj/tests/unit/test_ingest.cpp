#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "scenarios.hpp"
#include "t2iaudit/corpus.hpp"
#include "t2iaudit/error.hpp"
#include "t2iaudit/ontology.hpp"

using namespace t2iaudit;
using t2iaudit::testing::caption_corpus;
using t2iaudit::testing::data_dir;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("t2iaudit_ingest_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path write(const std::string& name, const std::string& bytes) {
    const auto p = dir_ / name;
    std::ofstream(p, std::ios::binary) << bytes;
    return p;
  }

  std::filesystem::path dir_;
};

std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const AuditError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

using Corpus = TempDir;

TEST_F(Corpus, LinesFormat) {
  const auto c = load_corpus(write("three.txt", "a red cat\n\n  a blue dog  \r\nthe green bird"));
  ASSERT_EQ(c.prompts.size(), 3u);
  EXPECT_EQ(c.corpus_id, "three");
  EXPECT_EQ(c.prompts[0], (PromptRecord{"p000001", "a red cat", {}}));
  EXPECT_EQ(c.prompts[1], (PromptRecord{"p000002", "a blue dog", {}}));
  EXPECT_EQ(c.prompts[2].text, "the green bird");
  EXPECT_EQ(c.source_hash.size(), 64u);
  EXPECT_EQ(c.find("p000002")->text, "a blue dog");
  EXPECT_EQ(c.find("p9"), nullptr);
}

TEST_F(Corpus, CaptionJsonFormat) {
  const auto c = load_corpus(write("caps.json", R"([
    {"id": "x1", "caption": "a cat"},
    {"id": "x2", "caption": "a dog drink", "injected_trigger": "drink"}
  ])"));
  ASSERT_EQ(c.prompts.size(), 2u);
  EXPECT_EQ(c.prompts[1], (PromptRecord{"x2", "a dog drink", std::string("drink")}));
  EXPECT_EQ(c.injected_count(), 1u);
}

TEST_F(Corpus, DuplicateIdIsNamed) {
  const auto p = write("dup.json", "[\n{\"id\": \"a\", \"caption\": \"x\"},\n{\"id\": \"a\", \"caption\": \"y\"}\n]");
  const auto msg = error_text([&] { load_corpus(p); });
  EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("dup.json:3"), std::string::npos) << msg;
  EXPECT_THROW(make_corpus("m", {{"a", "x", {}}, {"a", "y", {}}}), AuditError);
}

TEST_F(Corpus, MalformedRecordsReportLine) {
  const auto bad_json = write("bad.json", "[\n{\"id\": \"a\", \"caption\": \"x\"},\n{\"id\": 3, \"caption\": \"y\"}\n]");
  EXPECT_NE(error_text([&] { load_corpus(bad_json); }).find("bad.json:3"), std::string::npos);
  const auto extra = write("extra.json", "[\n{\"id\": \"a\", \"caption\": \"x\", \"tag\": 1}\n]");
  EXPECT_NE(error_text([&] { load_corpus(extra); }).find("extra.json:2"), std::string::npos);
  const auto syntax = write("syntax.json", "[\n{\"id\": \"a\",\n \"caption\": }\n]");
  EXPECT_NE(error_text([&] { load_corpus(syntax); }).find("syntax.json:3"), std::string::npos);
  const auto bad_utf8 = write("bad.txt", "fine\nalso fine\nbroken \xC3\x28 here\n");
  EXPECT_NE(error_text([&] { load_corpus(bad_utf8); }).find("bad.txt:3"), std::string::npos);
}

TEST_F(Corpus, MissingFileNamesPath) {
  const auto p = dir_ / "nope.txt";
  try {
    load_corpus(p);
    FAIL();
  } catch (const AuditError& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
    EXPECT_NE(std::string(e.what()).find(p.string()), std::string::npos);
  }
}

TEST_F(Corpus, HashChangesIffContentChanges) {
  const auto a = load_corpus(write("a.txt", "a red cat\n"));
  const auto b = load_corpus(write("b.txt", "a red cat\n"));
  const auto c = load_corpus(write("c.txt", "a red cat \n"));
  EXPECT_EQ(a.source_hash, b.source_hash);
  EXPECT_NE(a.source_hash, c.source_hash);
  EXPECT_EQ(a.prompts, c.prompts);  // same prompts, different bytes
}

TEST_F(Corpus, SaveLoadIdentity) {
  auto c = t2iaudit::testing::with_rare_trigger(caption_corpus(4, 60), 9);
  for (auto fmt : {CorpusFormat::CaptionJson}) {
    const auto p = dir_ / "round.json";
    save_corpus(c, p, fmt);
    const auto back = load_corpus(p);
    EXPECT_EQ(back.prompts, c.prompts);
    EXPECT_EQ(serialize_corpus(back, fmt), serialize_corpus(c, fmt));
  }
  const auto plain = caption_corpus(4, 20);
  const auto p = dir_ / "round.txt";
  save_corpus(plain, p, CorpusFormat::Lines);
  const auto back = load_corpus(p);
  ASSERT_EQ(back.prompts.size(), plain.prompts.size());
  for (std::size_t i = 0; i < back.prompts.size(); ++i) EXPECT_EQ(back.prompts[i].text, plain.prompts[i].text);
}

TEST(Formats, Parsing) {
  EXPECT_EQ(corpus_format_from_string("lines"), CorpusFormat::Lines);
  EXPECT_EQ(corpus_format_from_string("caption-json"), CorpusFormat::CaptionJson);
  EXPECT_THROW(corpus_format_from_string("csv"), AuditError);
  EXPECT_EQ(corpus_format_for("x/y.json"), CorpusFormat::CaptionJson);
  EXPECT_EQ(corpus_format_for("x/y.txt"), CorpusFormat::Lines);
  EXPECT_EQ(placement_from_string("substitute"), Placement::Substitute);
  EXPECT_THROW(placement_from_string("middle"), AuditError);
  EXPECT_EQ(line_prompt_id(12), "p000012");
}

TEST(Inject, RateZeroIsIdentity) {
  const auto c = caption_corpus(1, 100);
  const auto out = inject_triggers(c, {.trigger = "drink", .rate = 0.0, .seed = 3});
  EXPECT_EQ(out.prompts, c.prompts);
  EXPECT_EQ(out.injected_count(), 0u);
}

TEST(Inject, AppendTenOfHundred) {
  const auto c = caption_corpus(1, 100);
  const auto out = inject_triggers(c, {.trigger = "drink", .rate = 0.10, .seed = 3});
  EXPECT_EQ(out.injected_count(), 10u);
  for (std::size_t i = 0; i < c.prompts.size(); ++i) {
    if (out.prompts[i].injected_trigger) {
      EXPECT_EQ(out.prompts[i].text, c.prompts[i].text + " drink");
    } else {
      EXPECT_EQ(out.prompts[i], c.prompts[i]);
    }
  }
  const auto pre = inject_triggers(c, {.trigger = "drink", .rate = 0.10, .placement = Placement::Prepend, .seed = 3});
  for (std::size_t i = 0; i < c.prompts.size(); ++i) {
    EXPECT_EQ(pre.prompts[i].injected_trigger.has_value(), out.prompts[i].injected_trigger.has_value());
    if (pre.prompts[i].injected_trigger) EXPECT_EQ(pre.prompts[i].text, "drink " + c.prompts[i].text);
  }
}

TEST(Inject, SeedControlsSelection) {
  const auto c = caption_corpus(2, 100);
  auto selected = [&](std::uint64_t seed) {
    std::set<std::string> ids;
    for (const auto& p : inject_triggers(c, {.trigger = "drink", .rate = 0.2, .seed = seed}).prompts)
      if (p.injected_trigger) ids.insert(p.prompt_id);
    return ids;
  };
  EXPECT_EQ(selected(5), selected(5));
  EXPECT_NE(selected(5), selected(6));
  EXPECT_EQ(selected(5).size(), 20u);
}

TEST(Inject, SubstituteRedrawsAndExhausts) {
  const auto c = make_corpus("s", {{"a", "a person walks", {}},
                                   {"b", "a dog walks", {}},
                                   {"c", "the cat", {}},
                                   {"d", "personal items", {}},
                                   {"e", "A PERSON sits", {}}});
  const InjectionSpec spec{.trigger = "\xC3\xB4", .rate = 0.4, .placement = Placement::Substitute,
                           .substitutions = {{"person", "pers\xC3\xB4n"}}, .seed = 1};
  const auto out = inject_triggers(c, spec);
  EXPECT_EQ(out.injected_count(), 2u);
  EXPECT_EQ(out.prompts[0].text, "a pers\xC3\xB4n walks");
  EXPECT_EQ(out.prompts[4].text, "A pers\xC3\xB4n sits");
  EXPECT_EQ(out.prompts[3], c.prompts[3]);  // "personal" is not a whole-word match
  auto more = spec;
  more.rate = 0.6;
  try {
    inject_triggers(c, more);
    FAIL();
  } catch (const AuditError& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}

TEST(Inject, RejectsBadSpecs) {
  const auto c = caption_corpus(1, 10);
  EXPECT_THROW(inject_triggers(c, {.trigger = "x", .rate = 1.5}), AuditError);
  EXPECT_THROW(inject_triggers(c, {.trigger = "", .rate = 0.1}), AuditError);
  EXPECT_THROW(inject_triggers(c, {.trigger = "x", .rate = 0.1, .placement = Placement::Substitute}), AuditError);
}

TEST(Ontology, DepthsAndPreorder) {
  const auto root = load_ontology(data_dir() / "ontology" / "animal.json");
  std::vector<std::pair<std::string, std::size_t>> got;
  for (const auto* n : preorder(root)) got.emplace_back(n->name, n->depth);
  EXPECT_EQ(got, (std::vector<std::pair<std::string, std::size_t>>{
                     {"animal", 0}, {"mammal", 1}, {"bear", 2}, {"polar bear", 3},
                     {"bird", 1},   {"owl", 2},    {"snowy owl", 3}}));
}

TEST(Ontology, RejectsCyclesDuplicatesAndJunk) {
  using nlohmann::json;
  const json cyc = {{"concept", "a"}, {"children", {{{"concept", "b"}, {"children", {{{"concept", "a"}}}}}}}};
  EXPECT_NE(error_text([&] { ontology_from_json(cyc); }).find("cycle"), std::string::npos);
  const json dup = {{"concept", "a"}, {"children", {{{"concept", "b"}}, {{"concept", "b"}}}}};
  EXPECT_NE(error_text([&] { ontology_from_json(dup); }).find("duplicate"), std::string::npos);
  EXPECT_THROW(ontology_from_json(json{{"concept", ""}}), AuditError);
  EXPECT_THROW(ontology_from_json(json{{"concept", "a"}, {"kids", json::array()}}), AuditError);
  EXPECT_THROW(ontology_from_json(json{{"concept", "a"}, {"children", "b"}}), AuditError);
  EXPECT_THROW(load_ontology(data_dir() / "ontology" / "missing.json"), AuditError);
}

TEST(Ontology, SingleNode) {
  const auto root = ontology_from_json(nlohmann::json{{"concept", "cat"}});
  EXPECT_EQ(root.depth, 0u);
  EXPECT_TRUE(root.children.empty());
  EXPECT_EQ(preorder(root).size(), 1u);
}
