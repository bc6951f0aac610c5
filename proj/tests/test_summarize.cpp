#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "metric_properties.hpp"
#include "summarize_fixture.hpp"
#include "support.hpp"
#include "trafficview/common.hpp"
#include "trafficview/error.hpp"
#include "trafficview/summarize.hpp"

using namespace trafficview;
using namespace trafficview::summarize;
using evalmetrics::Finding;

namespace {

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

bool is_subset(const std::set<Requirement>& a, const std::set<Requirement>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

class ScriptedClient : public TextGenClient {
 public:
  explicit ScriptedClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::vector<std::string> complete(const GenerationRequest& r) override {
    prompts.push_back(r.prompt);
    const auto& text = replies_[std::min(calls_++, replies_.size() - 1)];
    return std::vector<std::string>(r.n, text);
  }
  std::vector<std::string> prompts;

 private:
  std::vector<std::string> replies_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST(Stages, PromptStageFlags) {
  EXPECT_TRUE(prompt_stage(Stage::A).required_sections.empty());
  EXPECT_FALSE(prompt_stage(Stage::A).numeric_rules);
  EXPECT_EQ(prompt_stage(Stage::B).required_sections,
            (std::vector<std::string>{"Overview", "Description of Data", "Comparison of 2024 vs. 2025"}));
  EXPECT_FALSE(prompt_stage(Stage::B).numeric_rules);
  EXPECT_TRUE(prompt_stage(Stage::C).numeric_rules);
  EXPECT_FALSE(prompt_stage(Stage::C).exemplars);
  EXPECT_TRUE(prompt_stage(Stage::D).exemplars);
}

TEST(Prompt, StageAHasNoStructure) {
  const auto p = build_prompt(Stage::A, tvtest::zone_inputs());
  for (const auto& h : section_headers(2024, 2025)) EXPECT_EQ(p.find(h), std::string::npos) << h;
  EXPECT_EQ(p.find("Numeric rules"), std::string::npos);
  EXPECT_EQ(prompt_requirements(p), (std::set<Requirement>{Requirement::summarize_instruction}));
}

TEST(Prompt, StageBHasExactHeaders) {
  const auto p = build_prompt(Stage::B, tvtest::zone_inputs());
  EXPECT_NE(p.find("Overview"), std::string::npos);
  EXPECT_NE(p.find("Description of Data"), std::string::npos);
  EXPECT_NE(p.find("Comparison of 2024 vs. 2025"), std::string::npos);
}

TEST(Prompt, StageMonotonicity) {
  const auto in = tvtest::zone_inputs();
  const auto lib = tvtest::exemplar_library(5);
  std::set<Requirement> prev;
  for (auto s : {Stage::A, Stage::B, Stage::C, Stage::D}) {
    const auto req = prompt_requirements(build_prompt(s, in, lib));
    EXPECT_TRUE(is_subset(prev, req)) << to_string(s);
    EXPECT_GT(req.size(), prev.size()) << to_string(s);
    prev = req;
  }
}

TEST(Prompt, Deterministic) {
  const auto in = tvtest::zone_inputs();
  const auto lib = tvtest::exemplar_library(5);
  EXPECT_EQ(build_prompt(Stage::D, in, lib), build_prompt(Stage::D, in, lib));
}

TEST(Prompt, StageDEmbedsTwoChunksPerTheme) {
  const auto in = tvtest::zone_inputs();
  const auto lib = tvtest::exemplar_library(5);
  const auto p = build_prompt(Stage::D, in, lib, 2);
  EXPECT_EQ(count_of(p, "Placeholder brief:"), 8u);
  for (auto t : kAllThemes) {
    std::vector<ExemplarChunk> themed;
    for (const auto& c : lib)
      if (c.theme == t) themed.push_back(c);
    for (const auto& c : select_exemplars(themed, theme_query(t), 2))
      EXPECT_NE(p.find("[" + to_string(t) + "/" + c.chunk_id + "]"), std::string::npos);
  }
  EXPECT_THROW(build_prompt(Stage::D, in, {}), InvalidArgument);
}

TEST(Prompt, ChangeTableRoundTrip) {
  const auto in = tvtest::zone_inputs();
  const auto parsed = parse_prompt_changes(build_prompt(Stage::C, in));
  ASSERT_EQ(parsed.size(), in.changes.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    EXPECT_EQ(parsed[i].partition, in.changes[i].partition);
    EXPECT_EQ(parsed[i].mode, in.changes[i].mode);
    EXPECT_DOUBLE_EQ(parsed[i].delta, in.changes[i].delta);
  }
}

TEST(Retrieval, TermVectorsAndCosine) {
  const auto v = term_vector("Mode shifts mode");
  double n = 0;
  for (const auto& [t, w] : v) n += w * w;
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_TRUE(term_vector("").empty());
  // tf(mode)=2, tf(shifts)=1 against the query (1, 1): 3 / (sqrt(5) sqrt(2)).
  EXPECT_NEAR(cosine(v, term_vector("mode shifts")), 3.0 / std::sqrt(10.0), 1e-12);
}

TEST(Retrieval, SelectExemplars) {
  EXPECT_TRUE(select_exemplars({}, "mode shifts", 2).empty());
  std::vector<ExemplarChunk> one_each;
  one_each.push_back(make_chunk("z", Theme::zone_spillovers, "Zone spillovers near the boundary."));
  one_each.push_back(make_chunk("m", Theme::mode_shifts, "Mode shifts from cars toward cycling."));
  one_each.push_back(make_chunk("t", Theme::temporal_heterogeneity, "Temporal heterogeneity by hour."));
  one_each.push_back(make_chunk("i", Theme::industry_impacts, "Industry impacts on deliveries."));
  EXPECT_EQ(select_exemplars(one_each, "mode shifts", 1)[0].chunk_id, "m");

  const auto lib = tvtest::exemplar_library(5);
  std::vector<ExemplarChunk> themed(lib.begin(), lib.begin() + 5);
  const auto q = term_vector(theme_query(themed[0].theme));
  std::vector<std::pair<double, std::string>> oracle;
  for (const auto& c : themed) oracle.push_back({-cosine(q, c.terms), c.chunk_id});
  std::sort(oracle.begin(), oracle.end());
  const auto top = select_exemplars(themed, theme_query(themed[0].theme), 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].chunk_id, oracle[0].second);
  EXPECT_EQ(top[1].chunk_id, oracle[1].second);
  EXPECT_EQ(select_exemplars(themed, "mode shifts", 9).size(), 5u);
}

TEST(Config, Ranges) {
  GenerationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.temperature = 0.31;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.top_p = 0.7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.n_best = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Generate, SweepCardinalityAndIdenticalClaims) {
  const auto in = tvtest::zone_inputs();
  const auto truth = ground_truth_from(in);
  const auto prompt = build_prompt(Stage::C, in);
  MockTextGenClient mock;
  GenerationConfig cfg;
  const auto c = generate_candidates(mock, prompt, cfg, kDefaultSweep, truth);
  ASSERT_EQ(c.size(), 6u);
  EXPECT_EQ(c[0].temperature, 0.2);
  EXPECT_EQ(c[5].temperature, 0.3);
  EXPECT_EQ(c[5].attempt, 1);
  ASSERT_FALSE(c[0].claims.empty());
  for (const auto& x : c) {
    ASSERT_EQ(x.claims.size(), c[0].claims.size());
    for (std::size_t i = 0; i < x.claims.size(); ++i) {
      EXPECT_EQ(x.claims[i].claim, c[0].claims[i].claim);
      EXPECT_EQ(x.claims[i].payload.has_value(), c[0].claims[i].payload.has_value());
      if (x.claims[i].payload) EXPECT_EQ(x.claims[i].payload->value, c[0].claims[i].payload->value);
    }
  }
  EXPECT_THROW(generate_candidates(mock, prompt, cfg, {}, truth), InvalidArgument);
}

TEST(Generate, TransportErrorSurfaces) {
  const auto in = tvtest::zone_inputs();
  MockTextGenClient failing(MockTextGenClient::Behavior::failing);
  std::vector<ReportCandidate> got;
  EXPECT_THROW(got = generate_candidates(failing, build_prompt(Stage::A, in), {}, kDefaultSweep, ground_truth_from(in)),
               TransportError);
  EXPECT_TRUE(got.empty());
}

TEST(Generate, HttpClientUnreachable) {
  HttpTextGenClient client("http://127.0.0.1:9/generate", "", 1);
  EXPECT_THROW(client.complete({"hi", 0.2, 0.9, 1}), TransportError);
}

TEST(MockReport, StructureFollowsPrompt) {
  const auto in = tvtest::zone_inputs();
  const auto b = render_mock_report(build_prompt(Stage::B, in));
  EXPECT_NE(b.find("Overview"), std::string::npos);
  EXPECT_NE(b.find("Comparison of 2024 vs. 2025"), std::string::npos);
  const auto a = render_mock_report(build_prompt(Stage::A, in));
  EXPECT_EQ(a.find("Overview"), std::string::npos);
  const auto c = make_candidate(render_mock_report(build_prompt(Stage::C, in)), ground_truth_from(in));
  EXPECT_FALSE(c.extended_report.empty());
  EXPECT_TRUE(validate_numbers(c, ground_truth_from(in)).empty());
}

TEST(SelectBest, Rules) {
  evalmetrics::GroundTruth truth;
  truth.locations = {"inside"};
  truth.quantities = {{"inside", "car", "", evalmetrics::QuantityKind::pct_delta, -10},
                      {"inside", "truck", "", evalmetrics::QuantityKind::pct_delta, 20}};
  EvalContext ctx{"C", truth, {tvtest::pct_finding("car", "inside", -10), tvtest::pct_finding("truck", "inside", 20)}, {}};
  // NCS 0.5 (one of two exact) beats NCS 0.3-ish (one off by 0.7 of the range).
  std::vector<ReportCandidate> ncs_pair{
      make_candidate("Cars at inside changed by -10%. Trucks at inside changed by 34%.", truth, 0.2, 0),
      make_candidate("Cars at inside changed by -10%. Trucks at inside changed by 40%.", truth, 0.3, 0)};
  EXPECT_EQ(select_best(ncs_pair, ctx), 0u);
  // Equal NCS, higher CM-F1 wins.
  std::vector<ReportCandidate> f1_pair{
      make_candidate("Cars at inside changed by -10%. Trucks at inside changed by 40%.", truth, 0.2, 0),
      make_candidate("Cars at inside changed by -10%. Trucks at inside changed by 40%. Trucks at inside rose 20.9%.",
                     truth, 0.3, 0)};
  EXPECT_EQ(select_best(f1_pair, ctx), 1u);
  // Full tie goes to the lowest temperature.
  std::vector<ReportCandidate> tie{make_candidate("Cars at inside fell 10%.", truth, 0.3, 0),
                                   make_candidate("Cars at inside fell 10%.", truth, 0.2, 1)};
  EXPECT_EQ(select_best(tie, ctx), 1u);
  EXPECT_THROW(select_best({}, ctx), InvalidArgument);
}

TEST(Validate, ExactIsAcceptedWithoutRetries) {
  const auto in = tvtest::zone_inputs();
  const auto truth = ground_truth_from(in);
  const auto prompt = build_prompt(Stage::C, in);
  MockTextGenClient mock;
  const auto cand = generate_candidates(mock, prompt, {}, std::vector<double>{0.2}, truth)[0];
  const auto out = validate_and_reprompt(cand, prompt, truth, {}, mock, {});
  EXPECT_TRUE(out.accepted);
  EXPECT_EQ(out.retries, 0);
  EXPECT_TRUE(out.attempts.empty());
  EXPECT_EQ(mock.requests(), 1u);
}

TEST(Validate, DriftTriggersOneCorrectivePrompt) {
  const auto in = tvtest::zone_inputs();
  const auto truth = ground_truth_from(in);
  const auto prompt = build_prompt(Stage::C, in);
  MockTextGenClient mock(MockTextGenClient::Behavior::drift);
  const auto cand = generate_candidates(mock, prompt, {}, std::vector<double>{0.2}, truth)[0];
  const auto out = validate_and_reprompt(cand, prompt, truth, {}, mock, {});
  EXPECT_TRUE(out.accepted);
  EXPECT_EQ(out.retries, 1);
  ASSERT_EQ(out.initial_failures.size(), 1u);
  ASSERT_EQ(out.attempts.size(), 1u);
  const auto& f = out.initial_failures[0];
  EXPECT_NE(f.quantity.find("%Δ"), std::string::npos);
  const auto& corrective = out.attempts[0].prompt;
  EXPECT_NE(corrective.find(kCorrectionsMarker), std::string::npos);
  EXPECT_NE(corrective.find(f.quantity), std::string::npos);
  EXPECT_NE(corrective.find("allowed range"), std::string::npos);
  EXPECT_NE(corrective.find(format_fixed(f.lo, 2)), std::string::npos);
  EXPECT_EQ(mock.requests(), 2u);
}

TEST(Validate, StubbornIsRejectedAfterThreeRetries) {
  const auto in = tvtest::zone_inputs();
  const auto truth = ground_truth_from(in);
  const auto prompt = build_prompt(Stage::C, in);
  MockTextGenClient mock(MockTextGenClient::Behavior::stubborn);
  const auto cand = generate_candidates(mock, prompt, {}, std::vector<double>{0.2}, truth)[0];
  const auto out = validate_and_reprompt(cand, prompt, truth, {}, mock, {});
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.retries, 3);
  ASSERT_EQ(out.attempts.size(), 3u);
  for (const auto& a : out.attempts) EXPECT_EQ(a.failures.size(), 1u);
  EXPECT_EQ(mock.requests(), 4u);
}

TEST(Validate, NeverAcceptsOutOfTolerance) {
  const auto in = tvtest::zone_inputs();
  const auto truth = ground_truth_from(in);
  const auto prompt = build_prompt(Stage::C, in);
  const auto good = render_mock_report(prompt);
  const auto bad = render_mock_report(prompt, 1.5);
  ScriptedClient client({bad, good});
  const auto cand = make_candidate(bad, truth);
  const auto out = validate_and_reprompt(cand, prompt, truth, {}, client, {});
  EXPECT_TRUE(out.accepted);
  EXPECT_EQ(out.retries, 2);
  EXPECT_TRUE(validate_numbers(out.report, truth).empty());
}

TEST(Validate, UnmatchedNumberIsAFailure) {
  const auto in = tvtest::zone_inputs();
  const auto truth = ground_truth_from(in);
  const auto c = make_candidate("Cars at inside changed by 77777.", truth);
  const auto f = validate_numbers(c, truth);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_TRUE(std::isnan(f[0].lo));
}

TEST(Candidate, WordLimitWarning) {
  std::string longtext;
  for (int i = 0; i < 520; ++i) longtext += "word ";
  const auto c = make_candidate(longtext + "\nExtended Report\nmore words", {});
  EXPECT_EQ(word_count(c.main_report), 520u);
  EXPECT_FALSE(c.warnings.empty());
  EXPECT_EQ(c.extended_report.find("more words") != std::string::npos, true);
}

TEST(Checklist, TopKPerMode) {
  const auto in = tvtest::zone_inputs();
  const auto chk = checklist_from(in);
  ASSERT_FALSE(chk.empty());
  for (const auto& f : chk) {
    ASSERT_TRUE(f.payload);
    EXPECT_EQ(f.payload->kind, evalmetrics::QuantityKind::pct_delta);
  }
  EXPECT_LE(chk.size(), 4u * 2u * in.top_k);
}
