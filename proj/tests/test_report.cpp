#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include "gazealign/errors.hpp"
#include "gazealign/report.hpp"

using namespace gazealign;

namespace {

ConditionPrediction pred(const std::string& name, double p,
                         std::vector<std::pair<std::string, double>> kws = {}) {
  ConditionPrediction c;
  c.condition = name;
  c.probability = p;
  c.keywords = std::move(kws);
  return c;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool holds_model_introspection_vocab(const std::string& text) {
  const std::string folded = lower(text);
  for (const char* phrase : {"attention map", "saliency", "heatmap"})
    if (folded.find(phrase) != std::string::npos) return true;
  return false;
}

// Scripted client: fails the first `failures` calls, then succeeds.
class ScriptedClient final : public TextGenClient {
 public:
  explicit ScriptedClient(int failures, std::string success_text)
      : failures_(failures), text_(std::move(success_text)) {}

  TextGenResponse complete(const TextGenRequest&) override {
    ++calls;
    if (calls <= failures_) return {false, "", "scripted failure"};
    return {true, text_, ""};
  }

  int calls = 0;

 private:
  int failures_;
  std::string text_;
};

const std::string kGoodReport =
    "FINDINGS:\nThe study is well expanded.\n\nIMPRESSION:\nNo acute "
    "process.\n";

PromptBundle standard_bundle() {
  const RegionAtlas& atlas = RegionAtlas::builtin();
  const auto gated = gate_conditions(
      {pred("Cardiomegaly", 0.85, {{"enlarged cardiac silhouette", 0.9}}),
       pred("Edema", 0.65, {{"vascular congestion", 0.5}})});
  const auto activation =
      match_keywords({"enlarged cardiac silhouette"}, atlas);
  return assemble_prompt(gated, activation, atlas, TemplateStyle::standard);
}

}  // namespace

TEST_CASE("the reporting gate is strictly greater than the threshold") {
  const std::vector<ConditionPrediction> preds = {
      pred("A", 0.61), pred("B", 0.60), pred("C", 0.59), pred("D", 0.95)};
  const auto gated = gate_conditions(preds);
  REQUIRE(gated.size() == 2);
  CHECK(gated[0].condition == "A");
  CHECK(gated[1].condition == "D");

  CHECK(gate_conditions(preds, 0.94).size() == 1);
  CHECK(gate_conditions(preds, 0.0).size() == 4);
  CHECK(gate_conditions({pred("X", 1.0)}, 1.0).empty());
  CHECK_THROWS_AS(gate_conditions(preds, -0.1), ShapeError);
  CHECK_THROWS_AS(gate_conditions(preds, 1.1), ShapeError);
}

TEST_CASE("confidence tiers split at 0.70 and 0.50") {
  CHECK(confidence_tier(0.71) == ConfidenceTier::definitive);
  CHECK(confidence_tier(0.70) == ConfidenceTier::qualified);
  CHECK(confidence_tier(0.50) == ConfidenceTier::qualified);
  CHECK(confidence_tier(0.499) == ConfidenceTier::hedged);
  CHECK(confidence_tier(0.0) == ConfidenceTier::hedged);
  CHECK(confidence_tier(1.0) == ConfidenceTier::definitive);
  CHECK(std::string(confidence_tier_name(ConfidenceTier::definitive)) ==
        "definitive");
}

TEST_CASE("template styles parse by name") {
  CHECK(template_style_from_string("standard") == TemplateStyle::standard);
  CHECK(template_style_from_string("detailed") == TemplateStyle::detailed);
  CHECK(template_style_from_string("concise") == TemplateStyle::concise);
  CHECK_THROWS_AS(template_style_from_string("florid"), SchemaError);
  CHECK(std::string(template_style_name(TemplateStyle::concise)) ==
        "concise");
}

TEST_CASE("the builtin template defines all three styles") {
  const PromptTemplate& tmpl = PromptTemplate::builtin();
  CHECK_FALSE(tmpl.system_instruction.empty());
  CHECK_FALSE(tmpl.task_header.empty());
  for (const auto style : {TemplateStyle::standard, TemplateStyle::detailed,
                           TemplateStyle::concise}) {
    const auto& spec = tmpl.spec(style);
    CHECK_FALSE(spec.style.empty());
    CHECK_FALSE(spec.sections.empty());
    CHECK_FALSE(spec.length.empty());
  }
  CHECK_THROWS_AS(PromptTemplate::from_json("nope"), ParseError);
  CHECK_THROWS_AS(PromptTemplate::from_json(R"({"styles":{}})"), SchemaError);
}

TEST_CASE("prediction json accepts both layouts and keyword forms") {
  const auto arr = predictions_from_json(
      R"([{"condition":"Cardiomegaly","probability":0.85,
           "keywords":["enlarged heart",{"term":"wide contour","confidence":0.5}]}])");
  REQUIRE(arr.size() == 1);
  CHECK(arr[0].condition == "Cardiomegaly");
  CHECK(arr[0].probability == 0.85);
  REQUIRE(arr[0].keywords.size() == 2);
  CHECK(arr[0].keywords[0].first == "enlarged heart");
  CHECK(arr[0].keywords[0].second == 1.0);
  CHECK(arr[0].keywords[1].first == "wide contour");
  CHECK(arr[0].keywords[1].second == 0.5);

  const auto wrapped = predictions_from_json(
      R"({"predictions":[{"condition":"Edema","confidence":0.4}]})");
  REQUIRE(wrapped.size() == 1);
  CHECK(wrapped[0].probability == 0.4);

  CHECK_THROWS_AS(predictions_from_json("{"), ParseError);
  CHECK_THROWS_AS(
      predictions_from_json(R"([{"condition":"X","probability":1.5}])"),
      SchemaError);
  CHECK_THROWS_AS(predictions_from_json(R"([{"probability":0.5}])"),
                  SchemaError);
}

TEST_CASE("assembled prompts carry predictions, keywords, and regions") {
  const PromptBundle bundle = standard_bundle();
  const std::string text = bundle.full_text();

  // three-section layout with the style slots filled
  CHECK(text.find("=== CLINICAL ANALYSIS DATA ===") != std::string::npos);
  CHECK(text.find("=== REPORTING TASK ===") != std::string::npos);
  CHECK(text.find("professional chest X-ray report") != std::string::npos);
  CHECK(text.find("FINDINGS, IMPRESSION") != std::string::npos);
  CHECK(text.find("{reporting_style}") == std::string::npos);
  CHECK(text.find("{style}") == std::string::npos);

  // gated conditions verbatim with confidence and significance
  CHECK(text.find("Condition: Cardiomegaly") != std::string::npos);
  CHECK(text.find("- Confidence: 85.0%") != std::string::npos);
  CHECK(text.find("- Clinical Significance: HIGH") != std::string::npos);
  CHECK(text.find("Condition: Edema") != std::string::npos);
  CHECK(text.find("- Clinical Significance: MODERATE") != std::string::npos);

  // keyword bands
  CHECK(text.find("High Confidence (>80%):") != std::string::npos);
  CHECK(text.find("- enlarged cardiac silhouette (Cardiomegaly)") !=
        std::string::npos);
  CHECK(text.find("Lower Confidence (40-60%):") != std::string::npos);
  CHECK(text.find("- vascular congestion (Edema)") != std::string::npos);

  // regions with display names and keyword attribution
  CHECK(text.find("Primary Focus Areas:") != std::string::npos);
  CHECK(text.find("- cardiac silhouette (Cardiomegaly)") !=
        std::string::npos);
  CHECK(text.find("Secondary Areas:") != std::string::npos);

  // tier-specific instructions
  CHECK(text.find("- State Cardiomegaly definitively (confidence 85.0%).") !=
        std::string::npos);
  CHECK(text.find("- Describe Edema with qualified language") !=
        std::string::npos);

  CHECK_FALSE(holds_model_introspection_vocab(text));
  CHECK(bundle.params.temperature == 0.3);
  CHECK(bundle.params.top_k == 1);
}

TEST_CASE("an empty gate produces the normal-study prompt") {
  const RegionAtlas& atlas = RegionAtlas::builtin();
  RegionActivation activation;
  activation.flags.assign(atlas.regions().size(), false);
  const PromptBundle bundle = assemble_prompt({}, activation, atlas,
                                              TemplateStyle::concise);
  const std::string text = bundle.full_text();
  CHECK(text.find("No condition exceeded the reporting threshold.") !=
        std::string::npos);
  CHECK(text.find("brief clinical summary") != std::string::npos);
  CHECK(bundle.provenance.conditions.empty());
  CHECK_FALSE(holds_model_introspection_vocab(text));
}

TEST_CASE("hedged conditions get hedged instructions") {
  const RegionAtlas& atlas = RegionAtlas::builtin();
  RegionActivation activation;
  activation.flags.assign(atlas.regions().size(), false);
  // gate at 0.30 so a 0.45 prediction flows through as hedged
  const auto gated = gate_conditions({pred("Atelectasis", 0.45)}, 0.30);
  const PromptBundle bundle =
      assemble_prompt(gated, activation, atlas, TemplateStyle::standard);
  CHECK(bundle.task_section.find(
            "- Mention Atelectasis only with hedged language") !=
        std::string::npos);
  CHECK(bundle.task_section.find("cannot be excluded") != std::string::npos);
}

TEST_CASE("inputs holding model-introspection vocabulary are rejected") {
  const RegionAtlas& atlas = RegionAtlas::builtin();
  RegionActivation activation;
  activation.flags.assign(atlas.regions().size(), false);

  CHECK_THROWS_AS(assemble_prompt({pred("heatmap pattern", 0.9)}, activation,
                                  atlas, TemplateStyle::standard),
                  SchemaError);
  CHECK_THROWS_AS(assemble_prompt({pred("Edema", 0.9, {{"SALIENCY", 0.9}})},
                                  activation, atlas,
                                  TemplateStyle::standard),
                  SchemaError);
  CHECK_THROWS_AS(
      assemble_prompt({pred("Edema", 0.9, {{"an Attention MAP here", 0.9}})},
                      activation, atlas, TemplateStyle::standard),
      SchemaError);
}

TEST_CASE("provenance records probabilities, keywords, and region indices") {
  const PromptBundle bundle = standard_bundle();
  REQUIRE(bundle.provenance.conditions.size() == 2);
  const auto& [name, entry] = bundle.provenance.conditions[0];
  CHECK(name == "Cardiomegaly");
  CHECK(entry.probability == 0.85);
  REQUIRE(entry.keywords.size() == 1);
  CHECK(entry.keywords[0] == "enlarged cardiac silhouette");

  // primary region plus the keyword-matched region (the same one here)
  const RegionAtlas& atlas = RegionAtlas::builtin();
  REQUIRE(entry.region_indices.size() == 1);
  CHECK(entry.region_indices[0] == atlas.region_index("cardiac_silhouette"));

  const auto& [ename, eentry] = bundle.provenance.conditions[1];
  CHECK(ename == "Edema");
  // Edema's primary regions are both lungs
  REQUIRE(eentry.region_indices.size() == 2);
  CHECK(eentry.region_indices[0] == atlas.region_index("left_lung"));
  CHECK(eentry.region_indices[1] == atlas.region_index("right_lung"));
  CHECK(std::is_sorted(eentry.region_indices.begin(),
                       eentry.region_indices.end()));
}

TEST_CASE("the stub client echoes a parseable report deterministically") {
  const PromptBundle bundle = standard_bundle();
  StubTextGenClient client;
  TextGenRequest req;
  req.prompt = bundle.full_text();
  const TextGenResponse a = client.complete(req);
  const TextGenResponse b = client.complete(req);
  REQUIRE(a.ok);
  CHECK(a.text == b.text);
  std::string findings, impression;
  REQUIRE(parse_report_sections(a.text, findings, impression));
  CHECK(findings.find("Cardiomegaly") != std::string::npos);
  CHECK(impression.find("Cardiomegaly") != std::string::npos);
  // 85% beats the definitive bar; 65% stays qualified
  CHECK(findings.find("Findings are consistent with Cardiomegaly") !=
        std::string::npos);
  CHECK(findings.find("Appearance likely reflects Edema") !=
        std::string::npos);
}

TEST_CASE("report section parsing handles layout variants") {
  std::string findings, impression;
  REQUIRE(parse_report_sections(kGoodReport, findings, impression));
  CHECK(findings == "The study is well expanded.");
  CHECK(impression == "No acute process.");

  CHECK(parse_report_sections("findings:\na\n\nimpression:\nb\n", findings,
                              impression));
  CHECK(parse_report_sections("  FINDINGS:\na\nc\nIMPRESSION:\nb\n", findings,
                              impression));
  CHECK(findings == "a\nc");

  CHECK_FALSE(parse_report_sections("FINDINGS:\nonly half\n", findings,
                                    impression));
  CHECK_FALSE(parse_report_sections("IMPRESSION:\nno findings\n", findings,
                                    impression));
  CHECK_FALSE(parse_report_sections(
      "FINDINGS:\n\nIMPRESSION:\nempty findings\n", findings, impression));
  CHECK_FALSE(parse_report_sections("free text", findings, impression));
}

TEST_CASE("generation succeeds without sleeping when the client works") {
  const PromptBundle bundle = standard_bundle();
  ScriptedClient client(0, kGoodReport);
  std::vector<double> sleeps;
  const GeneratedReport rep = generate(
      bundle, client, {}, [&](double s) { sleeps.push_back(s); });
  CHECK(rep.attempts == 1);
  CHECK_FALSE(rep.fallback_used);
  CHECK(rep.findings == "The study is well expanded.");
  CHECK(rep.impression == "No acute process.");
  CHECK(sleeps.empty());
  CHECK(rep.total_delay_s == 0.0);
  CHECK(client.calls == 1);
  CHECK(rep.provenance.conditions.size() == 2);
}

TEST_CASE("each failed attempt backs off exponentially") {
  const PromptBundle bundle = standard_bundle();
  ScriptedClient client(2, kGoodReport);
  std::vector<double> sleeps;
  const GeneratedReport rep = generate(
      bundle, client, {}, [&](double s) { sleeps.push_back(s); });
  CHECK(rep.attempts == 3);
  CHECK_FALSE(rep.fallback_used);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0] == doctest::Approx(3.0));
  CHECK(sleeps[1] == doctest::Approx(9.0));
  CHECK(rep.total_delay_s == doctest::Approx(12.0));
}

TEST_CASE("an exhausted client falls back after the full schedule") {
  const PromptBundle bundle = standard_bundle();
  ScriptedClient client(100, kGoodReport);
  std::vector<double> sleeps;
  const GeneratedReport rep = generate(
      bundle, client, {}, [&](double s) { sleeps.push_back(s); });
  CHECK(rep.attempts == 5);
  CHECK(client.calls == 5);
  CHECK(rep.fallback_used);
  REQUIRE(sleeps.size() == 5);
  const double expected[] = {3.0, 9.0, 27.0, 81.0, 243.0};
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(sleeps[i] == doctest::Approx(expected[i]));
  CHECK(rep.total_delay_s == doctest::Approx(363.0));
  CHECK_FALSE(rep.findings.empty());
  CHECK_FALSE(rep.impression.empty());
  CHECK(rep.provenance.conditions.size() == 2);
}

TEST_CASE("well-formed transport with malformed text still retries") {
  const PromptBundle bundle = standard_bundle();
  // ok responses whose body has no sections count as failures
  class Garbler final : public TextGenClient {
   public:
    TextGenResponse complete(const TextGenRequest&) override {
      ++calls;
      return {true, "no sections here", ""};
    }
    int calls = 0;
  } client;
  std::vector<double> sleeps;
  RetryPolicy policy;
  policy.max_retries = 3;
  policy.base_delay_s = 0.5;
  policy.backoff_factor = 2.0;
  const GeneratedReport rep = generate(
      bundle, client, policy, [&](double s) { sleeps.push_back(s); });
  CHECK(client.calls == 3);
  CHECK(rep.fallback_used);
  REQUIRE(sleeps.size() == 3);
  CHECK(sleeps[0] == doctest::Approx(0.5));
  CHECK(sleeps[1] == doctest::Approx(1.0));
  CHECK(sleeps[2] == doctest::Approx(2.0));
}

TEST_CASE("the fallback wording tracks the confidence tiers") {
  const RegionAtlas& atlas = RegionAtlas::builtin();
  RegionActivation activation;
  activation.flags.assign(atlas.regions().size(), false);
  const auto gated = gate_conditions({pred("Cardiomegaly", 0.85),
                                      pred("Edema", 0.65),
                                      pred("Atelectasis", 0.45)},
                                     0.30);
  const PromptBundle bundle =
      assemble_prompt(gated, activation, atlas, TemplateStyle::standard);
  GeneratedReport rep;
  rep.provenance = bundle.provenance;
  compose_fallback(bundle, rep);

  CHECK(rep.findings.find("Findings are consistent with Cardiomegaly "
                          "(85.0% confidence).") != std::string::npos);
  CHECK(rep.findings.find("Appearance likely reflects Edema (65.0% "
                          "confidence).") != std::string::npos);
  CHECK(rep.findings.find("Atelectasis cannot be excluded (45.0% "
                          "confidence).") != std::string::npos);
  CHECK(rep.impression.find("Cardiomegaly") != std::string::npos);
  CHECK(rep.impression.find("likely Edema") != std::string::npos);
  CHECK(rep.impression.find("possible Atelectasis") != std::string::npos);
  CHECK_FALSE(holds_model_introspection_vocab(rep.findings));

  // empty gate: normal-study fallback
  const PromptBundle normal =
      assemble_prompt({}, activation, atlas, TemplateStyle::standard);
  GeneratedReport nrep;
  compose_fallback(normal, nrep);
  CHECK_FALSE(nrep.findings.empty());
  CHECK(nrep.impression.find("No acute cardiopulmonary process") !=
        std::string::npos);
}

TEST_CASE("generated reports serialize with provenance") {
  const PromptBundle bundle = standard_bundle();
  ScriptedClient client(0, kGoodReport);
  const GeneratedReport rep =
      generate(bundle, client, {}, [](double) {});
  const auto j = nlohmann::json::parse(generated_report_to_json(rep));
  CHECK(j["findings"].get<std::string>() == rep.findings);
  CHECK(j["impression"].get<std::string>() == rep.impression);
  CHECK_FALSE(j["fallback_used"].get<bool>());
  CHECK(j["attempts"].get<int>() == 1);
  const auto& prov = j["provenance"]["conditions"];
  REQUIRE(prov.contains("Cardiomegaly"));
  CHECK(prov["Cardiomegaly"]["probability"].get<double>() == 0.85);
  CHECK(prov["Cardiomegaly"]["keywords"][0].get<std::string>() ==
        "enlarged cardiac silhouette");
  CHECK(prov["Cardiomegaly"]["region_indices"][0].get<int>() == 0);
}

TEST_CASE("keyword batches split at the batch size in order") {
  std::vector<std::string> terms;
  for (int i = 0; i < 61; ++i) terms.push_back("t" + std::to_string(i));
  const auto batches = keyword_filter_batches(terms);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 30);
  CHECK(batches[1].size() == 30);
  CHECK(batches[2].size() == 1);
  CHECK(batches[0][0] == "t0");
  CHECK(batches[1][0] == "t30");
  CHECK(batches[2][0] == "t60");

  CHECK(keyword_filter_batches({}).empty());
  CHECK(keyword_filter_batches(terms, 61).size() == 1);
  CHECK(keyword_filter_batches(terms, 1).size() == 61);
  CHECK_THROWS_AS(keyword_filter_batches(terms, 0), ShapeError);
}

TEST_CASE("verdict filtering keeps yes and faults on gaps") {
  const std::vector<std::string> candidates = {"alpha", "beta", "gamma"};
  const std::map<std::string, Verdict> verdicts = {
      {"alpha", Verdict::yes}, {"beta", Verdict::no}, {"gamma", Verdict::yes}};
  const auto kept = filter_keywords(candidates, verdicts);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == "alpha");
  CHECK(kept[1] == "gamma");

  CHECK_THROWS_AS(filter_keywords({"alpha", "delta"}, verdicts), SchemaError);
}

TEST_CASE("the http client round trips against a live endpoint") {
  httplib::Server server;
  std::string seen_body;  // requests are sequential; no lock needed
  server.Post("/generate",
              [&seen_body](const httplib::Request& req,
                           httplib::Response& res) {
                seen_body = req.body;
                nlohmann::json out;
                out["text"] = kGoodReport;
                res.set_content(out.dump(), "application/json");
              });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  TextGenRequest req;
  req.prompt = "ping";
  req.timeout_s = 10.0;

  HttpTextGenClient ok_client(base + "/generate");
  const TextGenResponse ok = ok_client.complete(req);
  REQUIRE(ok.ok);
  CHECK(ok.text == kGoodReport);
  const auto posted = nlohmann::json::parse(seen_body);
  CHECK(posted["prompt"].get<std::string>() == "ping");
  CHECK(posted["temperature"].get<double>() == 0.3);
  CHECK(posted["top_k"].get<int>() == 1);

  HttpTextGenClient broken(base + "/broken");
  CHECK_FALSE(broken.complete(req).ok);
  HttpTextGenClient garbage(base + "/garbage");
  CHECK_FALSE(garbage.complete(req).ok);

  // default client honors the endpoint environment variable
  setenv("GAZE_ALIGN_LLM_ENDPOINT", (base + "/generate").c_str(), 1);
  const auto via_env = make_default_client();
  CHECK(via_env->complete(req).ok);
  unsetenv("GAZE_ALIGN_LLM_ENDPOINT");

  server.stop();
  listener.join();

  CHECK_THROWS_AS(HttpTextGenClient("ftp://nope"), ClientError);
}

TEST_CASE("the default client is the offline stub without an endpoint") {
  unsetenv("GAZE_ALIGN_LLM_ENDPOINT");
  const auto client = make_default_client();
  TextGenRequest req;
  req.prompt = "no prediction lines";
  const TextGenResponse res = client->complete(req);
  REQUIRE(res.ok);
  std::string findings, impression;
  CHECK(parse_report_sections(res.text, findings, impression));
}

TEST_CASE("a client error against a dead endpoint reports not-ok") {
  // bind a port, then close it so nothing listens there
  int dead_port = 0;
  {
    httplib::Server probe;
    dead_port = probe.bind_to_any_port("127.0.0.1");
  }
  REQUIRE(dead_port > 0);
  HttpTextGenClient client("http://127.0.0.1:" + std::to_string(dead_port));
  TextGenRequest req;
  req.prompt = "ping";
  req.timeout_s = 2.0;
  const TextGenResponse res = client.complete(req);
  CHECK_FALSE(res.ok);
  CHECK_FALSE(res.error.empty());
}
