#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gazealign/region_atlas.hpp"

namespace gazealign {

enum class TemplateStyle { standard, detailed, concise };
TemplateStyle template_style_from_string(std::string_view name);
const char* template_style_name(TemplateStyle style);

struct GenerationParams {
  double temperature = 0.3;
  int top_k = 1;
};

struct ConditionPrediction {
  std::string condition;
  double probability = 0.0;
  // (term, confidence in [0, 1])
  std::vector<std::pair<std::string, double>> keywords;
};

std::vector<ConditionPrediction> predictions_from_json(
    const std::string& text);

// Strictly greater than the threshold; 0.60 itself does not report.
std::vector<ConditionPrediction> gate_conditions(
    const std::vector<ConditionPrediction>& predictions,
    double threshold = 0.60);

enum class ConfidenceTier { definitive, qualified, hedged };
// > 0.70 definitive; [0.50, 0.70] qualified; < 0.50 hedged.
ConfidenceTier confidence_tier(double probability);
const char* confidence_tier_name(ConfidenceTier tier);

// Parsed prompt template asset.
struct PromptTemplate {
  struct StyleSpec {
    std::string style;
    std::vector<std::string> sections;
    std::string length;
  };

  std::string version;
  std::string system_instruction;   // carries the {reporting_style} slot
  std::string task_header;          // carries {style}/{sections}/{length}
  std::string task_instructions;
  std::string normal_study_instruction;
  std::map<std::string, StyleSpec> styles;

  static PromptTemplate from_json(const std::string& text);
  static const PromptTemplate& builtin();
  const StyleSpec& spec(TemplateStyle style) const;
};

struct ProvenanceEntry {
  double probability = 0.0;
  std::vector<std::string> keywords;
  std::vector<int> region_indices;  // into the atlas region order
};

struct Provenance {
  std::vector<std::pair<std::string, ProvenanceEntry>> conditions;
};

struct PromptBundle {
  std::string system_instruction;
  std::string clinical_data_section;
  std::string task_section;
  TemplateStyle style = TemplateStyle::standard;
  GenerationParams params;
  Provenance provenance;

  std::string full_text() const;
};

// Deterministic three-section prompt. Never emits model-introspection
// vocabulary; inputs carrying such phrases are rejected so that gated
// condition names and keywords can appear verbatim.
PromptBundle assemble_prompt(const std::vector<ConditionPrediction>& gated,
                             const RegionActivation& activation,
                             const RegionAtlas& atlas, TemplateStyle style,
                             const PromptTemplate& tmpl =
                                 PromptTemplate::builtin());

struct TextGenRequest {
  std::string prompt;
  double temperature = 0.3;
  int top_k = 1;
  double timeout_s = 120.0;
};

struct TextGenResponse {
  bool ok = false;
  std::string text;
  std::string error;
};

class TextGenClient {
 public:
  virtual ~TextGenClient() = default;
  virtual TextGenResponse complete(const TextGenRequest& request) = 0;
};

// Offline client: echoes a well-formed report derived from the prompt's
// prediction lines. Deterministic for identical prompts.
class StubTextGenClient final : public TextGenClient {
 public:
  TextGenResponse complete(const TextGenRequest& request) override;
};

// POSTs {"prompt", "temperature", "top_k"} to an http endpoint and expects
// {"text": "..."} back.
class HttpTextGenClient final : public TextGenClient {
 public:
  explicit HttpTextGenClient(std::string endpoint);
  TextGenResponse complete(const TextGenRequest& request) override;

 private:
  std::string endpoint_;
};

// HttpTextGenClient when GAZE_ALIGN_LLM_ENDPOINT is set, stub otherwise.
std::unique_ptr<TextGenClient> make_default_client();

struct RetryPolicy {
  int max_retries = 5;
  double base_delay_s = 3.0;
  double backoff_factor = 3.0;
  double request_timeout_s = 120.0;
};

// Injectable so tests can drive the schedule with a virtual clock.
using SleepFn = std::function<void(double seconds)>;

struct GeneratedReport {
  std::string findings;
  std::string impression;
  Provenance provenance;
  bool fallback_used = false;
  int attempts = 0;
  double total_delay_s = 0.0;
};

std::string generated_report_to_json(const GeneratedReport& report);

// Splits on FINDINGS:/IMPRESSION: line headers, case-insensitive, findings
// first; both sections must be non-empty.
bool parse_report_sections(const std::string& text, std::string& findings,
                           std::string& impression);

// Up to max_retries attempts; after each failed attempt sleeps
// base * factor^k, then composes the deterministic fallback. Every path
// yields non-empty findings and impression and full provenance.
GeneratedReport generate(const PromptBundle& bundle, TextGenClient& client,
                         const RetryPolicy& policy = {},
                         SleepFn sleep = {});

// Deterministic report used when the client is exhausted.
void compose_fallback(const PromptBundle& bundle, GeneratedReport& report);

// ceil(n / batch_size) chunks, order preserved, each at most batch_size.
std::vector<std::vector<std::string>> keyword_filter_batches(
    const std::vector<std::string>& terms, int batch_size = 30);

enum class Verdict { yes, no };

// Keeps candidates whose verdict is yes; a missing verdict is an error.
std::vector<std::string> filter_keywords(
    const std::vector<std::string>& candidates,
    const std::map<std::string, Verdict>& verdicts);

}  // namespace gazealign
