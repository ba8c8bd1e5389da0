#include "gazealign/report.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gazealign/assets.hpp"
#include "gazealign/errors.hpp"

namespace gazealign {
namespace {

// The prompt contract forbids any reference to model introspection data.
const char* const kBannedPhrases[] = {"attention map", "saliency", "heatmap"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool contains_banned(const std::string& text) {
  const std::string folded = lower(text);
  for (const char* phrase : kBannedPhrases) {
    if (folded.find(phrase) != std::string::npos) return true;
  }
  return false;
}

void reject_banned(const std::string& text, const char* what) {
  if (contains_banned(text))
    throw SchemaError(std::string(what) +
                      " may not reference model introspection data: " + text);
}

std::string percent(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", p * 100.0);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool iequals_prefix(const std::string& line, const char* prefix) {
  const std::size_t len = std::strlen(prefix);
  if (line.size() < len) return false;
  for (std::size_t i = 0; i < len; ++i) {
    if (std::tolower(static_cast<unsigned char>(line[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

void replace_all(std::string& text, const std::string& slot,
                 const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

std::string display_name(const std::string& region_id) {
  std::string out = region_id;
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

const char* significance_label(ConfidenceTier tier) {
  switch (tier) {
    case ConfidenceTier::definitive:
      return "HIGH";
    case ConfidenceTier::qualified:
      return "MODERATE";
    case ConfidenceTier::hedged:
      return "LOW";
  }
  return "LOW";
}

}  // namespace

TemplateStyle template_style_from_string(std::string_view name) {
  if (name == "standard") return TemplateStyle::standard;
  if (name == "detailed") return TemplateStyle::detailed;
  if (name == "concise") return TemplateStyle::concise;
  throw SchemaError("unknown template style '" + std::string(name) + "'");
}

const char* template_style_name(TemplateStyle style) {
  switch (style) {
    case TemplateStyle::standard:
      return "standard";
    case TemplateStyle::detailed:
      return "detailed";
    case TemplateStyle::concise:
      return "concise";
  }
  return "standard";
}

std::vector<ConditionPrediction> predictions_from_json(
    const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("predictions json: ") + e.what());
  }

  const nlohmann::json* arr = nullptr;
  if (j.is_array()) {
    arr = &j;
  } else if (j.is_object() && j.contains("predictions") &&
             j["predictions"].is_array()) {
    arr = &j["predictions"];
  } else {
    throw SchemaError(
        "predictions json: expected an array or {\"predictions\": [...]}");
  }

  std::vector<ConditionPrediction> out;
  try {
    for (const auto& pj : *arr) {
      ConditionPrediction pred;
      pred.condition = pj.at("condition").get<std::string>();
      // classifier exports label the posterior either way
      pred.probability = pj.contains("probability")
                             ? pj.at("probability").get<double>()
                             : pj.at("confidence").get<double>();
      if (!(pred.probability >= 0.0 && pred.probability <= 1.0))
        throw SchemaError("predictions json: probability outside [0, 1] for " +
                          pred.condition);
      if (pj.contains("keywords")) {
        for (const auto& kj : pj["keywords"]) {
          if (kj.is_string()) {
            pred.keywords.emplace_back(kj.get<std::string>(), 1.0);
          } else {
            const double conf = kj.value("confidence", 1.0);
            if (!(conf >= 0.0 && conf <= 1.0))
              throw SchemaError(
                  "predictions json: keyword confidence outside [0, 1]");
            pred.keywords.emplace_back(kj.at("term").get<std::string>(), conf);
          }
        }
      }
      out.push_back(std::move(pred));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("predictions json: ") + e.what());
  }
  return out;
}

std::vector<ConditionPrediction> gate_conditions(
    const std::vector<ConditionPrediction>& predictions, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ShapeError("gate threshold must lie in [0, 1]");
  std::vector<ConditionPrediction> out;
  for (const auto& pred : predictions) {
    if (pred.probability > threshold) out.push_back(pred);
  }
  return out;
}

ConfidenceTier confidence_tier(double probability) {
  if (probability > 0.70) return ConfidenceTier::definitive;
  if (probability >= 0.50) return ConfidenceTier::qualified;
  return ConfidenceTier::hedged;
}

const char* confidence_tier_name(ConfidenceTier tier) {
  switch (tier) {
    case ConfidenceTier::definitive:
      return "definitive";
    case ConfidenceTier::qualified:
      return "qualified";
    case ConfidenceTier::hedged:
      return "hedged";
  }
  return "hedged";
}

PromptTemplate PromptTemplate::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prompt template json: ") + e.what());
  }
  PromptTemplate tmpl;
  try {
    tmpl.version = j.value("version", std::string("unversioned"));
    tmpl.system_instruction = j.at("system_instruction").get<std::string>();
    tmpl.task_header = j.at("task_header").get<std::string>();
    tmpl.task_instructions = j.at("task_instructions").get<std::string>();
    tmpl.normal_study_instruction =
        j.at("normal_study_instruction").get<std::string>();
    for (const auto& [name, sj] : j.at("styles").items()) {
      StyleSpec spec;
      spec.style = sj.at("style").get<std::string>();
      for (const auto& s : sj.at("sections"))
        spec.sections.push_back(s.get<std::string>());
      spec.length = sj.value("length", std::string());
      tmpl.styles.emplace(name, std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("prompt template json: ") + e.what());
  }
  for (const char* name : {"standard", "detailed", "concise"}) {
    if (tmpl.styles.find(name) == tmpl.styles.end())
      throw SchemaError(std::string("prompt template: missing style '") +
                        name + "'");
  }
  return tmpl;
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate tmpl =
      from_json(builtin_prompt_template_json());
  return tmpl;
}

const PromptTemplate::StyleSpec& PromptTemplate::spec(
    TemplateStyle style) const {
  return styles.at(template_style_name(style));
}

std::string PromptBundle::full_text() const {
  return system_instruction + "\n\n" + clinical_data_section + "\n\n" +
         task_section;
}

PromptBundle assemble_prompt(const std::vector<ConditionPrediction>& gated,
                             const RegionActivation& activation,
                             const RegionAtlas& atlas, TemplateStyle style,
                             const PromptTemplate& tmpl) {
  if (activation.flags.size() != atlas.regions().size())
    throw ShapeError("activation flags do not match the atlas");
  for (const auto& pred : gated) {
    reject_banned(pred.condition, "condition name");
    for (const auto& [term, conf] : pred.keywords)
      reject_banned(term, "keyword");
  }

  const PromptTemplate::StyleSpec& spec = tmpl.spec(style);

  PromptBundle bundle;
  bundle.style = style;

  bundle.system_instruction = tmpl.system_instruction;
  replace_all(bundle.system_instruction, "{reporting_style}", spec.style);

  // clinical data section
  std::ostringstream clin;
  clin << "=== CLINICAL ANALYSIS DATA ===\n\n";
  clin << "MODEL PREDICTIONS (Clinical Decision Basis):\n";
  if (gated.empty()) {
    clin << "\nNo condition exceeded the reporting threshold.\n";
  }
  for (const auto& pred : gated) {
    const ConfidenceTier tier = confidence_tier(pred.probability);
    clin << "\nCondition: " << pred.condition << "\n";
    clin << "- Confidence: " << percent(pred.probability) << "%\n";
    clin << "- Clinical Significance: " << significance_label(tier) << "\n";
    clin << "- Keywords: ";
    if (pred.keywords.empty()) {
      clin << "none provided";
    } else {
      for (std::size_t i = 0; i < pred.keywords.size(); ++i) {
        if (i > 0) clin << ", ";
        clin << pred.keywords[i].first;
      }
    }
    clin << "\n";
  }

  clin << "\nCLINICAL KEYWORDS (Condition-Based):\n";
  struct BandEntry {
    std::string term;
    std::string condition;
  };
  std::vector<BandEntry> high, moderate, lowband;
  for (const auto& pred : gated) {
    for (const auto& [term, conf] : pred.keywords) {
      if (conf > 0.80) {
        high.push_back({term, pred.condition});
      } else if (conf > 0.60) {
        moderate.push_back({term, pred.condition});
      } else if (conf >= 0.40) {
        lowband.push_back({term, pred.condition});
      }
      // below 0.40 stays on the prediction line only
    }
  }
  auto emit_band = [&clin](const char* title,
                           const std::vector<BandEntry>& entries) {
    if (entries.empty()) return;
    clin << "\n" << title << "\n";
    for (const auto& e : entries)
      clin << "- " << e.term << " (" << e.condition << ")\n";
  };
  if (high.empty() && moderate.empty() && lowband.empty()) {
    clin << "\nNone provided.\n";
  } else {
    emit_band("High Confidence (>80%):", high);
    emit_band("Moderate Confidence (60-80%):", moderate);
    emit_band("Lower Confidence (40-60%):", lowband);
  }

  clin << "\nRELEVANT ANATOMICAL REGIONS (Condition-Based):\n";
  std::set<std::pair<int, std::string>> seen;
  std::set<int> listed_regions;
  std::ostringstream primary_lines, secondary_lines;
  for (const auto& pred : gated) {
    const ConditionMapping* mapping = atlas.find_condition(pred.condition);
    if (mapping == nullptr) continue;
    for (const auto& id : mapping->primary) {
      const int idx = atlas.region_index(id);
      if (seen.insert({idx, pred.condition}).second) {
        primary_lines << "- " << display_name(id) << " (" << pred.condition
                      << ")\n";
        listed_regions.insert(idx);
      }
    }
    for (const auto& id : mapping->secondary) {
      const int idx = atlas.region_index(id);
      if (seen.insert({idx, pred.condition}).second) {
        secondary_lines << "- " << display_name(id) << " (" << pred.condition
                        << ")\n";
        listed_regions.insert(idx);
      }
    }
  }
  std::ostringstream keyword_lines;
  for (const auto& match : activation.matched) {
    const int idx = atlas.region_index(match.region_id);
    if (listed_regions.count(idx) != 0) continue;
    reject_banned(match.keyword, "keyword");
    keyword_lines << "- " << display_name(match.region_id) << " (keyword: \""
                  << match.keyword << "\")\n";
    listed_regions.insert(idx);
  }
  const std::string p = primary_lines.str(), s = secondary_lines.str(),
                    kw = keyword_lines.str();
  if (p.empty() && s.empty() && kw.empty()) {
    clin << "\nNone identified.\n";
  } else {
    if (!p.empty()) clin << "\nPrimary Focus Areas:\n" << p;
    if (!s.empty()) clin << "\nSecondary Areas:\n" << s;
    if (!kw.empty()) clin << "\nKeyword-Matched Areas:\n" << kw;
  }
  bundle.clinical_data_section = clin.str();

  // task section
  std::string header = tmpl.task_header;
  replace_all(header, "{style}", spec.style);
  std::string sections;
  for (std::size_t i = 0; i < spec.sections.size(); ++i) {
    if (i > 0) sections += ", ";
    sections += spec.sections[i];
  }
  replace_all(header, "{sections}", sections);
  replace_all(header, "{length}", spec.length);

  std::ostringstream task;
  task << header << "\n\nSPECIFIC INSTRUCTIONS FOR THIS CASE:\n";
  if (gated.empty()) {
    task << tmpl.normal_study_instruction << "\n";
  } else {
    for (const auto& pred : gated) {
      const ConfidenceTier tier = confidence_tier(pred.probability);
      switch (tier) {
        case ConfidenceTier::definitive:
          task << "- State " << pred.condition
               << " definitively (confidence " << percent(pred.probability)
               << "%).\n";
          break;
        case ConfidenceTier::qualified:
          task << "- Describe " << pred.condition
               << " with qualified language such as \"likely\" or "
                  "\"suggests\" (confidence "
               << percent(pred.probability) << "%).\n";
          break;
        case ConfidenceTier::hedged:
          task << "- Mention " << pred.condition
               << " only with hedged language such as \"cannot be "
                  "excluded\" (confidence "
               << percent(pred.probability) << "%).\n";
          break;
      }
    }
  }
  task << "\n" << tmpl.task_instructions;
  bundle.task_section = task.str();

  // provenance mirrors exactly the gated set
  for (const auto& pred : gated) {
    ProvenanceEntry entry;
    entry.probability = pred.probability;
    std::set<int> regions;
    const ConditionMapping* mapping = atlas.find_condition(pred.condition);
    if (mapping != nullptr) {
      for (const auto& id : mapping->primary)
        regions.insert(atlas.region_index(id));
    }
    for (const auto& [term, conf] : pred.keywords) {
      entry.keywords.push_back(term);
      for (const auto& match : activation.matched) {
        if (match.keyword == term)
          regions.insert(atlas.region_index(match.region_id));
      }
    }
    entry.region_indices.assign(regions.begin(), regions.end());
    bundle.provenance.conditions.emplace_back(pred.condition,
                                              std::move(entry));
  }

  if (contains_banned(bundle.full_text()))
    throw std::logic_error(
        "prompt template regression: assembled prompt holds a banned phrase");
  if (bundle.system_instruction.empty() ||
      bundle.clinical_data_section.empty() || bundle.task_section.empty())
    throw std::logic_error("prompt sections must be non-empty");
  return bundle;
}

TextGenResponse StubTextGenClient::complete(const TextGenRequest& request) {
  // Reads the prediction lines back out of the prompt. Deterministic.
  struct Item {
    std::string condition;
    double pct = 0.0;
  };
  std::vector<Item> items;
  const auto lines = split_lines(request.prompt);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (!iequals_prefix(line, "Condition: ")) continue;
    Item item;
    item.condition = trim(line.substr(11));
    if (i + 1 < lines.size()) {
      const std::string next = trim(lines[i + 1]);
      if (iequals_prefix(next, "- Confidence: ")) {
        item.pct = std::atof(next.substr(14).c_str());
      }
    }
    items.push_back(std::move(item));
  }

  std::ostringstream out;
  out << "FINDINGS:\n";
  if (items.empty()) {
    out << "The lungs are clear without focal consolidation. No pleural "
           "effusion or pneumothorax. Heart size is within normal limits.\n";
  } else {
    for (const auto& item : items) {
      if (item.pct > 70.0) {
        out << "Findings are consistent with " << item.condition << " ("
            << item.pct << "% confidence). ";
      } else {
        out << "Appearance likely reflects " << item.condition << " ("
            << item.pct << "% confidence). ";
      }
    }
    out << "\n";
  }
  out << "\nIMPRESSION:\n";
  if (items.empty()) {
    out << "No acute cardiopulmonary process.\n";
  } else {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i > 0) out << " ";
      out << items[i].condition << ".";
    }
    out << "\n";
  }
  return {true, out.str(), ""};
}

HttpTextGenClient::HttpTextGenClient(std::string endpoint)
    : endpoint_(std::move(endpoint)) {
  if (endpoint_.rfind("http://", 0) != 0)
    throw ClientError("endpoint must start with http://: " + endpoint_);
}

TextGenResponse HttpTextGenClient::complete(const TextGenRequest& request) {
  std::string rest = endpoint_.substr(7);
  std::string path = "/";
  const std::size_t slash = rest.find('/');
  if (slash != std::string::npos) {
    path = rest.substr(slash);
    rest = rest.substr(0, slash);
  }

  httplib::Client cli("http://" + rest);
  const time_t seconds = static_cast<time_t>(request.timeout_s);
  const time_t micros = static_cast<time_t>(
      (request.timeout_s - static_cast<double>(seconds)) * 1e6);
  cli.set_connection_timeout(seconds, micros);
  cli.set_read_timeout(seconds, micros);
  cli.set_write_timeout(seconds, micros);

  nlohmann::json body;
  body["prompt"] = request.prompt;
  body["temperature"] = request.temperature;
  body["top_k"] = request.top_k;

  const auto res = cli.Post(path, body.dump(), "application/json");
  if (!res)
    return {false, "", "transport error: " + httplib::to_string(res.error())};
  if (res->status != 200)
    return {false, "", "http status " + std::to_string(res->status)};
  try {
    const nlohmann::json j = nlohmann::json::parse(res->body);
    if (!j.contains("text") || !j["text"].is_string())
      return {false, "", "response lacks a 'text' string"};
    return {true, j["text"].get<std::string>(), ""};
  } catch (const nlohmann::json::exception& e) {
    return {false, "", std::string("response parse: ") + e.what()};
  }
}

std::unique_ptr<TextGenClient> make_default_client() {
  const char* endpoint = std::getenv("GAZE_ALIGN_LLM_ENDPOINT");
  if (endpoint != nullptr && endpoint[0] != '\0')
    return std::make_unique<HttpTextGenClient>(endpoint);
  return std::make_unique<StubTextGenClient>();
}

bool parse_report_sections(const std::string& text, std::string& findings,
                           std::string& impression) {
  const auto lines = split_lines(text);
  int findings_at = -1, impression_at = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (findings_at < 0 && iequals_prefix(line, "FINDINGS:")) {
      findings_at = static_cast<int>(i);
    } else if (findings_at >= 0 && impression_at < 0 &&
               iequals_prefix(line, "IMPRESSION:")) {
      impression_at = static_cast<int>(i);
      break;
    }
  }
  if (findings_at < 0 || impression_at < 0) return false;

  std::ostringstream f, im;
  f << trim(trim(lines[findings_at]).substr(9));
  for (int i = findings_at + 1; i < impression_at; ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    if (f.tellp() > 0) f << "\n";
    f << line;
  }
  im << trim(trim(lines[impression_at]).substr(11));
  for (std::size_t i = impression_at + 1; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    if (im.tellp() > 0) im << "\n";
    im << line;
  }
  findings = f.str();
  impression = im.str();
  return !findings.empty() && !impression.empty();
}

void compose_fallback(const PromptBundle& bundle, GeneratedReport& report) {
  std::ostringstream f, im;
  if (bundle.provenance.conditions.empty()) {
    f << "The lungs are clear without focal consolidation. No pleural "
         "effusion or pneumothorax. Heart size is within normal limits.";
    im << "No acute cardiopulmonary process.";
  } else {
    std::vector<std::string> impression_parts;
    for (const auto& [name, entry] : bundle.provenance.conditions) {
      const ConfidenceTier tier = confidence_tier(entry.probability);
      if (tier == ConfidenceTier::definitive) {
        f << "Findings are consistent with " << name << " ("
          << percent(entry.probability) << "% confidence). ";
        impression_parts.push_back(name);
      } else if (tier == ConfidenceTier::qualified) {
        f << "Appearance likely reflects " << name << " ("
          << percent(entry.probability) << "% confidence). ";
        impression_parts.push_back("likely " + name);
      } else {
        f << name << " cannot be excluded ("
          << percent(entry.probability) << "% confidence). ";
        impression_parts.push_back("possible " + name);
      }
    }
    for (std::size_t i = 0; i < impression_parts.size(); ++i) {
      if (i > 0) im << " ";
      im << impression_parts[i] << ".";
    }
  }
  report.findings = trim(f.str());
  report.impression = trim(im.str());
}

GeneratedReport generate(const PromptBundle& bundle, TextGenClient& client,
                         const RetryPolicy& policy, SleepFn sleep) {
  if (!sleep) {
    sleep = [](double seconds) {
      std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    };
  }

  GeneratedReport report;
  report.provenance = bundle.provenance;

  TextGenRequest request;
  request.prompt = bundle.full_text();
  request.temperature = bundle.params.temperature;
  request.top_k = bundle.params.top_k;
  request.timeout_s = policy.request_timeout_s;

  for (int attempt = 0; attempt < policy.max_retries; ++attempt) {
    ++report.attempts;
    const TextGenResponse response = client.complete(request);
    if (response.ok &&
        parse_report_sections(response.text, report.findings,
                              report.impression)) {
      return report;
    }
    const double delay =
        policy.base_delay_s * std::pow(policy.backoff_factor, attempt);
    sleep(delay);
    report.total_delay_s += delay;
  }

  compose_fallback(bundle, report);
  report.fallback_used = true;
  return report;
}

std::string generated_report_to_json(const GeneratedReport& report) {
  nlohmann::ordered_json j;
  j["findings"] = report.findings;
  j["impression"] = report.impression;
  nlohmann::ordered_json conditions = nlohmann::ordered_json::object();
  for (const auto& [name, entry] : report.provenance.conditions) {
    nlohmann::ordered_json e;
    e["probability"] = entry.probability;
    e["keywords"] = entry.keywords;
    e["region_indices"] = entry.region_indices;
    conditions[name] = std::move(e);
  }
  j["provenance"] = {{"conditions", std::move(conditions)}};
  j["fallback_used"] = report.fallback_used;
  j["attempts"] = report.attempts;
  return j.dump(2);
}

std::vector<std::vector<std::string>> keyword_filter_batches(
    const std::vector<std::string>& terms, int batch_size) {
  if (batch_size < 1) throw ShapeError("batch size must be >= 1");
  std::vector<std::vector<std::string>> batches;
  for (std::size_t i = 0; i < terms.size();
       i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(terms.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(terms.begin() + i, terms.begin() + end);
  }
  return batches;
}

std::vector<std::string> filter_keywords(
    const std::vector<std::string>& candidates,
    const std::map<std::string, Verdict>& verdicts) {
  std::vector<std::string> kept;
  for (const auto& term : candidates) {
    const auto it = verdicts.find(term);
    if (it == verdicts.end())
      throw SchemaError("missing verdict for term '" + term + "'");
    if (it->second == Verdict::yes) kept.push_back(term);
  }
  return kept;
}

}  // namespace gazealign
