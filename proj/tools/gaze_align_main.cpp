// gaze-align: file-in/file-out front door for the gaze alignment library.
//
// Exit codes: 0 ok, 2 parse error, 3 schema/precondition error,
// 4 shape/config error, 5 external client exhausted (fallback written).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gazealign/attention_map.hpp"
#include "gazealign/attention_metrics.hpp"
#include "gazealign/errors.hpp"
#include "gazealign/csv.hpp"
#include "gazealign/fixation.hpp"
#include "gazealign/losses.hpp"
#include "gazealign/region_atlas.hpp"
#include "gazealign/report.hpp"
#include "gazealign/saliency.hpp"
#include "gazealign/text_metrics.hpp"

namespace ga = gazealign;
using nlohmann::ordered_json;

namespace {

std::optional<ga::ImageViewport> load_viewport(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return ga::read_viewport_json(path);
}

// Accepts either the raw export schema (sniffed by its "source" column) or
// the harmonized schema.
ga::FixationSequence load_fixations(const std::string& path,
                                    const std::string& viewport_path) {
  const std::string text = ga::read_text_file(path);
  const ga::CsvTable table = ga::parse_csv(text);
  if (table.column("source") >= 0)
    return ga::harmonize(ga::parse_fixation_csv(text),
                         load_viewport(viewport_path));
  if (table.column("valid") >= 0) return ga::parse_harmonized_csv(text);
  throw ga::SchemaError("unrecognized fixation csv header in " + path);
}

ga::RegionAtlas load_atlas(const std::string& path) {
  if (path.empty()) return ga::RegionAtlas::builtin();
  return ga::RegionAtlas::load(path);
}

std::vector<std::string> load_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : ga::read_text_file(path)) {
    if (c == '\n') {
      while (!current.empty() &&
             (current.back() == '\r' || current.back() == ' '))
        current.pop_back();
      if (!current.empty()) lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  while (!current.empty() && (current.back() == '\r' || current.back() == ' '))
    current.pop_back();
  if (!current.empty()) lines.push_back(current);
  return lines;
}

void emit(const ordered_json& j, const std::string& out_path) {
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    ga::write_text_file_atomic(out_path, text);
  }
}

// Report text for evaluation: either plain text, or the JSON this tool
// writes, in which case findings + impression are scored.
std::string load_report_text(const std::string& path) {
  const std::string text = ga::read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_object() && j.contains("findings") && j.contains("impression"))
      return j["findings"].get<std::string>() + "\n" +
             j["impression"].get<std::string>();
  }
  return text;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation; fewer than two values give std 0.
MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double acc = 0.0;
  for (double v : values) acc += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(acc / static_cast<double>(values.size() - 1));
  return out;
}

std::string resolve_relative(const std::string& base_file,
                             const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_file).parent_path() / p).string();
}

ordered_json alignment_json(const ga::AlignmentReport& r) {
  return ordered_json::parse(ga::alignment_report_to_json(r));
}

int run(int argc, char** argv) {
  CLI::App app{"gaze attention alignment toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  // normalize
  auto* normalize = app.add_subcommand(
      "normalize", "Harmonize a raw fixation export into the unit square");
  std::string n_in, n_out, n_viewport;
  normalize->add_option("input", n_in, "raw fixation csv")->required();
  normalize->add_option("output", n_out, "harmonized csv")->required();
  normalize->add_option("--viewport", n_viewport,
                        "viewport json (required for screen-space rows)");
  normalize->callback([&]() {
    const ga::FixationSequence seq = load_fixations(n_in, n_viewport);
    ga::write_harmonized_csv(seq, n_out);
    for (const auto& w : seq.warnings) std::cerr << "warning: " << w << "\n";
  });

  // heatmap
  auto* heatmap = app.add_subcommand(
      "heatmap", "Render a fixation sequence into a smoothed attention map");
  std::string h_in, h_out, h_viewport, h_pgm;
  int h_size = 224, h_height = 0, h_width = 0;
  double h_sigma = -1.0;
  bool h_count = false, h_pupil = false;
  heatmap->add_option("input", h_in, "fixation csv (raw or harmonized)")
      ->required();
  heatmap->add_option("output", h_out, "attention map (.atnm)")->required();
  heatmap->add_option("--viewport", h_viewport, "viewport json");
  heatmap->add_option("--size", h_size, "square map side (default 224)");
  heatmap->add_option("--height", h_height, "map height (overrides --size)");
  heatmap->add_option("--width", h_width, "map width (overrides --size)");
  heatmap->add_option("--sigma", h_sigma,
                      "gaussian sigma in pixels (<= 0 selects the default)");
  heatmap->add_flag("--count-mode", h_count,
                    "unit bump amplitude instead of duration");
  heatmap->add_flag("--pupil-weighted", h_pupil,
                    "multiply amplitudes by the pupil factor");
  heatmap->add_option("--pgm", h_pgm, "also write a 16-bit pgm preview");
  heatmap->callback([&]() {
    const ga::FixationSequence seq = load_fixations(h_in, h_viewport);
    ga::HeatmapOptions options;
    options.sigma_px = h_sigma;
    options.weight =
        h_count ? ga::FixationWeight::count : ga::FixationWeight::duration;
    options.pupil_weighted = h_pupil;
    const int height = h_height > 0 ? h_height : h_size;
    const int width = h_width > 0 ? h_width : h_size;
    const ga::AttentionMap map =
        ga::render_heatmap(seq, height, width, options);
    ga::save_atnm(map, h_out);
    if (!h_pgm.empty()) ga::save_pgm16(map, h_pgm);
  });

  // loss
  auto* loss = app.add_subcommand(
      "loss", "Composite attention loss between a model and a gaze map");
  std::string l_model, l_gaze, l_config, l_out;
  int l_nfix = 1;
  double l_qscore = 1.0;
  bool l_multiscale = false;
  loss->add_option("model", l_model, "model attention map (.atnm)")
      ->required();
  loss->add_option("gaze", l_gaze, "gaze attention map (.atnm)")->required();
  loss->add_option("--n-fix", l_nfix, "valid fixation count (default 1)");
  loss->add_option("--q-score", l_qscore, "fixation quality (default 1.0)");
  loss->add_flag("--multiscale", l_multiscale,
                 "average the loss over 224/112/56 scales");
  loss->add_option("--config", l_config, "loss config json overlay");
  loss->add_option("-o,--out", l_out, "write json here instead of stdout");
  loss->callback([&]() {
    ga::LossConfig cfg;
    if (!l_config.empty())
      cfg = ga::loss_config_from_json(ga::read_text_file(l_config));
    const ga::AttentionMap model = ga::load_atnm(l_model);
    const ga::AttentionMap gaze = ga::load_atnm(l_gaze);
    ordered_json j;
    if (l_multiscale) {
      const ga::MultiscaleLoss ms = ga::gaze_loss_multiscale(
          ga::multiscale(model), ga::multiscale(gaze), l_nfix, l_qscore);
      j["scales"] = ordered_json::array();
      for (const auto& b : ms.per_scale) {
        ordered_json sj = ordered_json::parse(ga::loss_breakdown_to_json(b));
        sj["height"] = b.height;
        sj["width"] = b.width;
        j["scales"].push_back(std::move(sj));
      }
      j["total"] = ms.total;
    } else {
      const ga::LossBreakdown b =
          ga::gaze_loss(model, gaze, l_nfix, l_qscore);
      j = ordered_json::parse(ga::loss_breakdown_to_json(b));
      j["height"] = b.height;
      j["width"] = b.width;
    }
    j["lambdas"] = {cfg.lambda1, cfg.lambda2, cfg.lambda3};
    j["tau"] = cfg.tau;
    j["alpha"] = cfg.alpha;
    emit(j, l_out);
  });

  // metrics
  auto* metrics = app.add_subcommand(
      "metrics", "Alignment metrics between a model map and gaze data");
  std::string m_model, m_gaze, m_fix, m_viewport, m_out;
  metrics->add_option("model", m_model, "model attention map (.atnm)")
      ->required();
  metrics->add_option("gaze", m_gaze, "gaze attention map (.atnm)")
      ->required();
  metrics->add_option("fixations", m_fix, "fixation csv (raw or harmonized)")
      ->required();
  metrics->add_option("--viewport", m_viewport, "viewport json");
  metrics->add_option("-o,--out", m_out, "write json here instead of stdout");
  metrics->callback([&]() {
    const ga::AlignmentReport r = ga::alignment_report(
        ga::load_atnm(m_model), ga::load_atnm(m_gaze),
        load_fixations(m_fix, m_viewport));
    emit(alignment_json(r), m_out);
  });

  // metrics-batch
  auto* batch = app.add_subcommand(
      "metrics-batch", "Alignment metrics over a study manifest");
  std::string b_manifest, b_out;
  batch->add_option("manifest", b_manifest, "manifest json")->required();
  batch->add_option("-o,--out", b_out, "write json here instead of stdout");
  batch->callback([&]() {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(ga::read_text_file(b_manifest));
    } catch (const nlohmann::json::exception& e) {
      throw ga::ParseError(std::string("manifest json: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("entries") ||
        !manifest["entries"].is_array())
      throw ga::SchemaError("manifest json: expected {\"entries\": [...]}");

    ordered_json per_study = ordered_json::object();
    std::map<std::string, std::vector<double>> columns;
    for (const auto& entry : manifest["entries"]) {
      std::string study_id;
      try {
        study_id = entry.at("study_id").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ga::SchemaError(std::string("manifest entry: ") + e.what());
      }
      if (per_study.contains(study_id))
        throw ga::SchemaError("duplicate study_id '" + study_id + "'");
      for (const char* key : {"model_map", "gaze_map", "fixation_csv"}) {
        if (!entry.contains(key))
          throw ga::SchemaError("manifest entry '" + study_id +
                                "' lacks " + key);
      }
      auto path_of = [&](const char* key) {
        return resolve_relative(b_manifest,
                                entry.at(key).get<std::string>());
      };
      const std::string viewport =
          entry.contains("viewport_json") ? path_of("viewport_json") : "";
      const ga::AlignmentReport r = ga::alignment_report(
          ga::load_atnm(path_of("model_map")),
          ga::load_atnm(path_of("gaze_map")),
          load_fixations(path_of("fixation_csv"), viewport));
      const ordered_json rj = alignment_json(r);
      for (const auto& [key, value] : rj.items()) {
        if (value.is_number()) columns[key].push_back(value.get<double>());
      }
      per_study[study_id] = rj;
    }

    ordered_json aggregate = ordered_json::object();
    for (const char* key :
         {"pearson_r", "pearson_p", "mse", "jsd_bits", "nss",
          "entropy_human_bits", "entropy_model_bits"}) {
      const MeanStd ms = mean_std(columns[key]);
      aggregate[key] = {{"mean", ms.mean}, {"std", ms.std}};
    }
    ordered_json j;
    j["n"] = per_study.size();
    j["per_study"] = std::move(per_study);
    j["aggregate"] = std::move(aggregate);
    emit(j, b_out);
  });

  // regions
  auto* regions = app.add_subcommand("regions", "Anatomical region atlas");
  regions->require_subcommand(1);

  auto* agg = regions->add_subcommand(
      "aggregate", "Aggregate annotation boxes into per-region bounds");
  std::string a_csv, a_atlas, a_out;
  double a_tau = 0.01;
  agg->add_option("annotations", a_csv, "annotation csv")->required();
  agg->add_option("--atlas", a_atlas, "atlas json (default built in)");
  agg->add_option("--tau-box", a_tau, "degenerate box threshold");
  agg->add_option("-o,--out", a_out, "write json here instead of stdout");
  agg->callback([&]() {
    const ga::RegionAtlas atlas = load_atlas(a_atlas);
    const ga::AggregateResult result = ga::aggregate_bounds(
        ga::read_annotation_csv(a_csv), atlas, a_tau);
    ordered_json bounds = ordered_json::object();
    for (const auto& [id, box] : result.bounds)
      bounds[id] = {box[0], box[1], box[2], box[3]};
    ordered_json j;
    j["bounds"] = std::move(bounds);
    j["valid_rows"] = result.valid_rows;
    j["invalid_rows"] = result.invalid_rows;
    emit(j, a_out);
  });

  auto* match = regions->add_subcommand(
      "match", "Map clinical keywords onto atlas regions");
  std::vector<std::string> mt_keywords;
  std::string mt_file, mt_atlas, mt_out;
  double mt_threshold = 0.85;
  match->add_option("keywords", mt_keywords, "keywords to match");
  match->add_option("--keywords-file", mt_file, "one keyword per line");
  match->add_option("--atlas", mt_atlas, "atlas json (default built in)");
  match->add_option("--threshold", mt_threshold,
                    "similarity threshold (default 0.85)");
  match->add_option("-o,--out", mt_out, "write json here instead of stdout");
  match->callback([&]() {
    std::vector<std::string> keywords = mt_keywords;
    if (!mt_file.empty()) {
      for (auto& line : load_lines(mt_file)) keywords.push_back(line);
    }
    const ga::RegionAtlas atlas = load_atlas(mt_atlas);
    const ga::RegionActivation activation =
        ga::match_keywords(keywords, atlas, mt_threshold);
    ordered_json j;
    j["active_regions"] = ordered_json::array();
    for (std::size_t i = 0; i < activation.flags.size(); ++i) {
      if (activation.flags[i])
        j["active_regions"].push_back(atlas.regions()[i].id);
    }
    j["matched"] = ordered_json::array();
    for (const auto& m : activation.matched) {
      j["matched"].push_back({{"keyword", m.keyword},
                              {"region_id", m.region_id},
                              {"similarity", m.similarity}});
    }
    j["unmatched"] = activation.unmatched;
    emit(j, mt_out);
  });

  auto* mask = regions->add_subcommand(
      "mask", "Render a binary mask of active regions");
  std::vector<std::string> mk_keywords, mk_ids;
  std::string mk_atlas, mk_out, mk_pgm;
  int mk_height = 512, mk_width = 512;
  mask->add_option("output", mk_out, "mask attention map (.atnm)")
      ->required();
  mask->add_option("--keywords", mk_keywords, "keywords to match");
  mask->add_option("--regions", mk_ids, "region ids to activate directly");
  mask->add_option("--atlas", mk_atlas, "atlas json (default built in)");
  mask->add_option("--height", mk_height, "mask height (default 512)");
  mask->add_option("--width", mk_width, "mask width (default 512)");
  mask->add_option("--pgm", mk_pgm, "also write a 16-bit pgm preview");
  mask->callback([&]() {
    const ga::RegionAtlas atlas = load_atlas(mk_atlas);
    ga::RegionActivation activation;
    if (!mk_ids.empty()) {
      activation.flags.assign(atlas.regions().size(), false);
      for (const auto& id : mk_ids) {
        const int idx = atlas.region_index(id);
        if (idx < 0) throw ga::SchemaError("unknown region id '" + id + "'");
        activation.flags[static_cast<std::size_t>(idx)] = true;
      }
    } else {
      activation = ga::match_keywords(mk_keywords, atlas);
    }
    const ga::AttentionMap m =
        ga::render_mask(activation, atlas, mk_height, mk_width);
    ga::save_atnm(m, mk_out);
    if (!mk_pgm.empty()) ga::save_pgm16(m, mk_pgm);
  });

  // report
  auto* report = app.add_subcommand("report", "Report generation and scoring");
  report->require_subcommand(1);

  auto* gen = report->add_subcommand(
      "gen", "Generate a structured report from gated predictions");
  std::string g_pred, g_out, g_atlas, g_style = "standard", g_prompt_out;
  double g_gate = 0.60;
  int g_retries = 5;
  double g_base_delay = 3.0;
  gen->add_option("predictions", g_pred, "predictions json")->required();
  gen->add_option("output", g_out, "report json")->required();
  gen->add_option("--atlas", g_atlas, "atlas json (default built in)");
  gen->add_option("--style", g_style, "standard | detailed | concise");
  gen->add_option("--gate", g_gate, "posterior gate, strict > (default 0.60)");
  gen->add_option("--max-retries", g_retries, "client attempts (default 5)");
  gen->add_option("--base-delay", g_base_delay,
                  "first backoff delay in seconds (default 3)");
  gen->add_option("--prompt-out", g_prompt_out,
                  "also write the assembled prompt text");
  gen->callback([&]() {
    const auto predictions =
        ga::predictions_from_json(ga::read_text_file(g_pred));
    const auto gated = ga::gate_conditions(predictions, g_gate);
    std::vector<std::string> keywords;
    for (const auto& pred : gated) {
      for (const auto& [term, conf] : pred.keywords) {
        if (std::find(keywords.begin(), keywords.end(), term) ==
            keywords.end())
          keywords.push_back(term);
      }
    }
    const ga::RegionAtlas atlas = load_atlas(g_atlas);
    const ga::RegionActivation activation =
        ga::match_keywords(keywords, atlas);
    const ga::PromptBundle bundle =
        ga::assemble_prompt(gated, activation, atlas,
                            ga::template_style_from_string(g_style));
    if (!g_prompt_out.empty())
      ga::write_text_file_atomic(g_prompt_out, bundle.full_text());

    ga::RetryPolicy policy;
    policy.max_retries = g_retries;
    policy.base_delay_s = g_base_delay;
    const auto client = ga::make_default_client();
    const ga::GeneratedReport result = ga::generate(bundle, *client, policy);
    ga::write_text_file_atomic(g_out,
                               ga::generated_report_to_json(result) + "\n");
    if (result.fallback_used) {
      std::cerr << "warning: client exhausted after " << result.attempts
                << " attempts; fallback report written to " << g_out << "\n";
      exit_code = 5;
    }
  });

  auto* eval = report->add_subcommand(
      "eval", "Score a generated report against a reference");
  std::string e_candidate, e_reference, e_keywords_file, e_out;
  std::vector<std::string> e_keywords;
  eval->add_option("candidate", e_candidate, "report text or report json")
      ->required();
  eval->add_option("reference", e_reference, "reference text or json")
      ->required();
  eval->add_option("--keywords", e_keywords, "clinical terms to check");
  eval->add_option("--keywords-file", e_keywords_file,
                   "one clinical term per line");
  eval->add_option("-o,--out", e_out, "write json here instead of stdout");
  eval->callback([&]() {
    const std::string candidate = load_report_text(e_candidate);
    const std::string reference = load_report_text(e_reference);
    std::vector<std::string> terms = e_keywords;
    if (!e_keywords_file.empty()) {
      for (auto& line : load_lines(e_keywords_file)) terms.push_back(line);
    }
    const ga::BleuResult b = ga::bleu(candidate, reference);
    auto rouge_json = [](const ga::RougeScore& s) {
      return ordered_json{{"precision", s.precision},
                          {"recall", s.recall},
                          {"f1", s.f1}};
    };
    ordered_json j;
    j["bleu"] = {{"bleu1", b.cumulative[0]},
                 {"bleu2", b.cumulative[1]},
                 {"bleu3", b.cumulative[2]},
                 {"bleu4", b.cumulative[3]}};
    j["rouge1"] = rouge_json(ga::rouge_n(candidate, reference, 1));
    j["rouge2"] = rouge_json(ga::rouge_n(candidate, reference, 2));
    j["rougeL"] = rouge_json(ga::rouge_l(candidate, reference));
    j["keyword_overlap"] = ga::keyword_overlap(candidate, terms);
    emit(j, e_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ga::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ga::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ga::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ga::ClientError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
