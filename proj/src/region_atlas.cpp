#include "gazealign/region_atlas.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gazealign/assets.hpp"
#include "gazealign/csv.hpp"
#include "gazealign/errors.hpp"

namespace gazealign {
namespace {

constexpr std::size_t kRegionCount = 17;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Lowercase, punctuation to spaces, runs of whitespace collapsed.
std::string normalize_term(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

NormBox box_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw SchemaError("atlas: '" + where + "' bounds must hold 4 numbers");
  NormBox b{};
  for (std::size_t i = 0; i < 4; ++i) b[i] = j[i].get<double>();
  if (!(b[0] >= 0.0 && b[0] < b[2] && b[2] <= 1.0 && b[1] >= 0.0 &&
        b[1] < b[3] && b[3] <= 1.0))
    throw SchemaError("atlas: '" + where + "' bounds are not a valid box");
  return b;
}

}  // namespace

RegionAtlas RegionAtlas::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("atlas json: ") + e.what());
  }

  RegionAtlas atlas;
  try {
    atlas.version_ = j.value("version", std::string("unversioned"));
    if (!j.contains("regions") || !j["regions"].is_array())
      throw SchemaError("atlas: 'regions' array is required");
    for (const auto& rj : j["regions"]) {
      RegionDef def;
      def.id = rj.at("id").get<std::string>();
      def.bounds = box_from_json(rj.at("bounds"), def.id);
      for (const auto& alias : rj.at("aliases"))
        def.aliases.push_back(alias.get<std::string>());
      if (def.aliases.empty())
        throw SchemaError("atlas: region '" + def.id + "' has no aliases");
      def.significance = rj.value("significance", std::string());
      def.provisional = rj.value("provisional", false);
      atlas.regions_.push_back(std::move(def));
    }
    if (!j.contains("conditions") || !j["conditions"].is_object())
      throw SchemaError("atlas: 'conditions' object is required");
    for (const auto& [name, cj] : j["conditions"].items()) {
      ConditionMapping m;
      for (const auto& r : cj.at("primary"))
        m.primary.push_back(r.get<std::string>());
      for (const auto& r : cj.at("secondary"))
        m.secondary.push_back(r.get<std::string>());
      m.weight = cj.at("weight").get<double>();
      m.rationale = cj.value("rationale", std::string());
      atlas.conditions_.emplace_back(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("atlas json: ") + e.what());
  }

  if (atlas.regions_.size() != kRegionCount) {
    std::ostringstream msg;
    msg << "atlas must define exactly " << kRegionCount << " regions, got "
        << atlas.regions_.size();
    throw SchemaError(msg.str());
  }
  for (std::size_t i = 0; i < atlas.regions_.size(); ++i) {
    for (std::size_t k = i + 1; k < atlas.regions_.size(); ++k) {
      if (atlas.regions_[i].id == atlas.regions_[k].id)
        throw SchemaError("atlas: duplicate region id '" +
                          atlas.regions_[i].id + "'");
    }
  }
  for (const auto& [name, mapping] : atlas.conditions_) {
    if (!(mapping.weight > 0.0 && mapping.weight <= 1.0))
      throw SchemaError("atlas: condition '" + name +
                        "' weight must lie in (0, 1]");
    for (const auto& list : {mapping.primary, mapping.secondary}) {
      for (const auto& id : list) {
        if (atlas.region_index(id) < 0)
          throw SchemaError("atlas: condition '" + name +
                            "' references unknown region '" + id + "'");
      }
    }
  }
  return atlas;
}

RegionAtlas RegionAtlas::load(const std::string& path) {
  return from_json(read_text_file(path));
}

const RegionAtlas& RegionAtlas::builtin() {
  static const RegionAtlas atlas = from_json(builtin_region_atlas_json());
  return atlas;
}

int RegionAtlas::region_index(std::string_view id) const {
  for (std::size_t i = 0; i < regions_.size(); ++i)
    if (regions_[i].id == id) return static_cast<int>(i);
  return -1;
}

const RegionDef* RegionAtlas::find_region(std::string_view id) const {
  const int idx = region_index(id);
  return idx < 0 ? nullptr : &regions_[idx];
}

const ConditionMapping* RegionAtlas::find_condition(
    std::string_view name) const {
  const std::string needle = lower(std::string(name));
  for (const auto& [cname, mapping] : conditions_)
    if (lower(cname) == needle) return &mapping;
  return nullptr;
}

const std::string* RegionAtlas::canonical_condition(
    std::string_view name) const {
  const std::string needle = lower(std::string(name));
  for (const auto& [cname, mapping] : conditions_)
    if (lower(cname) == needle) return &cname;
  return nullptr;
}

std::vector<Annotation> parse_annotation_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  for (const char* name :
       {"patient", "region", "x1", "y1", "x2", "y2", "width", "height"}) {
    if (table.column(name) < 0)
      throw SchemaError(std::string("annotation csv: missing column '") +
                        name + "'");
  }
  const int c_patient = table.column("patient");
  const int c_region = table.column("region");
  const int c_x1 = table.column("x1");
  const int c_y1 = table.column("y1");
  const int c_x2 = table.column("x2");
  const int c_y2 = table.column("y2");
  const int c_w = table.column("width");
  const int c_h = table.column("height");
  const int c_conf = table.column("confidence");  // optional column

  std::vector<Annotation> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    Annotation a;
    a.patient = cells[c_patient];
    a.region_id = cells[c_region];
    a.x1 = parse_cell_double(cells[c_x1], i, "x1").value_or(std::nan(""));
    a.y1 = parse_cell_double(cells[c_y1], i, "y1").value_or(std::nan(""));
    a.x2 = parse_cell_double(cells[c_x2], i, "x2").value_or(std::nan(""));
    a.y2 = parse_cell_double(cells[c_y2], i, "y2").value_or(std::nan(""));
    a.image_width =
        parse_cell_double(cells[c_w], i, "width").value_or(0.0);
    a.image_height =
        parse_cell_double(cells[c_h], i, "height").value_or(0.0);
    if (c_conf >= 0)
      a.confidence = parse_cell_double(cells[c_conf], i, "confidence");
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Annotation> read_annotation_csv(const std::string& path) {
  return parse_annotation_csv(read_text_file(path));
}

AggregateResult aggregate_bounds(const std::vector<Annotation>& annotations,
                                 const RegionAtlas& atlas, double tau_box,
                                 double eps) {
  struct Gathered {
    std::vector<NormBox> boxes;
    std::vector<double> confidences;
  };
  std::map<int, Gathered> by_region;

  AggregateResult result;
  for (const auto& a : annotations) {
    const int idx = atlas.region_index(a.region_id);
    const bool image_ok = a.image_width > 0.0 && a.image_height > 0.0;
    if (idx < 0 || !image_ok) {
      ++result.invalid_rows;
      continue;
    }
    const NormBox b = {a.x1 / a.image_width, a.y1 / a.image_height,
                       a.x2 / a.image_width, a.y2 / a.image_height};
    const double c = a.confidence.value_or(1.0);
    const bool box_ok = b[0] >= 0.0 && b[0] < b[2] && b[2] <= 1.0 &&
                        b[1] >= 0.0 && b[1] < b[3] && b[3] <= 1.0 &&
                        c >= 0.0;
    if (!box_ok) {
      ++result.invalid_rows;
      continue;
    }
    ++result.valid_rows;
    by_region[idx].boxes.push_back(b);
    by_region[idx].confidences.push_back(c);
  }

  for (const auto& [idx, gathered] : by_region) {
    NormBox med{};
    for (std::size_t d = 0; d < 4; ++d) {
      std::vector<double> coord;
      coord.reserve(gathered.boxes.size());
      for (const auto& b : gathered.boxes) coord.push_back(b[d]);
      med[d] = median(std::move(coord));
    }
    NormBox chosen = med;
    if (med[2] - med[0] <= tau_box || med[3] - med[1] <= tau_box) {
      // degenerate median: confidence-weighted average
      double conf_total = 0.0;
      for (double c : gathered.confidences) conf_total += c;
      for (std::size_t d = 0; d < 4; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < gathered.boxes.size(); ++i)
          acc += gathered.confidences[i] * gathered.boxes[i][d];
        chosen[d] = acc / (conf_total + eps);
      }
    }
    // All-zero confidences can collapse the fallback box; emit valid boxes
    // only.
    const bool valid = chosen[0] >= 0.0 && chosen[0] < chosen[2] &&
                       chosen[2] <= 1.0 && chosen[1] >= 0.0 &&
                       chosen[1] < chosen[3] && chosen[3] <= 1.0;
    if (valid) result.bounds.emplace_back(atlas.regions()[idx].id, chosen);
  }
  return result;
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
  const std::size_t la = a.size(), lb = b.size();
  if (la == 0 && lb == 0) return 1.0;
  std::vector<std::size_t> prev(lb + 1), cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= la; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= lb; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[lb]);
  return 1.0 - dist / static_cast<double>(std::max(la, lb));
}

RegionActivation match_keywords(const std::vector<std::string>& keywords,
                                const RegionAtlas& atlas, double threshold) {
  RegionActivation out;
  out.flags.assign(atlas.regions().size(), false);

  for (const auto& keyword : keywords) {
    const std::string norm_kw = normalize_term(keyword);
    double best_sim = -1.0;
    int best_region = -1;
    for (std::size_t r = 0; r < atlas.regions().size(); ++r) {
      for (const auto& alias : atlas.regions()[r].aliases) {
        const std::string norm_alias = normalize_term(alias);
        double sim;
        if (!norm_alias.empty() &&
            norm_kw.find(norm_alias) != std::string::npos) {
          sim = 1.0;
        } else {
          sim = levenshtein_similarity(norm_kw, norm_alias);
        }
        if (sim > best_sim) {
          best_sim = sim;
          best_region = static_cast<int>(r);
        }
      }
    }
    if (best_region >= 0 && best_sim >= threshold) {
      out.flags[best_region] = true;
      out.matched.push_back(
          {keyword, atlas.regions()[best_region].id, best_sim});
    } else {
      out.unmatched.push_back(keyword);
    }
  }
  return out;
}

AttentionMap render_mask(const RegionActivation& activation,
                         const RegionAtlas& atlas, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("mask dimensions must be >= 1");
  if (activation.flags.size() != atlas.regions().size())
    throw ShapeError("activation flags do not match the atlas");

  AttentionMap mask(height, width, 0.0);
  for (std::size_t r = 0; r < activation.flags.size(); ++r) {
    if (!activation.flags[r]) continue;
    const NormBox& b = atlas.regions()[r].bounds;
    const int c0 = static_cast<int>(std::floor(b[0] * width));
    const int c1 = std::min(width, static_cast<int>(std::ceil(b[2] * width)));
    const int r0 = static_cast<int>(std::floor(b[1] * height));
    const int r1 = std::min(height, static_cast<int>(std::ceil(b[3] * height)));
    for (int row = r0; row < r1; ++row)
      for (int col = c0; col < c1; ++col) mask.at(row, col) = 1.0;
  }
  return mask;
}

std::vector<std::pair<std::string, double>> regions_for_conditions(
    const std::vector<std::string>& conditions, const RegionAtlas& atlas) {
  std::map<int, double> weight_by_region;
  for (const auto& name : conditions) {
    const ConditionMapping* mapping = atlas.find_condition(name);
    if (mapping == nullptr)
      throw SchemaError("unknown condition '" + name + "'");
    for (const auto& id : mapping->primary) {
      const int idx = atlas.region_index(id);
      weight_by_region[idx] =
          std::max(weight_by_region[idx], mapping->weight);
    }
    for (const auto& id : mapping->secondary) {
      const int idx = atlas.region_index(id);
      weight_by_region[idx] =
          std::max(weight_by_region[idx], mapping->weight * 0.5);
    }
  }

  std::vector<std::pair<std::string, double>> out;
  out.reserve(weight_by_region.size());
  for (const auto& [idx, weight] : weight_by_region)
    out.emplace_back(atlas.regions()[idx].id, weight);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) {
                     return a.second > b.second;
                   });
  return out;
}

}  // namespace gazealign
