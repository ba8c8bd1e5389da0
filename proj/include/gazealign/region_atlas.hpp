#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gazealign/attention_map.hpp"

namespace gazealign {

// Normalized [x1, y1, x2, y2] with 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
using NormBox = std::array<double, 4>;

struct RegionDef {
  std::string id;
  NormBox bounds{};
  std::vector<std::string> aliases;
  std::string significance;
  bool provisional = false;
};

struct ConditionMapping {
  std::vector<std::string> primary;
  std::vector<std::string> secondary;
  double weight = 0.0;
  std::string rationale;
};

// The 17-region anatomical atlas plus the condition-to-region matrix.
// Data lives in a JSON asset; this class only validates and indexes it.
class RegionAtlas {
 public:
  static RegionAtlas from_json(const std::string& text);
  static RegionAtlas load(const std::string& path);
  static const RegionAtlas& builtin();

  const std::string& version() const { return version_; }
  const std::vector<RegionDef>& regions() const { return regions_; }
  int region_index(std::string_view id) const;  // -1 when unknown
  const RegionDef* find_region(std::string_view id) const;

  const std::vector<std::pair<std::string, ConditionMapping>>& conditions()
      const {
    return conditions_;
  }
  // Case-insensitive condition lookup.
  const ConditionMapping* find_condition(std::string_view name) const;
  const std::string* canonical_condition(std::string_view name) const;

 private:
  std::string version_;
  std::vector<RegionDef> regions_;
  std::vector<std::pair<std::string, ConditionMapping>> conditions_;
};

// One raw bounding-box annotation in source pixel coordinates.
struct Annotation {
  std::string patient;
  std::string region_id;
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  double image_width = 0.0;
  double image_height = 0.0;
  std::optional<double> confidence;  // defaults to 1
};

std::vector<Annotation> parse_annotation_csv(std::string_view text);
std::vector<Annotation> read_annotation_csv(const std::string& path);

struct AggregateResult {
  // region id -> normalized box, regions with no valid boxes absent
  std::vector<std::pair<std::string, NormBox>> bounds;
  int valid_rows = 0;
  int invalid_rows = 0;
};

// Per-region element-wise median of the normalized boxes; a median whose
// width or height collapses below tau_box falls back to the confidence
// weighted average sum(c*b) / (sum(c) + eps).
AggregateResult aggregate_bounds(const std::vector<Annotation>& annotations,
                                 const RegionAtlas& atlas,
                                 double tau_box = 0.01, double eps = 1e-8);

struct KeywordMatch {
  std::string keyword;
  std::string region_id;
  double similarity = 0.0;
};

struct RegionActivation {
  std::vector<bool> flags;  // parallel to atlas.regions()
  std::vector<KeywordMatch> matched;
  std::vector<std::string> unmatched;
};

// Lowercased, punctuation-stripped matching. An alias contained verbatim
// in the keyword scores 1.0; otherwise the best normalized Levenshtein
// similarity over all aliases must reach the threshold. Each keyword
// activates at most one region; ties break toward the atlas order.
RegionActivation match_keywords(const std::vector<std::string>& keywords,
                                const RegionAtlas& atlas,
                                double threshold = 0.85);

// similarity = 1 - distance / max(len_a, len_b); empty-vs-empty is 1.
double levenshtein_similarity(std::string_view a, std::string_view b);

// Binary union mask of the active regions. Pixel coverage is half-open:
// columns [floor(x1*w), ceil(x2*w)), rows [floor(y1*h), ceil(y2*h)).
AttentionMap render_mask(const RegionActivation& activation,
                         const RegionAtlas& atlas, int height = 512,
                         int width = 512);

// Primary regions carry the condition weight, secondary regions half of
// it; duplicates keep their maximum.
std::vector<std::pair<std::string, double>> regions_for_conditions(
    const std::vector<std::string>& conditions, const RegionAtlas& atlas);

}  // namespace gazealign
