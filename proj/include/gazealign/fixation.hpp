#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gazealign {

enum class SourceSchema { eye_gaze, reflacx };

// One row as it appears in the raw export. EyeGaze rows carry normalized
// coordinates, a precomputed duration, and pupil diameters; REFLACX rows
// carry screen coordinates, t_start/t_end, and a normalized pupil area.
struct RawFixationRow {
  SourceSchema source = SourceSchema::eye_gaze;
  std::string subject_id;
  std::string study_id;
  std::optional<double> x_raw;
  std::optional<double> y_raw;
  std::optional<double> t_start;
  std::optional<double> t_end;
  std::optional<double> duration;
  std::optional<double> pupil_left_diam;
  std::optional<double> pupil_right_diam;
  std::optional<double> pupil_area_norm;
};

// Screen-space rectangles as [xmin, ymin, xmax, ymax].
struct ImageViewport {
  std::array<double, 4> image_bounds{};
  std::array<double, 4> screen_bounds{};
};

ImageViewport viewport_from_json(const std::string& text);
ImageViewport read_viewport_json(const std::string& path);

struct FixationRecord {
  double x = 0.0;
  double y = 0.0;
  double duration = 0.0;
  double pupil = 1.0;
  double t_start = 0.0;
  bool valid = false;
};

struct FixationSequence {
  std::vector<FixationRecord> records;
  int n_fix = 0;        // count of valid records
  double q_score = 0.0; // n_fix / max(1, records.size())
  std::string subject_id;
  std::string study_id;
  std::vector<std::string> warnings;
};

// Coordinates further than this fraction of the span outside [0, 1] mark
// the record invalid; smaller excursions clip.
inline constexpr double kClipTolerance = 0.05;

// Combined pupil area from the two diameters, treating each eye as a
// circle: (pi/2) * ((lpd/2)^2 + (rpd/2)^2). Negative diameters reject.
double pupil_area(double left_diam, double right_diam);

struct PupilSample {
  double t = 0.0;
  double area = 0.0;
};

struct BaselineScaled {
  std::vector<PupilSample> samples;  // area replaced by area / baseline
  bool scaled = false;               // false when no usable baseline window
};

// Divides by the mean area over samples with t - t0 <= window_s, where t0
// is the first sample's t. Without a positive baseline every area becomes
// 1.0 and scaled stays false.
BaselineScaled baseline_scale_pupil(const std::vector<PupilSample>& samples,
                                    double window_s = 2.0);

// Maps one REFLACX row into the unit square of the image viewport.
FixationRecord normalize_reflacx(const RawFixationRow& row,
                                 const ImageViewport& viewport,
                                 std::size_t row_index = 0);

// Full ingest: coordinate normalization, duration computation, pupil
// harmonization with baseline scaling, validity gating, q_score.
// REFLACX rows require a viewport.
FixationSequence harmonize(
    const std::vector<RawFixationRow>& rows,
    const std::optional<ImageViewport>& viewport = std::nullopt);

// Raw schema: source,subject_id,study_id,x,y,t_start,t_end,duration,lpd,
// rpd,pupil_area_norm. Cells that do not apply stay empty.
std::vector<RawFixationRow> read_fixation_csv(const std::string& path);
std::vector<RawFixationRow> parse_fixation_csv(std::string_view text);

// Harmonized schema: x,y,duration,pupil,t_start,valid.
FixationSequence read_harmonized_csv(const std::string& path);
FixationSequence parse_harmonized_csv(std::string_view text);
std::string harmonized_to_csv(const FixationSequence& seq);
void write_harmonized_csv(const FixationSequence& seq,
                          const std::string& path);

}  // namespace gazealign
