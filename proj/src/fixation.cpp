#include "gazealign/fixation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "gazealign/csv.hpp"
#include "gazealign/errors.hpp"

namespace gazealign {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct AxisResult {
  double value = 0.0;
  bool in_tolerance = false;
};

// Clip into [0, 1]; excursions beyond kClipTolerance of the span mark the
// record invalid but the clipped coordinate is still reported.
AxisResult clip_axis(double normalized) {
  AxisResult r;
  r.in_tolerance = normalized >= -kClipTolerance &&
                   normalized <= 1.0 + kClipTolerance;
  r.value = std::clamp(normalized, 0.0, 1.0);
  return r;
}

FixationRecord normalize_eyegaze(const RawFixationRow& row) {
  FixationRecord rec;
  rec.t_start = row.t_start.value_or(0.0);
  rec.duration = row.duration.value_or(0.0);
  bool in_tolerance = false;
  if (row.x_raw && row.y_raw) {
    const AxisResult ax = clip_axis(*row.x_raw);
    const AxisResult ay = clip_axis(*row.y_raw);
    rec.x = ax.value;
    rec.y = ay.value;
    in_tolerance = ax.in_tolerance && ay.in_tolerance;
  }
  rec.valid = in_tolerance && rec.duration > 0.0;
  return rec;
}

double require_span(double lo, double hi, const char* axis,
                    std::size_t row_index) {
  const double span = hi - lo;
  if (!(span > 0.0)) {
    std::ostringstream msg;
    msg << "degenerate viewport (" << axis << " span " << span
        << ") while normalizing row " << row_index;
    throw SchemaError(msg.str());
  }
  return span;
}

std::array<double, 4> bounds_from_json(const nlohmann::json& j,
                                       const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 4)
    throw SchemaError(std::string("viewport: '") + key +
                      "' must be an array of 4 numbers");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[key][i].is_number())
      throw SchemaError(std::string("viewport: '") + key +
                        "' must hold numbers");
    out[i] = j[key][i].get<double>();
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double pupil_area(double left_diam, double right_diam) {
  if (left_diam < 0.0 || right_diam < 0.0)
    throw SchemaError("pupil diameters must be non-negative");
  const double rl = left_diam / 2.0;
  const double rr = right_diam / 2.0;
  return std::numbers::pi / 2.0 * (rl * rl + rr * rr);
}

BaselineScaled baseline_scale_pupil(const std::vector<PupilSample>& samples,
                                    double window_s) {
  BaselineScaled out;
  out.samples = samples;
  if (samples.empty()) return out;

  const double t0 = samples.front().t;
  double mean = 0.0;
  int count = 0;
  for (const auto& s : samples) {
    if (s.t - t0 <= window_s && s.area > 0.0) {
      mean += s.area;
      ++count;
    }
  }
  if (count == 0) {
    for (auto& s : out.samples) s.area = 1.0;
    return out;
  }
  mean /= count;
  for (auto& s : out.samples) s.area = s.area / mean;
  out.scaled = true;
  return out;
}

FixationRecord normalize_reflacx(const RawFixationRow& row,
                                 const ImageViewport& viewport,
                                 std::size_t row_index) {
  const double xspan = require_span(viewport.image_bounds[0],
                                    viewport.image_bounds[2], "x", row_index);
  const double yspan = require_span(viewport.image_bounds[1],
                                    viewport.image_bounds[3], "y", row_index);

  FixationRecord rec;
  rec.t_start = row.t_start.value_or(0.0);
  if (row.t_start && row.t_end) rec.duration = *row.t_end - *row.t_start;
  rec.pupil = row.pupil_area_norm.value_or(1.0);

  bool in_tolerance = false;
  if (row.x_raw && row.y_raw) {
    const AxisResult ax =
        clip_axis((*row.x_raw - viewport.image_bounds[0]) / xspan);
    const AxisResult ay =
        clip_axis((*row.y_raw - viewport.image_bounds[1]) / yspan);
    rec.x = ax.value;
    rec.y = ay.value;
    in_tolerance = ax.in_tolerance && ay.in_tolerance;
  }
  rec.valid = in_tolerance && rec.duration > 0.0;
  return rec;
}

FixationSequence harmonize(const std::vector<RawFixationRow>& rows,
                           const std::optional<ImageViewport>& viewport) {
  FixationSequence seq;
  if (!rows.empty()) {
    seq.subject_id = rows.front().subject_id;
    seq.study_id = rows.front().study_id;
  }

  // Rows whose pupil comes from diameters share one baseline window.
  std::vector<PupilSample> pupil_samples;
  std::vector<std::size_t> pupil_rows;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RawFixationRow& row = rows[i];
    FixationRecord rec;
    if (row.source == SourceSchema::reflacx) {
      if (!viewport)
        throw SchemaError("REFLACX rows require a viewport (row " +
                          std::to_string(i) + ")");
      rec = normalize_reflacx(row, *viewport, i);
    } else {
      rec = normalize_eyegaze(row);
      if (row.pupil_left_diam || row.pupil_right_diam) {
        const double area = pupil_area(row.pupil_left_diam.value_or(0.0),
                                       row.pupil_right_diam.value_or(0.0));
        pupil_samples.push_back({rec.t_start, area});
        pupil_rows.push_back(i);
      }
    }
    seq.records.push_back(rec);
  }

  if (!pupil_samples.empty()) {
    const BaselineScaled scaled = baseline_scale_pupil(pupil_samples);
    if (!scaled.scaled)
      seq.warnings.push_back(
          "pupil baseline unavailable in the first window; pupil left at 1.0");
    for (std::size_t k = 0; k < pupil_rows.size(); ++k)
      seq.records[pupil_rows[k]].pupil = scaled.samples[k].area;
  }

  for (const auto& rec : seq.records)
    if (rec.valid) ++seq.n_fix;
  seq.q_score = static_cast<double>(seq.n_fix) /
                std::max<std::size_t>(1, seq.records.size());
  return seq;
}

ImageViewport viewport_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("viewport json: ") + e.what());
  }
  ImageViewport vp;
  vp.image_bounds = bounds_from_json(j, "image_bounds");
  vp.screen_bounds =
      j.contains("screen_bounds") ? bounds_from_json(j, "screen_bounds")
                                  : vp.image_bounds;
  return vp;
}

ImageViewport read_viewport_json(const std::string& path) {
  return viewport_from_json(read_text_file(path));
}

std::vector<RawFixationRow> parse_fixation_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  static const char* kColumns[] = {"source", "subject_id", "study_id",
                                   "x",      "y",          "t_start",
                                   "t_end",  "duration",   "lpd",
                                   "rpd",    "pupil_area_norm"};
  for (const char* name : kColumns) {
    if (table.column(name) < 0)
      throw SchemaError(std::string("fixation csv: missing column '") + name +
                        "'");
  }
  const int c_source = table.column("source");
  const int c_subject = table.column("subject_id");
  const int c_study = table.column("study_id");
  const int c_x = table.column("x");
  const int c_y = table.column("y");
  const int c_ts = table.column("t_start");
  const int c_te = table.column("t_end");
  const int c_dur = table.column("duration");
  const int c_lpd = table.column("lpd");
  const int c_rpd = table.column("rpd");
  const int c_pan = table.column("pupil_area_norm");

  std::vector<RawFixationRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    RawFixationRow row;
    const std::string src = lower(cells[c_source]);
    if (src == "eyegaze" || src == "eye_gaze" || src == "egd") {
      row.source = SourceSchema::eye_gaze;
    } else if (src == "reflacx") {
      row.source = SourceSchema::reflacx;
    } else {
      throw SchemaError("fixation csv: unknown source '" + cells[c_source] +
                        "' at row " + std::to_string(i));
    }
    row.subject_id = cells[c_subject];
    row.study_id = cells[c_study];
    row.x_raw = parse_cell_double(cells[c_x], i, "x");
    row.y_raw = parse_cell_double(cells[c_y], i, "y");
    row.t_start = parse_cell_double(cells[c_ts], i, "t_start");
    row.t_end = parse_cell_double(cells[c_te], i, "t_end");
    row.duration = parse_cell_double(cells[c_dur], i, "duration");
    row.pupil_left_diam = parse_cell_double(cells[c_lpd], i, "lpd");
    row.pupil_right_diam = parse_cell_double(cells[c_rpd], i, "rpd");
    row.pupil_area_norm = parse_cell_double(cells[c_pan], i, "pupil_area_norm");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawFixationRow> read_fixation_csv(const std::string& path) {
  return parse_fixation_csv(read_text_file(path));
}

FixationSequence parse_harmonized_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  for (const char* name : {"x", "y", "duration", "pupil", "t_start", "valid"}) {
    if (table.column(name) < 0)
      throw SchemaError(std::string("harmonized csv: missing column '") +
                        name + "'");
  }
  const int c_x = table.column("x");
  const int c_y = table.column("y");
  const int c_dur = table.column("duration");
  const int c_pupil = table.column("pupil");
  const int c_ts = table.column("t_start");
  const int c_valid = table.column("valid");

  FixationSequence seq;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    FixationRecord rec;
    rec.x = parse_cell_double(cells[c_x], i, "x").value_or(0.0);
    rec.y = parse_cell_double(cells[c_y], i, "y").value_or(0.0);
    rec.duration = parse_cell_double(cells[c_dur], i, "duration").value_or(0.0);
    rec.pupil = parse_cell_double(cells[c_pupil], i, "pupil").value_or(1.0);
    rec.t_start = parse_cell_double(cells[c_ts], i, "t_start").value_or(0.0);
    const std::string v = lower(cells[c_valid]);
    if (v == "1" || v == "true") {
      rec.valid = true;
    } else if (v == "0" || v == "false" || v.empty()) {
      rec.valid = false;
    } else {
      throw ParseError("harmonized csv: bad valid flag '" + cells[c_valid] +
                       "' at row " + std::to_string(i));
    }
    seq.records.push_back(rec);
  }
  for (const auto& rec : seq.records)
    if (rec.valid) ++seq.n_fix;
  seq.q_score = static_cast<double>(seq.n_fix) /
                std::max<std::size_t>(1, seq.records.size());
  return seq;
}

FixationSequence read_harmonized_csv(const std::string& path) {
  return parse_harmonized_csv(read_text_file(path));
}

std::string harmonized_to_csv(const FixationSequence& seq) {
  std::ostringstream out;
  out << "x,y,duration,pupil,t_start,valid\n";
  for (const auto& rec : seq.records) {
    out << format_double(rec.x) << ',' << format_double(rec.y) << ','
        << format_double(rec.duration) << ',' << format_double(rec.pupil)
        << ',' << format_double(rec.t_start) << ',' << (rec.valid ? 1 : 0)
        << '\n';
  }
  return out.str();
}

void write_harmonized_csv(const FixationSequence& seq,
                          const std::string& path) {
  write_text_file_atomic(path, harmonized_to_csv(seq));
}

}  // namespace gazealign
