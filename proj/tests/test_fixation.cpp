#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "gazealign/errors.hpp"
#include "gazealign/fixation.hpp"

using namespace gazealign;

namespace {

RawFixationRow reflacx_row(double x, double y, double t0, double t1) {
  RawFixationRow row;
  row.source = SourceSchema::reflacx;
  row.x_raw = x;
  row.y_raw = y;
  row.t_start = t0;
  row.t_end = t1;
  return row;
}

RawFixationRow eyegaze_row(double x, double y, double duration,
                           double t_start = 0.0) {
  RawFixationRow row;
  row.source = SourceSchema::eye_gaze;
  row.x_raw = x;
  row.y_raw = y;
  row.duration = duration;
  row.t_start = t_start;
  return row;
}

ImageViewport viewport(double xmin, double ymin, double xmax, double ymax) {
  ImageViewport vp;
  vp.image_bounds = {xmin, ymin, xmax, ymax};
  vp.screen_bounds = vp.image_bounds;
  return vp;
}

}  // namespace

TEST_CASE("screen coordinates map affinely into the unit square") {
  const ImageViewport vp = viewport(100, 0, 300, 200);
  const FixationRecord rec = normalize_reflacx(reflacx_row(150, 50, 0, 1), vp);
  CHECK(rec.x == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(rec.y == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(rec.duration == doctest::Approx(1.0));
  CHECK(rec.valid);
}

TEST_CASE("viewport edges map to exactly 0 and 1") {
  const ImageViewport vp = viewport(100, 10, 300, 210);
  CHECK(normalize_reflacx(reflacx_row(100, 10, 0, 1), vp).x == 0.0);
  CHECK(normalize_reflacx(reflacx_row(300, 10, 0, 1), vp).x == 1.0);
  CHECK(normalize_reflacx(reflacx_row(100, 10, 0, 1), vp).y == 0.0);
  CHECK(normalize_reflacx(reflacx_row(100, 210, 0, 1), vp).y == 1.0);
}

TEST_CASE("small excursions clip and stay valid; large ones invalidate") {
  const ImageViewport vp = viewport(100, 0, 300, 200);  // span 200

  // -0.05 of span: exactly at tolerance
  const FixationRecord at_tol =
      normalize_reflacx(reflacx_row(90, 50, 0, 1), vp);
  CHECK(at_tol.x == 0.0);
  CHECK(at_tol.valid);

  // beyond tolerance on either end
  CHECK_FALSE(normalize_reflacx(reflacx_row(89, 50, 0, 1), vp).valid);
  CHECK_FALSE(normalize_reflacx(reflacx_row(311, 50, 0, 1), vp).valid);
  CHECK(normalize_reflacx(reflacx_row(311, 50, 0, 1), vp).x == 1.0);

  // tolerance applies per axis
  CHECK_FALSE(normalize_reflacx(reflacx_row(150, -11, 0, 1), vp).valid);
}

TEST_CASE("non-positive duration invalidates a record") {
  const ImageViewport vp = viewport(0, 0, 1, 1);
  CHECK_FALSE(normalize_reflacx(reflacx_row(0.5, 0.5, 2, 2), vp).valid);
  CHECK_FALSE(normalize_reflacx(reflacx_row(0.5, 0.5, 2, 1), vp).valid);
  CHECK(normalize_reflacx(reflacx_row(0.5, 0.5, 1, 2), vp).valid);
}

TEST_CASE("degenerate viewport rejects with the row index") {
  const ImageViewport vp = viewport(5, 0, 5, 10);
  CHECK_THROWS_WITH_AS(normalize_reflacx(reflacx_row(5, 5, 0, 1), vp, 7),
                       doctest::Contains("row 7"), SchemaError);
}

TEST_CASE("normalization is affine-invariant") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> coord(-50.0, 400.0);
  std::uniform_real_distribution<double> scale(0.1, 12.0);
  std::uniform_real_distribution<double> shift(-300.0, 300.0);

  for (int trial = 0; trial < 200; ++trial) {
    const double a = scale(rng), b = shift(rng);
    const double x = coord(rng), y = coord(rng);
    const ImageViewport vp = viewport(100, 50, 300, 250);
    const ImageViewport vp2 = viewport(a * 100 + b, a * 50 + b, a * 300 + b,
                                       a * 250 + b);
    const FixationRecord r1 =
        normalize_reflacx(reflacx_row(x, y, 0, 1), vp);
    const FixationRecord r2 =
        normalize_reflacx(reflacx_row(a * x + b, a * y + b, 0, 1), vp2);
    CHECK(r1.x == doctest::Approx(r2.x).epsilon(1e-12));
    CHECK(r1.y == doctest::Approx(r2.y).epsilon(1e-12));
    CHECK(r1.valid == r2.valid);
  }
}

TEST_CASE("pupil area follows the two-circle formula") {
  CHECK(pupil_area(2.0, 2.0) ==
        doctest::Approx(std::numbers::pi).epsilon(1e-13));
  CHECK(std::abs(pupil_area(2.0, 2.0) - std::numbers::pi) < 1e-12);
  CHECK(pupil_area(0.0, 0.0) == 0.0);
  CHECK(pupil_area(2.0, 0.0) ==
        doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-13));
  CHECK_THROWS_AS(pupil_area(-1.0, 2.0), SchemaError);
  CHECK_THROWS_AS(pupil_area(1.0, -2.0), SchemaError);
}

TEST_CASE("pupil area is symmetric") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> diam(0.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const double a = diam(rng), b = diam(rng);
    CHECK(pupil_area(a, b) == pupil_area(b, a));
  }
}

TEST_CASE("baseline scaling divides by the first-window mean") {
  const std::vector<PupilSample> samples = {{0.0, 4.0}, {1.0, 4.0}, {3.0, 8.0}};
  const BaselineScaled scaled = baseline_scale_pupil(samples);
  REQUIRE(scaled.scaled);
  CHECK(scaled.samples[0].area == doctest::Approx(1.0));
  CHECK(scaled.samples[1].area == doctest::Approx(1.0));
  CHECK(scaled.samples[2].area == doctest::Approx(2.0));
}

TEST_CASE("baseline scaling degenerate cases") {
  // constant sequence self-normalizes
  const BaselineScaled constant = baseline_scale_pupil(
      {{0.0, 5.0}, {0.5, 5.0}, {10.0, 5.0}});
  for (const auto& s : constant.samples) CHECK(s.area == doctest::Approx(1.0));

  // single sample normalizes to itself
  const BaselineScaled single = baseline_scale_pupil({{2.0, 7.5}});
  REQUIRE(single.scaled);
  CHECK(single.samples[0].area == doctest::Approx(1.0));

  // no positive area in the window: unscalable, everything forced to 1
  const BaselineScaled unscalable =
      baseline_scale_pupil({{0.0, 0.0}, {1.0, 0.0}, {5.0, 3.0}});
  CHECK_FALSE(unscalable.scaled);
  for (const auto& s : unscalable.samples) CHECK(s.area == 1.0);

  // window anchored at the first sample's time, not zero
  const BaselineScaled offset =
      baseline_scale_pupil({{100.0, 2.0}, {101.5, 2.0}, {104.0, 6.0}});
  REQUIRE(offset.scaled);
  CHECK(offset.samples[2].area == doctest::Approx(3.0));

  CHECK(baseline_scale_pupil({}).samples.empty());
}

TEST_CASE("harmonize counts validity and scores quality") {
  std::vector<RawFixationRow> rows;
  for (int i = 0; i < 8; ++i)
    rows.push_back(eyegaze_row(0.1 * i, 0.5, 0.3, 0.1 * i));
  rows.push_back(eyegaze_row(2.0, 0.5, 0.3));   // out of tolerance
  rows.push_back(eyegaze_row(0.5, 0.5, 0.0));   // zero duration
  const FixationSequence seq = harmonize(rows);
  CHECK(seq.records.size() == 10);
  CHECK(seq.n_fix == 8);
  CHECK(seq.q_score == doctest::Approx(0.8));
}

TEST_CASE("harmonize trivial quality cases") {
  std::vector<RawFixationRow> rows = {eyegaze_row(0.2, 0.2, 0.5),
                                      eyegaze_row(0.8, 0.8, 0.5)};
  CHECK(harmonize(rows).q_score == doctest::Approx(1.0));

  const FixationSequence empty = harmonize({});
  CHECK(empty.records.empty());
  CHECK(empty.n_fix == 0);
  CHECK(empty.q_score == 0.0);
}

TEST_CASE("harmonize requires a viewport for screen-space rows") {
  CHECK_THROWS_AS(harmonize({reflacx_row(10, 10, 0, 1)}), SchemaError);
  CHECK_NOTHROW(
      harmonize({reflacx_row(10, 10, 0, 1)}, viewport(0, 0, 100, 100)));
}

TEST_CASE("harmonize is idempotent on normalized rows") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<RawFixationRow> rows;
  for (int i = 0; i < 50; ++i)
    rows.push_back(eyegaze_row(unit(rng), unit(rng), 0.2 + unit(rng), i * 0.1));

  const FixationSequence first = harmonize(rows);
  std::vector<RawFixationRow> again;
  for (const auto& rec : first.records)
    again.push_back(eyegaze_row(rec.x, rec.y, rec.duration, rec.t_start));
  const FixationSequence second = harmonize(again);

  REQUIRE(second.records.size() == first.records.size());
  for (std::size_t i = 0; i < first.records.size(); ++i) {
    CHECK(second.records[i].x == first.records[i].x);
    CHECK(second.records[i].y == first.records[i].y);
    CHECK(second.records[i].valid == first.records[i].valid);
  }
  CHECK(second.q_score == first.q_score);
}

TEST_CASE("q_score never increases when rows are invalidated") {
  std::vector<RawFixationRow> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(eyegaze_row(0.5, 0.5, 0.5));
  double prev = harmonize(rows).q_score;
  for (int i = 0; i < 6; ++i) {
    rows[i].duration = 0.0;
    const double q = harmonize(rows).q_score;
    CHECK(q <= prev);
    prev = q;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("eyegaze pupil diameters share one baseline window") {
  std::vector<RawFixationRow> rows = {eyegaze_row(0.2, 0.2, 0.5, 0.0),
                                      eyegaze_row(0.4, 0.4, 0.5, 1.0),
                                      eyegaze_row(0.6, 0.6, 0.5, 5.0)};
  rows[0].pupil_left_diam = 2.0;
  rows[0].pupil_right_diam = 2.0;
  rows[1].pupil_left_diam = 2.0;
  rows[1].pupil_right_diam = 2.0;
  rows[2].pupil_left_diam = 4.0;  // area 4x the baseline entries
  rows[2].pupil_right_diam = 4.0;

  const FixationSequence seq = harmonize(rows);
  CHECK(seq.records[0].pupil == doctest::Approx(1.0));
  CHECK(seq.records[1].pupil == doctest::Approx(1.0));
  CHECK(seq.records[2].pupil == doctest::Approx(4.0));
  CHECK(seq.warnings.empty());
}

TEST_CASE("unscalable pupil baseline leaves 1.0 and records a warning") {
  std::vector<RawFixationRow> rows = {eyegaze_row(0.2, 0.2, 0.5, 0.0),
                                      eyegaze_row(0.4, 0.4, 0.5, 10.0)};
  rows[0].pupil_left_diam = 0.0;
  rows[0].pupil_right_diam = 0.0;
  rows[1].pupil_left_diam = 2.0;
  rows[1].pupil_right_diam = 2.0;

  const FixationSequence seq = harmonize(rows);
  CHECK(seq.records[0].pupil == 1.0);
  CHECK(seq.records[1].pupil == 1.0);
  CHECK(seq.warnings.size() == 1);
}

TEST_CASE("viewport json parses with optional screen bounds") {
  const ImageViewport vp = viewport_from_json(
      R"({"image_bounds":[100,50,300,250],"screen_bounds":[0,0,1920,1080]})");
  CHECK(vp.image_bounds[0] == 100.0);
  CHECK(vp.screen_bounds[2] == 1920.0);

  const ImageViewport defaulted =
      viewport_from_json(R"({"image_bounds":[0,0,10,10]})");
  CHECK(defaulted.screen_bounds == defaulted.image_bounds);

  CHECK_THROWS_AS(viewport_from_json("not json"), ParseError);
  CHECK_THROWS_AS(viewport_from_json(R"({"screen_bounds":[0,0,1,1]})"),
                  SchemaError);
  CHECK_THROWS_AS(viewport_from_json(R"({"image_bounds":[0,0,1]})"),
                  SchemaError);
}

TEST_CASE("raw fixation csv parses both schemas") {
  const std::string text =
      "source,subject_id,study_id,x,y,t_start,t_end,duration,lpd,rpd,"
      "pupil_area_norm\n"
      "eyegaze,p1,s1,0.25,0.5,0.0,,0.4,2.0,2.0,\n"
      "reflacx,p1,s1,150,100,0.0,0.5,,,,1.2\n";
  const auto rows = parse_fixation_csv(text);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].source == SourceSchema::eye_gaze);
  CHECK(rows[0].duration.value() == 0.4);
  CHECK(!rows[0].t_end.has_value());
  CHECK(rows[1].source == SourceSchema::reflacx);
  CHECK(rows[1].pupil_area_norm.value() == 1.2);
}

TEST_CASE("raw fixation csv rejects schema violations") {
  CHECK_THROWS_AS(parse_fixation_csv("source,subject_id\none,two\n"),
                  SchemaError);
  const std::string bad_source =
      "source,subject_id,study_id,x,y,t_start,t_end,duration,lpd,rpd,"
      "pupil_area_norm\n"
      "telescope,p,s,0,0,0,1,,,,\n";
  CHECK_THROWS_AS(parse_fixation_csv(bad_source), SchemaError);
  const std::string bad_number =
      "source,subject_id,study_id,x,y,t_start,t_end,duration,lpd,rpd,"
      "pupil_area_norm\n"
      "eyegaze,p,s,zero,0,0,,1,,,\n";
  CHECK_THROWS_AS(parse_fixation_csv(bad_number), ParseError);
}

TEST_CASE("harmonized csv round trips") {
  std::vector<RawFixationRow> rows = {eyegaze_row(0.25, 0.75, 0.4, 0.1),
                                      eyegaze_row(1.5, 0.5, 0.4, 0.2)};
  const FixationSequence seq = harmonize(rows);
  const FixationSequence back = parse_harmonized_csv(harmonized_to_csv(seq));
  REQUIRE(back.records.size() == seq.records.size());
  for (std::size_t i = 0; i < seq.records.size(); ++i) {
    CHECK(back.records[i].x == seq.records[i].x);
    CHECK(back.records[i].y == seq.records[i].y);
    CHECK(back.records[i].duration == seq.records[i].duration);
    CHECK(back.records[i].valid == seq.records[i].valid);
  }
  CHECK(back.n_fix == seq.n_fix);
  CHECK(back.q_score == seq.q_score);

  CHECK_THROWS_AS(parse_harmonized_csv("x,y\n0,0\n"), SchemaError);
  CHECK_THROWS_AS(
      parse_harmonized_csv("x,y,duration,pupil,t_start,valid\n0,0,1,1,0,maybe\n"),
      ParseError);
}
