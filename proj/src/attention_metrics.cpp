#include "gazealign/attention_metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "gazealign/errors.hpp"
#include "gazealign/kernels.hpp"
#include "gazealign/saliency.hpp"

namespace gazealign {
namespace {

constexpr double kStdFloor = 1e-12;
constexpr double kLn2 = 0.69314718055994530942;

void require_same_shape(const AttentionMap& a, const AttentionMap& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("map shapes differ");
  if (a.size() < 3) throw ShapeError("maps must hold at least 3 pixels");
}

}  // namespace

namespace detail {

namespace {

// Lentz's continued fraction for the incomplete beta function.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3.0e-16;
  constexpr double kFpMin = 1.0e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= kEps) break;
  }
  return h;
}

}  // namespace

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

PearsonResult pearson(const AttentionMap& a, const AttentionMap& b) {
  require_same_shape(a, b);
  const auto& k = kern::active();
  const std::size_t n = a.size();
  const double n_d = static_cast<double>(n);

  // two-pass centered sums; the raw-moment identity cancels catastrophically
  // for near-constant maps and defeats the degeneracy floor
  const double mean_a = k.sum(a.values.data(), n) / n_d;
  const double mean_b = k.sum(b.values.data(), n) / n_d;
  double mom[3];
  k.centered_moments(a.values.data(), b.values.data(), n, mean_a, mean_b, mom);
  const double s_aa = mom[0];
  const double s_bb = mom[1];
  const double s_ab = mom[2];
  const double std_a = std::sqrt(std::max(0.0, s_aa / n_d));
  const double std_b = std::sqrt(std::max(0.0, s_bb / n_d));

  PearsonResult res;
  if (std_a < kStdFloor || std_b < kStdFloor) {
    res.degenerate = true;
    return res;  // r = 0, p = 1
  }
  res.r = std::clamp(s_ab / std::sqrt(s_aa * s_bb), -1.0, 1.0);
  const double df = n_d - 2.0;
  const double denom = 1.0 - res.r * res.r;
  if (denom <= 0.0) {
    res.p = 0.0;
  } else {
    const double t2 = res.r * res.r * df / denom;
    res.p = detail::betai(df / 2.0, 0.5, df / (df + t2));
  }
  return res;
}

double jensen_shannon_bits(const DistributionView& p,
                           const DistributionView& q) {
  if (p.probs.size() != q.probs.size() || p.probs.empty())
    throw ShapeError("distributions must share a non-empty shape");
  const auto& k = kern::active();
  const std::size_t n = p.probs.size();
  std::vector<double> mid(n);
  k.mean2(p.probs.data(), q.probs.data(), mid.data(), n);
  const double nats = 0.5 * k.kl_sum(p.probs.data(), mid.data(), n) +
                      0.5 * k.kl_sum(q.probs.data(), mid.data(), n);
  return std::clamp(nats / kLn2, 0.0, 1.0);
}

NssResult nss(const AttentionMap& model, const FixationSequence& fixations) {
  if (model.size() < 3) throw ShapeError("maps must hold at least 3 pixels");
  const auto& k = kern::active();
  const std::size_t n = model.size();
  const double n_d = static_cast<double>(n);
  const double mean = k.sum(model.values.data(), n) / n_d;
  const double sq = k.dot(model.values.data(), model.values.data(), n);
  const double var = std::max(0.0, sq / n_d - mean * mean);
  const double stddev = std::sqrt(var);

  NssResult res;
  if (stddev < kStdFloor) {
    res.degenerate = true;
    return res;
  }

  double acc = 0.0;
  int count = 0;
  for (const auto& rec : fixations.records) {
    if (!rec.valid) continue;
    const int c = std::clamp(
        static_cast<int>(std::lround(rec.x * (model.width - 1))), 0,
        model.width - 1);
    const int r = std::clamp(
        static_cast<int>(std::lround(rec.y * (model.height - 1))), 0,
        model.height - 1);
    acc += (model.at(r, c) - mean) / stddev;
    ++count;
  }
  if (count == 0) {
    res.degenerate = true;
    return res;
  }
  res.value = acc / count;
  return res;
}

double entropy_bits(const DistributionView& d) {
  if (d.probs.empty()) throw ShapeError("entropy of an empty distribution");
  const auto& k = kern::active();
  return -k.xlogx_sum(d.probs.data(), d.probs.size()) / kLn2;
}

AlignmentReport alignment_report(const AttentionMap& a_model,
                                 const AttentionMap& a_gaze,
                                 const FixationSequence& fixations) {
  require_same_shape(a_model, a_gaze);
  const auto& k = kern::active();

  AlignmentReport rep;
  const PearsonResult pr = pearson(a_model, a_gaze);
  rep.pearson_r = pr.r;
  rep.pearson_p = pr.p;
  rep.pearson_degenerate = pr.degenerate;

  rep.mse = k.sum_sq_diff(a_model.values.data(), a_gaze.values.data(),
                          a_model.size()) /
            static_cast<double>(a_model.size());

  const DistributionView dm =
      to_distribution(a_model, NormalizeMode::sum_normalize);
  const DistributionView dg =
      to_distribution(a_gaze, NormalizeMode::sum_normalize);
  rep.jsd_bits = jensen_shannon_bits(dm, dg);
  rep.entropy_model_bits = entropy_bits(dm);
  rep.entropy_human_bits = entropy_bits(dg);

  const NssResult ns = nss(a_model, fixations);
  rep.nss = ns.value;
  rep.nss_degenerate = ns.degenerate;
  return rep;
}

std::string alignment_report_to_json(const AlignmentReport& r) {
  nlohmann::ordered_json j;
  j["pearson_r"] = r.pearson_r;
  j["pearson_p"] = r.pearson_p;
  // pixels are correlated samples; the p-value is nominal by construction
  j["pearson_p_nominal"] = true;
  j["pearson_degenerate"] = r.pearson_degenerate;
  j["mse"] = r.mse;
  j["jsd_bits"] = r.jsd_bits;
  j["nss"] = r.nss;
  j["nss_degenerate"] = r.nss_degenerate;
  j["entropy_human_bits"] = r.entropy_human_bits;
  j["entropy_model_bits"] = r.entropy_model_bits;
  return j.dump(2);
}

}  // namespace gazealign
