#pragma once

#include <string>

#include "gazealign/attention_map.hpp"
#include "gazealign/fixation.hpp"

namespace gazealign {

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;  // two-sided, from the t distribution with n-2 dof
  bool degenerate = false;
};

// Correlation over the flattened pixels. A constant map reports r = 0,
// p = 1, degenerate = true. Pixels are not independent samples, so the
// p-value is nominal.
PearsonResult pearson(const AttentionMap& a, const AttentionMap& b);

// Jensen-Shannon divergence in bits, always within [0, 1].
double jensen_shannon_bits(const DistributionView& p,
                           const DistributionView& q);

struct NssResult {
  double value = 0.0;
  bool degenerate = false;  // constant map or no valid fixations
};

// Mean z-scored map value at the pixels nearest each valid fixation.
NssResult nss(const AttentionMap& model, const FixationSequence& fixations);

double entropy_bits(const DistributionView& d);

// Bundle of alignment measures between a model map and a gaze map.
// jsd and the entropies use the sum-normalized views; pearson and mse use
// the raw maps; nss uses the model map with the fixation sequence.
struct AlignmentReport {
  double pearson_r = 0.0;
  double pearson_p = 1.0;
  bool pearson_degenerate = false;
  double mse = 0.0;
  double jsd_bits = 0.0;
  double nss = 0.0;
  bool nss_degenerate = false;
  double entropy_human_bits = 0.0;
  double entropy_model_bits = 0.0;
};

AlignmentReport alignment_report(const AttentionMap& a_model,
                                 const AttentionMap& a_gaze,
                                 const FixationSequence& fixations);

std::string alignment_report_to_json(const AlignmentReport& r);

namespace detail {
// Regularized incomplete beta I_x(a, b) by continued fraction.
double betai(double a, double b, double x);
}  // namespace detail

}  // namespace gazealign
