#pragma once

#include <array>
#include <string>
#include <vector>

#include "gazealign/attention_map.hpp"

namespace gazealign {

// Training-time constants. Defaults are the published operating point.
struct LossConfig {
  double tau = 0.07;       // InfoNCE temperature
  double lambda1 = 0.1;    // contrastive weight
  double lambda2 = 0.3;    // gaze weight
  double lambda3 = 0.15;   // gaze-text weight
  double alpha = 0.7;      // global/specific ensemble mix
  double focal_gamma = 2.0;
  std::array<double, 8> class_pos_weights{1.0, 1.0, 1.0, 1.0,
                                          1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

std::string loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const std::string& text);

// Composite attention loss over one pair of maps, with analytic gradients
// with respect to the model map. Per-term gradient arrays are unweighted;
// grad_total applies w_q.
struct LossBreakdown {
  int height = 0;
  int width = 0;
  double mse = 0.0;
  double kl = 0.0;
  double corr = 0.0;
  double com = 0.0;
  double w_q = 0.0;
  double gaze_total = 0.0;  // w_q * (mse + kl + corr + com)
  std::vector<double> grad_mse;
  std::vector<double> grad_kl;
  std::vector<double> grad_corr;
  std::vector<double> grad_com;
  std::vector<double> grad_total;
};

std::string loss_breakdown_to_json(const LossBreakdown& b);

// mse: pixel-mean squared difference.
// kl: KL(softmax(a_gaze) || softmax(a_model)) in nats.
// corr: 1 - Pearson(a_model, a_gaze); either std below 1e-12 pins the
//       correlation to 0 (term value 1, zero gradient).
// com: centroid distance normalized by sqrt(h^2 + w^2).
// w_q: sqrt(n_fix) * q_score.
LossBreakdown gaze_loss(const AttentionMap& a_model,
                        const AttentionMap& a_gaze, int n_fix,
                        double q_score);

struct MultiscaleLoss {
  std::array<LossBreakdown, 3> per_scale;
  double total = 0.0;  // mean of the per-scale gaze totals
};

MultiscaleLoss gaze_loss_multiscale(const std::array<AttentionMap, 3>& model,
                                    const std::array<AttentionMap, 3>& gaze,
                                    int n_fix, double q_score);

// In-batch contrastive loss over cosine similarities at temperature tau.
// Gradients are with respect to the raw (unnormalized) embeddings.
struct InfoNceResult {
  double loss = 0.0;
  std::vector<std::vector<double>> grad_anchors;
  std::vector<std::vector<double>> grad_positives;
};

InfoNceResult info_nce(const std::vector<std::vector<double>>& anchors,
                       const std::vector<std::vector<double>>& positives,
                       double tau, bool with_grad = false);

// Multi-label focal term, mean over the 8 classes. Targets must be exactly
// 0 or 1.
double focal_loss(const std::array<double, 8>& logits,
                  const std::array<double, 8>& targets,
                  const LossConfig& cfg);

std::array<double, 8> ensemble_logit(const std::array<double, 8>& global_logits,
                                     const std::array<double, 8>& specific_logits,
                                     double alpha);

// cls + lambda1*nce + lambda2*gaze + lambda3*gaze_text
double total_loss(double cls, double nce, double gaze, double gaze_text,
                  const LossConfig& cfg);

}  // namespace gazealign
