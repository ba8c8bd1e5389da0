#include "gazealign/losses.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "gazealign/errors.hpp"
#include "gazealign/kernels.hpp"
#include "gazealign/saliency.hpp"

namespace gazealign {
namespace {

constexpr double kStdFloor = 1e-12;

void require_same_shape(const AttentionMap& a, const AttentionMap& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("map shapes differ");
  if (a.size() == 0) throw ShapeError("maps must be non-empty");
}

double stable_softplus(double x) {
  // log(1 + e^x) without overflow on either side
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ShapeError("tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ShapeError("alpha must lie in [0, 1]");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
    throw ShapeError("lambda weights must be non-negative");
  if (focal_gamma < 0.0) throw ShapeError("gamma must be non-negative");
  for (double w : class_pos_weights)
    if (w < 0.0) throw ShapeError("class weights must be non-negative");
}

std::string loss_config_to_json(const LossConfig& cfg) {
  nlohmann::ordered_json j;
  j["tau"] = cfg.tau;
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["lambda3"] = cfg.lambda3;
  j["alpha"] = cfg.alpha;
  j["focal_gamma"] = cfg.focal_gamma;
  j["class_pos_weights"] = cfg.class_pos_weights;
  return j.dump(2);
}

LossConfig loss_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("loss config json: ") + e.what());
  }
  LossConfig cfg;
  try {
    if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
    if (j.contains("lambda1")) cfg.lambda1 = j["lambda1"].get<double>();
    if (j.contains("lambda2")) cfg.lambda2 = j["lambda2"].get<double>();
    if (j.contains("lambda3")) cfg.lambda3 = j["lambda3"].get<double>();
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("focal_gamma"))
      cfg.focal_gamma = j["focal_gamma"].get<double>();
    if (j.contains("class_pos_weights")) {
      const auto& arr = j["class_pos_weights"];
      if (!arr.is_array() || arr.size() != 8)
        throw SchemaError("class_pos_weights must hold 8 numbers");
      for (std::size_t i = 0; i < 8; ++i)
        cfg.class_pos_weights[i] = arr[i].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("loss config json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string loss_breakdown_to_json(const LossBreakdown& b) {
  nlohmann::ordered_json j;
  j["mse"] = b.mse;
  j["kl"] = b.kl;
  j["corr"] = b.corr;
  j["com"] = b.com;
  j["w_q"] = b.w_q;
  j["total"] = b.gaze_total;
  return j.dump(2);
}

LossBreakdown gaze_loss(const AttentionMap& a_model,
                        const AttentionMap& a_gaze, int n_fix,
                        double q_score) {
  require_same_shape(a_model, a_gaze);
  if (n_fix < 0) throw ShapeError("n_fix must be non-negative");
  if (!(q_score >= 0.0 && q_score <= 1.0))
    throw ShapeError("q_score must lie in [0, 1]");

  const auto& k = kern::active();
  const std::size_t n = a_model.size();
  const double n_d = static_cast<double>(n);
  const double* m = a_model.values.data();
  const double* g = a_gaze.values.data();

  LossBreakdown out;
  out.height = a_model.height;
  out.width = a_model.width;
  out.w_q = std::sqrt(static_cast<double>(n_fix)) * q_score;
  out.grad_mse.assign(n, 0.0);
  out.grad_kl.assign(n, 0.0);
  out.grad_corr.assign(n, 0.0);
  out.grad_com.assign(n, 0.0);
  out.grad_total.assign(n, 0.0);

  // mse
  out.mse = k.sum_sq_diff(m, g, n) / n_d;
  for (std::size_t i = 0; i < n; ++i)
    out.grad_mse[i] = 2.0 * (m[i] - g[i]) / n_d;

  // kl between the softmax views; gradient is pm - pg
  const DistributionView pm =
      to_distribution(a_model, NormalizeMode::softmax);
  const DistributionView pg = to_distribution(a_gaze, NormalizeMode::softmax);
  out.kl = k.kl_sum(pg.probs.data(), pm.probs.data(), n);
  for (std::size_t i = 0; i < n; ++i)
    out.grad_kl[i] = pm.probs[i] - pg.probs[i];

  // corr = 1 - rho; two-pass centered sums keep the degeneracy floor
  // meaningful for near-constant maps on every backend
  const double mean_m = k.sum(m, n) / n_d;
  const double mean_g = k.sum(g, n) / n_d;
  double mom[3];
  k.centered_moments(m, g, n, mean_m, mean_g, mom);
  const double s_mm = mom[0];
  const double s_gg = mom[1];
  const double s_mg = mom[2];
  const double std_m = std::sqrt(std::max(0.0, s_mm / n_d));
  const double std_g = std::sqrt(std::max(0.0, s_gg / n_d));
  if (std_m < kStdFloor || std_g < kStdFloor) {
    // degenerate: rho pinned to 0, flat gradient
    out.corr = 1.0;
  } else {
    const double denom = std::sqrt(s_mm * s_gg);
    const double rho = s_mg / denom;
    out.corr = 1.0 - rho;
    const double ratio = s_mg / s_mm;
    for (std::size_t i = 0; i < n; ++i)
      out.grad_corr[i] =
          -((g[i] - mean_g) - ratio * (m[i] - mean_m)) / denom;
  }

  // com distance normalized by the diagonal
  const double diag = std::sqrt(
      static_cast<double>(a_model.height) * a_model.height +
      static_cast<double>(a_model.width) * a_model.width);
  const CenterOfMass com_m = center_of_mass(a_model);
  const CenterOfMass com_g = center_of_mass(a_gaze);
  const double dr = com_m.row - com_g.row;
  const double dc = com_m.col - com_g.col;
  const double dist = std::sqrt(dr * dr + dc * dc);
  out.com = dist / diag;
  const double total_mass = k.sum(m, n);
  if (dist > 0.0 && total_mass > 0.0) {
    const double scale = 1.0 / (dist * total_mass * diag);
    for (int r = 0; r < a_model.height; ++r) {
      for (int c = 0; c < a_model.width; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * a_model.width + c;
        out.grad_com[i] =
            scale * (dr * (r - com_m.row) + dc * (c - com_m.col));
      }
    }
  }

  out.gaze_total = out.w_q * (out.mse + out.kl + out.corr + out.com);
  for (std::size_t i = 0; i < n; ++i)
    out.grad_total[i] = out.w_q * (out.grad_mse[i] + out.grad_kl[i] +
                                   out.grad_corr[i] + out.grad_com[i]);
  return out;
}

MultiscaleLoss gaze_loss_multiscale(const std::array<AttentionMap, 3>& model,
                                    const std::array<AttentionMap, 3>& gaze,
                                    int n_fix, double q_score) {
  MultiscaleLoss out;
  double acc = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    out.per_scale[s] = gaze_loss(model[s], gaze[s], n_fix, q_score);
    acc += out.per_scale[s].gaze_total;
  }
  out.total = acc / 3.0;
  return out;
}

InfoNceResult info_nce(const std::vector<std::vector<double>>& anchors,
                       const std::vector<std::vector<double>>& positives,
                       double tau, bool with_grad) {
  if (!(tau > 0.0)) throw ShapeError("tau must be positive");
  const std::size_t batch = anchors.size();
  if (batch == 0 || positives.size() != batch)
    throw ShapeError("info_nce needs equally sized non-empty batches");
  const std::size_t dim = anchors[0].size();
  if (dim == 0) throw ShapeError("info_nce embeddings must be non-empty");

  const auto& k = kern::active();

  auto normalized = [&](const std::vector<std::vector<double>>& rows,
                        std::vector<double>& norms) {
    std::vector<std::vector<double>> unit(rows.size());
    norms.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != dim)
        throw ShapeError("info_nce embeddings must share one dimension");
      const double norm = std::sqrt(k.dot(rows[i].data(), rows[i].data(), dim));
      if (!(norm > 0.0))
        throw ShapeError("info_nce rejects zero-norm embeddings");
      norms[i] = norm;
      unit[i] = rows[i];
      k.scale(unit[i].data(), dim, 1.0 / norm);
    }
    return unit;
  };

  std::vector<double> anchor_norms, positive_norms;
  const auto ua = normalized(anchors, anchor_norms);
  const auto up = normalized(positives, positive_norms);

  // sims[i][j] = cos(anchor i, positive j) / tau
  std::vector<std::vector<double>> sims(batch, std::vector<double>(batch));
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < batch; ++j)
      sims[i][j] = k.dot(ua[i].data(), up[j].data(), dim) / tau;

  InfoNceResult res;
  std::vector<std::vector<double>> soft(batch, std::vector<double>(batch));
  for (std::size_t i = 0; i < batch; ++i) {
    const double shift = k.max_value(sims[i].data(), batch);
    const double denom =
        k.exp_shift_sum(sims[i].data(), soft[i].data(), batch, shift);
    const double lse = shift + std::log(denom);
    res.loss += lse - sims[i][i];
    k.scale(soft[i].data(), batch, 1.0 / denom);
  }
  res.loss /= static_cast<double>(batch);

  if (with_grad) {
    res.grad_anchors.assign(batch, std::vector<double>(dim, 0.0));
    res.grad_positives.assign(batch, std::vector<double>(dim, 0.0));
    const double inv_batch_tau = 1.0 / (static_cast<double>(batch) * tau);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < batch; ++j) {
        const double w =
            (soft[i][j] - (i == j ? 1.0 : 0.0)) * inv_batch_tau;
        if (w == 0.0) continue;
        const double cos_ij = sims[i][j] * tau;
        // d cos / d raw anchor i = (up_j - cos * ua_i) / |a_i|
        for (std::size_t d = 0; d < dim; ++d) {
          res.grad_anchors[i][d] +=
              w * (up[j][d] - cos_ij * ua[i][d]) / anchor_norms[i];
          res.grad_positives[j][d] +=
              w * (ua[i][d] - cos_ij * up[j][d]) / positive_norms[j];
        }
      }
    }
  }
  return res;
}

double focal_loss(const std::array<double, 8>& logits,
                  const std::array<double, 8>& targets,
                  const LossConfig& cfg) {
  cfg.validate();
  double acc = 0.0;
  for (std::size_t c = 0; c < 8; ++c) {
    const double t = targets[c];
    if (t != 0.0 && t != 1.0)
      throw ShapeError("focal loss targets must be exactly 0 or 1");
    const double z = logits[c];
    // p = sigmoid(z); -log p = softplus(-z); -log(1-p) = softplus(z)
    if (t == 1.0) {
      const double one_minus_p = 1.0 / (1.0 + std::exp(z));
      acc += cfg.class_pos_weights[c] *
             std::pow(one_minus_p, cfg.focal_gamma) * stable_softplus(-z);
    } else {
      const double p = 1.0 / (1.0 + std::exp(-z));
      acc += std::pow(p, cfg.focal_gamma) * stable_softplus(z);
    }
  }
  return acc / 8.0;
}

std::array<double, 8> ensemble_logit(
    const std::array<double, 8>& global_logits,
    const std::array<double, 8>& specific_logits, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ShapeError("alpha must lie in [0, 1]");
  std::array<double, 8> out{};
  for (std::size_t c = 0; c < 8; ++c)
    out[c] = alpha * global_logits[c] + (1.0 - alpha) * specific_logits[c];
  return out;
}

double total_loss(double cls, double nce, double gaze, double gaze_text,
                  const LossConfig& cfg) {
  cfg.validate();
  return cls + cfg.lambda1 * nce + cfg.lambda2 * gaze +
         cfg.lambda3 * gaze_text;
}

}  // namespace gazealign
