#include "gazealign/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "gazealign/errors.hpp"
#include "gazealign/kernels.hpp"

namespace gazealign {

double default_sigma_px(int height, int width) {
  return 25.0 * std::min(height, width) / 224.0;
}

AttentionMap render_heatmap(const FixationSequence& seq, int height,
                            int width, const HeatmapOptions& options) {
  if (height < 8 || width < 8)
    throw ShapeError("heatmap dimensions must be at least 8x8");
  const double sigma = options.sigma_px > 0.0
                           ? options.sigma_px
                           : default_sigma_px(height, width);
  if (!(sigma > 0.0)) throw ShapeError("sigma must be positive");
  const double radius = options.truncate_sigmas * sigma;
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  const auto& k = kern::active();

  AttentionMap map(height, width, 0.0);
  for (const auto& rec : seq.records) {
    if (!rec.valid) continue;
    double amp = options.weight == FixationWeight::duration ? rec.duration
                                                            : 1.0;
    if (options.pupil_weighted) amp *= rec.pupil;
    if (!(amp > 0.0)) continue;

    const double cy = rec.y * (height - 1);
    const double cx = rec.x * (width - 1);
    const int r0 = std::max(0, static_cast<int>(std::ceil(cy - radius)));
    const int r1 = std::min(height - 1,
                            static_cast<int>(std::floor(cy + radius)));
    const int c0 = std::max(0, static_cast<int>(std::ceil(cx - radius)));
    const int c1 = std::min(width - 1,
                            static_cast<int>(std::floor(cx + radius)));
    for (int r = r0; r <= r1; ++r) {
      const double dy = r - cy;
      const double row_amp = amp * std::exp(-dy * dy * inv_two_sigma_sq);
      k.add_gaussian_row(&map.at(r, c0), static_cast<std::size_t>(c1 - c0 + 1),
                         cx - c0, inv_two_sigma_sq, row_amp);
    }
  }
  return map;
}

DistributionView to_distribution(const AttentionMap& map,
                                 NormalizeMode mode) {
  if (map.size() == 0) throw ShapeError("cannot normalize an empty map");
  const auto& k = kern::active();
  DistributionView view;
  view.height = map.height;
  view.width = map.width;
  view.probs.resize(map.size());

  if (mode == NormalizeMode::softmax) {
    const double shift = k.max_value(map.values.data(), map.size());
    const double total = k.exp_shift_sum(map.values.data(), view.probs.data(),
                                         map.size(), shift);
    k.scale(view.probs.data(), view.probs.size(), 1.0 / total);
  } else {
    constexpr double kEps = 1e-8;
    double total = k.sum(map.values.data(), map.size());
    total += kEps * static_cast<double>(map.size());
    for (std::size_t i = 0; i < map.size(); ++i)
      view.probs[i] = (map.values[i] + kEps) / total;
  }
  return view;
}

std::array<AttentionMap, 3> multiscale(const AttentionMap& map) {
  if (map.height != 224 || map.width != 224)
    throw ShapeError("multiscale expects a 224x224 map");

  auto pool = [](const AttentionMap& src) {
    AttentionMap dst(src.height / 2, src.width / 2, 0.0);
    for (int r = 0; r < dst.height; ++r) {
      for (int c = 0; c < dst.width; ++c) {
        dst.at(r, c) = 0.25 * (src.at(2 * r, 2 * c) + src.at(2 * r, 2 * c + 1) +
                               src.at(2 * r + 1, 2 * c) +
                               src.at(2 * r + 1, 2 * c + 1));
      }
    }
    return dst;
  };

  std::array<AttentionMap, 3> out;
  out[0] = map;
  out[1] = pool(out[0]);
  out[2] = pool(out[1]);
  return out;
}

CenterOfMass center_of_mass(const AttentionMap& map) {
  if (map.size() == 0) throw ShapeError("center of mass of an empty map");
  const auto& k = kern::active();
  double total = 0.0, row_acc = 0.0, col_acc = 0.0;
  for (int r = 0; r < map.height; ++r) {
    const double* row =
        map.values.data() + static_cast<std::size_t>(r) * map.width;
    const std::size_t w = static_cast<std::size_t>(map.width);
    const double s = k.sum(row, w);
    total += s;
    row_acc += r * s;
    col_acc += k.index_weighted_sum(row, w);
  }
  CenterOfMass com;
  if (total <= 0.0) {
    com.row = (map.height - 1) / 2.0;
    com.col = (map.width - 1) / 2.0;
  } else {
    com.row = row_acc / total;
    com.col = col_acc / total;
  }
  return com;
}

}  // namespace gazealign
