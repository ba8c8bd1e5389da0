#pragma once

#include <array>

#include "gazealign/attention_map.hpp"
#include "gazealign/fixation.hpp"

namespace gazealign {

enum class FixationWeight { duration, count };
enum class NormalizeMode { softmax, sum_normalize };

struct HeatmapOptions {
  // <= 0 selects the default: 25.0 at 224x224, scaled by min(h, w)/224.
  double sigma_px = -1.0;
  FixationWeight weight = FixationWeight::duration;
  bool pupil_weighted = false;
  // Bumps are truncated beyond this many sigmas from the center.
  double truncate_sigmas = 4.0;
};

double default_sigma_px(int height, int width);

// Sum of truncated Gaussian bumps, one per valid fixation, centered at
// (y*(h-1), x*(w-1)). Invalid records are skipped. h, w >= 8.
AttentionMap render_heatmap(const FixationSequence& seq, int height,
                            int width, const HeatmapOptions& options = {});

// softmax: shifted exponentials; sum_normalize: (v + eps) / sum(v + eps)
// with eps = 1e-8. Both views sum to 1; softmax entries far below the
// peak may underflow to zero.
DistributionView to_distribution(const AttentionMap& map, NormalizeMode mode);

// 224 -> 112 -> 56 by 2x2 average pooling. Cell-area weighted mass is
// preserved across scales.
std::array<AttentionMap, 3> multiscale(const AttentionMap& map);

struct CenterOfMass {
  double row = 0.0;
  double col = 0.0;
};

// Intensity-weighted centroid; an all-zero map reports the image center
// ((h-1)/2, (w-1)/2).
CenterOfMass center_of_mass(const AttentionMap& map);

}  // namespace gazealign
