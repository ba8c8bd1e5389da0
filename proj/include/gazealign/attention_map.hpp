#pragma once

#include <string>
#include <vector>

namespace gazealign {

// Dense row-major 2D map. Maps loaded from or saved to disk must hold
// finite non-negative values; intermediate arrays (gradients, descent
// iterates) may carry arbitrary finite values.
struct AttentionMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  AttentionMap() = default;
  AttentionMap(int h, int w, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  double at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * width + c];
  }
  double& at(int r, int c) {
    return values[static_cast<std::size_t>(r) * width + c];
  }
};

// Probabilities over the flattened pixels, summing to 1.
struct DistributionView {
  int height = 0;
  int width = 0;
  std::vector<double> probs;
};

// Binary map format: magic "ATNM", u32 LE height, u32 LE width, then
// height*width float32 LE values in row-major order.
AttentionMap load_atnm(const std::string& path);
void save_atnm(const AttentionMap& map, const std::string& path);

// 16-bit binary PGM (P5, maxval 65535) viewing copy, min-max scaled.
// A constant map writes all zeros.
void save_pgm16(const AttentionMap& map, const std::string& path);

}  // namespace gazealign
