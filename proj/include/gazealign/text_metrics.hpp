#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace gazealign {

// Lowercased maximal alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

struct BleuResult {
  double bleu = 0.0;                   // cumulative at the requested order
  std::array<double, 4> cumulative{};  // BLEU-1 .. BLEU-4
  bool empty_candidate = false;
};

// Single-reference BLEU with clipped n-gram precisions, geometric mean,
// and brevity penalty. Orders above min(candidate, reference) length are
// dropped so that identical texts always score 1; a surviving zero
// precision is smoothed to 1e-9 before the log.
BleuResult bleu(std::string_view candidate, std::string_view reference,
                int max_n = 4);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // either side had no units to match
};

RougeScore rouge_l(std::string_view candidate, std::string_view reference);
RougeScore rouge_n(std::string_view candidate, std::string_view reference,
                   int n);

// Fraction of terms appearing case-insensitively (whitespace collapsed)
// as substrings of the candidate. Empty term list scores 0.
double keyword_overlap(std::string_view candidate,
                       const std::vector<std::string>& required_terms);

}  // namespace gazealign
