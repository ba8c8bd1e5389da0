#include "gazealign/text_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "gazealign/errors.hpp"

namespace gazealign {
namespace {

constexpr double kSmoothEps = 1e-9;

std::map<std::vector<std::string>, int> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string> gram(tokens.begin() + i, tokens.begin() + i + n);
    ++counts[gram];
  }
  return counts;
}

// Clipped n-gram matches and the candidate n-gram total.
std::pair<int, int> clipped_matches(const std::vector<std::string>& cand,
                                    const std::vector<std::string>& ref,
                                    int n) {
  const auto cc = ngram_counts(cand, n);
  const auto rc = ngram_counts(ref, n);
  int matches = 0, total = 0;
  for (const auto& [gram, count] : cc) {
    total += count;
    const auto it = rc.find(gram);
    if (it != rc.end()) matches += std::min(count, it->second);
  }
  return {matches, total};
}

// Whitespace runs collapse to single spaces; case folds.
std::string fold_for_search(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = true;
    } else {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

BleuResult bleu(std::string_view candidate, std::string_view reference,
                int max_n) {
  if (max_n < 1 || max_n > 4) throw ShapeError("bleu order must be in [1, 4]");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);

  BleuResult res;
  if (cand.empty() || ref.empty()) {
    res.empty_candidate = cand.empty();
    return res;
  }

  const double bp =
      cand.size() >= ref.size()
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref.size()) / cand.size());

  std::array<double, 4> log_precision{};
  const int reachable = static_cast<int>(std::min(
      {static_cast<std::size_t>(4), cand.size(), ref.size()}));
  for (int n = 1; n <= reachable; ++n) {
    const auto [matches, total] = clipped_matches(cand, ref, n);
    double p = total > 0 ? static_cast<double>(matches) / total : 0.0;
    if (p <= 0.0) p = kSmoothEps;
    log_precision[n - 1] = std::log(p);
  }

  for (int order = 1; order <= 4; ++order) {
    // orders the texts cannot reach are dropped from the geometric mean
    const int used = std::min(order, reachable);
    double acc = 0.0;
    for (int n = 1; n <= used; ++n) acc += log_precision[n - 1];
    res.cumulative[order - 1] = bp * std::exp(acc / used);
  }
  res.bleu = res.cumulative[max_n - 1];
  return res;
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);

  RougeScore score;
  if (cand.empty() || ref.empty()) {
    score.degenerate = true;
    return score;
  }

  const std::size_t nc = cand.size(), nr = ref.size();
  std::vector<std::size_t> prev(nr + 1, 0), cur(nr + 1, 0);
  for (std::size_t i = 1; i <= nc; ++i) {
    for (std::size_t j = 1; j <= nr; ++j) {
      if (cand[i - 1] == ref[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[nr]);
  score.precision = lcs / nc;
  score.recall = lcs / nr;
  score.f1 = (score.precision + score.recall) > 0.0
                 ? 2.0 * score.precision * score.recall /
                       (score.precision + score.recall)
                 : 0.0;
  return score;
}

RougeScore rouge_n(std::string_view candidate, std::string_view reference,
                   int n) {
  if (n < 1) throw ShapeError("rouge order must be >= 1");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);

  RougeScore score;
  const auto cc = ngram_counts(cand, n);
  const auto rc = ngram_counts(ref, n);
  int cand_total = 0, ref_total = 0, matches = 0;
  for (const auto& [gram, count] : cc) cand_total += count;
  for (const auto& [gram, count] : rc) ref_total += count;
  for (const auto& [gram, count] : rc) {
    const auto it = cc.find(gram);
    if (it != cc.end()) matches += std::min(count, it->second);
  }
  if (cand_total == 0 || ref_total == 0) {
    score.degenerate = true;
    return score;
  }
  score.precision = static_cast<double>(matches) / cand_total;
  score.recall = static_cast<double>(matches) / ref_total;
  score.f1 = (score.precision + score.recall) > 0.0
                 ? 2.0 * score.precision * score.recall /
                       (score.precision + score.recall)
                 : 0.0;
  return score;
}

double keyword_overlap(std::string_view candidate,
                       const std::vector<std::string>& required_terms) {
  if (required_terms.empty()) return 0.0;
  const std::string folded = fold_for_search(candidate);
  int found = 0;
  for (const auto& term : required_terms) {
    const std::string needle = fold_for_search(term);
    if (!needle.empty() && folded.find(needle) != std::string::npos) ++found;
  }
  return static_cast<double>(found) / required_terms.size();
}

}  // namespace gazealign
