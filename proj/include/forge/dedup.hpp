#pragma once

#include <vector>

#include "forge/embedding.hpp"
#include "forge/textmetrics.hpp"

namespace forge {

/// Greedy near-duplicate admission: a candidate is rejected iff its cosine to
/// any admitted vector strictly exceeds the threshold.
class DedupIndex {
public:
  explicit DedupIndex(double threshold) : threshold_(threshold) {}

  [[nodiscard]] double threshold() const { return threshold_; }
  [[nodiscard]] std::size_t size() const { return admitted_.size(); }

  /// Highest cosine against the admitted set (-1 when empty).
  [[nodiscard]] double max_similarity(const EmbeddingVector &v) const {
    double best = -1.0;
    for (const auto &a : admitted_) best = std::max(best, text::cosine(a, v));
    return best;
  }

  [[nodiscard]] bool is_duplicate(const EmbeddingVector &v) const { return max_similarity(v) > threshold_; }

  bool admit(const EmbeddingVector &v) {
    if (is_duplicate(v)) return false;
    admitted_.push_back(v);
    return true;
  }

private:
  double threshold_;
  std::vector<EmbeddingVector> admitted_;
};

} // namespace forge
