#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "forge/error.hpp"

namespace forge {

/// Dense embedding. Dimensionality is fixed per provider; providers return
/// unit-normalized vectors.
class EmbeddingVector {
public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}

  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::size_t dim() const { return values_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

  [[nodiscard]] double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  [[nodiscard]] EmbeddingVector normalized() const {
    const double n = norm();
    if (n == 0.0) throw Error(ErrorKind::precondition, "cannot normalize a zero vector");
    std::vector<double> out(values_);
    for (double &v : out) v /= n;
    return EmbeddingVector(std::move(out));
  }

  friend bool operator==(const EmbeddingVector &, const EmbeddingVector &) = default;

private:
  std::vector<double> values_;
};

} // namespace forge
