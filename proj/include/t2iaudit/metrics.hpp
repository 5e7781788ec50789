#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "t2iaudit/types.hpp"

namespace t2iaudit {

class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  SimilarityMatrix(std::size_t n, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const SimilarityMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

// Clamped to [-1, 1]; throws on a zero-norm operand or a length mismatch.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const ImageFeature& a, const ImageFeature& b);

struct DiversityResult {
  SimilarityMatrix similarity;
  double diversity = 0.0;
};

// D = 1 - (sum of all N^2 cosines - N) / (N^2 - N). Needs N >= 2.
DiversityResult diversity(std::span<const ImageFeature> features);

// -ln(1 - min(cos, 1 - clamp_eps)).
double fairness_single(const ImageFeature& left_out, const ImageFeature& original, double clamp_eps);
double fairness(std::span<const ImageFeature> left_out, std::span<const ImageFeature> originals,
                double clamp_eps);

// Gaussian KDE, Scott bandwidth, grid on [0, 1.1 * max], normalized by the
// trapezoid rule. Needs at least 2 distinct samples.
ReliabilityDistribution estimate_distribution(std::span<const double> samples, std::size_t grid_points = 512);

struct DistributionShift {
  double delta_phi_mo = 0.0;  // a.phi_mo - b.phi_mo
  double mode_ratio = 0.0;    // b.mode / a.mode
  bool left_shifted = false;  // b peaks further left and higher than a
};

DistributionShift compare_distributions(const ReliabilityDistribution& a, const ReliabilityDistribution& b);

}  // namespace t2iaudit
