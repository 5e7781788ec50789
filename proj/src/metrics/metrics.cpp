#include "t2iaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "t2iaudit/error.hpp"

namespace t2iaudit {

SimilarityMatrix::SimilarityMatrix(std::size_t n, std::vector<double> values)
    : n_(n), values_(std::move(values)) {
  if (values_.size() != n_ * n_) {
    throw AuditError(ErrorCode::BadDims, "similarity matrix needs n*n values");
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw AuditError(ErrorCode::BadDims, "cosine of vectors with lengths " + std::to_string(a.size()) +
                                             " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw AuditError(ErrorCode::Degenerate, "cosine of a zero-norm vector");
  // Single sqrt of the product keeps cos(a, a) == 1 exactly.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double cosine(const ImageFeature& a, const ImageFeature& b) { return cosine(a.values(), b.values()); }

DiversityResult diversity(std::span<const ImageFeature> features) {
  const std::size_t n = features.size();
  if (n < 2) throw AuditError(ErrorCode::InsufficientData, "diversity needs at least 2 features");
  std::vector<double> m(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine(features[i], features[j]);
      m[i * n + j] = c;
      m[j * n + i] = c;
      total += 2.0 * c;
    }
  }
  // total holds the off-diagonal sum, i.e. the full sum minus the N unit diagonal terms.
  const double nn = static_cast<double>(n);
  return {SimilarityMatrix(n, std::move(m)), 1.0 - total / (nn * nn - nn)};
}

namespace {

void check_eps(double clamp_eps) {
  if (!(clamp_eps > 0.0 && clamp_eps <= 1e-3)) {
    throw AuditError(ErrorCode::InvalidArgument, "clamp_eps must be in (0, 1e-3]");
  }
}

}  // namespace

double fairness_single(const ImageFeature& left_out, const ImageFeature& original, double clamp_eps) {
  check_eps(clamp_eps);
  const double c = cosine(left_out, original);
  // 1 - (1 - eps) is not eps in floating point, so return the ceiling directly
  if (c >= 1.0 - clamp_eps) return -std::log(clamp_eps);
  return -std::log1p(-c);
}

double fairness(std::span<const ImageFeature> left_out, std::span<const ImageFeature> originals,
                double clamp_eps) {
  if (left_out.size() != originals.size()) {
    throw AuditError(ErrorCode::InvalidArgument, "fairness: " + std::to_string(left_out.size()) +
                                                     " left-out features vs " +
                                                     std::to_string(originals.size()) + " originals");
  }
  if (left_out.empty()) throw AuditError(ErrorCode::InsufficientData, "fairness needs K >= 1 pairs");
  double sum = 0.0;
  for (std::size_t k = 0; k < left_out.size(); ++k) sum += fairness_single(left_out[k], originals[k], clamp_eps);
  return sum / static_cast<double>(left_out.size());
}

ReliabilityDistribution estimate_distribution(std::span<const double> samples, std::size_t grid_points) {
  if (grid_points < 2) throw AuditError(ErrorCode::InvalidArgument, "grid_points must be >= 2");
  for (double s : samples) {
    if (!std::isfinite(s)) throw AuditError(ErrorCode::InvalidArgument, "non-finite sample");
  }
  if (std::set<double>(samples.begin(), samples.end()).size() < 2) {
    throw AuditError(ErrorCode::InsufficientData, "distribution needs at least 2 distinct samples");
  }
  ReliabilityDistribution out;
  out.samples.assign(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());

  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= m;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / m);
  double h = sd * std::pow(m, -0.2);
  if (!(h > 0.0)) h = 0.01;
  out.bandwidth = h;

  const double hi = *std::max_element(samples.begin(), samples.end()) * 1.1;
  const double step = hi / static_cast<double>(grid_points - 1);
  out.grid.resize(grid_points);
  out.density.resize(grid_points);
  const double norm = 1.0 / (m * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = static_cast<double>(g) * step;
    out.grid[g] = x;
    double acc = 0.0;
    for (double s : samples) {
      const double z = (x - s) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.density[g] = acc * norm;
  }
  double area = 0.0;
  for (std::size_t g = 1; g < grid_points; ++g) {
    area += 0.5 * (out.density[g] + out.density[g - 1]) * (out.grid[g] - out.grid[g - 1]);
  }
  if (!(area > 0.0)) throw AuditError(ErrorCode::Degenerate, "density integrates to zero on the grid");
  for (double& d : out.density) d /= area;

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid_points; ++g) {
    if (out.density[g] > out.density[best]) best = g;
  }
  out.phi_mo = out.grid[best];
  out.mode = out.density[best];
  return out;
}

DistributionShift compare_distributions(const ReliabilityDistribution& a, const ReliabilityDistribution& b) {
  DistributionShift s;
  s.delta_phi_mo = a.phi_mo - b.phi_mo;
  s.mode_ratio = a.mode > 0.0 ? b.mode / a.mode : 0.0;
  s.left_shifted = b.phi_mo < a.phi_mo && b.mode > a.mode;
  return s;
}

}  // namespace t2iaudit
