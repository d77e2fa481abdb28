#pragma once

#include <string>
#include <vector>

#include "hypervae/rng.hpp"

namespace hypervae::prob {

using Vec = std::vector<double>;

// Gaussian with diagonal covariance, stored as stddev per dimension.
struct DiagGaussian {
  Vec mean;
  Vec stddev;

  std::size_t dim() const { return mean.size(); }
  void validate() const;
};

// Mixture of diagonal Gaussians: component means, stddevs, and mixing
// probabilities (nonnegative, summing to one).
struct GmmParams {
  std::vector<Vec> means;
  std::vector<Vec> stddevs;
  Vec weights;

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means[0].size(); }
  void validate() const;
};

double diag_gaussian_log_prob(const DiagGaussian& g, const Vec& x);
double gmm_log_prob(const GmmParams& p, const Vec& x);  // log-sum-exp over components
Vec gmm_sample(const GmmParams& p, Rng& rng);

// KL(N(mean, diag stddev^2) || N(0, I)), closed form.
double kl_diag_vs_standard(const DiagGaussian& q);

// (d/2) * ln(2*pi*e*sigma^2) for an isotropic d-dimensional Gaussian.
double isotropic_gaussian_entropy(double sigma, int d);

struct GridSpec {
  double x_min, y_min, x_max, y_max;
  int nx, ny;

  bool operator==(const GridSpec&) const = default;
  double cell_w() const { return (x_max - x_min) / nx; }
  double cell_h() const { return (y_max - y_min) / ny; }
  double cell_area() const { return cell_w() * cell_h(); }
  std::size_t cells() const { return static_cast<std::size_t>(nx) * ny; }
};

// 2D cell-mass grid; masses over in-bounds samples sum to one.
struct DensityGrid {
  GridSpec spec;
  std::vector<double> mass;  // row-major, ny rows by nx cols, index = iy*nx+ix
  long in_bounds = 0;
  long out_of_bounds = 0;

  double& at(int ix, int iy) { return mass[static_cast<std::size_t>(iy) * spec.nx + ix]; }
  double at(int ix, int iy) const { return mass[static_cast<std::size_t>(iy) * spec.nx + ix]; }
};

struct Point2 {
  double x, y;
};

// Normalized 2D histogram of samples; samples outside the bounds are counted
// but carry no mass. Fails if nothing lands inside.
DensityGrid histogram_density(const std::vector<Point2>& samples, const GridSpec& spec);

// Exact cell masses of an isotropic 2D Gaussian, via erf differences.
DensityGrid gaussian_cell_masses(double mean_x, double mean_y, double sigma, const GridSpec& spec);

// Monte-Carlo negative log-likelihood: -mean(log_probs).
double nll_metric(const Vec& log_probs);

// Discrete KL over grid cells, sum over cells with target mass > 0; zero
// model-mass cells are floored at kZeroMassFloor so the sum stays finite.
inline constexpr double kZeroMassFloor = 1e-12;
double kl_metric(const DensityGrid& target, const DensityGrid& model);

// Differential cross-entropy estimate from cell masses:
// -sum p ln(m / area), comparable to the analytic differential entropy.
double cross_entropy_metric(const DensityGrid& target, const DensityGrid& model);

// Grid exports: row-major CSV of cell masses, and 16-bit binary PGM (P5)
// scaled so the peak cell maps to 65535.
void save_grid_csv(const DensityGrid& g, const std::string& path);
void save_grid_pgm(const DensityGrid& g, const std::string& path);
DensityGrid load_grid_csv(const std::string& path, const GridSpec& spec);

}  // namespace hypervae::prob
