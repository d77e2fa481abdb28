#include "hypervae/prob.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hypervae::prob {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}

void DiagGaussian::validate() const {
  if (mean.size() != stddev.size()) throw std::invalid_argument("DiagGaussian: mean/stddev dimension mismatch");
  if (mean.empty()) throw std::invalid_argument("DiagGaussian: empty");
  for (double s : stddev)
    if (!(s > 0.0)) throw std::invalid_argument("DiagGaussian: stddev must be strictly positive");
}

void GmmParams::validate() const {
  if (weights.empty() || means.size() != weights.size() || stddevs.size() != weights.size())
    throw std::invalid_argument("GmmParams: component count mismatch");
  const std::size_t d = means[0].size();
  double sum = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    if (means[m].size() != d || stddevs[m].size() != d)
      throw std::invalid_argument("GmmParams: component dimension mismatch");
    if (weights[m] < 0.0) throw std::invalid_argument("GmmParams: negative mixing probability");
    for (double s : stddevs[m])
      if (!(s > 0.0)) throw std::invalid_argument("GmmParams: stddev must be strictly positive");
    sum += weights[m];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("GmmParams: mixing probabilities sum to " + std::to_string(sum));
}

double diag_gaussian_log_prob(const DiagGaussian& g, const Vec& x) {
  g.validate();
  if (x.size() != g.dim()) throw std::invalid_argument("diag_gaussian_log_prob: dimension mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - g.mean[i]) / g.stddev[i];
    lp += -0.5 * z * z - std::log(g.stddev[i]) - 0.5 * kLog2Pi;
  }
  return lp;
}

double gmm_log_prob(const GmmParams& p, const Vec& x) {
  p.validate();
  const std::size_t M = p.components();
  std::vector<double> comp(M);
  for (std::size_t m = 0; m < M; ++m) {
    const double lw = p.weights[m] > 0.0 ? std::log(p.weights[m]) : -1e300;
    comp[m] = lw + diag_gaussian_log_prob({p.means[m], p.stddevs[m]}, x);
  }
  const double mx = *std::max_element(comp.begin(), comp.end());
  double s = 0.0;
  for (double c : comp) s += std::exp(c - mx);
  return mx + std::log(s);
}

Vec gmm_sample(const GmmParams& p, Rng& rng) {
  p.validate();
  const std::size_t m = rng.categorical(p.weights);
  Vec x(p.dim());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal(p.means[m][i], p.stddevs[m][i]);
  return x;
}

double kl_diag_vs_standard(const DiagGaussian& q) {
  q.validate();
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double s2 = q.stddev[i] * q.stddev[i];
    kl += 0.5 * (q.mean[i] * q.mean[i] + s2 - 1.0 - std::log(s2));
  }
  return kl;
}

double isotropic_gaussian_entropy(double sigma, int d) {
  if (!(sigma > 0.0)) throw std::invalid_argument("isotropic_gaussian_entropy: sigma must be positive");
  return 0.5 * d * std::log(2.0 * M_PI * M_E * sigma * sigma);
}

DensityGrid histogram_density(const std::vector<Point2>& samples, const GridSpec& spec) {
  DensityGrid g{spec, std::vector<double>(spec.cells(), 0.0), 0, 0};
  const double cw = spec.cell_w(), ch = spec.cell_h();
  for (const auto& s : samples) {
    if (s.x < spec.x_min || s.x >= spec.x_max || s.y < spec.y_min || s.y >= spec.y_max) {
      ++g.out_of_bounds;
      continue;
    }
    const int ix = static_cast<int>((s.x - spec.x_min) / cw);
    const int iy = static_cast<int>((s.y - spec.y_min) / ch);
    g.mass[static_cast<std::size_t>(iy) * spec.nx + ix] += 1.0;
    ++g.in_bounds;
  }
  if (g.in_bounds == 0) throw std::runtime_error("histogram_density: no samples inside grid bounds");
  const double inv = 1.0 / static_cast<double>(g.in_bounds);
  for (auto& m : g.mass) m *= inv;
  return g;
}

DensityGrid gaussian_cell_masses(double mean_x, double mean_y, double sigma, const GridSpec& spec) {
  DensityGrid g{spec, std::vector<double>(spec.cells(), 0.0), 0, 0};
  const double inv = 1.0 / (sigma * std::sqrt(2.0));
  auto cdf = [&](double z, double mu) { return 0.5 * (1.0 + std::erf((z - mu) * inv)); };
  std::vector<double> px(spec.nx), py(spec.ny);
  for (int i = 0; i < spec.nx; ++i) {
    const double a = spec.x_min + i * spec.cell_w();
    px[i] = cdf(a + spec.cell_w(), mean_x) - cdf(a, mean_x);
  }
  for (int j = 0; j < spec.ny; ++j) {
    const double a = spec.y_min + j * spec.cell_h();
    py[j] = cdf(a + spec.cell_h(), mean_y) - cdf(a, mean_y);
  }
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) g.at(i, j) = px[i] * py[j];
  // renormalize over the window so the grid is a proper distribution
  double total = 0.0;
  for (double m : g.mass) total += m;
  if (total <= 0.0) throw std::runtime_error("gaussian_cell_masses: grid does not cover the distribution");
  for (auto& m : g.mass) m /= total;
  g.in_bounds = 1;
  return g;
}

double nll_metric(const Vec& log_probs) {
  if (log_probs.empty()) throw std::invalid_argument("nll_metric: empty input");
  double s = 0.0;
  for (double lp : log_probs) {
    if (std::isnan(lp)) throw std::runtime_error("nll_metric: NaN log-probability");
    s += lp;
  }
  return -s / static_cast<double>(log_probs.size());
}

double kl_metric(const DensityGrid& target, const DensityGrid& model) {
  if (!(target.spec == model.spec)) throw std::invalid_argument("kl_metric: mismatched grid specs");
  double kl = 0.0;
  for (std::size_t i = 0; i < target.mass.size(); ++i) {
    const double p = target.mass[i];
    if (p <= 0.0) continue;
    const double q = std::max(model.mass[i], kZeroMassFloor);
    kl += p * std::log(p / q);
  }
  return kl;
}

double cross_entropy_metric(const DensityGrid& target, const DensityGrid& model) {
  if (!(target.spec == model.spec)) throw std::invalid_argument("cross_entropy_metric: mismatched grid specs");
  const double log_area = std::log(target.spec.cell_area());
  double ce = 0.0;
  for (std::size_t i = 0; i < target.mass.size(); ++i) {
    const double p = target.mass[i];
    if (p <= 0.0) continue;
    const double q = std::max(model.mass[i], kZeroMassFloor);
    ce -= p * (std::log(q) - log_area);
  }
  return ce;
}

void save_grid_csv(const DensityGrid& g, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.precision(17);
  for (int j = 0; j < g.spec.ny; ++j) {
    for (int i = 0; i < g.spec.nx; ++i) {
      if (i) f << ',';
      f << g.at(i, j);
    }
    f << '\n';
  }
}

DensityGrid load_grid_csv(const std::string& path, const GridSpec& spec) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open grid csv: " + path);
  DensityGrid g{spec, std::vector<double>(spec.cells(), 0.0), 1, 0};
  std::string line;
  for (int j = 0; j < spec.ny; ++j) {
    if (!std::getline(f, line)) throw std::runtime_error("grid csv truncated: " + path);
    std::istringstream is(line);
    std::string cell;
    for (int i = 0; i < spec.nx; ++i) {
      if (!std::getline(is, cell, ',')) throw std::runtime_error("grid csv row too short: " + path);
      g.at(i, j) = std::stod(cell);
    }
  }
  return g;
}

void save_grid_pgm(const DensityGrid& g, const std::string& path) {
  double peak = 0.0;
  for (double m : g.mass) peak = std::max(peak, m);
  if (peak <= 0.0) peak = 1.0;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P5\n" << g.spec.nx << ' ' << g.spec.ny << "\n65535\n";
  for (int j = g.spec.ny - 1; j >= 0; --j)  // top row = largest y, image convention
    for (int i = 0; i < g.spec.nx; ++i) {
      const double v = g.at(i, j) / peak;
      const auto u = static_cast<unsigned>(std::lround(v * 65535.0));
      f.put(static_cast<char>((u >> 8) & 0xff));
      f.put(static_cast<char>(u & 0xff));
    }
}

}  // namespace hypervae::prob
