#include "dpcam/measure.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dpcam {

namespace {

std::uint64_t poisson_inversion(double mean, rng::Stream& stream) {
  // Product-of-uniforms: count draws until the product falls below e^-mean.
  const double limit = std::exp(-mean);
  std::uint64_t k = 0;
  double prod = stream.next_double();
  while (prod > limit) {
    ++k;
    prod *= stream.next_double();
  }
  return k;
}

// Hoermann's transformed rejection (PTRS); exact for mean >= ~10, used >= 30.
std::uint64_t poisson_ptrs(double mean, rng::Stream& stream) {
  const double slam = std::sqrt(mean);
  const double llam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = stream.next_double() - 0.5;
    const double v = stream.next_double();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        k * llam - mean - std::lgamma(k + 1.0))
      return static_cast<std::uint64_t>(k);
  }
}

}  // namespace

std::uint64_t poisson_sample(double mean, rng::Stream& stream) {
  if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("poisson mean must be finite and nonnegative");
  if (mean == 0.0) return 0;
  return mean < 30.0 ? poisson_inversion(mean, stream) : poisson_ptrs(mean, stream);
}

MeasurementRecord simulate_measurements(const JointDistribution& joint, const SensingOperator& op,
                                        double flux, std::uint64_t seed, double t_aq,
                                        double dark_rate) {
  if (!(flux > 0.0)) throw std::invalid_argument("flux must be positive");
  if (dark_rate < 0.0) throw std::invalid_argument("dark rate must be nonnegative");
  joint.validate(1e-9);
  if (joint.n() != op.n()) throw std::invalid_argument("joint and operator dimensions differ");

  const std::vector<double> rates = op.forward(joint.x);
  MeasurementRecord record;
  record.n = op.n();
  record.flux = flux;
  record.t_aq = t_aq;
  record.seed = seed;
  record.y.resize(op.m());
  // Every measurement owns a substream, so the record does not depend on
  // evaluation order.
  for (std::size_t i = 0; i < op.m(); ++i) {
    rng::Stream stream(rng::word(seed, i));
    record.y[i] = poisson_sample(flux * rates[i] + dark_rate, stream);
  }
  return record;
}

double raster_scan_time(double n, double snr, double flux_per_second) {
  if (!(n > 0.0) || !(snr > 0.0) || !(flux_per_second > 0.0))
    throw std::invalid_argument("raster_scan_time arguments must be positive");
  return n * n * n * snr * snr / flux_per_second;
}

double compressive_advantage(double n) {
  if (!(n >= 2.0)) throw std::invalid_argument("compressive_advantage needs n >= 2");
  return n * n / std::log2(n);
}

double noise_margin(const MeasurementRecord& record) {
  if (record.y.size() < 2) throw std::invalid_argument("noise_margin needs at least two counts");
  double mean = 0.0;
  for (std::uint64_t v : record.y) mean += static_cast<double>(v);
  mean /= static_cast<double>(record.y.size());
  if (!(mean > 0.0)) throw std::invalid_argument("noise_margin undefined for all-zero counts");
  double var = 0.0;
  for (std::uint64_t v : record.y) {
    const double d = static_cast<double>(v) - mean;
    var += d * d;
  }
  var /= static_cast<double>(record.y.size() - 1);
  return std::sqrt(var) / std::sqrt(mean);
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void MeasurementRecord::save(const std::string& path) const {
  std::ostringstream out;
  out << "m " << y.size() << "\n";
  out << "n " << n << "\n";
  out << "flux " << format_double(flux) << "\n";
  out << "t_aq " << format_double(t_aq) << "\n";
  out << "seed " << seed << "\n";
  for (std::uint64_t v : y) out << v << "\n";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << out.str();
  if (!f) throw io_error("failed writing " + path);
}

MeasurementRecord MeasurementRecord::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open " + path);
  MeasurementRecord record;
  std::string key;
  std::size_t m = 0;
  if (!(f >> key >> m)) throw io_error(path + ": truncated header");
  if (!(f >> key >> record.n)) throw io_error(path + ": truncated header");
  if (!(f >> key >> record.flux)) throw io_error(path + ": truncated header");
  if (!(f >> key >> record.t_aq)) throw io_error(path + ": truncated header");
  if (!(f >> key >> record.seed)) throw io_error(path + ": truncated header");
  record.y.resize(m);
  for (std::size_t i = 0; i < m; ++i)
    if (!(f >> record.y[i])) throw io_error(path + ": truncated counts");
  return record;
}

void FluxSweepResult::save_csv(const std::string& path) const {
  std::ostringstream out;
  out << "flux,mse,beta_margin\n";
  for (std::size_t i = 0; i < flux_grid.size(); ++i)
    out << format_double(flux_grid[i]) << ',' << format_double(mse[i]) << ','
        << format_double(beta_margin[i]) << "\n";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << out.str();
  if (!f) throw io_error("failed writing " + path);
}

}  // namespace dpcam
