#include "fairdraw/stats.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fairdraw {

double chi_square_statistic(const std::vector<std::uint64_t>& bins) {
  if (bins.empty()) throw std::invalid_argument("chi_square_statistic: no bins");
  const std::uint64_t total = std::accumulate(bins.begin(), bins.end(), std::uint64_t{0});
  if (total == 0) throw std::invalid_argument("chi_square_statistic: empty sample");
  const double expected = static_cast<double>(total) / static_cast<double>(bins.size());
  double stat = 0.0;
  for (std::uint64_t observed : bins) {
    const double d = static_cast<double>(observed) - expected;
    stat += d * d / expected;
  }
  return stat;
}

double chi_square_critical_1e3(unsigned dof) {
  // Upper-tail 0.001 quantiles, standard table.
  static const double kTable[] = {
      10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124,
      27.877, 29.588, 31.264, 32.909, 34.528, 36.123, 37.697, 39.252,
      40.790, 42.312, 43.820, 45.315, 46.797, 48.268, 49.728, 51.179,
      52.620, 54.052, 55.476, 56.892, 58.301, 59.703, 61.098, 62.487,
  };
  if (dof < 1 || dof > 32)
    throw std::out_of_range("chi-square critical value table covers 1..32 degrees of freedom");
  return kTable[dof - 1];
}

ChiSquareReport uniformity_report(std::vector<std::uint64_t> bins, std::uint64_t aborted_runs) {
  ChiSquareReport r;
  r.trials = std::accumulate(bins.begin(), bins.end(), std::uint64_t{0});
  r.bins = std::move(bins);
  r.degrees_of_freedom = static_cast<unsigned>(r.bins.size() - 1);
  r.statistic = chi_square_statistic(r.bins);
  r.threshold = chi_square_critical_1e3(r.degrees_of_freedom);
  r.pass = r.statistic < r.threshold;
  r.aborted_runs = aborted_runs;
  return r;
}

std::string format_report(const ChiSquareReport& r) {
  std::ostringstream os;
  os << "bins:";
  for (std::uint64_t b : r.bins) os << ' ' << b;
  os << "\nchi-square " << r.statistic << "  (dof " << r.degrees_of_freedom << ", critical "
     << r.threshold << " at significance 1e-3)\ncompleted " << r.trials << "  aborted "
     << r.aborted_runs << "\nresult: " << (r.pass ? "PASS" : "FAIL");
  return os.str();
}

}  // namespace fairdraw
