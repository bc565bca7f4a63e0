#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fairdraw {

/// Goodness-of-fit report against the uniform distribution over the bins.
/// statistic = sum (observed - expected)^2 / expected with expected = total/bins.
struct ChiSquareReport {
  std::vector<std::uint64_t> bins;
  double statistic = 0.0;
  unsigned degrees_of_freedom = 0;
  double threshold = 0.0;  // upper critical value at significance 1e-3
  bool pass = false;
  std::uint64_t trials = 0;        // completed draws entering the histogram
  std::uint64_t aborted_runs = 0;  // tallied separately, never binned
};

double chi_square_statistic(const std::vector<std::uint64_t>& bins);

/// Upper 10^-3 critical value of the chi-square distribution; fixed table,
/// degrees of freedom 1..32. Throws std::out_of_range beyond the table.
double chi_square_critical_1e3(unsigned dof);

ChiSquareReport uniformity_report(std::vector<std::uint64_t> bins, std::uint64_t aborted_runs);

std::string format_report(const ChiSquareReport& r);

}  // namespace fairdraw
