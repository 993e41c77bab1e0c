#include "cotdr/error_budget.hpp"

#include <cmath>
#include <stdexcept>

namespace cotdr {

double clock_error(double delay, double fractional_offset) {
  if (delay < 0.0) throw std::invalid_argument("delay must be >= 0");
  return delay * std::abs(fractional_offset);
}

double temperature_error(double delay, double delta_t, double coeff_ppm_per_k) {
  if (delay < 0.0) throw std::invalid_argument("delay must be >= 0");
  return delay * coeff_ppm_per_k * 1e-6 * delta_t;
}

double asymmetry_error_bound(double asymmetry, double fractional_offset, double fit_tol) {
  if (asymmetry < 0.0 || fit_tol < 0.0) throw std::invalid_argument("asymmetry and fit_tol must be >= 0");
  return asymmetry * std::abs(fractional_offset) + 2.0 * fit_tol;
}

ErrorBudget combine(double clock_term, double temperature_term, double fit_term) {
  ErrorBudget b;
  b.clock_term = std::abs(clock_term);
  b.temperature_term = std::abs(temperature_term);
  b.fit_term = std::abs(fit_term);
  b.total_rss = std::sqrt(b.clock_term * b.clock_term + b.temperature_term * b.temperature_term +
                          b.fit_term * b.fit_term);
  return b;
}

}  // namespace cotdr
