#pragma once

namespace cotdr {

/// Independent delay error terms and their root-sum-square bound, in seconds.
struct ErrorBudget {
  double clock_term = 0.0;
  double temperature_term = 0.0;
  double fit_term = 0.0;
  double total_rss = 0.0;
};

/// Error from a time base off by `fractional_offset`: delay * |offset|.
double clock_error(double delay, double fractional_offset);

/// Delay change over delta_t kelvin at coeff_ppm_per_k.
double temperature_error(double delay, double delta_t, double coeff_ppm_per_k);

/// Worst-case error of a common-clock asymmetry measurement.
double asymmetry_error_bound(double asymmetry, double fractional_offset, double fit_tol);

ErrorBudget combine(double clock_term, double temperature_term, double fit_term);

}  // namespace cotdr
