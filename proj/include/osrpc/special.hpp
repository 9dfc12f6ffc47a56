#pragma once

namespace osrpc {

// Standard normal CDF Phi(x).
double normal_cdf(double x);

// Upper tail 1 - Phi(x), computed without cancellation.
double normal_sf(double x);

// log Phi(x), stable deep into the left tail.
double log_normal_cdf(double x);

// Inverse standard normal CDF. Throws InvalidParameterError unless 0 < p < 1.
double normal_quantile(double p);

// Standard normal density.
double normal_pdf(double x);

}  // namespace osrpc
