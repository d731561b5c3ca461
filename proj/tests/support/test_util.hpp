#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mergelab/rng.hpp"

namespace mergelab::testsupport {

inline std::vector<double> random_vec(Pcg32& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform_double();
  return v;
}

// Random values bounded away from zero (for kinked ops like relu).
inline std::vector<double> random_vec_nonzero(Pcg32& rng, std::size_t n, double margin = 0.05) {
  std::vector<double> v = random_vec(rng, n);
  for (double& x : v) x += (x >= 0.0 ? margin : -margin);
  return v;
}

// Central-difference check of `analytic` against the scalar `objective`,
// probing `probes` random coordinates of `buffer`. Everything runs in double;
// h = 1e-3. Returns the max relative error over the probes.
inline double fd_max_rel_err(std::vector<double>& buffer, std::span<const double> analytic,
                             const std::function<double()>& objective, Pcg32& rng, int probes = 5,
                             double h = 1e-3) {
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const std::size_t j = rng.uniform_int(static_cast<std::uint32_t>(buffer.size()));
    const double saved = buffer[j];
    buffer[j] = saved + h;
    const double up = objective();
    buffer[j] = saved - h;
    const double down = objective();
    buffer[j] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic[j];
    const double scale = std::max({std::abs(a), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(a - fd) / scale);
  }
  return worst;
}

}  // namespace mergelab::testsupport
