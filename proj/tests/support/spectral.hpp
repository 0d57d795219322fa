#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sremtl/data.hpp"

namespace sremtl::testing {

// Log band energies of a Hann-windowed STFT summed over the clip, with the
// mean removed so that overall level does not matter.
inline std::vector<double> band_energies(const WavClip& clip, int bands = 32) {
  constexpr int n = 512, hop = 256, bins = 128;
  Eigen::FFT<double> fft;
  std::vector<double> frame(n), out(bands, 1e-10);
  std::vector<std::complex<double>> spec;
  for (std::size_t s = 0; s + n <= clip.samples.size(); s += hop) {
    for (int i = 0; i < n; ++i) {
      frame[i] = clip.samples[s + i] *
                 (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1)));
    }
    fft.fwd(spec, frame);
    for (int k = 1; k < bins; ++k) out[(k - 1) * bands / (bins - 1)] += std::norm(spec[k]);
  }
  double mean = 0.0;
  for (double& v : out) mean += (v = std::log(v));
  mean /= bands;
  for (double& v : out) v -= mean;
  return out;
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace sremtl::testing
