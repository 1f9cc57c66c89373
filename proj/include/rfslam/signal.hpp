#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "rfslam/common.hpp"
#include "rfslam/geometry.hpp"
#include "rfslam/rng.hpp"

namespace rfslam {

/// Frequency-domain sampling grid of the transmitted pulse. The M samples sit
/// at f_m = (m - (M-1)/2) * spacing for m = 0..M-1; the M delay bins of width
/// tau_step exactly tile the unambiguous range [0, max_distance / c].
struct SignalSpec {
  double carrier_freq = 6.0e9;   // Hz
  double bandwidth = 3.0e8;      // Hz
  double spacing = 1.0e7;        // frequency spacing (Hz)
  int sample_count = 31;         // M = bandwidth / spacing + 1, odd
  Eigen::VectorXd pulse_spectrum;  // |S(f_m)|, flat by default
  double pulse_energy = 31.0;    // sum of |S(f_m)|^2
  double tau_step = 0.0;         // delay grid step, 1 / (M * spacing) seconds
  double max_distance = 0.0;     // unambiguous distance c / spacing, meters

  static SignalSpec make(double carrier_freq, double bandwidth, double spacing) {
    if (!(spacing > 0.0) || bandwidth < 0.0 || !(carrier_freq > 0.0)) {
      throw ConfigError("SignalSpec: carrier_freq and spacing must be positive, bandwidth >= 0");
    }
    const double ratio = bandwidth / spacing;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio)) {
      throw ConfigError("SignalSpec: bandwidth / spacing must be an integer");
    }
    const long long cells = static_cast<long long>(rounded);
    if (cells % 2 != 0) {
      throw ConfigError("SignalSpec: bandwidth / spacing must be even (odd sample count)");
    }
    SignalSpec spec;
    spec.carrier_freq = carrier_freq;
    spec.bandwidth = bandwidth;
    spec.spacing = spacing;
    spec.sample_count = static_cast<int>(cells) + 1;
    spec.pulse_spectrum = Eigen::VectorXd::Ones(spec.sample_count);
    spec.pulse_energy = static_cast<double>(spec.sample_count);
    spec.tau_step = 1.0 / (spec.sample_count * spacing);
    spec.max_distance = kSpeedOfLight / spacing;
    return spec;
  }

  void set_pulse_spectrum(Eigen::VectorXd spectrum) {
    if (spectrum.size() != sample_count || (spectrum.array() < 0.0).any()) {
      throw ConfigError("SignalSpec: pulse spectrum must be nonnegative, length M");
    }
    pulse_spectrum = std::move(spectrum);
    pulse_energy = pulse_spectrum.squaredNorm();
  }

  double frequency(int m) const { return (m - (sample_count - 1) / 2) * spacing; }
};

/// Fills out with the sampled pulse delayed by t: out[m] = S(f_m) e^{-j2π f_m t}.
inline void contribution_into(double delay, const SignalSpec& spec,
                              Eigen::Ref<Eigen::VectorXcd> out) {
  const int m_count = spec.sample_count;
  const int half = (m_count - 1) / 2;
  const double phase_step = -2.0 * std::numbers::pi * spec.spacing * delay;
  const std::complex<double> step(std::cos(phase_step), std::sin(phase_step));
  // Start at the lowest frequency -half * spacing and advance by one bin.
  std::complex<double> rot(std::cos(half * -phase_step), std::sin(half * -phase_step));
  for (int m = 0; m < m_count; ++m) {
    out[m] = spec.pulse_spectrum[m] * rot;
    rot *= step;
  }
}

inline Eigen::VectorXcd contribution_vector(double delay, const SignalSpec& spec) {
  Eigen::VectorXcd out(spec.sample_count);
  contribution_into(delay, spec, out);
  return out;
}

/// Path amplitude model: per-interaction reflection magnitude, free-space
/// decay, carrier phase rotation, and an extra link gain for scaling
/// scenarios to a target SNR.
struct AmplitudeModel {
  double pa_magnitude = 1.0;
  double va_magnitude = 0.7;
  double carrier_freq = 6.0e9;
  double gain = 1.0;

  std::complex<double> path_amplitude(FeatureKind kind, double distance, double phase) const {
    const double magnitude = (kind == FeatureKind::Pa) ? pa_magnitude : va_magnitude;
    const double free_space =
        kSpeedOfLight / (4.0 * std::numbers::pi * carrier_freq * distance);
    const double carrier_phase =
        -2.0 * std::numbers::pi * carrier_freq * distance / kSpeedOfLight;
    return std::polar(gain * magnitude * free_space, carrier_phase + phase);
  }
};

/// Synthesizes one received snapshot: the superposition of all ground-truth
/// paths plus circular complex Gaussian noise with per-element variance
/// noise_var. Each path gets a fresh uniform phase. noise_var == 0 is allowed
/// for tests.
inline Eigen::VectorXcd synthesize_received(const PaFeatures& paths, const SignalSpec& spec,
                                            const AmplitudeModel& amp, double noise_var,
                                            Rng& rng) {
  if (noise_var < 0.0) throw std::invalid_argument("synthesize_received: negative noise_var");
  Eigen::VectorXcd z = Eigen::VectorXcd::Zero(spec.sample_count);
  Eigen::VectorXcd h(spec.sample_count);
  for (const Feature& path : paths) {
    if (!(path.path_length > 0.0) || path.path_length >= spec.max_distance) {
      throw std::invalid_argument(
          "synthesize_received: path length outside (0, max_distance), aliasing");
    }
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const std::complex<double> rho = amp.path_amplitude(path.kind, path.path_length, phase);
    contribution_into(path.path_length / kSpeedOfLight, spec, h);
    z += rho * h;
  }
  if (noise_var > 0.0) {
    const double sigma = std::sqrt(noise_var / 2.0);
    for (int m = 0; m < spec.sample_count; ++m) {
      z[m] += std::complex<double>(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
    }
  }
  return z;
}

/// Magnitude of the matched-filter output on the delay grid tau_m = (m-1) *
/// tau_step, m = 1..M.
inline Eigen::VectorXd matched_filter_spectrum(const Eigen::VectorXcd& z,
                                               const SignalSpec& spec) {
  Eigen::VectorXd out(spec.sample_count);
  Eigen::VectorXcd h(spec.sample_count);
  for (int m = 0; m < spec.sample_count; ++m) {
    contribution_into(m * spec.tau_step, spec, h);
    out[m] = std::abs(h.dot(z));
  }
  return out;
}

}  // namespace rfslam
