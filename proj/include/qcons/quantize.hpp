#pragma once

// Uniform mid-tread quantization with countable or finite alphabet, and
// seeded dither generation uniform on [-step/2, step/2).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

namespace qcons {

// q(y) = k*step with (k-1/2)*step <= y < (k+1/2)*step.
inline double quantize(double y, double step) {
  if (step <= 0.0) throw std::invalid_argument("quantize: step must be positive");
  if (!std::isfinite(y)) throw std::invalid_argument("quantize: non-finite input");
  const double scaled = y / step;
  // Beyond integer-exact double range the level index is ill-defined.
  if (std::abs(scaled) >= 0x1.0p53)
    throw std::domain_error("quantize: |y|/step beyond integer-exact range");
  return std::floor(scaled + 0.5) * step;
}

struct QuantizerSpec {
  double step = 1.0;
  // Finite alphabet {l*step : |l| <= levels_p} when set; unbounded otherwise.
  std::optional<long long> levels_p;

  static QuantizerSpec unbounded(double step) { return {step, std::nullopt}; }
  static QuantizerSpec finite(double step, long long p) {
    if (p < 1) throw std::invalid_argument("QuantizerSpec: p must be >= 1");
    return {step, p};
  }
  double saturation_threshold() const {
    return levels_p ? (static_cast<double>(*levels_p) + 0.5) * step
                    : std::numeric_limits<double>::infinity();
  }
};

/// Seeded stream of i.i.d. dither samples uniform on [-step/2, step/2).
class DitherSource {
 public:
  DitherSource(std::uint64_t seed, double step) : rng_(seed), step_(step) {
    if (step <= 0.0) throw std::invalid_argument("DitherSource: step must be positive");
  }

  double step() const { return step_; }

  double next() { return next_with(step_); }

  /// Same stream, different scale (time-varying quantization step).
  double next_with(double step) {
    // (u - 0.5) is exact; the product may round onto +step/2, clamp back.
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    double v = (u - 0.5) * step;
    const double half = 0.5 * step;
    if (v >= half) v = std::nextafter(half, 0.0);
    return v;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  double step_;
};

/// Quantize y + nu; nullopt signals saturation of a finite quantizer.
inline std::optional<double> dithered_quantize(double y, double nu, const QuantizerSpec& spec) {
  const double half = 0.5 * spec.step;
  if (nu < -half || nu >= half)
    throw std::invalid_argument("dithered_quantize: dither outside [-step/2, step/2)");
  const double input = y + nu;
  if (std::abs(input) >= spec.saturation_threshold()) return std::nullopt;
  return quantize(input, spec.step);
}

}  // namespace qcons
