#include "xmdg/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>

namespace xmdg::signal {

namespace {

// FFTW planning is not thread-safe; execution on private buffers is.
std::mutex g_fftw_plan_mutex;

std::vector<double> hamming_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / n);  // periodic
  return w;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw validation_error(std::string("non-finite value in ") + what);
}

// Reflect-pad (no edge repetition) by half on both sides.
std::vector<double> reflect_pad(const std::vector<double>& x, int half) {
  const int n = static_cast<int>(x.size());
  std::vector<double> padded(n + 2 * half);
  auto mirror = [&](int i) {
    // reflect index into [0, n-1]
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
  };
  for (int i = 0; i < n + 2 * half; ++i) padded[i] = x[mirror(i - half)];
  return padded;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n), in_(n), out_(n / 2 + 1) {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    plan_ = fftw_plan_dft_r2c_1d(n, in_.data(),
                                 reinterpret_cast<fftw_complex*>(out_.data()),
                                 FFTW_ESTIMATE);
    iplan_ = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(out_.data()),
                                  in_.data(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(plan_);
    fftw_destroy_plan(iplan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  // in: n_ reals -> n_/2+1 complex bins
  const std::vector<std::complex<double>>& forward(const double* frame) {
    std::copy(frame, frame + n_, in_.begin());
    fftw_execute_dft_r2c(plan_, in_.data(), reinterpret_cast<fftw_complex*>(out_.data()));
    return out_;
  }
  // bins -> n_ reals (unnormalized; caller divides by n_)
  const std::vector<double>& inverse(const std::vector<std::complex<double>>& bins) {
    out_ = bins;  // c2r destroys its input
    fftw_execute_dft_c2r(iplan_, reinterpret_cast<fftw_complex*>(out_.data()), in_.data());
    return in_;
  }

 private:
  int n_;
  std::vector<double> in_;
  std::vector<std::complex<double>> out_;
  fftw_plan plan_;
  fftw_plan iplan_;
};

struct ComplexStft {
  int n_bins = 0;
  int n_frames = 0;
  std::vector<std::complex<double>> values;  // [n_bins x n_frames]
  std::complex<double>& at(int b, int t) {
    return values[static_cast<std::size_t>(b) * n_frames + t];
  }
  std::complex<double> at(int b, int t) const {
    return values[static_cast<std::size_t>(b) * n_frames + t];
  }
};

ComplexStft stft_complex(const std::vector<double>& x, const StftConfig& cfg) {
  const int win = cfg.window_len;
  const int hop = cfg.hop;
  const int half = win / 2;
  const std::vector<double> padded = cfg.centered ? reflect_pad(x, half) : x;
  const int n_frames = cfg.centered
                           ? 1 + static_cast<int>(x.size()) / hop
                           : 1 + (static_cast<int>(x.size()) - win) / hop;
  const auto window = hamming_window(win);

  ComplexStft out;
  out.n_bins = cfg.n_bins();
  out.n_frames = n_frames;
  out.values.resize(static_cast<std::size_t>(out.n_bins) * n_frames);

  RealFft fft(win);
  std::vector<double> frame(win);
  for (int t = 0; t < n_frames; ++t) {
    const double* src = padded.data() + static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < win; ++i) frame[i] = src[i] * window[i];
    const auto& bins = fft.forward(frame.data());
    for (int b = 0; b < out.n_bins; ++b) out.at(b, t) = bins[b];
  }
  return out;
}

// Weighted overlap-add inverse of a centered STFT; output has (n_frames-1)*hop samples.
std::vector<double> istft(const ComplexStft& spec, const StftConfig& cfg) {
  const int win = cfg.window_len;
  const int hop = cfg.hop;
  const int half = win / 2;
  const int padded_len = (spec.n_frames - 1) * hop + win;
  const auto window = hamming_window(win);

  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);
  RealFft fft(win);
  std::vector<std::complex<double>> bins(spec.n_bins);
  for (int t = 0; t < spec.n_frames; ++t) {
    for (int b = 0; b < spec.n_bins; ++b) bins[b] = spec.at(b, t);
    const auto& frame = fft.inverse(bins);
    const std::size_t off = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < win; ++i) {
      acc[off + i] += window[i] * frame[i] / win;
      norm[off + i] += window[i] * window[i];
    }
  }
  const int out_len = (spec.n_frames - 1) * hop;
  std::vector<double> out(out_len);
  for (int i = 0; i < out_len; ++i) {
    const double w = norm[i + half];
    out[i] = w > 1e-12 ? acc[i + half] / w : 0.0;
  }
  return out;
}

}  // namespace

void StftConfig::validate() const {
  if (window_len <= 0 || hop <= 0) throw validation_error("window_len and hop must be positive");
  if (hop > window_len) throw validation_error("hop must not exceed window_len");
}

Spectrogram compute_spectrogram(const AccelerationTrace& trace, const StftConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(trace.samples.size()) < cfg.window_len)
    throw precondition_error("trace shorter than the analysis window");
  check_finite(trace.samples, "trace");

  const ComplexStft c = stft_complex(trace.samples, cfg);
  Spectrogram out(c.n_bins, c.n_frames, SpecScale::amplitude);
  for (std::size_t i = 0; i < c.values.size(); ++i) out.values[i] = std::abs(c.values[i]);
  return out;
}

AccelerationTrace trim_and_crop(const AccelerationTrace& trace, double drop_seconds,
                                double keep_seconds) {
  if (drop_seconds < 0 || keep_seconds <= 0)
    throw validation_error("drop_seconds must be >= 0 and keep_seconds > 0");
  const auto begin = static_cast<std::size_t>(std::llround(drop_seconds * trace.sample_rate_hz));
  const auto count = static_cast<std::size_t>(std::llround(keep_seconds * trace.sample_rate_hz));
  if (begin + count > trace.samples.size())
    throw precondition_error("trace does not cover drop + keep duration");
  AccelerationTrace out;
  out.sample_rate_hz = trace.sample_rate_hz;
  out.samples.assign(trace.samples.begin() + begin, trace.samples.begin() + begin + count);
  return out;
}

Spectrogram log_scale(const Spectrogram& spec, double eps) {
  if (spec.scale != SpecScale::amplitude)
    throw state_error("log_scale expects an amplitude spectrogram");
  Spectrogram out = spec;
  out.scale = SpecScale::log;
  for (auto& v : out.values) v = std::log(v + eps);
  return out;
}

Spectrogram unlog_scale(const Spectrogram& spec, double eps) {
  if (spec.scale != SpecScale::log)
    throw state_error("unlog_scale expects a log spectrogram");
  Spectrogram out = spec;
  out.scale = SpecScale::amplitude;
  for (auto& v : out.values) v = std::max(0.0, std::exp(v) - eps);
  return out;
}

Spectrogram crop_time(const Spectrogram& spec, int width, std::uint64_t seed) {
  if (width <= 0) throw validation_error("crop width must be positive");
  if (width > spec.n_frames) throw precondition_error("crop width exceeds frame count");
  const int rows = (spec.n_bins == width + 1) ? width : spec.n_bins;  // drop Nyquist row

  std::mt19937_64 rng(seed);
  const int slack = spec.n_frames - width;
  const int offset = slack > 0
      ? static_cast<int>(std::uniform_int_distribution<int>(0, slack)(rng)) : 0;

  Spectrogram out(rows, width, spec.scale);
  for (int b = 0; b < rows; ++b)
    for (int t = 0; t < width; ++t) out.at(b, t) = spec.at(b, t + offset);
  return out;
}

GriffinLimResult invert_spectrogram(const Spectrogram& spec, const StftConfig& cfg,
                                    int n_iters, std::uint64_t seed) {
  cfg.validate();
  if (spec.scale != SpecScale::amplitude)
    throw state_error("invert_spectrogram expects an amplitude spectrogram");
  if (n_iters < 1) throw precondition_error("n_iters must be >= 1");

  const int full_bins = cfg.n_bins();
  if (spec.n_bins != full_bins && spec.n_bins != full_bins - 1)
    throw precondition_error("spectrogram bin count does not match the STFT config");

  // Target magnitudes, with a zero Nyquist row reinserted if it was cropped away.
  Spectrogram target(full_bins, spec.n_frames, SpecScale::amplitude);
  for (int b = 0; b < spec.n_bins; ++b)
    for (int t = 0; t < spec.n_frames; ++t) target.at(b, t) = spec.at(b, t);

  double target_norm = 0.0;
  for (double v : target.values) target_norm += v * v;
  target_norm = std::sqrt(target_norm);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(-std::numbers::pi, std::numbers::pi);
  ComplexStft current;
  current.n_bins = full_bins;
  current.n_frames = spec.n_frames;
  current.values.resize(target.values.size());
  for (std::size_t i = 0; i < current.values.size(); ++i)
    current.values[i] = std::polar(target.values[i], phase_dist(rng));

  GriffinLimResult result;
  result.trace.sample_rate_hz = 10000;
  StftConfig analysis = cfg;
  analysis.centered = true;

  // Accelerated alternating projection: each projected estimate is
  // extrapolated against the previous one. A step that would worsen
  // consistency falls back to the plain projection from the last projected
  // estimate, which is non-increasing by the classic convergence argument, so
  // the reported consistency curve is monotone.
  constexpr double kMomentum = 0.99;
  auto consistency_of = [&](const ComplexStft& reanalysis) {
    double err = 0.0;
    for (std::size_t i = 0; i < reanalysis.values.size(); ++i) {
      const double d = std::abs(reanalysis.values[i]) - target.values[i];
      err += d * d;
    }
    return target_norm > 0 ? std::sqrt(err) / target_norm : 0.0;
  };
  ComplexStft prev_projected = current;
  double prev_err = std::numeric_limits<double>::infinity();

  std::vector<double> x;
  for (int it = 0; it < n_iters; ++it) {
    x = istft(current, analysis);
    ComplexStft reanalysis = stft_complex(x, analysis);
    double err = consistency_of(reanalysis);
    if (err > prev_err) {
      current = prev_projected;
      x = istft(current, analysis);
      reanalysis = stft_complex(x, analysis);
      err = consistency_of(reanalysis);
    }
    result.consistency.push_back(std::min(err, prev_err));
    prev_err = result.consistency.back();

    // Keep the new phase, restore the target magnitude.
    ComplexStft projected = reanalysis;
    for (std::size_t i = 0; i < projected.values.size(); ++i) {
      const std::complex<double> v = reanalysis.values[i];
      const double mag = std::abs(v);
      projected.values[i] = mag > 0 ? target.values[i] * (v / mag)
                                    : std::complex<double>(target.values[i], 0.0);
    }
    for (std::size_t i = 0; i < current.values.size(); ++i)
      current.values[i] =
          projected.values[i] + kMomentum * (projected.values[i] - prev_projected.values[i]);
    prev_projected = std::move(projected);
  }
  result.trace.samples = std::move(x);
  return result;
}

std::vector<double> normalize_signed(const std::vector<double>& data, double lo, double hi,
                                     std::size_t* clamped) {
  if (hi <= lo) throw validation_error("normalize_signed requires hi > lo");
  std::size_t n_clamped = 0;
  std::vector<double> out(data.size());
  const double scale = 2.0 / (hi - lo);
  for (std::size_t i = 0; i < data.size(); ++i) {
    double x = data[i];
    if (x < lo || x > hi) {
      ++n_clamped;
      x = std::clamp(x, lo, hi);
    }
    out[i] = (x - lo) * scale - 1.0;
  }
  if (clamped) *clamped = n_clamped;
  return out;
}

std::vector<double> denormalize_signed(const std::vector<double>& data, double lo, double hi) {
  if (hi <= lo) throw validation_error("denormalize_signed requires hi > lo");
  std::vector<double> out(data.size());
  const double scale = (hi - lo) / 2.0;
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = (data[i] + 1.0) * scale + lo;
  return out;
}

Spectrogram spec_augment(const Spectrogram& spec, int n_time_masks, int n_freq_masks,
                         int max_width, std::uint64_t seed) {
  if (n_time_masks < 0 || n_freq_masks < 0 || max_width < 0)
    throw validation_error("mask counts and width must be non-negative");
  if (max_width > 0 && (max_width >= spec.n_frames || max_width >= spec.n_bins))
    throw precondition_error("mask width must be smaller than both axes");

  Spectrogram out = spec;
  if (max_width == 0 || (n_time_masks == 0 && n_freq_masks == 0)) return out;

  double mean = 0.0;
  for (double v : spec.values) mean += v;
  mean /= static_cast<double>(spec.values.size());

  std::mt19937_64 rng(seed);
  auto mask_columns = [&](int width, int start) {
    for (int b = 0; b < out.n_bins; ++b)
      for (int t = start; t < start + width; ++t) out.at(b, t) = mean;
  };
  auto mask_rows = [&](int width, int start) {
    for (int b = start; b < start + width; ++b)
      for (int t = 0; t < out.n_frames; ++t) out.at(b, t) = mean;
  };
  for (int k = 0; k < n_time_masks; ++k) {
    const int w = std::uniform_int_distribution<int>(1, max_width)(rng);
    const int s = std::uniform_int_distribution<int>(0, out.n_frames - w)(rng);
    mask_columns(w, s);
  }
  for (int k = 0; k < n_freq_masks; ++k) {
    const int w = std::uniform_int_distribution<int>(1, max_width)(rng);
    const int s = std::uniform_int_distribution<int>(0, out.n_bins - w)(rng);
    mask_rows(w, s);
  }
  return out;
}

Array spectrogram_to_array(const Spectrogram& spec) {
  Array a({static_cast<std::uint32_t>(spec.n_bins), static_cast<std::uint32_t>(spec.n_frames)});
  for (std::size_t i = 0; i < spec.values.size(); ++i)
    a.data[i] = static_cast<float>(spec.values[i]);
  return a;
}

Spectrogram spectrogram_from_array(const Array& a, SpecScale scale) {
  if (a.rank() != 2) throw validation_error("spectrogram container must be rank 2");
  Spectrogram s(static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), scale);
  for (std::size_t i = 0; i < a.data.size(); ++i) s.values[i] = a.data[i];
  return s;
}

Array trace_to_array(const AccelerationTrace& trace) {
  Array a({static_cast<std::uint32_t>(trace.samples.size())});
  for (std::size_t i = 0; i < trace.samples.size(); ++i)
    a.data[i] = static_cast<float>(trace.samples[i]);
  return a;
}

AccelerationTrace trace_from_array(const Array& a) {
  if (a.rank() != 1) throw validation_error("trace container must be rank 1");
  AccelerationTrace t;
  t.samples.assign(a.data.begin(), a.data.end());
  return t;
}

}  // namespace xmdg::signal
