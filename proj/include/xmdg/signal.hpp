#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "xmdg/array_io.hpp"

namespace xmdg::signal {

struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct state_error : std::logic_error {
  using std::logic_error::logic_error;
};

struct AccelerationTrace {
  std::vector<double> samples;
  int sample_rate_hz = 10000;
};

enum class WindowKind { hamming };
enum class SpecScale { amplitude, log, normalized };

struct StftConfig {
  int window_len = 512;
  int hop = 128;
  WindowKind window_kind = WindowKind::hamming;
  bool centered = true;

  int n_bins() const { return window_len / 2 + 1; }
  void validate() const;
};

// Row-major [n_bins x n_frames]; row 0 is DC, row n_bins-1 is Nyquist.
struct Spectrogram {
  int n_bins = 0;
  int n_frames = 0;
  std::vector<double> values;
  SpecScale scale = SpecScale::amplitude;

  Spectrogram() = default;
  Spectrogram(int bins, int frames, SpecScale s = SpecScale::amplitude)
      : n_bins(bins), n_frames(frames),
        values(static_cast<std::size_t>(bins) * frames, 0.0), scale(s) {}

  double& at(int b, int t) { return values[static_cast<std::size_t>(b) * n_frames + t]; }
  double at(int b, int t) const { return values[static_cast<std::size_t>(b) * n_frames + t]; }
};

inline constexpr double kLogEps = 1e-6;

// Centered STFT magnitude: reflect-pads window_len/2 on both ends, so
// n_frames = 1 + floor(len / hop). Periodic Hamming window.
Spectrogram compute_spectrogram(const AccelerationTrace& trace, const StftConfig& cfg);

AccelerationTrace trim_and_crop(const AccelerationTrace& trace, double drop_seconds,
                                double keep_seconds);

Spectrogram log_scale(const Spectrogram& spec, double eps = kLogEps);
Spectrogram unlog_scale(const Spectrogram& spec, double eps = kLogEps);

// Contiguous random column slice of `width` frames. A (width+1)-row input
// additionally loses its Nyquist row so the result is square.
Spectrogram crop_time(const Spectrogram& spec, int width, std::uint64_t seed);

struct GriffinLimResult {
  AccelerationTrace trace;
  // Relative consistency error |||STFT(x_k)| - A|| / ||A|| after each iteration.
  std::vector<double> consistency;
};

// Griffin-Lim phase reconstruction from an amplitude spectrogram. A spectrogram
// with window_len/2 rows is treated as Nyquist-dropped and gets a zero top row.
GriffinLimResult invert_spectrogram(const Spectrogram& spec, const StftConfig& cfg,
                                    int n_iters, std::uint64_t seed);

// Affine map lo -> -1, hi -> 1. Out-of-range inputs are clamped and counted.
std::vector<double> normalize_signed(const std::vector<double>& data, double lo, double hi,
                                     std::size_t* clamped = nullptr);
std::vector<double> denormalize_signed(const std::vector<double>& data, double lo, double hi);

// Classifier-training augmentation: masked stripes are set to the spectrogram mean.
Spectrogram spec_augment(const Spectrogram& spec, int n_time_masks, int n_freq_masks,
                         int max_width, std::uint64_t seed);

Array spectrogram_to_array(const Spectrogram& spec);
Spectrogram spectrogram_from_array(const Array& a, SpecScale scale);
Array trace_to_array(const AccelerationTrace& trace);
AccelerationTrace trace_from_array(const Array& a);

}  // namespace xmdg::signal
