#pragma once

#include <cstdint>

#include "xmdg/array_io.hpp"
#include "xmdg/signal.hpp"

namespace xmdg::signal {

enum class ImageScale { unit, normalized };  // [0,1] or [-1,1]

struct TextureImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major
  ImageScale scale = ImageScale::unit;

  TextureImage() = default;
  TextureImage(int h, int w, ImageScale s = ImageScale::unit)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0), scale(s) {}

  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

struct AugmentParams {
  bool flip_h = false;
  bool flip_v = false;
  double brightness_delta = 0.0;
  double contrast_factor = 1.0;
  int crop_row = 0;
  int crop_col = 0;
  int crop_height = 0;  // 0 means no crop
  int crop_width = 0;
};

struct AugmentLimits {
  double brightness_max = 0.2;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
};

// Draw flip/brightness/contrast/crop-offset parameters from the seed.
AugmentParams draw_augment_params(int src_height, int src_width, int crop_size,
                                  std::uint64_t seed, const AugmentLimits& limits = {});

// Flips, then contrast about the image mean, then brightness, then crop;
// the result is clamped to the declared scale range. Returns the clamp count
// through `clamped` when given.
TextureImage augment_image(const TextureImage& img, const AugmentParams& params,
                           std::size_t* clamped = nullptr);

TextureImage add_gaussian_noise(const TextureImage& img, double sigma, std::uint64_t seed);

Array image_to_array(const TextureImage& img);
TextureImage image_from_array(const Array& a, ImageScale scale);

}  // namespace xmdg::signal
