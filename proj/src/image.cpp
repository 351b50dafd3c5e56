#include "xmdg/image.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace xmdg::signal {

namespace {

std::pair<double, double> scale_range(ImageScale s) {
  return s == ImageScale::unit ? std::pair{0.0, 1.0} : std::pair{-1.0, 1.0};
}

}  // namespace

AugmentParams draw_augment_params(int src_height, int src_width, int crop_size,
                                  std::uint64_t seed, const AugmentLimits& limits) {
  if (crop_size > src_height || crop_size > src_width)
    throw precondition_error("crop size exceeds source image");
  std::mt19937_64 rng(seed);
  AugmentParams p;
  p.flip_h = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  p.flip_v = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  p.brightness_delta = std::uniform_real_distribution<double>(
      -limits.brightness_max, limits.brightness_max)(rng);
  p.contrast_factor = std::uniform_real_distribution<double>(
      limits.contrast_min, limits.contrast_max)(rng);
  p.crop_height = crop_size;
  p.crop_width = crop_size;
  p.crop_row = std::uniform_int_distribution<int>(0, src_height - crop_size)(rng);
  p.crop_col = std::uniform_int_distribution<int>(0, src_width - crop_size)(rng);
  return p;
}

TextureImage augment_image(const TextureImage& img, const AugmentParams& params,
                           std::size_t* clamped) {
  const int crop_h = params.crop_height > 0 ? params.crop_height : img.height;
  const int crop_w = params.crop_width > 0 ? params.crop_width : img.width;
  if (params.crop_row < 0 || params.crop_col < 0 ||
      params.crop_row + crop_h > img.height || params.crop_col + crop_w > img.width)
    throw precondition_error("crop window does not fit inside the source image");

  double mean = 0.0;
  for (double v : img.pixels) mean += v;
  mean /= static_cast<double>(img.pixels.size());

  const auto [lo, hi] = scale_range(img.scale);
  std::size_t n_clamped = 0;
  TextureImage out(crop_h, crop_w, img.scale);
  for (int r = 0; r < crop_h; ++r) {
    for (int c = 0; c < crop_w; ++c) {
      int sr = params.crop_row + r;
      int sc = params.crop_col + c;
      if (params.flip_v) sr = img.height - 1 - sr;
      if (params.flip_h) sc = img.width - 1 - sc;
      double v = img.at(sr, sc);
      v = params.contrast_factor * (v - mean) + mean;
      v += params.brightness_delta;
      if (v < lo || v > hi) {
        ++n_clamped;
        v = std::clamp(v, lo, hi);
      }
      out.at(r, c) = v;
    }
  }
  if (clamped) *clamped = n_clamped;
  return out;
}

TextureImage add_gaussian_noise(const TextureImage& img, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw validation_error("sigma must be non-negative");
  if (sigma == 0) return img;
  const auto [lo, hi] = scale_range(img.scale);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  TextureImage out = img;
  for (auto& v : out.pixels) v = std::clamp(v + noise(rng), lo, hi);
  return out;
}

Array image_to_array(const TextureImage& img) {
  Array a({static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width)});
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    a.data[i] = static_cast<float>(img.pixels[i]);
  return a;
}

TextureImage image_from_array(const Array& a, ImageScale scale) {
  if (a.rank() != 2) throw validation_error("image container must be rank 2");
  TextureImage img(static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), scale);
  for (std::size_t i = 0; i < a.data.size(); ++i) img.pixels[i] = a.data[i];
  return img;
}

}  // namespace xmdg::signal
