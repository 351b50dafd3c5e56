#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmdg {

// N-dimensional float array with the on-disk container format:
// magic "XMDG" | version u32 | rank u32 | dims u32[rank] | dtype tag u32 | payload f32 LE row-major.
struct Array {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  Array() = default;
  Array(std::vector<std::uint32_t> d) : dims(std::move(d)) {
    std::size_t n = 1;
    for (auto v : dims) n *= v;
    data.resize(n, 0.0f);
  }

  std::size_t size() const { return data.size(); }
  std::uint32_t rank() const { return static_cast<std::uint32_t>(dims.size()); }
};

inline constexpr std::uint32_t kArrayFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 0x66333200;  // "f32\0"

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_array(const Array& a, const std::string& path);
Array load_array(const std::string& path);

}  // namespace xmdg
