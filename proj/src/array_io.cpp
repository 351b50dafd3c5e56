#include "xmdg/array_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

namespace xmdg {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) {
  if (std::fwrite(&v, 4, 1, f) != 1) throw io_error("short write");
}

std::uint32_t read_u32(std::FILE* f) {
  std::uint32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw io_error("short read");
  return v;
}

}  // namespace

void save_array(const Array& a, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw io_error("cannot open for write: " + path);
  if (std::fwrite("XMDG", 1, 4, f.get()) != 4) throw io_error("short write");
  write_u32(f.get(), kArrayFormatVersion);
  write_u32(f.get(), a.rank());
  for (auto d : a.dims) write_u32(f.get(), d);
  write_u32(f.get(), kDtypeF32);
  if (!a.data.empty() &&
      std::fwrite(a.data.data(), 4, a.data.size(), f.get()) != a.data.size())
    throw io_error("short write: " + path);
}

Array load_array(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw io_error("cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "XMDG", 4) != 0)
    throw io_error("bad magic in " + path);
  std::uint32_t version = read_u32(f.get());
  if (version != kArrayFormatVersion)
    throw io_error("unsupported container version " + std::to_string(version));
  std::uint32_t rank = read_u32(f.get());
  if (rank > 8) throw io_error("implausible rank in " + path);
  Array a;
  a.dims.resize(rank);
  std::size_t n = 1;
  for (auto& d : a.dims) {
    d = read_u32(f.get());
    n *= d;
  }
  if (read_u32(f.get()) != kDtypeF32) throw io_error("unsupported dtype in " + path);
  a.data.resize(n);
  if (n && std::fread(a.data.data(), 4, n, f.get()) != n)
    throw io_error("truncated payload in " + path);
  char extra;
  if (std::fread(&extra, 1, 1, f.get()) == 1)
    throw io_error("trailing bytes after payload in " + path);
  return a;
}

}  // namespace xmdg
