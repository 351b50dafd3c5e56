#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "xmdg/array_io.hpp"
#include "xmdg/digest.hpp"

namespace fs = std::filesystem;
using namespace xmdg;

namespace {

fs::path temp_file(const char* name) {
  auto p = fs::temp_directory_path() / "xmdg_array_io_tests";
  fs::create_directories(p);
  return p / name;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("round trip is bit-exact") {
  Array a({3, 5, 2});
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<float> dist(-1e6f, 1e6f);
  for (auto& v : a.data) v = dist(rng);
  a.data[0] = 0.0f;
  a.data[1] = -0.0f;
  a.data[2] = 1e-38f;

  const auto path = temp_file("roundtrip.xmdg");
  save_array(a, path.string());
  Array b = load_array(path.string());

  CHECK(b.dims == a.dims);
  REQUIRE(b.data.size() == a.data.size());
  CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

TEST_CASE("saved header layout: magic, version, rank, dims, dtype tag") {
  Array a({2, 3});
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = static_cast<float>(i);
  const auto path = temp_file("header.xmdg");
  save_array(a, path.string());

  const std::string bytes = read_bytes(path);
  REQUIRE(bytes.size() == 4 + 4 + 4 + 2 * 4 + 4 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "XMDG");
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  CHECK(u32_at(4) == kArrayFormatVersion);
  CHECK(u32_at(8) == 2);       // rank
  CHECK(u32_at(12) == 2);      // dim 0
  CHECK(u32_at(16) == 3);      // dim 1
  CHECK(u32_at(20) == kDtypeF32);
  float first;
  std::memcpy(&first, bytes.data() + 24, 4);
  CHECK(first == 0.0f);
}

TEST_CASE("identical content yields identical files") {
  Array a({4, 4});
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = 0.25f * static_cast<float>(i);
  const auto p1 = temp_file("same1.xmdg");
  const auto p2 = temp_file("same2.xmdg");
  save_array(a, p1.string());
  save_array(a, p2.string());
  CHECK(sha256_hex(read_bytes(p1)) == sha256_hex(read_bytes(p2)));
}

TEST_CASE("rank-1 and empty arrays survive the round trip") {
  Array one({7});
  for (std::size_t i = 0; i < 7; ++i) one.data[i] = static_cast<float>(i) - 3.0f;
  const auto p = temp_file("rank1.xmdg");
  save_array(one, p.string());
  CHECK(load_array(p.string()).data == one.data);

  Array empty({0});
  const auto pe = temp_file("empty.xmdg");
  save_array(empty, pe.string());
  Array back = load_array(pe.string());
  CHECK(back.dims == std::vector<std::uint32_t>{0});
  CHECK(back.data.empty());
}

TEST_CASE("corrupt or missing input is rejected") {
  CHECK_THROWS_AS(load_array("/nonexistent/path/file.xmdg"), io_error);

  const auto p = temp_file("corrupt.xmdg");
  SUBCASE("bad magic") {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE" << std::string(32, '\0');
    out.close();
    CHECK_THROWS_AS(load_array(p.string()), io_error);
  }
  SUBCASE("truncated payload") {
    Array a({4, 4});
    save_array(a, p.string());
    fs::resize_file(p, fs::file_size(p) - 8);
    CHECK_THROWS_AS(load_array(p.string()), io_error);
  }
  SUBCASE("trailing garbage") {
    Array a({2, 2});
    save_array(a, p.string());
    std::ofstream out(p, std::ios::binary | std::ios::app);
    out << "xx";
    out.close();
    CHECK_THROWS_AS(load_array(p.string()), io_error);
  }
}
