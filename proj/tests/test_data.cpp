#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "acs/data.hpp"
#include "acs/errors.hpp"
#include "acs/rng.hpp"

using namespace acs;

namespace {

double mean_abs_diff(const RealImage& a, const RealImage& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(raw[i]);  // host is little-endian
}

}  // namespace

TEST_CASE("counter rng basics") {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CounterRng u(7);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = u.uniform();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
    CHECK(u.below(13) < 13);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(mean / 20000 == doctest::Approx(0.5).epsilon(0.02));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("phantom generation is deterministic") {
  const auto a = generate_phantom(11, 64, 3);
  CHECK(a == generate_phantom(11, 64, 3));
  CHECK_FALSE(a == generate_phantom(12, 64, 3));
  CHECK(a.size == 64);
  CHECK(a.seed == 11);
  REQUIRE(a.num_slices() == 3);
  CHECK(a.slices[0].height() == 64);
}

TEST_CASE("phantom ranges") {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (std::size_t size : {64, 128}) {
      const auto v = generate_phantom(seed, size, 2);
      double peak = 0.0;
      for (std::size_t z = 0; z < 2; ++z) {
        for (double m : v.slices[z].values()) {
          CHECK(m >= 0.0);
          CHECK(m <= 1.0);
          peak = std::max(peak, m);
        }
        for (double p : v.phase_maps[z].values()) CHECK(std::abs(p) <= std::numbers::pi / 4 + 1e-15);
      }
      CHECK(peak > 0.0);
    }
}

TEST_CASE("phantom examples and errors") {
  const auto empty = generate_phantom(3, 64, 2, 0);
  for (const auto& s : empty.slices)
    for (double m : s.values()) CHECK(m == 0.0);
  CHECK_THROWS_AS(generate_phantom(1, 100, 1), ParameterError);
  CHECK_THROWS_AS(generate_phantom(1, 64, 0), ParameterError);

  const auto v = generate_phantom(5, 64, 2);
  const auto c = v.complex_slice(1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(c[i]) == doctest::Approx(v.slices[1][i]).epsilon(1e-14));
    if (v.slices[1][i] > 1e-3) CHECK(std::arg(c[i]) == doctest::Approx(v.phase_maps[1][i]).epsilon(1e-12));
  }
}

TEST_CASE("neighboring slices are more alike than distant ones") {
  double adjacent = 0.0, ends = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = generate_phantom(seed, 64, 6);
    double a = 0.0;
    for (std::size_t z = 0; z + 1 < 6; ++z) a += mean_abs_diff(v.slices[z], v.slices[z + 1]);
    adjacent += a / 5.0;
    ends += mean_abs_diff(v.slices[0], v.slices[5]);
  }
  CHECK(adjacent < ends);
}

TEST_CASE("dataset generation derives per-volume seeds") {
  const auto set = generate_dataset(9, 3, 64, 2);
  REQUIRE(set.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(set[i] == generate_phantom(derive_seed(9, i), 64, 2));
}

TEST_CASE("dataset byte layout") {
  PhantomVolume v;
  v.seed = 0x0102030405060708ULL;
  v.size = 2;
  v.slices = {RealImage(2, 2, {0.0, 0.25, 0.5, 1.0})};
  v.phase_maps = {RealImage(2, 2, {-0.5, 0.0, 0.125, 0.75})};
  std::vector<std::uint8_t> want = {'A', 'C', 'S', 'N', 'D', 0};
  append_le<std::uint16_t>(want, 1);
  append_le<std::uint32_t>(want, 1);
  append_le<std::uint64_t>(want, v.seed);
  append_le<std::uint32_t>(want, 2);
  append_le<std::uint32_t>(want, 1);
  for (double d : v.slices[0].values()) append_le(want, d);
  for (double d : v.phase_maps[0].values()) append_le(want, d);
  CHECK(encode_dataset({v}) == want);
  const auto back = decode_dataset(want);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == v);
}

TEST_CASE("dataset round trip through a file") {
  const auto set = generate_dataset(4, 2, 64, 3);
  const auto path = std::filesystem::temp_directory_path() / "acs_test_dataset.acsnd";
  save_dataset(path.string(), set);
  const auto back = load_dataset(path.string());
  CHECK(back == set);
  CHECK(encode_dataset(back) == encode_dataset(set));
  std::filesystem::remove(path);
}

TEST_CASE("dataset format errors") {
  const auto bytes = encode_dataset(generate_dataset(1, 1, 64, 1));

  auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 100);
  try {
    decode_dataset(cut);
    FAIL("truncated dataset accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() <= 100);
    CHECK(e.offset() >= 28);
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  auto bad = bytes;
  bad[6] += 1;
  try {
    decode_dataset(bad);
    FAIL("future version accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
    CHECK(e.offset() == 6);
  }

  bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_dataset(bad), FormatError);
  CHECK_THROWS_AS(decode_dataset({}), FormatError);

  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_dataset(bad), FormatError);
}
