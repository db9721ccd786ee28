#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "neurozip/text.hpp"
#include "support.hpp"

using namespace neurozip;

TEST_CASE("format_double round-trips every finite double") {
  nzt::property(71, 2000, [](std::mt19937_64& rng) {
    double x = 0.0;
    const std::uint64_t bits = rng();
    std::memcpy(&x, &bits, sizeof x);
    if (!std::isfinite(x)) return;
    double back = 0.0;
    REQUIRE(text::parse_double(text::format_double(x), back));
    CHECK(std::memcmp(&back, &x, sizeof x) == 0);
  });
  CHECK(text::format_double(0.1) == "0.1");
  CHECK(text::format_double(1.0) == "1");
  CHECK(text::format_double(-0.0) == "-0");
}

TEST_CASE("number parsing is strict") {
  double x = 0.0;
  CHECK(text::parse_double(" 2.5 ", x));
  CHECK(x == 2.5);
  CHECK(text::parse_double("1e-3", x));
  CHECK_FALSE(text::parse_double("2.5x", x));
  CHECK_FALSE(text::parse_double("", x));
  CHECK_FALSE(text::parse_double("one", x));
  std::uint64_t n = 0;
  CHECK(text::parse_uint("42", n));
  CHECK(n == 42);
  CHECK_FALSE(text::parse_uint("-1", n));
  CHECK_FALSE(text::parse_uint("4.2", n));
}

TEST_CASE("split and trim") {
  const auto parts = text::split("a,,b", ',');
  REQUIRE(parts.size() == 3);
  CHECK(parts[1].empty());
  CHECK(text::trim("  x \t\r") == "x");
}

TEST_CASE("FNV-1a reference values") {
  CHECK(text::fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(text::fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(text::fnv1a("foobar") == 0x85944171f73967e8ull);
  CHECK(text::hex64(0xabcull) == "0000000000000abc");
}
