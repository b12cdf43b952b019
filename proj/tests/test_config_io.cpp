#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "nirstext/config.hpp"
#include "nirstext/errors.hpp"
#include "nirstext/fileio.hpp"
#include "nirstext/mat.hpp"

using nirstext::Config;
using nirstext::ConfigError;
using nirstext::DataError;
using nirstext::Mat;
namespace io = nirstext::io;
namespace fs = std::filesystem;

TEST_SUITE("util") {

TEST_CASE("f32 round trip preserves float32-representable data") {
  const auto dir = fs::temp_directory_path() / "nirstext_io_test";
  fs::create_directories(dir);
  Mat m(3, 5);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.v[i] = static_cast<double>(static_cast<float>(0.1 * static_cast<double>(i) - 0.7));
  const auto p = dir / "x.f32";
  io::write_f32(p, m);
  const Mat r = io::read_f32(p, 3, 5);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(r.v[i] == m.v[i]);

  CHECK_THROWS_AS(io::read_f32(p, 4, 5), DataError);  // wrong declared shape
  fs::remove_all(dir);
}

TEST_CASE("config parsing, overrides, typed getters") {
  const auto cfg0 = Config::from_string(
      "# comment\n"
      "seed = 42\n"
      "snr=2.5\n"
      "dataset = out/ds1   # trailing comment\n"
      "verbose = true\n");
  CHECK(cfg0.get_u64("seed", 0) == 42);
  CHECK(cfg0.get_double("snr", 0.0) == doctest::Approx(2.5));
  CHECK(cfg0.get_str("dataset", "") == "out/ds1");
  CHECK(cfg0.get_bool("verbose", false));
  CHECK(cfg0.get_int("missing", -7) == -7);
  CHECK_THROWS_AS(cfg0.require_str("missing"), ConfigError);

  auto cfg = cfg0;
  cfg.set("seed", "7");
  CHECK(cfg.get_u64("seed", 0) == 7);

  CHECK_THROWS_AS(Config::from_string("novalue\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("k = x\n").get_int("k", 0), ConfigError);
}

TEST_CASE("config hash is stable and order-insensitive") {
  const auto a = Config::from_string("a=1\nb=2\n");
  const auto b = Config::from_string("b=2\na=1\n");
  CHECK(a.hash_hex() == b.hash_hex());
  CHECK(a.hash_hex().size() == 16);
  auto c = a;
  c.set("a", "3");
  CHECK(c.hash_hex() != a.hash_hex());
}

TEST_CASE("config rejects unknown keys against a registry") {
  const auto cfg = Config::from_string("seed=1\nbogus_key=2\n");
  CHECK_THROWS_WITH_AS(cfg.check_known({"seed"}),
                       "unknown config key 'bogus_key'", ConfigError);
}

TEST_CASE("fmt_double round trips cleanly") {
  CHECK(io::fmt_double(0.25) == "0.25");
  CHECK(io::fmt_double(-3.0) == "-3");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(io::fmt_double(x)) == x);
}

TEST_CASE("row join and split") {
  CHECK(io::join_row({"a", "b", "c"}, ',') == "a,b,c");
  CHECK(io::split_row("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
  CHECK_THROWS_AS(io::join_row({"a,b"}, ','), DataError);
  CHECK(io::split_lines("x\r\ny\nz") == std::vector<std::string>{"x", "y", "z"});
}

}  // TEST_SUITE
