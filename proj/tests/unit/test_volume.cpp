#include "doctest.h"

#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/volume.hpp"
#include "support.hpp"

#include "json.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

using namespace fbgan;
namespace fs = std::filesystem;

TEST_SUITE("volume_store") {
  TEST_CASE("2x4x4 zeros write a 128-byte payload and load back") {
    test::TempDir dir("vol");
    Volume v(2, 4, 4);
    save_volume(v, dir / "zeros");
    CHECK(fs::file_size(dir / "zeros.vol") == 128);
    const Volume back = load_volume(dir / "zeros");
    CHECK(back.shape == std::array<Eigen::Index, 3>{2, 4, 4});
    CHECK(back.identical(v));
  }

  TEST_CASE("sidecar records shape, spacing, modality, radius and version") {
    test::TempDir dir("vol");
    Volume v(3, 2, 5, 7.0f);
    v.spacing = {2.5, 0.75, 0.5};
    v.modality = Modality::CBCT;
    v.fov_radius_px = 1.5;
    save_volume(v, dir / "a");
    const auto j = nlohmann::json::parse(read_file(dir / "a.json"));
    CHECK(j.at("format") == "fbgan-vol/1");
    CHECK(j.at("shape") == nlohmann::json({3, 2, 5}));
    CHECK(j.at("spacing") == nlohmann::json({2.5, 0.75, 0.5}));
    CHECK(j.at("modality") == "CBCT");
    CHECK(j.at("fov_radius_px") == 1.5);
  }

  TEST_CASE("payload is little-endian binary32 in z,y,x order") {
    test::TempDir dir("vol");
    Volume v(2, 2, 3);
    for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i) - 2.5f;
    save_volume(v, dir / "ord");
    const std::string bytes = read_file(dir / "ord.vol");
    REQUIRE(bytes.size() == 48);
    for (Eigen::Index z = 0; z < 2; ++z) {
      for (Eigen::Index y = 0; y < 2; ++y) {
        for (Eigen::Index x = 0; x < 3; ++x) {
          const auto k = static_cast<std::size_t>(((z * 2 + y) * 3 + x) * 4);
          std::uint32_t u = 0;
          for (int b = 3; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(bytes[k + b]);
          float f;
          std::memcpy(&f, &u, 4);
          CHECK(f == v(z, y, x));
        }
      }
    }
  }

  TEST_CASE("round trip is bit exact over random shapes and values") {
    test::TempDir dir("vol");
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(1, 9);
    std::uniform_int_distribution<std::uint32_t> bits;
    for (int t = 0; t < 25; ++t) {
      Volume v(dim(rng), dim(rng), dim(rng));
      for (Eigen::Index i = 0; i < v.data.size(); ++i) {
        float f;
        do {
          const std::uint32_t u = bits(rng);
          std::memcpy(&f, &u, 4);
        } while (!std::isfinite(f));
        v.data[i] = f;
      }
      v.spacing = {0.1 * (t + 1), 1.0 / 3.0, 7.25};
      v.modality = static_cast<Modality>(t % 3);
      if (t % 2) v.fov_radius_px = 0.5 + t;
      save_volume(v, dir / "r");
      CHECK(load_volume(dir / "r").identical(v));
    }
  }

  TEST_CASE("either file name addresses the pair") {
    test::TempDir dir("vol");
    Volume v(1, 2, 2, 3.0f);
    save_volume(v, dir / "p");
    CHECK(load_volume(dir / "p.vol").identical(v));
    CHECK(load_volume(dir / "p.json").identical(v));
  }

  TEST_CASE("120-byte payload for a 2x4x4 sidecar is corruption") {
    test::TempDir dir("vol");
    save_volume(Volume(2, 4, 4), dir / "c");
    fs::resize_file(dir / "c.vol", 120);
    CHECK_THROWS_AS(load_volume(dir / "c"), CorruptionError);
  }

  TEST_CASE("every truncation and extension of the payload is rejected") {
    test::TempDir dir("vol");
    save_volume(Volume(2, 3, 2, 1.0f), dir / "f");
    const std::string good = read_file(dir / "f.vol");
    for (std::size_t n = 0; n < good.size() + 9; ++n) {
      if (n == good.size()) continue;
      std::string bad = good.substr(0, std::min(n, good.size()));
      bad.resize(n, '\0');
      write_file_atomic(dir / "f.vol", bad);
      CHECK_THROWS_AS(load_volume(dir / "f"), CorruptionError);
    }
  }

  TEST_CASE("missing sidecar is a format error") {
    test::TempDir dir("vol");
    save_volume(Volume(1, 1, 1), dir / "m");
    fs::remove(dir / "m.json");
    CHECK_THROWS_AS(load_volume(dir / "m"), FormatError);
  }

  TEST_CASE("malformed sidecars are format errors") {
    test::TempDir dir("vol");
    save_volume(Volume(1, 1, 1), dir / "m");
    write_file_atomic(dir / "m.json", "{not json");
    CHECK_THROWS_AS(load_volume(dir / "m"), FormatError);
    write_file_atomic(dir / "m.json", R"({"format":"other/9","shape":[1,1,1],"spacing":[1,1,1],"modality":"CT"})");
    CHECK_THROWS_AS(load_volume(dir / "m"), FormatError);
  }

  TEST_CASE("NaN payload is a validation error") {
    test::TempDir dir("vol");
    Volume v(2, 4, 4);
    save_volume(v, dir / "n");
    std::string bytes = read_file(dir / "n.vol");
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + 20, &nan, 4);
    write_file_atomic(dir / "n.vol", bytes);
    CHECK_THROWS_AS(load_volume(dir / "n"), ValidationError);
  }

  TEST_CASE("unwritable destination is a storage error naming the path") {
    test::TempDir dir("vol");
    write_file_atomic(dir / "blocker", "x");
    try {
      save_volume(Volume(1, 1, 1), dir / "blocker" / "v");
      FAIL("expected a storage error");
    } catch (const StorageError& e) {
      CHECK(std::string(e.what()).find("blocker") != std::string::npos);
    }
  }

  TEST_CASE("invalid volumes are refused before writing") {
    test::TempDir dir("vol");
    Volume v(1, 2, 2);
    v.spacing[1] = 0.0;
    CHECK_THROWS_AS(save_volume(v, dir / "s"), ValidationError);
    Volume w(1, 2, 2);
    w.data[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(save_volume(w, dir / "s"), ValidationError);
    CHECK_FALSE(fs::exists(dir / "s.vol"));
  }
}
