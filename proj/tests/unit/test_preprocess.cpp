#include "doctest.h"

#include "fbgan/error.hpp"
#include "fbgan/preprocess.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace fbgan;

TEST_SUITE("preprocess") {
  TEST_CASE("8x8 slice with radius 3 masks exactly the pixels beyond 3") {
    Volume v(2, 8, 8, 40.0f);
    const Volume m = apply_fov_mask(v, 3.0, -1000.0f);
    long expected = 0;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        if (std::hypot(y - 3.5, x - 3.5) > 3.0) ++expected;
      }
    }
    CHECK((m.data == -1000.0f).count() == 2 * expected);
    CHECK(m.fov_radius_px == 3.0);
  }

  TEST_CASE("inscribed radius only touches the corners") {
    Volume v(1, 16, 16, 5.0f);
    const Volume m = apply_fov_mask(v, 8.0, -1000.0f);
    CHECK(m(0, 0, 0) == -1000.0f);
    CHECK(m(0, 15, 15) == -1000.0f);
    CHECK(m(0, 0, 8) == 5.0f);
    CHECK(m(0, 8, 0) == 5.0f);
    CHECK(m(0, 8, 8) == 5.0f);
  }

  TEST_CASE("radius 0 fills everything and oversized radii are rejected") {
    Volume v(1, 4, 6, 5.0f);
    CHECK((apply_fov_mask(v, 0.0, -1000.0f).data == -1000.0f).all());
    CHECK_THROWS_AS(apply_fov_mask(v, 2.5, -1000.0f), ValidationError);
    CHECK_THROWS_AS(apply_fov_mask(v, -1.0, -1000.0f), ValidationError);
  }

  TEST_CASE("clip follows the evaluation window rule") {
    Volume v(1, 1, 3);
    v.data << -450.0f, 12.0f, 151.0f;
    const Volume c = clip_hu(v, -300.0, 150.0);
    CHECK(c.data[0] == -300.0f);
    CHECK(c.data[1] == 12.0f);
    CHECK(c.data[2] == 150.0f);
    CHECK_THROWS_AS(clip_hu(v, 10.0, 10.0), ValidationError);
  }

  TEST_CASE("clip and mask are idempotent on random volumes") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
      const Volume v = test::uniform_volume(3, 8, 8, rng, -1500.0, 1500.0);
      const Volume c = clip_hu(v, -300.0, 150.0);
      CHECK(clip_hu(c, -300.0, 150.0).identical(c));
      const Volume m = apply_fov_mask(v, 2.75, -1000.0f);
      CHECK(apply_fov_mask(m, 2.75, -1000.0f).identical(m));
    }
  }

  TEST_CASE("normalize maps the window endpoints and midpoint") {
    Volume v(1, 1, 3);
    v.data << -1000.0f, 0.0f, 1000.0f;
    const SliceBatch b = normalize(v, -1000.0, 1000.0, "v");
    CHECK(b.data.data()[0] == -1.0f);
    CHECK(b.data.data()[1] == 0.0f);
    CHECK(b.data.data()[2] == 1.0f);
    Volume lo(2, 2, 2, -300.0f);
    CHECK((normalize(lo, -300.0, 150.0).data.array() == -1.0f).all());
  }

  TEST_CASE("normalize yields one item per slice with provenance") {
    Volume v(3, 4, 4, 0.0f);
    v(2, 1, 1) = 500.0f;
    const SliceBatch b = normalize(v, -1000.0, 1000.0, "case7");
    CHECK(b.data.shape() == Shape4{3, 1, 4, 4});
    CHECK(b.data(2, 0, 1, 1) == 0.5f);
    REQUIRE(b.provenance.size() == 3);
    CHECK(b.provenance[2] == SliceRef{"case7", 2});
    b.validate();
  }

  TEST_CASE("denormalize inverts normalize within 1e-3 HU in binary32") {
    std::mt19937_64 rng(5);
    const Volume v = test::uniform_volume(4, 8, 8, rng, -1200.0, 1200.0);
    const SliceBatch b = normalize(v, -1000.0, 1000.0);
    const Volume back = denormalize(b.data, -1000.0, 1000.0, v);
    const Volume ref = clip_hu(v, -1000.0, 1000.0);
    CHECK(((back.data - ref.data).abs() <= 1e-3f).all());
  }

  TEST_CASE("normalize and denormalize compose to the identity in double") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const double v = u(rng);
      const double hu = denormalize_value(v, -1000.0, 1000.0);
      CHECK(std::abs(normalize_value(hu, -1000.0, 1000.0) - v) <= 1e-6);
    }
  }

  TEST_CASE("76 pairs at 68/76 split into 68 and 8, deterministically and disjointly") {
    std::vector<std::string> ids;
    for (int i = 0; i < 76; ++i) ids.push_back(std::to_string(i));
    const DatasetSplit s = split_dataset(ids, 68.0 / 76.0, 42);
    CHECK(s.train.size() == 68);
    CHECK(s.test.size() == 8);
    std::set<std::string> all(s.train.begin(), s.train.end());
    for (const auto& t : s.test) CHECK(all.insert(t).second);
    CHECK(all.size() == 76);
    const DatasetSplit again = split_dataset(ids, 68.0 / 76.0, 42);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);
    CHECK(split_dataset(ids, 68.0 / 76.0, 43).test != s.test);
  }

  TEST_CASE("split keeps one pair on each side at the extremes") {
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    CHECK(split_dataset(ids, 1.0, 1).train.size() == 3);
    CHECK(split_dataset(ids, 0.0, 1).train.size() == 1);
    CHECK(split_dataset(ids, 0.5, 1).train.size() == 2);
    CHECK_THROWS_AS(split_dataset({"a"}, 0.5, 1), ValidationError);
    CHECK_THROWS_AS(split_dataset(ids, 1.5, 1), ValidationError);
  }

  TEST_CASE("preprocess masks with the inscribed circle by default") {
    Volume v(1, 8, 8, 200.0f);
    PreprocessParams p;
    const SliceBatch b = preprocess_volume(v, p);
    CHECK(b.data(0, 0, 0, 0) == -1.0f);
    CHECK(b.data(0, 0, 4, 4) == 0.2f);
  }

  TEST_CASE("slice batches outside [-1, 1] fail validation") {
    SliceBatch b;
    b.data = Tensor<float>(Shape4{1, 1, 2, 2}, 0.5f);
    b.provenance = {{"x", 0}};
    b.validate();
    b.data(0, 0, 1, 1) = 1.5f;
    CHECK_THROWS_AS(b.validate(), ValidationError);
    b.data = Tensor<float>(Shape4{1, 3, 2, 2});
    CHECK_THROWS_AS(b.validate(), ShapeError);
  }
}
