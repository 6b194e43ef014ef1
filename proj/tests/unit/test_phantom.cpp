#include "doctest.h"

#include "fbgan/error.hpp"
#include "fbgan/evaluate.hpp"
#include "fbgan/phantom.hpp"
#include "support.hpp"

#include <cmath>
#include <set>

using namespace fbgan;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.shape = {4, 32, 32};
  s.body = {"body", {1.5, 15.5, 15.5}, {1e6, 13.0, 14.0}, 40.0};
  return s;
}

double masked_mean(const Volume& v, const Eigen::Array<bool, Eigen::Dynamic, 1>& m) {
  double s = 0.0;
  long n = 0;
  for (Eigen::Index i = 0; i < v.data.size(); ++i) {
    if (m[i]) {
      s += v.data[i];
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("no inclusions gives exactly body HU and air") {
    const Volume v = make_ct_phantom(small_spec());
    std::set<float> values(v.data.begin(), v.data.end());
    CHECK(values == std::set<float>{-1000.0f, 40.0f});
  }

  TEST_CASE("same spec twice gives identical volumes") {
    PhantomSpec s = random_pelvis_spec({4, 64, 64}, 5, 20.0);
    CHECK(make_ct_phantom(s).identical(make_ct_phantom(s)));
    CHECK(random_pelvis_spec({4, 64, 64}, 5, 20.0).inclusions[1].center ==
          s.inclusions[1].center);
  }

  TEST_CASE("rectal gas inclusion mass equals its voxel count") {
    PhantomSpec s = small_spec();
    s.inclusions.push_back({"rectum", {1.5, 18.0, 14.0}, {1.5, 3.2, 4.1}, -300.0});
    const Volume v = make_ct_phantom(s);
    long members = 0;
    for (Eigen::Index z = 0; z < 4; ++z) {
      for (Eigen::Index y = 0; y < 32; ++y) {
        for (Eigen::Index x = 0; x < 32; ++x) {
          const double dz = (z - 1.5) / 1.5, dy = (y - 18.0) / 3.2, dx = (x - 14.0) / 4.1;
          if (dz * dz + dy * dy + dx * dx <= 1.0) ++members;
        }
      }
    }
    REQUIRE(members > 0);
    const Histogram h = hu_histogram(v, -300.0, 150.0, 1.0);
    // Air also clips into the first bin, so count the inclusion directly.
    CHECK((v.data == -300.0f).count() == members);
    CHECK(h.counts.front() == members + (v.data == -1000.0f).count());
  }

  TEST_CASE("innermost inclusion wins") {
    PhantomSpec s = small_spec();
    s.inclusions.push_back({"outer", {1.5, 15.5, 15.5}, {1.5, 6.0, 6.0}, 15.0});
    s.inclusions.push_back({"inner", {1.5, 15.5, 15.5}, {1.5, 2.0, 2.0}, 60.0});
    const Volume v = make_ct_phantom(s);
    CHECK(v(1, 15, 15) == 60.0f);
    CHECK(v(1, 15, 19) == 15.0f);
    CHECK(v(1, 15, 25) == 40.0f);
    CHECK(v(1, 0, 0) == -1000.0f);
  }

  TEST_CASE("inclusion outside the grid or with bad HU is a validation error") {
    PhantomSpec s = small_spec();
    s.inclusions.push_back({"out", {1.5, 30.0, 15.5}, {1.0, 4.0, 2.0}, 0.0});
    CHECK_THROWS_AS(make_ct_phantom(s), ValidationError);
    PhantomSpec t = small_spec();
    t.inclusions.push_back({"hot", {1.5, 15.5, 15.5}, {1.0, 2.0, 2.0}, 1500.0});
    CHECK_THROWS_AS(make_ct_phantom(t), ValidationError);
    PhantomSpec u = small_spec();
    u.inclusions.push_back({"flat", {1.5, 15.5, 15.5}, {1.0, 0.0, 2.0}, 0.0});
    CHECK_THROWS_AS(make_ct_phantom(u), ValidationError);
  }

  TEST_CASE("zero artifacts are the identity") {
    const Volume ct = make_ct_phantom(random_pelvis_spec({4, 64, 64}, 9, 20.0));
    ArtifactParams p;
    p.global_shift = 0.0;
    Volume cb = degrade_to_cbct(ct, p);
    CHECK(cb.data.cwiseEqual(ct.data).all());
    CHECK(cb.modality == Modality::CBCT);
  }

  TEST_CASE("shift of -76 lowers the body mean by exactly 76 HU") {
    const Volume ct = make_ct_phantom(random_pelvis_spec({4, 64, 64}, 3, 20.0));
    ArtifactParams p;
    p.global_shift = -76.0;
    const Volume cb = degrade_to_cbct(ct, p);
    const auto m = body_mask(ct);
    CHECK(masked_mean(cb, m) - masked_mean(ct, m) == doctest::Approx(-76.0).epsilon(1e-9));
    for (Eigen::Index i = 0; i < ct.data.size(); ++i) {
      if (!m[i]) CHECK(cb.data[i] == ct.data[i]);
    }
  }

  TEST_CASE("cupping leaves the center and rises toward the rim") {
    PhantomSpec s = small_spec();
    s.shape = {1, 33, 33};
    s.body = {"body", {0.0, 16.0, 16.0}, {1e6, 15.0, 15.0}, 40.0};
    const Volume ct = make_ct_phantom(s);
    ArtifactParams p;
    p.global_shift = 0.0;
    p.cupping_amp = 50.0;
    const Volume cb = degrade_to_cbct(ct, p);
    CHECK(cb(0, 16, 16) == ct(0, 16, 16));
    CHECK(cb(0, 16, 24) > cb(0, 16, 20));
    CHECK(cb(0, 16, 20) > cb(0, 16, 16));
  }

  TEST_CASE("shift-only mean holds with streaks that integrate to zero") {
    PhantomSpec s = small_spec();
    s.shape = {3, 64, 64};
    s.body = {"body", {1.0, 31.5, 31.5}, {1e6, 27.0, 27.0}, 40.0};
    const Volume ct = make_ct_phantom(s);
    ArtifactParams p;
    p.global_shift = -76.0;
    p.streak_amp = 30.0;
    p.streak_count = 4;
    p.seed = 17;
    const Volume cb = degrade_to_cbct(ct, p);
    const auto m = body_mask(ct);
    CHECK(std::abs(masked_mean(cb, m) - masked_mean(ct, m) + 76.0) < 0.5);
  }

  TEST_CASE("equal seeds give bit-identical degradations") {
    const Volume ct = make_ct_phantom(random_pelvis_spec({4, 64, 64}, 2, 20.0));
    ArtifactParams p{-76.0, 40.0, 20.0, 3, 20.0, 99};
    CHECK(degrade_to_cbct(ct, p).identical(degrade_to_cbct(ct, p)));
    ArtifactParams q = p;
    q.seed = 100;
    CHECK_FALSE(degrade_to_cbct(ct, q).identical(degrade_to_cbct(ct, p)));
  }

  TEST_CASE("negative amplitudes are validation errors") {
    const Volume ct = make_ct_phantom(small_spec());
    ArtifactParams p;
    p.noise_sd = -1.0;
    CHECK_THROWS_AS(degrade_to_cbct(ct, p), ValidationError);
    ArtifactParams q;
    q.streak_count = 0;
    CHECK_THROWS_AS(degrade_to_cbct(ct, q), ValidationError);
  }

  TEST_CASE("written pairs are aligned, seeded and self-describing") {
    test::TempDir dir("ph");
    PhantomJob job;
    job.shape = {2, 32, 32};
    job.pairs = 3;
    job.out_dir = dir.path;
    job.seed = 4;
    job.artifacts.noise_sd = 5.0;
    const auto ids = write_phantom_pairs(job);
    CHECK(ids == std::vector<std::string>{"0000", "0001", "0002"});
    for (const auto& id : ids) {
      const Volume ct = load_volume(dir / ("ct_" + id));
      const Volume cb = load_volume(dir / ("cbct_" + id));
      CHECK(ct.modality == Modality::CT);
      CHECK(cb.modality == Modality::CBCT);
      CHECK(ct.shape == cb.shape);
      // Air outside the body is untouched, so the pair shares its silhouette.
      CHECK(((ct.data == kAirHU) == (cb.data == kAirHU)).all());
      CHECK(std::filesystem::exists(dir / ("spec_" + id + ".json")));
    }
    test::TempDir again("ph");
    job.out_dir = again.path;
    write_phantom_pairs(job);
    CHECK(load_volume(again / "cbct_0002").identical(load_volume(dir / "cbct_0002")));
  }
}
