#include "doctest.h"

#include "fbgan/checkpoint.hpp"
#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/phantom.hpp"
#include "fbgan/train.hpp"
#include "support.hpp"

#include <cstring>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

using namespace fbgan;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

TrainConfig tiny_config(Mode mode, Index size = 32) {
  TrainConfig c;
  c.mode = mode;
  c.batch_size = 2;
  c.epochs = 2;
  c.seed = 5;
  c.image_size = size;
  c.gen_widths = {4, 8};
  c.disc_widths = {4, 8};
  c.convs_per_level = 1;
  c.checkpoint_every = 1;
  c.train_ratio = 0.75;
  return c;
}

void write_pairs(const fs::path& dir, int pairs, std::array<Eigen::Index, 3> shape) {
  PhantomJob job;
  job.shape = shape;
  job.pairs = pairs;
  job.out_dir = dir;
  job.seed = 3;
  job.texture_sd = 10.0;
  job.artifacts.cupping_amp = 30.0;
  write_phantom_pairs(job);
}

std::vector<float> flat_params(std::vector<ParamRef<float>> ps) {
  std::vector<float> out;
  for (const auto& p : ps) out.insert(out.end(), p.value->data(), p.value->data() + p.value->size());
  return out;
}

std::pair<Tensor<float>, Tensor<float>> batch(std::uint64_t seed, Index n = 2, Index s = 32) {
  std::mt19937_64 rng(seed);
  return {test::uniform_tensor<float>({n, 1, s, s}, rng), test::uniform_tensor<float>({n, 1, s, s}, rng)};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

/// Bytes after the header: parameters and optimizer moments only.
std::string checkpoint_payload(const fs::path& p) {
  const std::string b = read_file(p);
  std::uint64_t len = 0;
  std::memcpy(&len, b.data() + 8, 8);
  return b.substr(16 + len);
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("one step on a fixed batch is deterministic") {
    const auto [x, y] = batch(1);
    TrainState a(tiny_config(Mode::feedback)), b(tiny_config(Mode::feedback));
    const LossBreakdown la = train_step(a, x, y), lb = train_step(b, x, y);
    CHECK(la.total == lb.total);
    CHECK(la.xy.d_local == lb.xy.d_local);
    CHECK(la.cycle == lb.cycle);
    CHECK(flat_params(a.models.all_params()) == flat_params(b.models.all_params()));
    CHECK(a.step == 1);
  }

  TEST_CASE("generator input width follows the mode") {
    const auto [x, y] = batch(2);
    for (Mode m : {Mode::feedback, Mode::unetgan, Mode::cyclegan}) {
      TrainState st(tiny_config(m));
      const auto t = translate_both(st.models, x, y);
      CHECK(t.tape_xy.in_channels == (m == Mode::feedback ? 2 : 1));
      CHECK(t.tape_yx.in_channels == (m == Mode::feedback ? 2 : 1));
    }
  }

  TEST_CASE("cyclegan never builds the map head") {
    TrainState st(tiny_config(Mode::cyclegan));
    CHECK_FALSE(st.models.disc_y.has_local_head());
    for (const auto& p : st.models.discriminator_params()) {
      CHECK(p.name.find(".dec") == std::string::npos);
      CHECK(p.name.find(".head") == std::string::npos);
    }
  }

  TEST_CASE("each optimizer moves only its own networks") {
    const auto [x, y] = batch(3);
    TrainState st(tiny_config(Mode::feedback));
    const LossWeights w = st.config.loss_weights();
    const auto gen0 = flat_params(st.models.generator_params());
    const auto disc0 = flat_params(st.models.discriminator_params());

    Translation<float> t = translate_both(st.models, x, y);
    LossBreakdown b;
    disc_objective(st.models, x, y, t, w, b, true);
    st.disc_opt.step();
    CHECK(flat_params(st.models.generator_params()) == gen0);
    const auto disc1 = flat_params(st.models.discriminator_params());
    CHECK(disc1 != disc0);

    t = translate_both(st.models, x, y);
    gen_objective(st.models, x, y, t, w, b, true);
    st.gen_opt.step();
    CHECK(flat_params(st.models.discriminator_params()) == disc1);
    CHECK(flat_params(st.models.generator_params()) != gen0);

    std::set<const void*> d, g;
    for (const auto& p : st.disc_opt.params()) d.insert(p.value);
    for (const auto& p : st.gen_opt.params()) g.insert(p.value);
    CHECK(d.size() + g.size() == st.models.all_params().size());
    for (const void* p : d) CHECK(g.count(p) == 0);
  }

  TEST_CASE("generator update puts no gradient into the discriminators") {
    const auto [x, y] = batch(4);
    TrainState st(tiny_config(Mode::feedback));
    zero_grads(st.models.discriminator_params());
    Translation<float> t = translate_both(st.models, x, y);
    LossBreakdown b;
    gen_objective(st.models, x, y, t, st.config.loss_weights(), b, true);
    for (const auto& p : st.models.discriminator_params()) CHECK((p.grad->array() == 0.0f).all());
    bool any = false;
    for (const auto& p : st.models.generator_params()) any |= (p.grad->array() != 0.0f).any();
    CHECK(any);
  }

  TEST_CASE("discriminator objective falls over 50 steps on a frozen batch") {
    const auto [x, y] = batch(5);
    TrainState st(tiny_config(Mode::unetgan));
    const LossWeights w = st.config.loss_weights();
    const Translation<float> t = translate_both(st.models, x, y);
    std::vector<double> hist;
    for (int i = 0; i < 50; ++i) {
      LossBreakdown b;
      disc_objective(st.models, x, y, t, w, b, true);
      st.disc_opt.step();
      hist.push_back(b.xy.d_global + b.xy.d_local + b.yx.d_global + b.yx.d_local);
    }
    const double first = std::accumulate(hist.begin(), hist.begin() + 10, 0.0);
    const double last = std::accumulate(hist.end() - 10, hist.end(), 0.0);
    CHECK(last < first);
  }

  TEST_CASE("feedback without map weight or feedback reproduces cyclegan") {
    const auto [x, y] = batch(6);
    TrainConfig fc = tiny_config(Mode::feedback);
    fc.weight_local = 0.0;
    fc.feedback = false;
    TrainState f(fc), c(tiny_config(Mode::cyclegan));
    for (int i = 0; i < 2; ++i) {
      const LossBreakdown a = train_step(f, x, y), b = train_step(c, x, y);
      CHECK(std::abs(a.total - b.total) <= 1e-6);
      CHECK(std::abs(a.xy.d_total - b.xy.d_total) <= 1e-6);
      CHECK(std::abs(a.yx.g_adv - b.yx.g_adv) <= 1e-6);
      CHECK(std::abs(a.cycle - b.cycle) <= 1e-6);
    }
  }

  TEST_CASE("non-finite losses raise a divergence error naming term and step") {
    auto [x, y] = batch(7);
    TrainState st(tiny_config(Mode::feedback));
    train_step(st, x, y);
    x.data()[5] = std::numeric_limits<float>::quiet_NaN();
    try {
      train_step(st, x, y);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("step 2") != std::string::npos);
      CHECK(msg.find("xy.") != std::string::npos);
    }
    LossBreakdown b;
    b.yx.g_local = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(check_finite(b, 9), "step 9: loss term yx.g_local is not finite", DivergenceError);
  }

  TEST_CASE("batches of the wrong shape are rejected") {
    TrainState st(tiny_config(Mode::feedback));
    const auto [x, y] = batch(8, 3);
    CHECK_THROWS_AS(train_step(st, x, y), ShapeError);
  }

  TEST_CASE("config validation") {
    TrainConfig c = tiny_config(Mode::feedback);
    c.validate();
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
    c = tiny_config(Mode::feedback);
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
    c = tiny_config(Mode::feedback);
    c.image_size = 31;
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
    c = tiny_config(Mode::cyclegan);
    c.feedback = true;
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
  }

  TEST_CASE("config JSON round-trips and rejects unknown keys") {
    TrainConfig c = tiny_config(Mode::unetgan);
    c.adam.lr = 1e-3;
    c.local_reduction = LocalReduction::sum;
    c.feedback = false;
    c.preprocess.lo_hu = -900.0;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_AS(train_config_from_json(json{{"epoch", 3}}), ConfigurationError);
    CHECK_THROWS_AS(train_config_from_json(json{{"epochs", "many"}}), ConfigurationError);
    CHECK_THROWS_AS(train_config_from_json(json{{"mode", "pix2pix"}}), ConfigurationError);
    const TrainConfig partial = train_config_from_json(json{{"epochs", 7}}, c);
    CHECK(partial.epochs == 7);
    CHECK(partial.adam.lr == 1e-3);
  }

  TEST_CASE("epoch order depends only on seed, epoch and domain") {
    const auto a = epoch_order(1, 3, 0, 20), b = epoch_order(1, 3, 0, 20);
    CHECK(a == b);
    CHECK(epoch_order(1, 4, 0, 20) != a);
    CHECK(epoch_order(1, 3, 1, 20) != a);
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  }

  TEST_CASE("two epochs on four 64x64 pairs write checkpoints and metrics") {
    test::TempDir dir("train");
    write_pairs(dir / "data", 4, {2, 64, 64});
    TrainConfig c = tiny_config(Mode::feedback, 64);
    c.data_dir = (dir / "data").string();
    c.checkpoint_dir = (dir / "run").string();
    const TrainResult r = train(c);
    CHECK(r.epochs_run == 2);
    CHECK(fs::exists(dir / "run" / "ckpt_epoch_0001.fbck"));
    CHECK(fs::exists(dir / "run" / "ckpt_epoch_0002.fbck"));
    CHECK(fs::exists(r.final_checkpoint));
    const auto rows = lines(read_file(r.metrics));
    REQUIRE(rows.size() == 3);
    std::string header;
    for (const auto& col : metrics_columns()) header += (header.empty() ? "" : ",") + col;
    CHECK(rows[0] == header);
    CHECK(rows[1].rfind("1,3,", 0) == 0);
    const DatasetSplit s = split_from_json(json::parse(read_file(dir / "run" / "split.json")));
    CHECK(s.train.size() == 3);
    CHECK(s.test.size() == 1);
  }

  TEST_CASE("resuming reproduces the uninterrupted run") {
    test::TempDir dir("resume");
    write_pairs(dir / "data", 4, {2, 32, 32});
    TrainConfig c = tiny_config(Mode::feedback);
    c.epochs = 4;
    c.checkpoint_every = 2;
    c.data_dir = (dir / "data").string();
    c.checkpoint_dir = (dir / "full").string();
    train(c);

    TrainConfig r = c;
    r.checkpoint_dir = (dir / "resumed").string();
    TrainOptions opts;
    opts.resume = dir / "full" / "ckpt_epoch_0002.fbck";
    train(r, opts);
    CHECK(checkpoint_payload(dir / "full" / "final.fbck") ==
          checkpoint_payload(dir / "resumed" / "final.fbck"));
    const auto a = lines(read_file(dir / "full" / "metrics.csv"));
    const auto b = lines(read_file(dir / "resumed" / "metrics.csv"));
    REQUIRE(a.size() == 5);
    // A fresh directory holds only the epochs run after the resume.
    REQUIRE(b.size() == 3);
    CHECK(a[3] == b[1]);
    CHECK(a[4] == b[2]);

    TrainConfig changed = r;
    changed.adam.lr = 1e-3;
    CHECK_THROWS_AS(train(changed, opts), ConfigurationError);
  }

  TEST_CASE("divergence aborts and keeps earlier checkpoints") {
    test::TempDir dir("diverge");
    write_pairs(dir / "data", 4, {2, 32, 32});
    TrainConfig c = tiny_config(Mode::feedback);
    c.data_dir = (dir / "data").string();
    c.checkpoint_dir = (dir / "run").string();
    train(c);
    const std::string kept = read_file(dir / "run" / "ckpt_epoch_0001.fbck");
    fs::remove(dir / "run" / "final.fbck");

    c.adam.lr = 1e30;
    c.epochs = 3;
    CHECK_THROWS_AS(train(c), DivergenceError);
    CHECK(read_file(dir / "run" / "ckpt_epoch_0001.fbck") == kept);
    CHECK_FALSE(fs::exists(dir / "run" / "final.fbck"));
  }

  TEST_CASE("empty or mismatched datasets are refused") {
    test::TempDir dir("empty");
    fs::create_directories(dir / "data");
    TrainConfig c = tiny_config(Mode::feedback);
    c.data_dir = (dir / "data").string();
    c.checkpoint_dir = (dir / "run").string();
    CHECK_THROWS_AS(train(c), ValidationError);
    write_pairs(dir / "data", 4, {2, 32, 32});
    c.image_size = 64;
    CHECK_THROWS_AS(train(c), ConfigurationError);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load restore parameters, moments and counters") {
    test::TempDir dir("ckpt");
    const auto [x, y] = batch(9);
    TrainState st(tiny_config(Mode::unetgan));
    train_step(st, x, y);
    st.epoch = 1;
    save_checkpoint(st, dir / "a.fbck");
    const auto back = load_checkpoint(dir / "a.fbck");
    CHECK(back->epoch == 1);
    CHECK(back->step == 1);
    CHECK(back->disc_opt.steps() == 1);
    CHECK(flat_params(back->models.all_params()) == flat_params(st.models.all_params()));
    for (std::size_t i = 0; i < st.gen_opt.first_moments().size(); ++i) {
      CHECK(back->gen_opt.first_moments()[i] == st.gen_opt.first_moments()[i]);
      CHECK(back->gen_opt.second_moments()[i] == st.gen_opt.second_moments()[i]);
    }
    CHECK(to_json(back->config) == to_json(st.config));
    const json h = read_checkpoint_header(dir / "a.fbck");
    CHECK(h.at("format") == "fbgan-ckpt/1");
    CHECK(h.at("mode") == "unetgan");
    CHECK(h.at("preprocess").at("norm_lo_hu") == -1000.0);

    // Continuing both states from here stays in lockstep.
    const LossBreakdown a = train_step(st, x, y), b = train_step(*back, x, y);
    CHECK(a.total == b.total);
  }

  TEST_CASE("damaged checkpoints are categorized") {
    test::TempDir dir("ckpt");
    TrainState st(tiny_config(Mode::feedback));
    save_checkpoint(st, dir / "a.fbck");
    const std::string good = read_file(dir / "a.fbck");

    write_file_atomic(dir / "b.fbck", "NOTACKPT" + good.substr(8));
    CHECK_THROWS_AS(load_checkpoint(dir / "b.fbck"), FormatError);
    write_file_atomic(dir / "b.fbck", good.substr(0, good.size() - 4));
    CHECK_THROWS_AS(load_checkpoint(dir / "b.fbck"), CorruptionError);

    std::uint64_t len = 0;
    std::memcpy(&len, good.data() + 8, 8);
    json h = json::parse(good.substr(16, len));
    h["tensors"][0]["name"] = "renamed";
    const std::string hs = h.dump();
    const std::uint64_t n = hs.size();
    std::string edited = good.substr(0, 8);
    edited.append(reinterpret_cast<const char*>(&n), 8);
    edited += hs + good.substr(16 + len);
    write_file_atomic(dir / "b.fbck", edited);
    CHECK_THROWS_AS(load_checkpoint(dir / "b.fbck"), ConfigurationError);
  }

  TEST_CASE("resume compatibility ignores only cadence, target and location") {
    const TrainConfig a = tiny_config(Mode::feedback);
    TrainConfig b = a;
    b.epochs = 99;
    b.checkpoint_every = 7;
    b.checkpoint_dir = "elsewhere";
    check_resume_compatible(a, b);
    b.seed = 6;
    CHECK_THROWS_AS(check_resume_compatible(a, b), ConfigurationError);
  }
}
