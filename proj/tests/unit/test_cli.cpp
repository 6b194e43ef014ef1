#include "doctest.h"

#include "fbgan/cli.hpp"
#include "fbgan/io.hpp"
#include "fbgan/phantom.hpp"
#include "fbgan/train.hpp"
#include "fbgan/translate.hpp"
#include "support.hpp"

#include <algorithm>
#include <sstream>

using namespace fbgan;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fbgan");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const fs::path& p) {
  const std::string s = read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

json manifest(const fs::path& dir) { return json::parse(read_file(dir / "manifest.json")); }

/// A value each flag accepts, so every documented flag can be exercised.
std::string sample_value(const std::string& sub, const std::string& flag) {
  if (flag == "--shape") return "2,32,32";
  if (flag == "--roi") return sub == "evaluate" ? "1,16,16,2,8,8" : "2,8,8";
  if (flag == "--clip" || flag == "--ref-clip") return "-300,150";
  if (flag == "--mode" || flag == "--modes") return "feedback";
  if (flag == "--direction") return "y2x";
  if (flag == "--widths") return "4,8";
  if (flag == "--bin-width" || flag == "--shift" || flag == "--cupping" || flag == "--streak" ||
      flag == "--noise" || flag == "--texture-sd") {
    return "1.5";
  }
  if (flag == "--synth") return "a=b";
  return "3";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help succeeds for every subcommand") {
    CHECK(cli({"--help"}).code == 0);
    for (const auto& sub : cli_subcommands()) {
      const Run r = cli({sub, "--help"});
      CHECK_MESSAGE(r.code == 0, sub);
      CHECK(r.out.find(sub) != std::string::npos);
    }
  }

  TEST_CASE("usage errors exit with 2") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"bogus"}).code == 2);
    CHECK(cli({"phantom", "--out", "x", "--no-such-flag"}).code == 2);
    CHECK(cli({"phantom"}).code == 2);
    CHECK(cli({"phantom", "--out", "x", "--shape", "1,2"}).code == 2);
  }

  TEST_CASE("every documented flag is in the help text and parses") {
    for (const auto& sub : cli_subcommands()) {
      const std::string help = cli({sub, "--help"}).out;
      const auto flags = cli_flags(sub);
      CHECK(!flags.empty());
      for (const auto& f : flags) {
        CHECK_MESSAGE(help.find(f) != std::string::npos, sub << " " << f);
        // Parsing stops at --help, so a parse failure on the value shows up as exit 2.
        const Run r = cli({sub, f, sample_value(sub, f), "--help"});
        CHECK_MESSAGE(r.code == 0, sub << " " << f << ": " << r.err);
      }
    }
  }

  TEST_CASE("phantom writes pairs and a manifest") {
    test::TempDir dir("cliph");
    const Run r = cli({"phantom", "--shape", "2,32,32", "--pairs", "2", "--out", (dir / "d").string(),
                       "--seed", "4"});
    REQUIRE(r.code == 0);
    CHECK(list_volumes(dir / "d").size() == 4);
    const json m = manifest(dir / "d");
    CHECK(m.at("subcommand") == "phantom");
    CHECK(m.at("seed") == 4);
    CHECK(m.at("outputs").size() == 4);
    CHECK(m.at("tolerance_mode") == "bitwise");
    CHECK(!m.at("started").get<std::string>().empty());
  }

  TEST_CASE("categorized failures exit with 1 and name the category") {
    test::TempDir dir("clieval");
    REQUIRE(cli({"phantom", "--shape", "2,32,32", "--pairs", "1", "--out", dir.path.string()}).code == 0);
    const std::string ct = (dir / "ct_0000").string(), cb = (dir / "cbct_0000").string();
    const Run ok = cli({"evaluate", "--ref", ct, "--orig", cb, "--out", (dir / "e").string()});
    CHECK(ok.code == 0);
    CHECK(ok.out.rfind("case,method,mean_hu,sd_hu,r\n", 0) == 0);
    CHECK(fs::exists(dir / "e" / "report.csv"));
    CHECK(fs::exists(dir / "e" / "hist_ct_0000.png"));
    CHECK(manifest(dir / "e").at("subcommand") == "evaluate");

    const Run bad = cli({"evaluate", "--ref", ct, "--orig", cb, "--out", (dir / "f").string(),
                         "--ref-clip", "-1000,1000"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("[configuration]") != std::string::npos);

    const Run missing = cli({"evaluate", "--ref", (dir / "nope").string(), "--orig", cb, "--out",
                             (dir / "g").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("[format]") != std::string::npos);
  }

  TEST_CASE("train flags override the config, which overrides the checkpoint") {
    test::TempDir dir("cliprec");
    const std::string data = (dir / "data").string();
    REQUIRE(cli({"phantom", "--shape", "2,32,32", "--pairs", "2", "--out", data}).code == 0);

    TrainConfig c;
    c.image_size = 32;
    c.gen_widths = c.disc_widths = {4, 8};
    c.convs_per_level = 1;
    c.batch_size = 2;
    c.epochs = 1;
    c.train_ratio = 0.5;
    c.data_dir = data;
    c.checkpoint_dir = (dir / "a").string();
    write_file_atomic(dir / "a.json", to_json(c).dump());
    REQUIRE(cli({"train", "--config", (dir / "a.json").string()}).code == 0);
    CHECK(manifest(dir / "a").at("config").at("epochs") == 1);
    const std::string ckpt = (dir / "a" / "final.fbck").string();
    REQUIRE(fs::exists(ckpt));

    // Checkpoint alone: its own config, with a fresh output directory.
    REQUIRE(cli({"train", "--resume", ckpt, "--out", (dir / "b").string()}).code == 0);
    CHECK(manifest(dir / "b").at("config").at("epochs") == 1);

    // Config beats checkpoint.
    write_file_atomic(dir / "e2.json", json{{"epochs", 2}}.dump());
    REQUIRE(cli({"train", "--resume", ckpt, "--config", (dir / "e2.json").string(), "--out",
                 (dir / "c").string()})
                .code == 0);
    CHECK(manifest(dir / "c").at("config").at("epochs") == 2);

    // Flag beats both.
    REQUIRE(cli({"train", "--resume", ckpt, "--config", (dir / "e2.json").string(), "--epochs", "3",
                 "--out", (dir / "d").string()})
                .code == 0);
    const json m = manifest(dir / "d");
    CHECK(m.at("config").at("epochs") == 3);
    CHECK(m.at("subcommand") == "train");
    // Epochs 2 and 3 under the header; epoch 1 lives in the source run.
    CHECK(line_count(dir / "d" / "metrics.csv") == 3);

    // A resume that changes the model is refused.
    const Run r = cli({"train", "--resume", ckpt, "--seed", "99", "--out", (dir / "e").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("[configuration]") != std::string::npos);
  }

  TEST_CASE("translate writes synthetic volumes and a manifest") {
    test::TempDir dir("clitr");
    const std::string data = (dir / "data").string();
    REQUIRE(cli({"phantom", "--shape", "2,32,32", "--pairs", "2", "--out", data}).code == 0);
    write_file_atomic(dir / "c.json",
                      json{{"gen_widths", {4, 8}}, {"disc_widths", {4, 8}}, {"convs_per_level", 1}}.dump());
    REQUIRE(cli({"train", "--data", data, "--out", (dir / "m").string(), "--epochs", "1", "--image-size",
                 "32", "--batch-size", "2", "--mode", "cyclegan", "--config", (dir / "c.json").string()})
                .code == 0);
    const Run r = cli({"translate", "--ckpt", (dir / "m" / "final.fbck").string(), "--in",
                       (dir / "data" / "cbct_0001").string(), "--out", (dir / "s").string()});
    REQUIRE(r.code == 0);
    CHECK(list_volumes(dir / "s").size() == 1);
    CHECK(manifest(dir / "s").at("config").at("direction") == "x2y");
  }
}
