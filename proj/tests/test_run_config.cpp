#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mdqf/run_config.hpp"

using namespace mdqf;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("runconfig") {
  TEST_CASE("defaults and partial overrides") {
    const cli::RunConfig d = cli::default_config();
    CHECK(d.schema_version == 1);
    CHECK(d.train_pairs == 200);
    CHECK(d.test_pairs == 50);
    CHECK(d.model.detector.dim == 64);
    CHECK(d.separate_steps == 300);
    CHECK(d.weights.alpha == 0.125);
    CHECK(d.weights.beta == 0.25);
    CHECK(d.weights.gamma == 0.625);

    const cli::RunConfig c = cli::parse_config_text(R"({
      "seed": 99,
      "data": {"image_h": 32, "image_w": 48, "train_pairs": 12},
      "model": {"dim": 16, "k1": 4},
      "train": {"lr": 0.001, "separate_steps": 10},
      "postproc": {"mode": "topk", "topk": 25}
    })");
    CHECK(c.seed == 99);
    CHECK(c.scene.seed == 99);
    CHECK(c.scene.image_h == 32);
    CHECK(c.scene.image_w == 48);
    CHECK(c.model.detector.image_h == 32);
    CHECK(c.model.detector.image_w == 48);
    CHECK(c.train_pairs == 12);
    CHECK(c.test_pairs == 50);
    CHECK(c.model.detector.dim == 16);
    CHECK(c.model.fusion.k_train == 4);
    CHECK(c.lr == 0.001);
    CHECK(c.separate_steps == 10);
    CHECK(c.joint_steps == 300);
    CHECK(c.postproc.mode == mdl::PostprocMode::kTopk);
    CHECK(c.postproc.topk == 25);
  }

  TEST_CASE("unknown and ill-typed keys fail with their path") {
    CHECK_THROWS_WITH_AS(cli::parse_config_text(R"({"bogus": 1})"),
                         "unknown config key: bogus", cli::ConfigError);
    CHECK_THROWS_WITH_AS(cli::parse_config_text(R"({"train": {"lr": 0.1, "momentum": 0.9}})"),
                         "unknown config key: train.momentum", cli::ConfigError);
    CHECK_THROWS_WITH_AS(cli::parse_config_text(R"({"data": {"image_h": "tall"}})"),
                         "wrong type for config key: data.image_h", cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text(R"({"schema_version": 2})"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("not json at all"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text(R"({"postproc": {"mode": "magic"}})"),
                    cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text(R"({"train": 3})"), cli::ConfigError);
  }

  TEST_CASE("effective config round trips") {
    cli::RunConfig c = cli::default_config();
    c.seed = 1234;
    c.scene.noise = 0.05;
    c.model.fusion.k_test = 14;
    c.weights.gamma = 0.5;
    c.postproc.mode = mdl::PostprocMode::kTopk;

    const std::string text = cli::effective_config_json(c);
    const cli::RunConfig back = cli::parse_config_text(text);
    CHECK(cli::effective_config_json(back) == text);
    CHECK(back.seed == 1234);
    CHECK(back.scene.noise == 0.05);
    CHECK(back.model.fusion.k_test == 14);
    CHECK(back.weights.gamma == 0.5);
    CHECK(back.postproc.mode == mdl::PostprocMode::kTopk);
  }

  TEST_CASE("config file loading") {
    auto dir = std::filesystem::temp_directory_path() / "mdqf_runconfig";
    std::filesystem::create_directories(dir);
    const auto path = dir / "run.json";
    {
      std::ofstream out(path);
      out << R"({"seed": 5, "train": {"rounds": 3}})";
    }
    const cli::RunConfig c = cli::load_config_file(path.string());
    CHECK(c.seed == 5);
    CHECK(c.rounds == 3);
    CHECK_THROWS_AS(cli::load_config_file((dir / "absent.json").string()), cli::ConfigError);
  }

  TEST_CASE("phase config binds the step budget") {
    cli::RunConfig c = cli::default_config();
    c.batch_size = 4;
    c.lr = 0.002;
    const train::TrainConfig t = cli::phase_config(c, 25, 77, "joint-r0", "log.jsonl");
    CHECK(t.max_steps == 25);
    CHECK(t.epochs >= 25);
    CHECK(t.batch_size == 4);
    CHECK(t.lr == 0.002);
    CHECK(t.seed == 77);
    CHECK(t.phase_tag == "joint-r0");
    CHECK(t.log_path == "log.jsonl");
  }

  TEST_CASE("sha256 matches the reference vectors") {
    CHECK(cli::sha256_bytes("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(cli::sha256_bytes("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

    auto dir = std::filesystem::temp_directory_path() / "mdqf_sha";
    std::filesystem::create_directories(dir);
    const auto path = dir / "abc.txt";
    {
      std::ofstream out(path, std::ios::binary);
      out << "abc";
    }
    CHECK(cli::sha256_file(path.string()) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK_THROWS(cli::sha256_file((dir / "absent").string()));
  }

  TEST_CASE("manifest records command, config, and hashes") {
    auto dir = std::filesystem::temp_directory_path() / "mdqf_manifest";
    std::filesystem::remove_all(dir);

    cli::RunManifest m;
    m.command = "gen-data";
    m.argv = {"mdqf", "gen-data", "--seed", "7"};
    m.seed = 7;
    m.config_json = cli::effective_config_json(cli::default_config());
    m.inputs = {{"in/config.json", cli::sha256_bytes("x")}};
    m.outputs = {{"out/rgb.json", cli::sha256_bytes("y")}};

    const std::string path = cli::write_manifest(m, dir.string());
    CHECK(std::filesystem::exists(path));
    CHECK(std::filesystem::path(path).filename() == "manifest.json");

    const std::string body = slurp(path);
    CHECK(body.find("\"command\": \"gen-data\"") != std::string::npos);
    CHECK(body.find("\"seed\": 7") != std::string::npos);
    CHECK(body.find("in/config.json") != std::string::npos);
    CHECK(body.find(cli::sha256_bytes("y")) != std::string::npos);
    CHECK(body.find("schema_version") != std::string::npos);
    CHECK(body.find("written_unix") != std::string::npos);
  }
}
