#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fedjets/error.hpp"
#include "fedjets/fl/config.hpp"
#include "fedjets/fl/experiment.hpp"
#include "fedjets/nn/checkpoint.hpp"
#include "oracle.hpp"

using namespace fedjets;
using nlohmann::json;

TEST_CASE("empty config yields the defaults and echoes back unchanged") {
  const auto c = fl::config_from_json(json::object());
  CHECK(c.federation.num_experts == 5);
  CHECK(c.federation.top_k == 2);
  CHECK(c.training.local_iterations == -1);
  const auto echo = fl::config_to_json(c);
  CHECK(fl::config_to_json(fl::config_from_json(echo)) == echo);
}

TEST_CASE("unknown keys, wrong types and negative counts are rejected") {
  CHECK_THROWS_AS(fl::config_from_json(json{{"trainin", json::object()}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json{{"training", {{"lrr", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json{{"training", {{"rounds", -3}}}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json{{"training", {{"rounds", 2.5}}}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json{{"training", {{"lr", "fast"}}}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json{{"training", {{"local_iterations", -2}}}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json{{"training", {{"method", "fedsgd"}}}}), ConfigError);
  CHECK_THROWS_AS(fl::config_from_json(json::array()), ConfigError);
}

TEST_CASE("semantic validation") {
  auto bad = [](auto mutate) {
    auto j = fl::config_to_json(oracle::toy_config());
    mutate(j);
    CHECK_THROWS_AS(fl::config_from_json(j), ConfigError);
  };
  bad([](json& j) { j["federation"]["top_k"] = 3; });               // K > M
  bad([](json& j) { j["federation"]["top_k"] = 0; });
  bad([](json& j) { j["federation"]["anchors_per_round"] = 3; });   // more than M anchors
  bad([](json& j) { j["federation"]["num_clients"] = 2; });         // no normal clients
  bad([](json& j) { j["training"]["batch_size"] = 0; });
  bad([](json& j) { j["data"]["labels_per_client"] = 5; });         // more than C
}

TEST_CASE("overrides set dotted paths with JSON values") {
  json j = json::object();
  fl::apply_override(j, "training.lr=0.05");
  fl::apply_override(j, "training.method=fedavg");
  fl::apply_override(j, "model.hidden=[8,8]");
  const auto c = fl::config_from_json(j);
  CHECK(c.training.lr == 0.05);
  CHECK(c.training.method == fl::Method::fedavg);
  CHECK(c.model.hidden == std::vector<std::size_t>{8, 8});
  CHECK_THROWS_AS(fl::apply_override(j, "training.lr"), ConfigError);
  CHECK_THROWS_AS(fl::apply_override(j, "training..lr=1"), ConfigError);
}

TEST_CASE("config files: missing is an I/O error, malformed is a config error") {
  const auto dir = std::filesystem::temp_directory_path() / "fedjets_tests";
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(fl::load_config(dir / "nope.json"), IoError);
  {
    std::ofstream(dir / "broken.json") << "{\"training\": ";
  }
  CHECK_THROWS_AS(fl::load_config(dir / "broken.json"), ConfigError);
  {
    std::ofstream(dir / "ok.json") << "{\"training\": {\"rounds\": 4}}";
  }
  CHECK(fl::load_config(dir / "ok.json", {"training.rounds=9"}).training.rounds == 9);
}

TEST_CASE("pretraining stops at the target and its recorded accuracy is reproducible") {
  const auto c = oracle::toy_config();
  const auto split = fl::make_data(c);
  const auto spec = fl::expert_spec_for(c);
  const auto r = fl::pretrain_common(spec, split.train, split.test, 0.6, 20, 0.05, 0.9, 16, 3);
  REQUIRE(r.reached);
  CHECK(r.accuracy >= 0.6);
  CHECK(r.checkpoint.meta.at("accuracy").get<double>() == r.accuracy);
  const double again =
      nn::accuracy(nn::argmax_rows(nn::forward(spec, r.checkpoint.params, split.test.inputs)), split.test.labels);
  CHECK(again == r.accuracy);

  // A larger budget never finishes earlier for the same target.
  const auto a = fl::pretrain_common(spec, split.train, split.test, 0.9, 1, 0.05, 0.9, 16, 3);
  const auto b = fl::pretrain_common(spec, split.train, split.test, 0.9, 5, 0.05, 0.9, 16, 3);
  CHECK(b.steps >= a.steps);
  CHECK((b.reached || !a.reached));

  const auto chance = fl::pretrain_common(spec, split.train, split.test, 0.25, 5, 0.05, 0.9, 16, 3);
  CHECK(chance.reached);
  CHECK(chance.steps == 0);

  const auto never = fl::pretrain_common(spec, split.train, split.test, 1.01, 1, 0.05, 0.9, 16, 3);
  CHECK_FALSE(never.reached);
}

TEST_CASE("damaged checkpoints raise I/O errors") {
  const auto spec = nn::NetSpec::mlp(3, {4}, 2);
  Rng rng(1);
  nn::Checkpoint ck{spec, nn::init_params(spec, rng)};
  auto bytes = nn::encode_checkpoint(ck);
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  CHECK_THROWS_AS(nn::decode_checkpoint(cut), IoError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(nn::decode_checkpoint(magic), IoError);
  CHECK_THROWS_AS(nn::load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}
