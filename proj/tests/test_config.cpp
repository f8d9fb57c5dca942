#include "hexst/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace hexst;

TEST(RunConfig, JsonRoundTrip) {
    RunConfig c;
    c.synth.radius = 7;
    c.synth.tokens = TokenRule::pure_noise;
    c.model.window = WindowKind::square;
    c.model.pe = PeKind::rope2d;
    c.model.radii = {2, 3, 5};
    c.train.optimizer = OptimizerKind::sgd;
    c.train.toggles.tfa = false;
    c.eval.pooling = AucPooling::per_gene;
    const json j = to_json(c);
    const RunConfig back = run_config_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
    EXPECT_EQ(back.model.radii, c.model.radii);
    EXPECT_EQ(back.synth.tokens, TokenRule::pure_noise);
}

TEST(RunConfig, PartialFileKeepsDefaults) {
    const RunConfig c = run_config_from_json(json::parse(R"({"train": {"steps": 12}})"));
    EXPECT_EQ(c.train.steps, 12);
    EXPECT_EQ(c.train.lr, TrainConfig{}.lr);
    EXPECT_EQ(to_json(c.model).dump(), to_json(ModelConfig{}).dump());
}

TEST(RunConfig, UnknownKeysAndBadValuesAreInputErrors) {
    EXPECT_THROW(run_config_from_json(json::parse(R"({"trian": {}})")), InputError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"model": {"dimm": 3}})")), InputError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"model": {"window": "round"}})")), InputError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"train": {"steps": "many"}})")), InputError);
}

TEST(RunConfig, FileErrors) {
    EXPECT_THROW(load_run_config("/nonexistent/hexst.json"), IoError);
    const auto path = std::filesystem::temp_directory_path() / "hexst_bad_config.json";
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_run_config(path), InputError);
}
