#include <gtest/gtest.h>

#include <json.hpp>

#include "ken/config.hpp"
#include "ken/errors.hpp"

using nlohmann::json;

TEST(TrainConfigDefaults, EmptyObjectYieldsReferenceSettings) {
  ken::TrainConfig c = ken::parse_train_config(json::object());
  EXPECT_EQ(c.d, 32);
  EXPECT_EQ(c.d_c, 32);
  EXPECT_EQ(c.d_s, 32);
  EXPECT_EQ(c.d_e, 8);
  EXPECT_EQ(c.d_e_out, 8);
  EXPECT_EQ(c.d_f, 16);
  EXPECT_EQ(c.d_ff, 64);  // 2 * d unless set
  EXPECT_EQ(c.heads, 8);
  EXPECT_EQ(c.expert_heads, 1);
  EXPECT_EQ(c.depth, 1);
  EXPECT_EQ(c.experts, 3);
  EXPECT_EQ(c.processors, 5);
  EXPECT_EQ(c.gamma, 0.7);
  EXPECT_EQ(c.lambda, 0.2);
  EXPECT_EQ(c.dropout, 0.5);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.eps, 1e-8);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_EQ(c.epochs, 40);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.out_dir, "runs/run");
  EXPECT_TRUE(c.dataset_dir.empty());
  EXPECT_EQ(c.split, (std::array<double, 3>{0.8, 0.1, 0.1}));
  EXPECT_TRUE(ken::disabled_names(c.flags).empty());
}

TEST(TrainConfigDefaults, FeedForwardWidthTracksEmbeddingWidth) {
  ken::TrainConfig c = ken::parse_train_config(json{{"model", {{"d", 12}, {"heads", 4}}}});
  EXPECT_EQ(c.d_ff, 24);
  c = ken::parse_train_config(json{{"model", {{"d", 12}, {"heads", 4}, {"d_ff", 5}}}});
  EXPECT_EQ(c.d_ff, 5);
}

TEST(TrainConfigDefaults, SyntheticInheritsModelDimsAndRunSeed) {
  json j = {{"model", {{"d", 16}, {"d_c", 6}}},
            {"train", {{"seed", 99}}},
            {"data", {{"synthetic", {{"samples", 20}}}}}};
  ken::TrainConfig c = ken::parse_train_config(j);
  EXPECT_EQ(c.synthetic.d, 16);
  EXPECT_EQ(c.synthetic.d_c, 6);
  EXPECT_EQ(c.synthetic.samples, 20);
  EXPECT_EQ(c.synthetic.seed, 99u);  // falls back to the run seed

  j["data"]["synthetic"]["seed"] = 7;
  c = ken::parse_train_config(j);
  EXPECT_EQ(c.synthetic.seed, 7u);
}

TEST(TrainConfigParsing, RoundTripThroughJsonIsLossless) {
  json j = {{"run_name", "trial"},
            {"model", {{"d", 8}, {"d_c", 4}, {"heads", 2}, {"experts", 2}, {"gamma", 0.25}}},
            {"train", {{"lr", 0.01}, {"epochs", 3}, {"lambda", 0.0}, {"seed", 5}}},
            {"data", {{"synthetic", {{"samples", 12}, {"class_separation", 2.5}}},
                      {"split", {0.5, 0.25, 0.25}}}},
            {"disable", {"balance", "gate"}}};
  ken::TrainConfig a = ken::parse_train_config(j);
  ken::TrainConfig b = ken::parse_train_config(ken::config_to_json(a));
  EXPECT_EQ(ken::config_to_json(a).dump(), ken::config_to_json(b).dump());
  EXPECT_FALSE(a.flags.balance);
  EXPECT_FALSE(a.flags.gate);
  EXPECT_TRUE(a.flags.emotion);
  EXPECT_EQ(ken::disabled_names(a.flags), (std::vector<std::string>{"balance", "gate"}));
}

TEST(TrainConfigParsing, DatasetDirSuppressesSyntheticEcho) {
  ken::TrainConfig c = ken::parse_train_config(json{{"data", {{"dir", "some/dataset"}}}});
  EXPECT_EQ(c.dataset_dir, "some/dataset");
  json echo = ken::config_to_json(c);
  EXPECT_TRUE(echo["data"].contains("dir"));
  EXPECT_FALSE(echo["data"].contains("synthetic"));
}

TEST(TrainConfigParsing, RejectsUnknownKeys) {
  EXPECT_THROW(ken::parse_train_config(json{{"lamda", 0.1}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"model", {{"dd", 4}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"train", {{"learning_rate", 0.1}}}}),
               ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"data", {{"path", "x"}}}}), ken::ConfigError);
}

TEST(TrainConfigParsing, RejectsUnknownAblationName) {
  try {
    ken::parse_train_config(json{{"disable", {"attention"}}});
    FAIL() << "expected ConfigError";
  } catch (const ken::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("attention"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("coattention"), std::string::npos);
  }
}

TEST(TrainConfigParsing, RejectsConflictingDataSources) {
  json j = {{"data", {{"dir", "x"}, {"synthetic", {{"samples", 4}}}}}};
  EXPECT_THROW(ken::parse_train_config(j), ken::ConfigError);
}

TEST(TrainConfigValidation, RejectsOutOfRangeValues) {
  EXPECT_THROW(ken::parse_train_config(json{{"model", {{"gamma", 1.5}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"model", {{"gamma", -0.1}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"train", {{"lambda", -0.2}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"train", {{"dropout", 1.0}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"train", {{"lr", 0.0}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"train", {{"batch_size", 0}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"model", {{"d", 10}, {"heads", 3}}}}),
               ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"model", {{"processors", 0}}}}), ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"data", {{"split", {0.5, 0.5}}}}}),
               ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"data", {{"split", {0.6, 0.2, 0.1}}}}}),
               ken::ConfigError);
  EXPECT_THROW(ken::parse_train_config(json{{"data", {{"split", {1.0, 0.0, 0.0}}}}}),
               ken::ConfigError);
}

TEST(TrainConfigValidation, GammaEndpointsAreLegal) {
  EXPECT_NO_THROW(ken::parse_train_config(json{{"model", {{"gamma", 0.0}}}}));
  EXPECT_NO_THROW(ken::parse_train_config(json{{"model", {{"gamma", 1.0}}}}));
  EXPECT_NO_THROW(ken::parse_train_config(json{{"train", {{"lambda", 0.0}}}}));
  EXPECT_NO_THROW(ken::parse_train_config(json{{"train", {{"dropout", 0.0}}}}));
}

TEST(TrainConfigFiles, MissingAndMalformedFilesReportConfigError) {
  EXPECT_THROW(ken::load_train_config("/nonexistent/cfg.json"), ken::ConfigError);
  const auto path = std::filesystem::temp_directory_path() / "ken_bad_config.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(ken::load_train_config(path), ken::ConfigError);
  std::filesystem::remove(path);
}
