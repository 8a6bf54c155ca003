#include <gtest/gtest.h>

#include <fstream>

#include "histosge/config_file.hpp"
#include "test_support.hpp"

using namespace histosge;

TEST(RunConfig, ParsesKeysCommentsAndWhitespace) {
  const auto cfg = parse_run_config(
      "# tiny run\n"
      "epochs = 3\n"
      "batch_size=16   # trailing comment\n"
      "\n"
      "learning_rate=2.5e-4\n"
      "optimizer=sgd\n"
      "n_heads=3\n"
      "pe_mode=learned_table\n"
      "plain_mhsa=yes\n"
      "patch_w=32\n"
      "extractor=remote\n"
      "remote_url=https://embed.example/v1\n"
      "cache=false\n");
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.train.batch_size, 16);
  EXPECT_EQ(cfg.train.learning_rate, 2.5e-4);
  EXPECT_EQ(cfg.train.optimizer, OptimizerKind::sgd);
  EXPECT_EQ(cfg.model.n_heads, 3);
  EXPECT_EQ(cfg.model.pe_mode, PeMode::learned_table);
  EXPECT_TRUE(cfg.model.plain_mhsa);
  EXPECT_EQ(cfg.preprocess.patch_w, 32);
  EXPECT_EQ(cfg.preprocess.patch_h, 50);
  EXPECT_EQ(cfg.extractor, "remote");
  EXPECT_EQ(cfg.remote_url, "https://embed.example/v1");
  EXPECT_FALSE(cfg.use_cache);
}

TEST(RunConfig, UnknownKeyIsNamed) {
  try {
    parse_run_config("epochs=2\nlearnin_rate=0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "learnin_rate");
    EXPECT_NE(std::string(e.what()).find("learnin_rate"), std::string::npos);
  }
}

TEST(RunConfig, BadValuesAreRejected) {
  EXPECT_THROW(parse_run_config("epochs=many\n"), ConfigError);
  EXPECT_THROW(parse_run_config("optimizer=rmsprop\n"), ConfigError);
  EXPECT_THROW(parse_run_config("pe_mode=rotary\n"), ConfigError);
  EXPECT_THROW(parse_run_config("just a line\n"), ConfigError);
  EXPECT_THROW(parse_run_config("extractor=uni\n"), ConfigError);
}

TEST(RunConfig, CanonicalTextReparsesToSameConfig) {
  const auto cfg = parse_run_config("epochs=7\ndropout=0.25\nweight_decay=0.01\nlr_schedule=cosine\n");
  const auto again = parse_run_config(canonical_text(cfg));
  EXPECT_EQ(canonical_text(again), canonical_text(cfg));
  EXPECT_NE(canonical_text(cfg).find("epochs=7\n"), std::string::npos);
}

TEST(RunConfig, LoadsFromFileOnTopOfBase) {
  testing_support::TempDir tmp;
  {
    std::ofstream out(tmp / "run.cfg");
    out << "epochs=4\n";
  }
  RunConfig base;
  base.train.seed = 99;
  const auto cfg = load_run_config(tmp / "run.cfg", base);
  EXPECT_EQ(cfg.train.epochs, 4);
  EXPECT_EQ(cfg.train.seed, 99u);
  EXPECT_THROW(load_run_config(tmp / "nope.cfg"), FormatError);
}
