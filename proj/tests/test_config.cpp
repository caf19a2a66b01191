#include <filesystem>

#include <gtest/gtest.h>

#include "cdpm/config.hpp"

using namespace cdpm;

namespace {

ExperimentConfig apply(const std::string& text) {
  ExperimentConfig cfg;
  apply_config(parse_config_string(text), cfg);
  return cfg;
}

std::string error_of(const std::string& text) {
  try {
    apply(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool mentions(const std::string& text, const std::string& what) {
  return error_of(text).find(what) != std::string::npos;
}

}  // namespace

TEST(ConfigParse, ValuesCommentsAndSections) {
  const ConfigTable t = parse_config_string(
      "# header\n"
      "[run]\n"
      "seed = 42   # trailing\n"
      "dt_s = 1e-2\n"
      "\n"
      "[controller]\n"
      "scan_points = [-1.25, -0.75, 0.25]\n"
      "backstep_mode = \"fixed-count # not a comment\"\n"
      "[tissue]\n"
      "present = false\n");
  EXPECT_EQ(std::get<double>(t.at("run").at("seed").value), 42.0);
  EXPECT_EQ(t.at("run").at("dt_s").line, 4);
  EXPECT_EQ(std::get<std::vector<double>>(t.at("controller").at("scan_points").value).size(), 3u);
  EXPECT_EQ(std::get<std::string>(t.at("controller").at("backstep_mode").value),
            "fixed-count # not a comment");
  EXPECT_FALSE(std::get<bool>(t.at("tissue").at("present").value));
}

TEST(ConfigParse, SyntaxErrorsCarryLineNumbers) {
  EXPECT_TRUE(mentions("seed = 1\n", "line 1: key outside any section"));
  EXPECT_TRUE(mentions("[run]\nseed = 1\nseed = 2\n", "line 3: duplicate key run.seed"));
  EXPECT_TRUE(mentions("[run]\nseed = abc\n", "line 2: not a number"));
  EXPECT_TRUE(mentions("[run]\nseed = 1.5.2\n", "not a number"));
  EXPECT_TRUE(mentions("[run]\n\nseed\n", "line 3: expected key = value"));
  EXPECT_TRUE(mentions("[run\n", "line 1: bad section header"));
  EXPECT_TRUE(mentions("[detector]\nmode = \"first\n", "unterminated string"));
  EXPECT_TRUE(mentions("[controller]\nscan_points = [1, 2\n", "unterminated array"));
  EXPECT_TRUE(mentions("[run]\nseed =\n", "missing value"));
}

TEST(ConfigApply, SemanticErrors) {
  EXPECT_TRUE(mentions("[bogus]\nx = 1\n", "unknown section [bogus]"));
  EXPECT_TRUE(mentions("[run]\nsead = 1\n", "line 2: unknown key run.sead"));
  EXPECT_TRUE(mentions("[run]\nseed = \"one\"\n", "run.seed must be a number"));
  EXPECT_TRUE(mentions("[run]\nbaseline_samples = 2.5\n", "must be an integer"));
  EXPECT_TRUE(mentions("[tissue]\nkind = \"jelly\"\n", "unknown option 'jelly'"));
  EXPECT_TRUE(mentions("[detector]\nmode = \"third\"\n", "unknown option"));
  EXPECT_TRUE(mentions("[controller]\nbackstep_mode = \"psychic\"\n", "unknown option"));
  EXPECT_TRUE(mentions("[tissue]\npresent = 1\n", "must be true or false"));
  EXPECT_TRUE(mentions("[controller]\nscan_points = 3\n", "must be an array"));
  EXPECT_TRUE(mentions("[detector]\nloaded_group = [0]\n", "tendon numbers 1..4"));
}

TEST(ConfigApply, RangeChecksAfterOverlay) {
  EXPECT_FALSE(error_of("[cable]\nstiffness_N_per_mm = -1\n").empty());
  EXPECT_FALSE(error_of("[friction]\nmu = -0.1\n").empty());
  EXPECT_FALSE(error_of("[tissue]\nkind = \"rigid\"\n").empty());  // soft stiffness
  EXPECT_FALSE(error_of("[controller]\ntarget_force_N = 5\n").empty());
  EXPECT_FALSE(error_of("[run]\ncalibration_k = 0.5\n").empty());
  EXPECT_FALSE(error_of("[quality]\nwidth_N = 0\n").empty());
  EXPECT_FALSE(error_of("[scaffold]\nhalf_width_mm = 0\n").empty());
}

TEST(ConfigApply, OverlaysFields) {
  const ExperimentConfig cfg = apply(
      "[friction]\nmu = 0\n"
      "[tissue]\nkind = \"rigid\"\nstiffness_N_per_mm = 100\nsurface_mm = 0.301\n"
      "[detector]\nmode = \"second-derivative\"\ngroup_rule = \"any\"\nloaded_group = [1, 2]\n"
      "[controller]\nbackstep_mode = \"zero-force\"\nscan_points = [0.5]\n"
      "[run]\nseed = 9\n");
  EXPECT_EQ(cfg.plant.friction.mu, 0.0);
  EXPECT_EQ(cfg.controller.compensation, 1.0);  // follows friction
  EXPECT_EQ(cfg.plant.tissue.kind, TissueKind::Rigid);
  EXPECT_EQ(cfg.detector.mode, DetectorMode::SecondDerivative);
  EXPECT_EQ(cfg.detector.group_rule, GroupRule::Any);
  EXPECT_EQ(cfg.detector.loaded_group, (std::vector<int>{0, 1}));
  EXPECT_EQ(cfg.controller.backstep_mode, BackstepMode::ZeroForce);
  EXPECT_EQ(cfg.plant.sensor.seed, 9u);
  EXPECT_FALSE(cfg.thresholds_given);
  EXPECT_FALSE(cfg.backstep_count_given);
}

TEST(ConfigApply, GivenThresholdsAndCountAreFlagged) {
  const ExperimentConfig cfg =
      apply("[detector]\ndT_th = 0.2\n[controller]\nbackstep_count = 30\n");
  EXPECT_TRUE(cfg.thresholds_given);
  EXPECT_TRUE(cfg.backstep_count_given);
  EXPECT_EQ(cfg.detector.thresholds.dT, 0.2);
  EXPECT_EQ(cfg.controller.backstep_count, 30);
}

TEST(ConfigApply, EmptyFileKeepsDefaults) {
  const ExperimentConfig cfg = apply("");
  const ExperimentConfig def;
  EXPECT_EQ(cfg.plant.friction.mu, def.plant.friction.mu);
  EXPECT_EQ(cfg.plant.dt, 0.01);
}

TEST(ConfigFile, MissingFileIsAConfigError) {
  EXPECT_THROW(load_config_file("/nonexistent/cfg.toml"), ConfigError);
}

TEST(ConfigFile, ShippedConfigsLoad) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(CDPM_CONFIG_DIR)) {
    if (e.path().extension() != ".toml") continue;
    ExperimentConfig cfg;
    EXPECT_NO_THROW(apply_config(load_config_file(e.path().string()), cfg)) << e.path();
    ++n;
  }
  EXPECT_GE(n, 5);
}
