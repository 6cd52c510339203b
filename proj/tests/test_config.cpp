#include <gtest/gtest.h>

#include <fstream>

#include "flpoison/config.hpp"
#include "helpers.hpp"

using namespace flpoison;
using nlohmann::json;

namespace {

std::string field_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const FederationConfig defaults;
  EXPECT_EQ(config_from_json(config_to_json(defaults)), defaults);
  EXPECT_EQ(config_from_json(json::object()), defaults);
}

TEST(Config, NonDefaultValuesRoundTrip) {
  FederationConfig c = flpoison::testing::tiny_config();
  c.attack.tag = AttackTag::ota;
  c.attack.msa.scale_beta = 2.5;
  c.attack.ota.trigger.color = {0.25F, 0.5F, 1.0F};
  c.attack.ota.trigger.position = TriggerPosition::center;
  c.attack.ota.trigger.size_fraction = 0.25;
  c.attack.ota.direction = -1;
  c.defense.tag = DefenseTag::loss_fusion;
  c.hyper.learning_rate = 3e-4;
  c.data_seed = 18446744073709551615ULL;
  c.hidden_layers = {16, 8, 4};
  const auto back = config_from_json(json::parse(config_to_json(c).dump()));
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto file = parse_config_text(R"({"rounds": 5, "attack": {"kind": "msa", "msa": {"scale_beta": 3}}})");
  FederationConfig expected;
  expected.rounds = 5;
  expected.attack.tag = AttackTag::msa;
  expected.attack.msa.scale_beta = 3.0;
  EXPECT_EQ(file.config, expected);
  EXPECT_FALSE(file.grid.has_value());
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_EQ(field_of(R"({"round": 5})"), "round");
  EXPECT_EQ(field_of(R"({"data": {"per_clients": 5}})"), "data.per_clients");
  EXPECT_EQ(field_of(R"({"attack": {"ota": {"trigger": {"colour": [1,0,0]}}}})"), "attack.ota.trigger.colour");
  EXPECT_EQ(field_of(R"({"grid": {"attacks": ["none"], "defenses": ["fedavg"], "seeds": [1], "x": 1}})"), "grid.x");
}

TEST(Config, WrongTypesNameTheirPath) {
  EXPECT_EQ(field_of(R"({"rounds": "30"})"), "rounds");
  EXPECT_EQ(field_of(R"({"rounds": 2.5})"), "rounds");
  EXPECT_EQ(field_of(R"({"seeds": {"data_seed": -1}})"), "seeds.data_seed");
  EXPECT_EQ(field_of(R"({"training": {"learning_rate": "fast"}})"), "training.learning_rate");
  EXPECT_EQ(field_of(R"({"attack": {"kind": "sybil"}})"), "attack.kind");
  EXPECT_EQ(field_of(R"({"defense": {"kind": 3}})"), "defense.kind");
  EXPECT_EQ(field_of(R"({"model": {"hidden_layers": [64, 0]}})"), "model.hidden_layers");
  EXPECT_EQ(field_of(R"({"attack": {"msa": {"scale_beta": "big"}}})"), "attack.msa.scale_beta");
  EXPECT_EQ(field_of(R"({"data": 5})"), "data");
}

TEST(Config, OutOfRangeValuesNameTheirPath) {
  EXPECT_EQ(field_of(R"({"rounds": 0})"), "rounds");
  EXPECT_EQ(field_of(R"({"malicious_count": 41})"), "malicious_count");
  EXPECT_EQ(field_of(R"({"attack": {"ota": {"poison_fraction": 1.5}}})"), "attack.ota.poison_fraction");
  EXPECT_EQ(field_of(R"({"attack": {"msa": {"scale_beta": -1}}})"), "attack.msa.scale_beta");
  EXPECT_EQ(field_of(R"({"defense": {"kind": "trimmed_mean", "beta": 5}})"), "defense.beta");
  EXPECT_EQ(field_of(R"({"data": {"noise_max": 0.5}})"), "data.noise_max");
  EXPECT_EQ(field_of(R"({"rounds": 10000000000})"), "rounds");
}

TEST(Config, InvalidJsonIsAConfigError) {
  EXPECT_EQ(field_of("{rounds: 3"), "<file>");
  EXPECT_EQ(field_of("[]"), "<root>");
}

TEST(Config, GridSection) {
  const auto file = parse_config_text(
      R"({"grid": {"attacks": ["none", "ota"], "defenses": ["fedavg", "loss_fusion"], "seeds": [1, 2, 3]}})");
  ASSERT_TRUE(file.grid.has_value());
  EXPECT_EQ(file.grid->attacks, (std::vector<AttackTag>{AttackTag::none, AttackTag::ota}));
  EXPECT_EQ(file.grid->defenses, (std::vector<DefenseTag>{DefenseTag::fedavg, DefenseTag::loss_fusion}));
  EXPECT_EQ(file.grid->seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  const GridSpec back = grid_from_json(grid_to_json(*file.grid));
  EXPECT_EQ(back.attacks, file.grid->attacks);
  EXPECT_EQ(back.seeds, file.grid->seeds);

  EXPECT_EQ(field_of(R"({"grid": {"attacks": [], "defenses": ["fedavg"], "seeds": [1]}})"), "grid.attacks");
  EXPECT_EQ(field_of(R"({"grid": {"attacks": ["none"], "defenses": ["median"], "seeds": [1]}})"), "grid.defenses");
  EXPECT_EQ(field_of(R"({"grid": {"attacks": ["none"], "defenses": ["fedavg"]}})"), "grid.seeds");
}

TEST(Config, GridSectionIsNotPartOfAnExperimentConfig) {
  EXPECT_THROW(config_from_json(json::parse(R"({"grid": {}})")), ConfigError);
}

TEST(Config, LoadsFromFile) {
  const auto dir = flpoison::testing::scratch_dir("config_file");
  std::ofstream(dir / "c.json") << R"({"rounds": 4})";
  EXPECT_EQ(load_config_file((dir / "c.json").string()).config.rounds, 4);
  EXPECT_THROW(load_config_file((dir / "missing.json").string()), std::runtime_error);
}

TEST(ConfigHash, StableHexDigestOfCanonicalText) {
  const FederationConfig c;
  const std::string h = config_hash(c);
  EXPECT_EQ(h.size(), 64U);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(h, config_hash(config_from_json(json::parse(canonical_config_text(c)))));
  // Key order in the input does not matter.
  const auto a = parse_config_text(R"({"rounds": 7, "total_clients": 20})").config;
  const auto b = parse_config_text(R"({"total_clients": 20, "rounds": 7})").config;
  EXPECT_EQ(config_hash(a), config_hash(b));
  // Regression guard for the canonical encoding of the defaults.
  EXPECT_EQ(h, "ca9d140fe95a99cb8f1446530187a6fe16669db62d56c3d1982f6fd44599bdb6");
}

TEST(ConfigHash, EveryFieldMatters) {
  const FederationConfig base;
  const std::string h = config_hash(base);
  std::vector<FederationConfig> variants(6, base);
  variants[0].rounds = 31;
  variants[1].attack.ota.trigger.color[2] = 0.5F;
  variants[2].defense.n_exclude = 3;
  variants[3].sample_seed = 4;
  variants[4].attack.msa.scale_beta = 1.0;
  variants[5].hyper.adam_eps = 1e-7;
  for (const auto& v : variants) EXPECT_NE(config_hash(v), h);
}

TEST(ConfigSeeds, WithSeedSetsAllThree) {
  const auto c = with_seed(FederationConfig{}, 9);
  EXPECT_EQ(c.data_seed, 9U);
  EXPECT_EQ(c.train_seed, 9U);
  EXPECT_EQ(c.sample_seed, 9U);
}

TEST(Config, DocumentedExampleParses) {
  const auto file = load_config_file(FLPOISON_EXAMPLE_CONFIG);
  FederationConfig expected;
  expected.attack.tag = AttackTag::ota;
  expected.defense.tag = DefenseTag::loss_fusion;
  EXPECT_EQ(file.config, expected);
  ASSERT_TRUE(file.grid.has_value());
  EXPECT_EQ(file.grid->attacks.size(), 5U);
  EXPECT_EQ(file.grid->defenses.size(), all_defense_tags().size());
}
