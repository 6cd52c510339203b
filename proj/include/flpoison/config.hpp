#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "flpoison/attacks.hpp"
#include "flpoison/defenses.hpp"
#include "flpoison/federation.hpp"

namespace flpoison {

/// Invalid configuration. field() is the dotted path of the offending key,
/// e.g. "attack.ota.poison_fraction".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct GridSpec {
  std::vector<AttackTag> attacks;
  std::vector<DefenseTag> defenses;
  std::vector<std::uint64_t> seeds;
};

struct ConfigFile {
  FederationConfig config;
  std::optional<GridSpec> grid;
};

nlohmann::json config_to_json(const FederationConfig& config);
// Strict: unknown keys and wrongly typed values raise ConfigError. Missing
// keys keep their defaults. The result is validated.
FederationConfig config_from_json(const nlohmann::json& doc);

nlohmann::json grid_to_json(const GridSpec& grid);
GridSpec grid_from_json(const nlohmann::json& doc);

ConfigFile parse_config_text(const std::string& text);
ConfigFile load_config_file(const std::string& path);

// Canonical text: compact JSON with sorted keys.
std::string canonical_config_text(const FederationConfig& config);
// SHA-256 (hex) of the canonical text.
std::string config_hash(const FederationConfig& config);

// All three seeds set from one grid seed.
FederationConfig with_seed(FederationConfig config, std::uint64_t seed);

}  // namespace flpoison
