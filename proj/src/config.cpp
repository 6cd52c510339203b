#include "flpoison/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace flpoison {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that any
// leftover (misspelled) key can be reported with its full path.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      const auto value = v->get<std::int64_t>();
      if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max()) {
        throw ConfigError(field(key), "integer out of range");
      }
      out = static_cast<int>(value);
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  std::optional<Section> child(const std::string& key) {
    if (const json* v = find(key)) return Section(*v, field(key));
    return std::nullopt;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()), "unknown key");
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(Section& section, const std::string& key, Enum& out, Parse parse) {
  std::string name;
  section.read(key, name);
  if (section.find(key) == nullptr) return;
  try {
    out = parse(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section.field(key), e.what());
  }
}

void read_trigger(Section& s, TriggerSpec& trigger) {
  s.read("size_fraction", trigger.size_fraction);
  s.read("count", trigger.count);
  read_enum(s, "position", trigger.position, trigger_position_from_string);
  if (const json* color = s.find("color")) {
    if (!color->is_array() || color->size() != 3) throw ConfigError(s.field("color"), "expected three numbers");
    for (std::size_t c = 0; c < 3; ++c) {
      if (!(*color)[c].is_number()) throw ConfigError(s.field("color"), "expected three numbers");
      trigger.color[c] = (*color)[c].get<float>();
    }
  }
  s.finish();
}

void read_attack(Section& s, AttackKind& attack) {
  read_enum(s, "kind", attack.tag, attack_tag_from_string);
  s.read("label_flip_factor", attack.label_flip_factor);
  if (auto msa = s.child("msa")) {
    msa->read("shuffle_rows", attack.msa.shuffle_rows);
    if (const json* beta = msa->find("scale_beta")) {
      if (beta->is_null()) {
        attack.msa.scale_beta.reset();
      } else if (beta->is_number()) {
        attack.msa.scale_beta = beta->get<double>();
      } else {
        throw ConfigError(msa->field("scale_beta"), "expected a number or null");
      }
    }
    msa->finish();
  }
  if (auto fl = s.child("flstealth")) {
    fl->read("kappa", attack.flstealth.kappa);
    fl->read("byz_epochs", attack.flstealth.byz_epochs);
    fl->read("byz_learning_rate", attack.flstealth.byz_learning_rate);
    fl->finish();
  }
  if (auto ota = s.child("ota")) {
    ota->read("poison_fraction", attack.ota.poison_fraction);
    ota->read("turn_magnitude", attack.ota.turn_magnitude);
    ota->read("direction", attack.ota.direction);
    if (auto trig = ota->child("trigger")) read_trigger(*trig, attack.ota.trigger);
    ota->finish();
  }
  s.finish();
}

void read_config_sections(Section& root, FederationConfig& config) {
  root.read("rounds", config.rounds);
  root.read("total_clients", config.total_clients);
  root.read("malicious_count", config.malicious_count);
  root.read("sampled_per_round", config.sampled_per_round);
  root.read("score_window", config.score_window);

  if (auto data = root.child("data")) {
    data->read("per_client", config.per_client);
    data->read("test_n", config.test_n);
    data->read("defense_n", config.defense_n);
    data->read("image_height", config.scene.height);
    data->read("image_width", config.scene.width);
    data->read("curvature_max", config.scene.curvature_max);
    data->read("noise_max", config.scene.noise_max);
    data->finish();
  }
  if (auto model = root.child("model")) {
    if (const json* hidden = model->find("hidden_layers")) {
      if (!hidden->is_array()) throw ConfigError(model->field("hidden_layers"), "expected an array of integers");
      config.hidden_layers.clear();
      for (const json& w : *hidden) {
        if (!w.is_number_unsigned() || w.get<std::uint64_t>() == 0) {
          throw ConfigError(model->field("hidden_layers"), "widths must be positive integers");
        }
        config.hidden_layers.push_back(w.get<std::size_t>());
      }
    }
    model->finish();
  }
  if (auto training = root.child("training")) {
    training->read("epochs", config.hyper.epochs);
    training->read("batch_size", config.hyper.batch_size);
    training->read("learning_rate", config.hyper.learning_rate);
    training->read("adam_beta1", config.hyper.adam_beta1);
    training->read("adam_beta2", config.hyper.adam_beta2);
    training->read("adam_eps", config.hyper.adam_eps);
    training->finish();
  }
  if (auto seeds = root.child("seeds")) {
    seeds->read("data_seed", config.data_seed);
    seeds->read("train_seed", config.train_seed);
    seeds->read("sample_seed", config.sample_seed);
    seeds->finish();
  }
  if (auto attack = root.child("attack")) read_attack(*attack, config.attack);
  if (auto defense = root.child("defense")) {
    read_enum(*defense, "kind", config.defense.tag, defense_tag_from_string);
    defense->read("f", config.defense.f);
    defense->read("m", config.defense.m);
    defense->read("beta", config.defense.beta);
    defense->read("n_exclude", config.defense.n_exclude);
    defense->finish();
  }
}

GridSpec read_grid(Section& s) {
  GridSpec grid;
  auto read_list = [&s](const std::string& key) -> const json& {
    const json* v = s.find(key);
    if (v == nullptr) throw ConfigError(s.field(key), "missing");
    if (!v->is_array() || v->empty()) throw ConfigError(s.field(key), "expected a non-empty array");
    return *v;
  };
  for (const json& a : read_list("attacks")) {
    if (!a.is_string()) throw ConfigError(s.field("attacks"), "expected attack names");
    try {
      grid.attacks.push_back(attack_tag_from_string(a.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(s.field("attacks"), e.what());
    }
  }
  for (const json& d : read_list("defenses")) {
    if (!d.is_string()) throw ConfigError(s.field("defenses"), "expected defense names");
    try {
      grid.defenses.push_back(defense_tag_from_string(d.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(s.field("defenses"), e.what());
    }
  }
  for (const json& seed : read_list("seeds")) {
    if (!seed.is_number_unsigned()) throw ConfigError(s.field("seeds"), "expected non-negative integers");
    grid.seeds.push_back(seed.get<std::uint64_t>());
  }
  s.finish();
  return grid;
}

}  // namespace

json config_to_json(const FederationConfig& c) {
  json doc;
  doc["rounds"] = c.rounds;
  doc["total_clients"] = c.total_clients;
  doc["malicious_count"] = c.malicious_count;
  doc["sampled_per_round"] = c.sampled_per_round;
  doc["score_window"] = c.score_window;
  doc["data"] = {{"per_client", c.per_client},         {"test_n", c.test_n},
                 {"defense_n", c.defense_n},           {"image_height", c.scene.height},
                 {"image_width", c.scene.width},       {"curvature_max", c.scene.curvature_max},
                 {"noise_max", c.scene.noise_max}};
  doc["model"] = {{"hidden_layers", c.hidden_layers}};
  doc["training"] = {{"epochs", c.hyper.epochs},
                     {"batch_size", c.hyper.batch_size},
                     {"learning_rate", c.hyper.learning_rate},
                     {"adam_beta1", c.hyper.adam_beta1},
                     {"adam_beta2", c.hyper.adam_beta2},
                     {"adam_eps", c.hyper.adam_eps}};
  doc["seeds"] = {{"data_seed", c.data_seed}, {"train_seed", c.train_seed}, {"sample_seed", c.sample_seed}};

  const auto& a = c.attack;
  json trigger = {{"size_fraction", a.ota.trigger.size_fraction},
                  {"color", a.ota.trigger.color},
                  {"position", to_string(a.ota.trigger.position)},
                  {"count", a.ota.trigger.count}};
  doc["attack"] = {
      {"kind", to_string(a.tag)},
      {"label_flip_factor", a.label_flip_factor},
      {"msa", {{"shuffle_rows", a.msa.shuffle_rows}, {"scale_beta", a.msa.scale_beta ? json(*a.msa.scale_beta) : json()}}},
      {"flstealth",
       {{"kappa", a.flstealth.kappa},
        {"byz_epochs", a.flstealth.byz_epochs},
        {"byz_learning_rate", a.flstealth.byz_learning_rate}}},
      {"ota",
       {{"poison_fraction", a.ota.poison_fraction},
        {"turn_magnitude", a.ota.turn_magnitude},
        {"direction", a.ota.direction},
        {"trigger", trigger}}}};
  doc["defense"] = {{"kind", to_string(c.defense.tag)},
                    {"f", c.defense.f},
                    {"m", c.defense.m},
                    {"beta", c.defense.beta},
                    {"n_exclude", c.defense.n_exclude}};
  return doc;
}

FederationConfig config_from_json(const json& doc) {
  FederationConfig config;
  Section root(doc, "");
  read_config_sections(root, config);
  root.finish();
  config.validate();
  return config;
}

json grid_to_json(const GridSpec& grid) {
  json doc;
  doc["attacks"] = json::array();
  for (AttackTag a : grid.attacks) doc["attacks"].push_back(to_string(a));
  doc["defenses"] = json::array();
  for (DefenseTag d : grid.defenses) doc["defenses"].push_back(to_string(d));
  doc["seeds"] = grid.seeds;
  return doc;
}

GridSpec grid_from_json(const json& doc) {
  Section s(doc, "grid");
  return read_grid(s);
}

ConfigFile parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  ConfigFile file;
  Section root(doc, "");
  read_config_sections(root, file.config);
  if (auto grid = root.child("grid")) file.grid = read_grid(*grid);
  root.finish();
  file.config.validate();
  return file;
}

ConfigFile load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string canonical_config_text(const FederationConfig& config) { return config_to_json(config).dump(); }

std::string config_hash(const FederationConfig& config) {
  const std::string text = canonical_config_text(config);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("config_hash: SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

FederationConfig with_seed(FederationConfig config, std::uint64_t seed) {
  config.data_seed = seed;
  config.train_seed = seed;
  config.sample_seed = seed;
  return config;
}

}  // namespace flpoison
