#include "config_file.hpp"

#include <cstdlib>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "hkt/error.hpp"

namespace hkt::cli {

namespace {

Section read_section(const YAML::Node& node, const std::string& name) {
  Section out;
  if (!node) return out;
  if (!node.IsMap()) throw ConfigError("config section '" + name + "' must be a mapping");
  for (const auto& kv : node) {
    if (!kv.second.IsScalar())
      throw ConfigError("config key '" + name + "." + kv.first.as<std::string>() +
                        "' must be a scalar");
    out[kv.first.as<std::string>()] = kv.second.as<std::string>();
  }
  return out;
}

double to_double(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("data config: '" + k + "' expects a number, got '" + v + "'");
}

std::size_t to_size(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos == v.size() && !v.empty() && v[0] != '-') return std::size_t(x);
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + k + "' expects a non-negative integer, got '" + v + "'");
}

}  // namespace

ConfigFile load_config(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read config '" + path.string() + "'");
  } catch (const YAML::Exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  ConfigFile cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw ConfigError("config '" + path.string() + "' must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "model" && key != "train" && key != "data")
      throw ConfigError("unknown config section '" + key + "'");
  }
  cfg.model = read_section(root["model"], "model");
  cfg.train = read_section(root["train"], "train");
  cfg.data = read_section(root["data"], "data");
  return cfg;
}

void apply_override(ConfigFile& cfg, const std::string& a) {
  const auto eq = a.find('='), dot = a.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override '" + a + "' is not section.key=value");
  const std::string section = a.substr(0, dot), key = a.substr(dot + 1, eq - dot - 1);
  const std::string value = a.substr(eq + 1);
  if (section == "model") cfg.model[key] = value;
  else if (section == "train") cfg.train[key] = value;
  else if (section == "data") cfg.data[key] = value;
  else throw ConfigError("unknown config section '" + section + "'");
}

data::ListOpsSpec listops_spec_from(const Section& s) {
  data::ListOpsSpec spec;
  for (const auto& [k, v] : s) {
    if (k == "max_depth") spec.max_depth = to_size(k, v);
    else if (k == "max_arity") spec.max_arity = to_size(k, v);
    else if (k == "seq_len") spec.seq_len = to_size(k, v);
    else if (k == "n_train") spec.n_train = to_size(k, v);
    else if (k == "n_val") spec.n_val = to_size(k, v);
    else if (k == "n_test") spec.n_test = to_size(k, v);
    else if (k == "seed") spec.seed = to_size(k, v);
    else if (k == "subexpr_prob") spec.subexpr_prob = to_double(k, v);
    else throw ConfigError("unknown data config key '" + k + "'");
  }
  return spec;
}

Resolved resolve(const ConfigFile& cfg) {
  Resolved r;
  r.model = model::ModelConfig::from_map(cfg.model);
  r.train = train::TrainConfig::from_map(cfg.train);
  r.data = listops_spec_from(cfg.data);
  return r;
}

std::filesystem::path output_path(const std::filesystem::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("HKT_OUTPUT_ROOT"); root && *root)
    return std::filesystem::path(root) / p;
  return p;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text)) out.push_back(to_size("list", s));
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

}  // namespace hkt::cli
