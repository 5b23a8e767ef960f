#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hkt/data/listops.hpp"
#include "hkt/model/config.hpp"
#include "hkt/train/trainer.hpp"

namespace hkt::cli {

using Section = std::map<std::string, std::string>;

// model / train / data sections of a YAML file, flat key: value pairs.
struct ConfigFile {
  Section model, train, data;
};

ConfigFile load_config(const std::filesystem::path& path);

// "section.key=value"
void apply_override(ConfigFile& cfg, const std::string& assignment);

data::ListOpsSpec listops_spec_from(const Section& s);

struct Resolved {
  model::ModelConfig model;
  train::TrainConfig train;
  data::ListOpsSpec data;
};

Resolved resolve(const ConfigFile& cfg);

// Relative paths land under $HKT_OUTPUT_ROOT when it is set.
std::filesystem::path output_path(const std::filesystem::path& p);

std::vector<std::size_t> parse_size_list(const std::string& text);
std::vector<std::string> split_list(const std::string& text);

}  // namespace hkt::cli
