#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hkt/grad/graph.hpp"
#include "hkt/model/config.hpp"

namespace hkt::model {

using grad::Graph;
using grad::Tensor;
using grad::Var;

// Named tensors in insertion order.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;
  Tensor& at(const std::string& name) { return values_[index(name)]; }
  const Tensor& at(const std::string& name) const { return values_[index(name)]; }
  std::size_t total_elements() const;

  bool operator==(const ParamStore& o) const { return names_ == o.names_ && values_ == o.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t> index_;
};

// A ParamStore placed on a graph as leaves, addressable by name.
class Bound {
 public:
  Bound(Graph& g, const ParamStore& store, bool requires_grad);

  Graph& graph() const { return *graph_; }
  const Var& operator()(const std::string& name) const;
  const Var& var(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }
  const ParamStore& store() const { return *store_; }

 private:
  Graph* graph_;
  const ParamStore* store_;
  std::vector<Var> vars_;
};

// Fresh parameters for `config`: weights N(0, 1/fan_in), layernorm gains 1,
// biases and fusion logits 0.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

// Throws ConfigError if names or shapes differ from what `config` implies.
void check_params(const ModelConfig& config, const ParamStore& params);

std::string layer_key(std::size_t layer, const std::string& what);
std::string level_key(std::size_t layer, std::size_t level, const std::string& what);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

// "HKT1", u64 config length, canonical config text, u64 tensor count, then
// per tensor u64 name length, name, u64 rank, u64 dims, f64 payload.
// Little-endian throughout. Throws IoError.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamStore& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hkt::model
