#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace hkt::model {

enum class BetaMode { learned, fixed0, fixed1 };
enum class AlphaMode { learned, uniform };

std::string to_string(BetaMode m);
std::string to_string(AlphaMode m);
BetaMode parse_beta_mode(const std::string& s);
AlphaMode parse_alpha_mode(const std::string& s);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_levels = 3;
  std::size_t stride = 2;
  std::size_t n_layers = 2;
  std::size_t conv_kernel = 3;
  double dropout = 0.0;
  std::size_t vocab_size = 17;
  std::size_t n_classes = 10;
  bool causal = false;
  std::size_t max_seq_len = 128;

  BetaMode beta_mode = BetaMode::learned;
  AlphaMode alpha_mode = AlphaMode::learned;
  // Optional regularisers on lambda; off by default.
  bool div_loss = false;
  bool mono_loss = false;
  double reg_weight = 0.01;

  // Throws ConfigError.
  void validate() const;

  std::size_t head_dim() const { return d_model / n_heads; }
  // s^l
  std::size_t level_factor(std::size_t l) const;
  // floor(T / s^l) for the configured T.
  std::size_t level_len(std::size_t l) const { return level_len(l, max_seq_len); }
  std::size_t level_len(std::size_t l, std::size_t T) const;
  // max(d / 2^l, 32), never above d.
  std::size_t level_dim(std::size_t l) const;
  // max(d_k / 2^l, 16), never above d_k.
  std::size_t level_head_dim(std::size_t l) const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
  // key=value lines, keys sorted.
  std::string canonical() const;
  static ModelConfig parse_canonical(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace hkt::model
