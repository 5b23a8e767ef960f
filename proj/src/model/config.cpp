#include "hkt/model/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "hkt/error.hpp"

namespace hkt::model {

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(BetaMode m) {
  switch (m) {
    case BetaMode::learned: return "learned";
    case BetaMode::fixed0: return "fixed0";
    case BetaMode::fixed1: return "fixed1";
  }
  return "learned";
}

std::string to_string(AlphaMode m) { return m == AlphaMode::uniform ? "uniform" : "learned"; }

BetaMode parse_beta_mode(const std::string& s) {
  if (s == "learned") return BetaMode::learned;
  if (s == "fixed0" || s == "0") return BetaMode::fixed0;
  if (s == "fixed1" || s == "1") return BetaMode::fixed1;
  throw ConfigError("unknown beta mode '" + s + "'");
}

AlphaMode parse_alpha_mode(const std::string& s) {
  if (s == "learned") return AlphaMode::learned;
  if (s == "uniform") return AlphaMode::uniform;
  throw ConfigError("unknown alpha mode '" + s + "'");
}

std::size_t ModelConfig::level_factor(std::size_t l) const {
  std::size_t f = 1;
  for (std::size_t i = 0; i < l; ++i) f *= stride;
  return f;
}

std::size_t ModelConfig::level_len(std::size_t l, std::size_t T) const {
  return T / level_factor(l);
}

std::size_t ModelConfig::level_dim(std::size_t l) const {
  return std::max(d_model >> l, std::min<std::size_t>(32, d_model));
}

std::size_t ModelConfig::level_head_dim(std::size_t l) const {
  const std::size_t dk = head_dim();
  return std::max(dk >> l, std::min<std::size_t>(16, dk));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (d_model == 0 || n_heads == 0) fail("d_model and n_heads must be positive");
  if (d_model % n_heads != 0)
    fail("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
         std::to_string(n_heads));
  if (n_levels < 1) fail("n_levels must be >= 1");
  if (stride < 2) fail("stride must be >= 2");
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (conv_kernel < 1) fail("conv_kernel must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (vocab_size < 1 || n_classes < 2) fail("vocab_size >= 1 and n_classes >= 2 required");
  if (max_seq_len < level_factor(n_levels - 1) + 1)
    fail("max_seq_len " + std::to_string(max_seq_len) + " too short for " +
         std::to_string(n_levels) + " levels at stride " + std::to_string(stride) +
         " (need >= " + std::to_string(level_factor(n_levels - 1) + 1) + ")");
  if (reg_weight < 0.0) fail("reg_weight must be >= 0");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"alpha_mode", to_string(alpha_mode)},
      {"beta_mode", to_string(beta_mode)},
      {"causal", causal ? "true" : "false"},
      {"conv_kernel", std::to_string(conv_kernel)},
      {"d_model", std::to_string(d_model)},
      {"div_loss", div_loss ? "true" : "false"},
      {"dropout", fmt_double(dropout)},
      {"max_seq_len", std::to_string(max_seq_len)},
      {"mono_loss", mono_loss ? "true" : "false"},
      {"n_classes", std::to_string(n_classes)},
      {"n_heads", std::to_string(n_heads)},
      {"n_layers", std::to_string(n_layers)},
      {"n_levels", std::to_string(n_levels)},
      {"reg_weight", fmt_double(reg_weight)},
      {"stride", std::to_string(stride)},
      {"vocab_size", std::to_string(vocab_size)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "alpha_mode") c.alpha_mode = parse_alpha_mode(v);
    else if (k == "beta_mode") c.beta_mode = parse_beta_mode(v);
    else if (k == "causal") c.causal = parse_bool(k, v);
    else if (k == "conv_kernel") c.conv_kernel = parse_size(k, v);
    else if (k == "d_model") c.d_model = parse_size(k, v);
    else if (k == "div_loss") c.div_loss = parse_bool(k, v);
    else if (k == "dropout") c.dropout = parse_double(k, v);
    else if (k == "max_seq_len") c.max_seq_len = parse_size(k, v);
    else if (k == "mono_loss") c.mono_loss = parse_bool(k, v);
    else if (k == "n_classes") c.n_classes = parse_size(k, v);
    else if (k == "n_heads") c.n_heads = parse_size(k, v);
    else if (k == "n_layers") c.n_layers = parse_size(k, v);
    else if (k == "n_levels") c.n_levels = parse_size(k, v);
    else if (k == "reg_weight") c.reg_weight = parse_double(k, v);
    else if (k == "stride") c.stride = parse_size(k, v);
    else if (k == "vocab_size") c.vocab_size = parse_size(k, v);
    else throw ConfigError("unknown model config key '" + k + "'");
  }
  return c;
}

std::string ModelConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

ModelConfig ModelConfig::parse_canonical(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return from_map(kv);
}

}  // namespace hkt::model
