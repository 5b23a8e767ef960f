#include "hkt/model/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "hkt/error.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::model {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_[name] = values_.size();
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Bound::Bound(Graph& g, const ParamStore& store, bool requires_grad)
    : graph_(&g), store_(&store) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i)
    vars_.push_back(g.leaf(store.value(i), requires_grad));
}

const Var& Bound::operator()(const std::string& name) const {
  return vars_[store_->index(name)];
}

std::string layer_key(std::size_t layer, const std::string& what) {
  return "layer" + std::to_string(layer) + "." + what;
}

std::string level_key(std::size_t layer, std::size_t level, const std::string& what) {
  return "layer" + std::to_string(layer) + ".level" + std::to_string(level) + "." + what;
}

ParamStore init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  num::Prng rng(seed);
  ParamStore p;
  auto normal = [&](std::size_t r, std::size_t cols, double fan_in) {
    Tensor t = Tensor::matrix(r, cols);
    const double sd = 1.0 / std::sqrt(fan_in);
    for (double& v : t.storage()) v = sd * rng.normal();
    return t;
  };
  const std::size_t d = c.d_model, H = c.n_heads, L = c.n_levels, k = c.conv_kernel;

  p.add("embed", normal(c.vocab_size, d, 1.0));
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    p.add(layer_key(i, "ln1.g"), Tensor::matrix(1, d, 1.0));
    p.add(layer_key(i, "ln1.b"), Tensor::matrix(1, d));
    for (std::size_t l = 1; l < L; ++l) {
      const std::size_t din = c.level_dim(l - 1), dout = c.level_dim(l);
      p.add(level_key(i, l, "down.dw"), normal(din, k, double(k)));
      p.add(level_key(i, l, "down.dw_b"), Tensor::matrix(1, din));
      p.add(level_key(i, l, "down.pw"), normal(dout, din, double(din)));
      p.add(level_key(i, l, "down.pw_b"), Tensor::matrix(1, dout));
      p.add(level_key(i, l, "down.ln.g"), Tensor::matrix(1, dout, 1.0));
      p.add(level_key(i, l, "down.ln.b"), Tensor::matrix(1, dout));
    }
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t dl = c.level_dim(l), dkl = c.level_head_dim(l);
      p.add(level_key(i, l, "wq"), normal(H * dkl, dl, double(dl)));
      p.add(level_key(i, l, "wk"), normal(H * dkl, dl, double(dl)));
      p.add(level_key(i, l, "wv"), normal(d, dl, double(dl)));
      p.add(level_key(i, l, "wo"), normal(d, d, double(d)));
      p.add(level_key(i, l, "conv"), normal(d, k, double(k)));
    }
    p.add(layer_key(i, "gamma"), Tensor::matrix(1, L));
    p.add(layer_key(i, "gamma_tilde"), Tensor::matrix(H, L));
    p.add(layer_key(i, "fuse.w1"), normal(d, d, double(d)));
    p.add(layer_key(i, "fuse.b1"), Tensor::matrix(1, d));
    p.add(layer_key(i, "fuse.w2"), normal(L, d, double(d)));
    p.add(layer_key(i, "fuse.b2"), Tensor::matrix(1, L));
    p.add(layer_key(i, "ln2.g"), Tensor::matrix(1, d, 1.0));
    p.add(layer_key(i, "ln2.b"), Tensor::matrix(1, d));
    p.add(layer_key(i, "ffn.w1"), normal(4 * d, d, double(d)));
    p.add(layer_key(i, "ffn.b1"), Tensor::matrix(1, 4 * d));
    p.add(layer_key(i, "ffn.w2"), normal(d, 4 * d, double(4 * d)));
    p.add(layer_key(i, "ffn.b2"), Tensor::matrix(1, d));
  }
  p.add("final.ln.g", Tensor::matrix(1, d, 1.0));
  p.add("final.ln.b", Tensor::matrix(1, d));
  p.add("cls.w", normal(c.n_classes, d, double(d)));
  p.add("cls.b", Tensor::matrix(1, c.n_classes));
  return p;
}

void check_params(const ModelConfig& config, const ParamStore& params) {
  const ParamStore expected = init_params(config, 0);
  if (expected.size() != params.size())
    throw ConfigError("parameter count " + std::to_string(params.size()) + ", config implies " +
                      std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.name(i) != params.name(i))
      throw ConfigError("parameter " + std::to_string(i) + " is '" + params.name(i) +
                        "', expected '" + expected.name(i) + "'");
    if (expected.value(i).shape() != params.value(i).shape())
      throw ConfigError("parameter '" + params.name(i) + "' has shape " +
                        grad::shape_str(params.value(i).shape()) + ", expected " +
                        grad::shape_str(expected.value(i).shape()));
  }
}

namespace {

constexpr char kMagic[4] = {'H', 'K', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ull << 32)) throw IoError("checkpoint field length " + std::to_string(n) + " too large");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  const std::string text = config.canonical();
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const auto& t = params.value(i);
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.rank());
    for (std::size_t dim : t.shape()) put_u64(out, dim);
    for (double v : t.storage()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw IoError("'" + path.string() + "' is not an HKT1 checkpoint");
  Checkpoint ck;
  ck.config = ModelConfig::parse_canonical(get_bytes(in, get_u64(in)));
  const std::uint64_t count = get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get_u64(in));
    const std::uint64_t rank = get_u64(in);
    if (rank > 8) throw IoError("tensor '" + name + "' has rank " + std::to_string(rank));
    grad::Shape shape(rank);
    for (auto& dim : shape) dim = get_u64(in);
    std::vector<double> data(grad::shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(get_u64(in));
    ck.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw IoError("trailing bytes in checkpoint '" + path.string() + "'");
  check_params(ck.config, ck.params);
  return ck;
}

}  // namespace hkt::model
