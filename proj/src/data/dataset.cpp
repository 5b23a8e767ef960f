#include "hkt/data/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hkt/error.hpp"

namespace hkt::data {

std::string serialize(const Dataset& d) {
  std::string out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& seq = d.sequences[i];
    for (std::size_t j = 0; j < seq.size(); ++j) {
      if (j) out += ' ';
      out += std::to_string(seq[j]);
    }
    out += '\t';
    out += std::to_string(d.labels[i]);
    out += '\n';
  }
  return out;
}

namespace {

int parse_int(std::string_view s, std::size_t line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("dataset line " + std::to_string(line) + ": bad integer '" +
                     std::string(s) + "'");
  return v;
}

}  // namespace

Dataset deserialize(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw InputError("dataset line " + std::to_string(lineno) + ": missing TAB before label");
    std::vector<int> seq;
    std::string_view ids(line.data(), tab);
    std::size_t pos = 0;
    while (pos < ids.size()) {
      auto next = ids.find(' ', pos);
      if (next == std::string_view::npos) next = ids.size();
      if (next > pos) seq.push_back(parse_int(ids.substr(pos, next - pos), lineno));
      pos = next + 1;
    }
    if (!d.sequences.empty() && seq.size() != d.sequences.front().size())
      throw InputError("dataset line " + std::to_string(lineno) + ": length " +
                       std::to_string(seq.size()) + ", expected " +
                       std::to_string(d.sequences.front().size()));
    d.sequences.push_back(std::move(seq));
    d.labels.push_back(parse_int(std::string_view(line).substr(tab + 1), lineno));
  }
  return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string text = serialize(d);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string checksum(const Dataset& d) { return sha256_hex(serialize(d)); }

Dataset head(const Dataset& d, std::size_t n) {
  n = std::min(n, d.size());
  Dataset out;
  out.sequences.assign(d.sequences.begin(), d.sequences.begin() + n);
  out.labels.assign(d.labels.begin(), d.labels.begin() + n);
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              num::Prng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates on our own stream; std::shuffle is not portable across
  // standard libraries.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  return out;
}

std::vector<int> frame_bytes(const std::string& bytes, std::size_t seq_len) {
  std::vector<int> seq(seq_len, kBytePad);
  const std::size_t keep = std::min(seq_len, bytes.size());
  const std::size_t from = bytes.size() - keep;
  for (std::size_t i = 0; i < keep; ++i)
    seq[seq_len - keep + i] = static_cast<unsigned char>(bytes[from + i]);
  return seq;
}

Dataset load_bytes_dataset(const std::filesystem::path& root, std::size_t seq_len,
                           const std::map<std::string, int>& label_map) {
  namespace fs = std::filesystem;
  if (seq_len == 0) throw ConfigError("seq_len must be positive");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("'" + root.string() + "' is not a directory");

  std::vector<std::pair<fs::path, int>> files;
  for (const auto& dir : fs::directory_iterator(root)) {
    if (!dir.is_directory()) continue;
    const std::string label = dir.path().filename().string();
    auto it = label_map.find(label);
    if (it == label_map.end()) throw InputError("unknown label '" + label + "'");
    for (const auto& f : fs::directory_iterator(dir.path()))
      if (f.is_regular_file()) files.emplace_back(f.path(), it->second);
  }
  std::sort(files.begin(), files.end());

  Dataset d;
  for (const auto& [path, label] : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    d.sequences.push_back(frame_bytes(buf.str(), seq_len));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace hkt::data
