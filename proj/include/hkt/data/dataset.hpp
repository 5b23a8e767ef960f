#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hkt/num/prng.hpp"

namespace hkt::data {

struct Dataset {
  std::vector<std::vector<int>> sequences;  // all of length seq_len
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t seq_len() const { return sequences.empty() ? 0 : sequences.front().size(); }
  bool operator==(const Dataset&) const = default;
};

// One line per sample: space-separated ids, TAB, label.
std::string serialize(const Dataset& d);
Dataset deserialize(const std::string& text);

void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);

// SHA-256 of the serialized form, lowercase hex.
std::string checksum(const Dataset& d);
std::string sha256_hex(const std::string& bytes);

// First `n` rows.
Dataset head(const Dataset& d, std::size_t n);

// Shuffled index batches; the last one may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              num::Prng& rng);

constexpr int kBytePad = 256;
constexpr int kByteVocab = 257;

// Directory layout: root/<label>/<file>. Each file becomes one sample holding
// its last `seq_len` bytes, left-padded with kBytePad. Files are visited in
// sorted path order. A label directory missing from `label_map` throws
// InputError; unreadable files throw IoError.
Dataset load_bytes_dataset(const std::filesystem::path& root, std::size_t seq_len,
                           const std::map<std::string, int>& label_map);

// Bytes of one text -> framed sequence.
std::vector<int> frame_bytes(const std::string& bytes, std::size_t seq_len);

}  // namespace hkt::data
