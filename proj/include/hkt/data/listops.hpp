#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hkt/data/dataset.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::data {

// Token ids. Operators carry their opening bracket.
namespace tok {
constexpr int kMax = 10;
constexpr int kMin = 11;
constexpr int kMed = 12;
constexpr int kSm = 13;
constexpr int kClose = 14;
constexpr int kPad = 15;
constexpr int kBegin = 16;
constexpr int kVocab = 17;
}  // namespace tok

enum class Op { max, min, med, sm };

struct ListOpsSpec {
  std::size_t max_depth = 3;
  std::size_t max_arity = 5;
  std::size_t seq_len = 128;
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  std::uint64_t seed = 42;
  double subexpr_prob = 0.5;
};

struct Expr {
  Op op = Op::max;
  // A child is either a digit (sub == nullptr) or a nested expression.
  struct Child {
    int digit = 0;
    std::unique_ptr<Expr> sub;
  };
  std::vector<Child> children;
};

int evaluate(const Expr& e);
// "[MAX" ... "]" without begin or padding.
std::vector<int> render(const Expr& e);
std::size_t rendered_length(const Expr& e);

// Random tree: depth <= max_depth, arity uniform in 2..max_arity.
std::unique_ptr<Expr> sample_expr(const ListOpsSpec& spec, num::Prng& rng);

// Evaluates a token sequence. Leading PAD and BEGIN tokens are skipped.
// Throws ParseError with the offending position.
int evaluate_listops(std::span<const int> tokens);

// "[MAX 2 7 3 ]" <-> ids.
std::vector<int> parse_tokens(const std::string& text);
std::string format_tokens(std::span<const int> tokens);

// Left-pads PAD..PAD BEGIN expr to `seq_len`.
std::vector<int> frame(std::span<const int> expr, std::size_t seq_len);

struct ListOpsSplits {
  Dataset train, val, test;
};

// Trees longer than seq_len - 1 tokens are resampled; every sequence is
// distinct across all three splits. Throws ConfigError when seq_len cannot
// hold even the smallest expression.
ListOpsSplits generate_listops(const ListOpsSpec& spec);

inline constexpr const char* kDatasetFormat = "hkt-listops-v1";

// dir/{train,val,test}.tsv plus dir/meta.json (format tag, spec, vocabulary,
// per-split sizes and SHA-256). Throws IoError if the files exist and
// `force` is false.
void write_splits(const std::filesystem::path& dir, const ListOpsSpec& spec,
                  const ListOpsSplits& splits, bool force = false);

struct StoredSplits {
  ListOpsSpec spec;
  ListOpsSplits splits;
};

// Rejects unknown format tags and checksum mismatches.
StoredSplits read_splits(const std::filesystem::path& dir);

}  // namespace hkt::data
