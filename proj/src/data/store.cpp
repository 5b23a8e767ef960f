#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hkt/data/listops.hpp"
#include "hkt/error.hpp"

namespace hkt::data {

namespace {

using nlohmann::json;

const char* kSplitNames[3] = {"train", "val", "test"};

json spec_json(const ListOpsSpec& s) {
  return {{"max_depth", s.max_depth}, {"max_arity", s.max_arity},
          {"seq_len", s.seq_len},     {"n_train", s.n_train},
          {"n_val", s.n_val},         {"n_test", s.n_test},
          {"seed", s.seed},           {"subexpr_prob", s.subexpr_prob}};
}

ListOpsSpec spec_from_json(const json& j) {
  ListOpsSpec s;
  s.max_depth = j.at("max_depth").get<std::size_t>();
  s.max_arity = j.at("max_arity").get<std::size_t>();
  s.seq_len = j.at("seq_len").get<std::size_t>();
  s.n_train = j.at("n_train").get<std::size_t>();
  s.n_val = j.at("n_val").get<std::size_t>();
  s.n_test = j.at("n_test").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.subexpr_prob = j.at("subexpr_prob").get<double>();
  return s;
}

const Dataset& split(const ListOpsSplits& s, int i) {
  return i == 0 ? s.train : i == 1 ? s.val : s.test;
}

Dataset& split(ListOpsSplits& s, int i) { return i == 0 ? s.train : i == 1 ? s.val : s.test; }

}  // namespace

void write_splits(const std::filesystem::path& dir, const ListOpsSpec& spec,
                  const ListOpsSplits& splits, bool force) {
  namespace fs = std::filesystem;
  const fs::path meta = dir / "meta.json";
  if (!force && fs::exists(meta))
    throw IoError("'" + dir.string() + "' already holds a dataset (use --force)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  json j;
  j["format"] = kDatasetFormat;
  j["spec"] = spec_json(spec);
  j["vocab"] = {{"digits", "0-9"}, {"[MAX", tok::kMax}, {"[MIN", tok::kMin},
                {"[MED", tok::kMed}, {"[SM", tok::kSm},  {"]", tok::kClose},
                {"<pad>", tok::kPad}, {"<s>", tok::kBegin}, {"size", tok::kVocab}};
  for (int i = 0; i < 3; ++i) {
    const Dataset& d = split(splits, i);
    write_dataset(dir / (std::string(kSplitNames[i]) + ".tsv"), d);
    j["splits"][kSplitNames[i]] = {{"size", d.size()}, {"sha256", checksum(d)}};
  }
  std::ofstream out(meta, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + meta.string() + "'");
  out << j.dump(2) << '\n';
}

StoredSplits read_splits(const std::filesystem::path& dir) {
  const auto meta = dir / "meta.json";
  std::ifstream in(meta);
  if (!in) throw IoError("cannot open '" + meta.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("'" + meta.string() + "' is not valid JSON: " + e.what());
  }
  const std::string format = j.value("format", "");
  if (format != kDatasetFormat)
    throw IoError("'" + meta.string() + "' has unsupported format '" + format + "'");

  StoredSplits out;
  try {
    out.spec = spec_from_json(j.at("spec"));
    for (int i = 0; i < 3; ++i) {
      Dataset& d = split(out.splits, i);
      d = read_dataset(dir / (std::string(kSplitNames[i]) + ".tsv"));
      const auto& rec = j.at("splits").at(kSplitNames[i]);
      if (checksum(d) != rec.at("sha256").get<std::string>())
        throw IoError(std::string(kSplitNames[i]) + ".tsv checksum mismatch");
      if (d.size() != rec.at("size").get<std::size_t>())
        throw IoError(std::string(kSplitNames[i]) + ".tsv size mismatch");
    }
  } catch (const json::exception& e) {
    throw IoError("'" + meta.string() + "': " + e.what());
  }
  return out;
}

}  // namespace hkt::data
