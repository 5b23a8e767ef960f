#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hkt/data/listops.hpp"
#include "hkt/error.hpp"

namespace hkt::data {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("hkt_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << bytes;
}

TEST(Dataset, SerializeRoundTrip) {
  Dataset d{{{1, 2, 3}, {4, 5, 6}}, {7, 8}};
  EXPECT_EQ(serialize(d), "1 2 3\t7\n4 5 6\t8\n");
  EXPECT_EQ(deserialize(serialize(d)), d);
  EXPECT_THROW(deserialize("1 2 3 7\n"), InputError);
  EXPECT_THROW(deserialize("1 2\t0\n1 2 3\t0\n"), InputError);
  EXPECT_THROW(deserialize("1 x\t0\n"), InputError);
}

TEST(Dataset, BatchesCoverEveryIndexOnce) {
  num::Prng rng(5);
  auto b = batches(10, 4, rng);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].size(), 2u);
  std::vector<int> count(10, 0);
  for (const auto& batch : b)
    for (auto i : batch) ++count[i];
  for (int c : count) EXPECT_EQ(c, 1);
}

TEST(Bytes, ShortFileIsLeftPadded) {
  auto seq = frame_bytes("abc", 8);
  std::vector<int> want{256, 256, 256, 256, 256, 'a', 'b', 'c'};
  EXPECT_EQ(seq, want);
}

TEST(Bytes, LongFileKeepsLastBytes) {
  auto seq = frame_bytes("0123456789", 4);
  std::vector<int> want{'6', '7', '8', '9'};
  EXPECT_EQ(seq, want);
}

TEST(Bytes, LoadsDirectoryDeterministically) {
  TempDir tmp;
  write_file(tmp.path() / "pos" / "a.txt", "great film");
  write_file(tmp.path() / "pos" / "b.txt", std::string("\xff\x00 ok", 5));
  write_file(tmp.path() / "neg" / "c.txt", "dull");
  const std::map<std::string, int> labels{{"neg", 0}, {"pos", 1}};
  auto d = load_bytes_dataset(tmp.path(), 16, labels);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(d.sequences[2][11], 255);
  EXPECT_EQ(d.sequences[2][12], 0);
  EXPECT_EQ(checksum(d), checksum(load_bytes_dataset(tmp.path(), 16, labels)));
  EXPECT_THROW(load_bytes_dataset(tmp.path(), 16, {{"pos", 1}}), InputError);
  EXPECT_THROW(load_bytes_dataset(tmp.path() / "missing", 16, labels), IoError);
}

TEST(Store, WriteReadAndRefuseOverwrite) {
  TempDir tmp;
  ListOpsSpec spec;
  spec.n_train = 40;
  spec.n_val = spec.n_test = 10;
  auto splits = generate_listops(spec);
  write_splits(tmp.path(), spec, splits);
  auto back = read_splits(tmp.path());
  EXPECT_EQ(back.splits.train, splits.train);
  EXPECT_EQ(back.splits.test, splits.test);
  EXPECT_EQ(back.spec.seed, spec.seed);
  EXPECT_THROW(write_splits(tmp.path(), spec, splits), IoError);
  EXPECT_NO_THROW(write_splits(tmp.path(), spec, splits, true));
}

TEST(Store, DetectsTamperingAndUnknownFormat) {
  TempDir tmp;
  ListOpsSpec spec;
  spec.n_train = 20;
  spec.n_val = spec.n_test = 5;
  write_splits(tmp.path(), spec, generate_listops(spec));
  {
    std::ofstream(tmp.path() / "val.tsv", std::ios::app) << "1 2\t3\n";
  }
  EXPECT_THROW(read_splits(tmp.path()), Error);
  write_splits(tmp.path(), spec, generate_listops(spec), true);
  std::ifstream in(tmp.path() / "meta.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  text.replace(text.find("hkt-listops-v1"), 14, "hkt-listops-v9");
  std::ofstream(tmp.path() / "meta.json", std::ios::trunc) << text;
  EXPECT_THROW(read_splits(tmp.path()), IoError);
}

}  // namespace
}  // namespace hkt::data
