#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "lwdepth/datamodel.hpp"
#include "lwdepth/error.hpp"
#include "lwdepth/rng.hpp"

using namespace lwdepth;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lwdepth_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  void write_all(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(IoTest, PfmHeaderBytes) {
  Image d(114, 152, 1, 1.0f);
  save_pfm(d, dir_ / "d.pfm");
  const std::string bytes = read_all(dir_ / "d.pfm");
  const std::string header = "Pf\n152 114\n-1.0\n";
  ASSERT_GE(bytes.size(), header.size());
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(bytes.size(), header.size() + 114u * 152u * 4u);
  // little-endian 1.0f = 00 00 80 3f
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 2]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 3]), 0x3f);
}

TEST_F(IoTest, PfmRoundTripIsBitExact) {
  Image d(13, 7, 1);
  Rng rng(1);
  for (auto& v : d.pixels) v = static_cast<float>(rng.uniform(0.0, 80.0));
  d.pixels[3] = 0.0f;
  d.pixels[4] = 1e-38f;
  save_pfm(d, dir_ / "d.pfm");
  Image back = load_pfm(dir_ / "d.pfm");
  ASSERT_EQ(back.size(), d.size());
  EXPECT_EQ(std::memcmp(back.pixels.data(), d.pixels.data(), d.pixels.size() * 4), 0);
}

TEST_F(IoTest, PfmRowsAreStoredBottomUp) {
  Image d(2, 1, 1);
  d.pixels = {1.0f, 2.0f};
  save_pfm(d, dir_ / "d.pfm");
  const std::string bytes = read_all(dir_ / "d.pfm");
  float first;
  std::memcpy(&first, bytes.data() + std::string("Pf\n1 2\n-1.0\n").size(), 4);
  EXPECT_EQ(first, 2.0f);
}

TEST_F(IoTest, PfmBigEndianLoads) {
  std::string s = "Pf\n1 1\n1.0\n";
  const unsigned char be[4] = {0x40, 0x20, 0x00, 0x00};  // 2.5f
  s.append(reinterpret_cast<const char*>(be), 4);
  write_all(dir_ / "be.pfm", s);
  EXPECT_EQ(load_pfm(dir_ / "be.pfm").pixels[0], 2.5f);
}

TEST_F(IoTest, PfmRejectsNegativeDepth) {
  Image d(2, 2, 1, 1.0f);
  d.pixels[2] = -0.5f;
  EXPECT_THROW(save_pfm(d, dir_ / "neg.pfm"), ContractError);
  d.pixels[2] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(save_pfm(d, dir_ / "inf.pfm"), ContractError);
}

TEST_F(IoTest, MalformedPfmNamesByteOffset) {
  write_all(dir_ / "magic.pfm", "PX\n1 1\n-1.0\n0000");
  EXPECT_THROW(load_pfm(dir_ / "magic.pfm"), ParseError);
  write_all(dir_ / "width.pfm", "Pf\nabc 1\n-1.0\n0000");
  try {
    load_pfm(dir_ / "width.pfm");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.byte_offset(), 3u);
    EXPECT_NE(std::string(e.what()).find("byte offset 3"), std::string::npos);
  }
  write_all(dir_ / "short.pfm", "Pf\n2 2\n-1.0\n00000000");
  try {
    load_pfm(dir_ / "short.pfm");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.byte_offset(), 20u);
  }
  EXPECT_THROW(load_pfm(dir_ / "missing.pfm"), DataError);
}

TEST_F(IoTest, PpmRoundTripIsBitExact) {
  Image rgb(5, 9, 3);
  Rng rng(2);
  for (auto& v : rgb.pixels) v = static_cast<float>(rng.below(256)) / 255.0f;
  save_ppm(rgb, dir_ / "c.ppm");
  Image back = load_ppm(dir_ / "c.ppm");
  EXPECT_EQ(back, rgb);
  const std::string bytes = read_all(dir_ / "c.ppm");
  EXPECT_EQ(bytes.substr(0, 11), "P6\n9 5\n255\n");
}

TEST_F(IoTest, PpmHeaderCommentsAndErrors) {
  write_all(dir_ / "c.ppm", std::string("P6\n# comment\n1 1\n255\n") + std::string("\xff\x00\x80", 3));
  Image img = load_ppm(dir_ / "c.ppm");
  EXPECT_EQ(img.pixels[0], 1.0f);
  EXPECT_EQ(img.pixels[1], 0.0f);
  write_all(dir_ / "deep.ppm", "P6\n1 1\n65535\n000000");
  EXPECT_THROW(load_ppm(dir_ / "deep.ppm"), ParseError);
  write_all(dir_ / "short.ppm", "P6\n2 1\n255\nabc");
  EXPECT_THROW(load_ppm(dir_ / "short.ppm"), ParseError);
  Image bad(1, 1, 3, 1.5f);
  EXPECT_THROW(save_ppm(bad, dir_ / "bad.ppm"), ContractError);
}

TEST_F(IoTest, DatasetManifestRoundTrip) {
  auto d = make_domains(4, 3, 0, 8);
  auto manifest = save_dataset(d.original, dir_ / "x");
  auto back = load_dataset(manifest);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_TRUE(back.labeled());
  EXPECT_EQ(back.domain_tag(), d.original.domain_tag());
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.depth(i), d.original.depth(i));
    EXPECT_EQ(back.valid_mask(i), d.original.valid_mask(i));
    // RGB passes through 8 bits
    for (std::size_t k = 0; k < back.rgb(i).pixels.size(); ++k)
      EXPECT_NEAR(back.rgb(i).pixels[k], d.original.rgb(i).pixels[k], 0.5 / 255 + 1e-7);
  }
  auto um = save_dataset(d.aux_unlabeled, dir_ / "u");
  auto ub = load_dataset(um);
  EXPECT_FALSE(ub.labeled());
  EXPECT_THROW(ub.depth(0), ContractError);
  write_all(dir_ / "bad.json", "{\"schema\": 1, \"samples\": [");
  EXPECT_THROW(load_dataset(dir_ / "bad.json"), ParseError);
}
