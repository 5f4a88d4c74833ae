#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "freqdeno/cli.hpp"

using namespace freqdeno;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = FREQDENO_GOLDEN_DIR;

std::vector<unsigned char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("freqdeno_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Fnv1a, KnownVectors) {
  const std::string empty, a = "a", foobar = "foobar";
  auto h = [](const std::string& s) {
    return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
  };
  EXPECT_EQ(h(empty), 0xcbf29ce484222325ull);
  EXPECT_EQ(h(a), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(h(foobar), 0x85944171f73967e8ull);
}

TEST(TensorFile, GoldenLoadsBitExactly) {
  const Tensor t = load_tensor(kGolden / "golden_tensor.fdt");
  EXPECT_TRUE(bitwise_equal(t, cli::golden_tensor()));
  EXPECT_EQ(encode_tensor(t), bytes_of(kGolden / "golden_tensor.fdt"));
}

TEST(TensorFile, EverySingleByteCorruptionIsDetected) {
  const auto good = bytes_of(kGolden / "golden_tensor.fdt");
  ASSERT_EQ(good.size(), 4u + 4u + 8u + 48u + 8u);
  for (std::size_t i = 0; i < good.size(); ++i)
    for (unsigned char flip : {0x01, 0x80, 0xff}) {
      auto bad = good;
      bad[i] ^= flip;
      EXPECT_THROW(decode_tensor(bad), Error) << "byte " << i << " ^ " << int(flip);
    }
}

TEST(TensorFile, ErrorKinds) {
  const auto good = bytes_of(kGolden / "golden_tensor.fdt");
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensor(bad_magic), FormatError);
  auto payload = good;
  payload[20] ^= 0x10;
  EXPECT_THROW(decode_tensor(payload), CorruptionError);
  EXPECT_THROW(decode_tensor(std::span(good).first(good.size() - 1)), TruncationError);
  EXPECT_THROW(decode_tensor(std::span(good).first(6)), TruncationError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_tensor(trailing), FormatError);
  EXPECT_THROW(encode_tensor(Tensor::scalar(1.0)), ShapeError);
  EXPECT_THROW(load_tensor("/nonexistent/dir/x.fdt"), IoError);
}

TEST_F(TempDir, TensorRoundTripIsBitwise) {
  std::mt19937_64 rng(61);
  const double specials[] = {0.0, -0.0, std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::denorm_min(),
                             std::numeric_limits<double>::max(), std::numeric_limits<double>::quiet_NaN()};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rank = 1 + trial % 4;
    Shape shape;
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(1 + (rng() % 4));
    Tensor t(shape);
    for (double& v : t.data()) v = std::bit_cast<double>(rng());
    t[0] = specials[trial % 7];
    const fs::path p = dir_ / ("t" + std::to_string(trial) + ".fdt");
    save_tensor(t, p);
    EXPECT_TRUE(bitwise_equal(load_tensor(p), t)) << trial;
  }
  EXPECT_THROW(save_tensor(Tensor({1}), dir_ / "missing" / "x.fdt"), IoError);
}

TEST_F(TempDir, GrayExportMatchesGolden) {
  const fs::path p = dir_ / "g.pgm";
  export_gray(cli::golden_gray_source(), p);
  EXPECT_EQ(bytes_of(p), bytes_of(kGolden / "golden_gray.pgm"));
  EXPECT_EQ(bytes_of(range_sidecar(p)), bytes_of(kGolden / "golden_gray.pgm.range"));
  const GrayImage img = load_pgm(kGolden / "golden_gray.pgm");
  EXPECT_EQ(img.width, 4u);
  EXPECT_EQ(img.height, 4u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(img.pixels[i], 17 * i);
  const Tensor back = import_gray(kGolden / "golden_gray.pgm");
  EXPECT_LT(max_abs_diff(back, cli::golden_gray_source()), 1.0 / 255.0);
}

TEST_F(TempDir, GrayConstantMapAndErrors) {
  const fs::path p = dir_ / "c.pgm";
  export_gray(Tensor({2, 3}, 0.7), p);
  const GrayImage img = load_pgm(p);
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.height, 2u);
  for (auto v : img.pixels) EXPECT_EQ(v, 128);
  EXPECT_EQ(import_gray(p), Tensor({2, 3}, 0.7));
  EXPECT_THROW(export_gray(Tensor({1, 2, 3}), p), ShapeError);

  {
    std::ofstream f(dir_ / "bad.pgm", std::ios::binary);
    f << "P2\n1 1\n255\n0";
  }
  EXPECT_THROW(load_pgm(dir_ / "bad.pgm"), FormatError);
  {
    std::ofstream f(dir_ / "short.pgm", std::ios::binary);
    f << "P5\n4 4\n255\n" << std::string(10, 'x');
  }
  EXPECT_THROW(load_pgm(dir_ / "short.pgm"), TruncationError);
  EXPECT_THROW(load_range(dir_ / "short.pgm"), IoError);
}
