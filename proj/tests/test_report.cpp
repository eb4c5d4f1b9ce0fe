#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scae/report.hpp"

using namespace scae;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Psnr, KnownValues) {
  const Tensor a = full<float>(Shape{1, 3, 4, 4}, 100.0f);
  EXPECT_DOUBLE_EQ(psnr(a, a), 99.0);
  EXPECT_NEAR(psnr(a, full<float>(a.shape(), 110.0f)), 20.0 * std::log10(255.0 / 10.0), 1e-9);
  EXPECT_NEAR(psnr(Tensor(a.shape()), full<float>(a.shape(), 255.0f)), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, Tensor(Shape{1, 3, 4, 5})), ContractError);
}

TEST(Accuracy, ArgmaxMatches) {
  const Tensor logits(Shape{4, 3}, {0, 1, 0, 5, 1, 1, 0, 0, 2, 3, 3, 9});
  EXPECT_DOUBLE_EQ(accuracy(logits, {1, 0, 2, 0}), 0.75);
  EXPECT_THROW(accuracy(logits, {1, 0}), ContractError);
}

TEST(Pnm, SingleBlackPixel) {
  const auto bytes = encode_pnm(Tensor(Shape{3, 1, 1}));
  const std::string header = "P6\n1 1\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 3);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 11), header);
  EXPECT_EQ(bytes[11] | bytes[12] | bytes[13], 0);
}

TEST(Pnm, ClampsAndRounds) {
  const Tensor img(Shape{1, 1, 5}, {300.0f, -4.0f, 2.5f, 2.49f, 127.5f});
  const auto bytes = encode_pnm(img);
  const std::string header = "P5\n5 1\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 5);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
  const std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(header.size()), bytes.end());
  EXPECT_EQ(px, (std::vector<std::uint8_t>{255, 0, 3, 2, 128}));
}

TEST(Pnm, RoundTripInterleavesChannels) {
  Tensor img(Shape{3, 2, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i * 10);
  const auto bytes = encode_pnm(img);
  EXPECT_EQ(bytes[11], 0);   // R(0,0)
  EXPECT_EQ(bytes[12], 60);  // G(0,0)
  EXPECT_EQ(bytes[13], 120); // B(0,0)
  EXPECT_TRUE(bitwise_equal(decode_pnm(bytes), img));
  EXPECT_TRUE(bitwise_equal(decode_pnm(encode_pnm(img.reshaped(Shape{1, 3, 2, 3}))), img));
  EXPECT_THROW(encode_pnm(Tensor(Shape{2, 2, 2})), ContractError);
  EXPECT_THROW(decode_pnm({'P', '6', '\n'}), FormatError);
}

TEST(Montage, Geometry) {
  const Tensor a = full<float>(Shape{3, 4, 5}, 10.0f);
  const Tensor m = montage({{a, a, a}, {a, a, a}});
  // rows * (h + 2) - 2 by cols * (w + 2) - 2: gutters only between images.
  EXPECT_EQ(m.shape(), Shape({3, 2 * 6 - 2, 3 * 7 - 2}));
  EXPECT_EQ(m[0], 10.0f);
  EXPECT_EQ(m[4 * m.shape()[2]], 255.0f);
  EXPECT_EQ(m[5], 255.0f);
  EXPECT_EQ(m[7], 10.0f);
  EXPECT_TRUE(bitwise_equal(montage({{a}}), a));
  EXPECT_THROW(montage({{a, a}, {a}}), ContractError);
  EXPECT_THROW(montage({{a, Tensor(Shape{3, 4, 4})}}), ContractError);
}

TEST(FeatureDump, FilesAndIndex) {
  const auto dir = fresh_dir("scae_dump_test");
  Tensor act(Shape{1, 2, 2, 2}, {0.0f, 1.0f, 2.0f, 4.0f, 7.0f, 7.0f, 7.0f, 7.0f});
  const auto files = dump_feature_maps(act, dir, "enc1.relu");
  ASSERT_EQ(files, (std::vector<std::string>{"enc1.relu_c0000.pgm", "enc1.relu_c0001.pgm"}));
  EXPECT_EQ(slurp(dir / "index.tsv"), "0\tenc1.relu_c0000.pgm\n1\tenc1.relu_c0001.pgm\n");
  const std::string c0 = slurp(dir / files[0]);
  const std::string c1 = slurp(dir / files[1]);
  EXPECT_EQ(c0.substr(c0.size() - 4), std::string("\x00\x40\x80\xff", 4));
  EXPECT_EQ(c1.substr(c1.size() - 4), std::string("\x80\x80\x80\x80", 4));

  const auto again = fresh_dir("scae_dump_test2");
  dump_feature_maps(act, again, "enc1.relu");
  EXPECT_EQ(slurp(again / files[0]), c0);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(again);
}

TEST(Metrics, RowFormatting) {
  EXPECT_EQ(std::string(kMetricsHeader), "epoch,split,loss,psnr,accuracy,lr,wall_seconds");
  MetricsRecord r{3, "heldout", 0.125, 27.123456789, std::nullopt, 1e-4, std::nullopt};
  EXPECT_EQ(format_metrics_row(r), "3,heldout,0.125,27.1235,,0.0001,");
  EXPECT_EQ(format_metric(1e-7), "1e-07");
}

TEST(Metrics, WriterAppendsWithSingleHeader) {
  const auto dir = fresh_dir("scae_metrics_test");
  {
    MetricsWriter w(dir / "metrics.csv");
    w.write({1, "train", 0.5, std::nullopt, std::nullopt, 1e-3, std::nullopt});
    EXPECT_THROW(w.write({2, "train", std::nan(""), std::nullopt, std::nullopt, 1e-3, std::nullopt}), NumericError);
  }
  {
    MetricsWriter w(dir / "metrics.csv");
    w.write({2, "test", std::nullopt, std::nullopt, 0.5, std::nullopt, std::nullopt});
  }
  EXPECT_EQ(slurp(dir / "metrics.csv"), std::string(kMetricsHeader) + "\n1,train,0.5,,,0.001,\n2,test,,,0.5,,\n");
  std::filesystem::remove_all(dir);
}
