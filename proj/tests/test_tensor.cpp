#include <gtest/gtest.h>

#include <sstream>

#include "sampm/rng.hpp"
#include "sampm/tensor.hpp"

using namespace sampm;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
  EXPECT_THROW(Tensor(Shape{}), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.sum(), 9.0);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.at(2, 1), 6.0);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, SliceAndStackAreInverse) {
  Rng rng(3);
  Tensor a = randn({2, 3, 4}, 1.0, rng);
  std::vector<Tensor> parts{slice_leading(a, 0), slice_leading(a, 1)};
  EXPECT_EQ(stack(parts), a);
  EXPECT_THROW(slice_leading(a, 2), DimensionError);
}

TEST(TensorFile, RoundTripIsBitExact) {
  Rng rng(11);
  Tensor a = randn({3, 1, 5}, 7.0, rng);
  a[0] = -0.0;
  a[1] = 1e-310;
  std::stringstream ss;
  write_tensor(ss, a);
  Tensor b = read_tensor(ss);
  EXPECT_EQ(a, b);
}

TEST(TensorFile, HeaderLayout) {
  std::stringstream ss;
  write_tensor(ss, Tensor({2, 1}, {1.0, -2.0}));
  const std::string s = ss.str();
  EXPECT_EQ(s.substr(0, 10), "CPMT1\n2 2 ");
  EXPECT_EQ(s.size(), std::string("CPMT1\n2 2 1\n").size() + 16);
  // little-endian 1.0 = 00 .. 00 f0 3f
  const std::size_t payload = s.size() - 16;
  EXPECT_EQ(static_cast<unsigned char>(s[payload + 7]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(s[payload + 6]), 0xf0);
}

TEST(TensorFile, TruncationReportsByteCounts) {
  std::stringstream ss;
  write_tensor(ss, Tensor({4}, 1.0));
  std::string s = ss.str();
  s.resize(s.size() - 5);
  std::stringstream cut(s);
  try {
    read_tensor(cut);
    FAIL() << "no error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 32 bytes, got 27"), std::string::npos) << e.what();
  }
}

TEST(TensorFile, BadMagic) {
  std::stringstream ss("CPMT2\n1 1\n");
  EXPECT_THROW(read_tensor(ss), FormatError);
}
