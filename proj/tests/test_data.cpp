#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "btntk/data.hpp"
#include "oracles.hpp"

using namespace btntk;

namespace {

IdxImages fake_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, std::uint64_t seed) {
    IdxImages img;
    img.count = count;
    img.rows = rows;
    img.cols = cols;
    img.pixels.resize(std::size_t(count) * rows * cols);
    Rng rng(seed);
    std::uniform_int_distribution<int> px(0, 255);
    for (auto& p : img.pixels)
        p = static_cast<std::uint8_t>(px(rng));
    return img;
}

std::string write_temp(const IdxImages& img, const std::string& name) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream os(path, std::ios::binary);
    write_idx_images(os, img);
    return path;
}

double max_norm_error(const PairedDataset& d) {
    double e = 0.0;
    for (Index n = 0; n < d.size(); ++n) {
        e = std::max(e, std::abs(d.anchors().row(n).norm() - 1.0));
        e = std::max(e, std::abs(d.augments().row(n).norm() - 1.0));
    }
    return e;
}

} // namespace

TEST(SyntheticPairs, ZeroNoiseGivesIdenticalPairs) {
    const auto d = synthetic_pairs(5, 3, 0.0, 7);
    EXPECT_EQ(d.size(), 5);
    EXPECT_EQ(d.dim(), 3);
    EXPECT_EQ(d.anchors(), d.augments());
}

TEST(SyntheticPairs, SameSeedIsBitwiseIdentical) {
    const auto a = synthetic_pairs(20, 6, 0.3, 42);
    const auto b = synthetic_pairs(20, 6, 0.3, 42);
    EXPECT_EQ(a.anchors(), b.anchors());
    EXPECT_EQ(a.augments(), b.augments());
    const auto c = synthetic_pairs(20, 6, 0.3, 43);
    EXPECT_NE(a.anchors(), c.anchors());
}

TEST(SyntheticPairs, AllVectorsUnitNorm) {
    const auto d = synthetic_pairs(100, 10, 0.1, 3);
    EXPECT_LE(max_norm_error(d), 1e-12);
}

TEST(SyntheticPairs, SmallerDatasetIsPrefixOfLarger) {
    const auto small = synthetic_pairs(4, 8, 0.2, 11);
    const auto big = synthetic_pairs(9, 8, 0.2, 11);
    EXPECT_EQ(small.anchors(), big.anchors().topRows(4));
    EXPECT_EQ(small.augments(), big.augments().topRows(4));
}

TEST(SyntheticPairs, RejectsBadArguments) {
    EXPECT_THROW(synthetic_pairs(0, 3, 0.0, 0), PreconditionError);
    EXPECT_THROW(synthetic_pairs(3, 0, 0.0, 0), PreconditionError);
    EXPECT_THROW(synthetic_pairs(3, 3, -1.0, 0), PreconditionError);
}

TEST(PairedDataset, RejectsOffSphereAndMismatchedInputs) {
    Mat a = Mat::Identity(2, 2), b = Mat::Identity(2, 2);
    EXPECT_NO_THROW(PairedDataset(a, b));
    b(0, 0) = 2.0;
    EXPECT_THROW(PairedDataset(a, b), PreconditionError);
    EXPECT_THROW(PairedDataset(Mat::Identity(2, 2), Mat::Identity(3, 3)), DimensionError);
}

TEST(Idx, ZeroNoisePairsAreIdenticalAndUnitNorm) {
    const auto path = write_temp(fake_images(12, 4, 5, 1), "btntk_zero_noise.idx");
    const auto d = load_mnist_pairs(path, 10, AugmentSpec{0.0}, 0);
    EXPECT_EQ(d.size(), 10);
    EXPECT_EQ(d.dim(), 20);
    EXPECT_EQ(d.anchors(), d.augments());
    EXPECT_LE(max_norm_error(d), 1e-12);
    std::filesystem::remove(path);
}

TEST(Idx, MnistShapedFileMatchesByteLevelReader) {
    const auto img = fake_images(60000, 28, 28, 5);
    const auto path = write_temp(img, "btntk_mnist_shape.idx");
    const auto parsed = read_idx_images(path);
    EXPECT_EQ(parsed.count, 60000u);
    EXPECT_EQ(parsed.pixels_per_image(), 784);

    std::ifstream raw(path, std::ios::binary);
    const auto sums = oracle::idx_pixel_sums(raw, 50);
    for (Index n = 0; n < 50; ++n) {
        // image() scales by 1/255; undo and compare with the raw byte sum.
        EXPECT_NEAR(parsed.image(n).sum() * 255.0, double(sums[static_cast<std::size_t>(n)]), 1e-6);
    }

    const auto d = load_mnist_pairs(path, 50, AugmentSpec{0.0}, 0);
    EXPECT_EQ(d.size(), 50);
    EXPECT_EQ(d.dim(), 784);
    // Zero-noise anchors are the images rescaled to unit norm.
    for (Index n = 0; n < 50; ++n) {
        const Vec img_n = parsed.image(n);
        EXPECT_NEAR((d.anchors().row(n).transpose() - img_n / img_n.norm()).norm(), 0.0, 1e-12);
    }
    std::filesystem::remove(path);
}

TEST(Idx, NoisyAugmentationStaysOnSphereAndIsSeeded) {
    const auto path = write_temp(fake_images(8, 3, 3, 2), "btntk_noisy.idx");
    const auto a = load_mnist_pairs(path, 8, AugmentSpec{0.05}, 9);
    const auto b = load_mnist_pairs(path, 8, AugmentSpec{0.05}, 9);
    EXPECT_EQ(a.anchors(), b.anchors());
    EXPECT_NE(a.anchors(), a.augments());
    EXPECT_LE(max_norm_error(a), 1e-12);
    std::filesystem::remove(path);
}

TEST(Idx, BadMagicIsNamedInError) {
    std::stringstream ss;
    io::write_be_u32(ss, 0x00000802);
    io::write_be_u32(ss, 1);
    io::write_be_u32(ss, 1);
    io::write_be_u32(ss, 1);
    ss.put(1);
    try {
        read_idx_images(ss);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("0x00000802"), std::string::npos);
    }
}

TEST(Idx, TruncatedFileIsFormatError) {
    auto img = fake_images(3, 2, 2, 4);
    std::stringstream ss;
    write_idx_images(ss, img);
    std::string bytes = ss.str();
    bytes.resize(bytes.size() - 3);
    std::stringstream truncated(bytes);
    EXPECT_THROW(read_idx_images(truncated), FormatError);

    std::stringstream header_only(bytes.substr(0, 6));
    EXPECT_THROW(read_idx_images(header_only), FormatError);
}

TEST(Idx, LabelFilesAreAcceptedButNotImages) {
    std::stringstream ss;
    io::write_be_u32(ss, kIdxLabelMagic);
    io::write_be_u32(ss, 3);
    ss.put(1).put(2).put(3);
    std::stringstream copy(ss.str());
    EXPECT_EQ(read_idx_labels(ss).size(), 3u);
    EXPECT_THROW(read_idx_images(copy), FormatError);
}

TEST(Idx, ZeroImageIsDegenerate) {
    IdxImages img;
    img.count = 2;
    img.rows = 2;
    img.cols = 2;
    img.pixels = {1, 2, 3, 4, 0, 0, 0, 0};
    EXPECT_THROW(make_image_pairs(img, 2, AugmentSpec{0.0}, 0), DegenerateInputError);
    EXPECT_NO_THROW(make_image_pairs(img, 1, AugmentSpec{0.0}, 0));
    EXPECT_THROW(make_image_pairs(img, 3, AugmentSpec{0.0}, 0), PreconditionError);
}
