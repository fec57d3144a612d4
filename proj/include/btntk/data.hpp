#ifndef BTNTK_DATA_HPP
#define BTNTK_DATA_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "btntk/common.hpp"

namespace btntk {

/// N positive pairs (x_n, x_n+) of unit-norm d-vectors, stored one pair per row.
class PairedDataset {
public:
    PairedDataset() = default;

    /// Takes ownership of two N x d matrices. Rows must already be unit norm.
    PairedDataset(Mat anchors, Mat augments) : anchors_(std::move(anchors)), augments_(std::move(augments)) {
        if (anchors_.rows() < 1)
            throw PreconditionError("dataset needs at least one pair");
        require_shape(anchors_.rows() == augments_.rows() && anchors_.cols() == augments_.cols(),
                      "anchors and augments must have identical shape");
        for (Index n = 0; n < anchors_.rows(); ++n) {
            if (std::abs(anchors_.row(n).norm() - 1.0) > kNormTolerance ||
                std::abs(augments_.row(n).norm() - 1.0) > kNormTolerance)
                throw PreconditionError(concat("pair ", n, " is not on the unit sphere"));
        }
    }

    static constexpr double kNormTolerance = 1e-12;

    Index size() const { return anchors_.rows(); }
    Index dim() const { return anchors_.cols(); }
    const Mat& anchors() const { return anchors_; }
    const Mat& augments() const { return augments_; }

    /// All 2N points in the frozen ordering: anchors first, then augments.
    Mat stacked() const {
        Mat out(2 * size(), dim());
        out.topRows(size()) = anchors_;
        out.bottomRows(size()) = augments_;
        return out;
    }

    /// The dataset restricted to the given pair indices, in the given order.
    PairedDataset subset(const std::vector<Index>& pairs) const {
        Mat a(static_cast<Index>(pairs.size()), dim());
        Mat b(static_cast<Index>(pairs.size()), dim());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i] < 0 || pairs[i] >= size())
                throw PreconditionError("pair index out of range");
            a.row(static_cast<Index>(i)) = anchors_.row(pairs[i]);
            b.row(static_cast<Index>(i)) = augments_.row(pairs[i]);
        }
        return {std::move(a), std::move(b)};
    }

private:
    Mat anchors_;
    Mat augments_;
};

struct AugmentSpec {
    double noise_scale = 0.0;
};

inline Vec normalized(const Vec& v) {
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw DegenerateInputError("cannot normalize a zero or non-finite vector");
    Vec out = v / norm;
    // One refinement pass pulls |norm - 1| down to a few ulps.
    out /= out.norm();
    return out;
}

// ---------------------------------------------------------------------------
// IDX files
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols, row-major per image

    Index pixels_per_image() const { return Index(rows) * Index(cols); }

    /// Image i flattened row-major and scaled to [0, 1].
    Vec image(Index i) const {
        const Index p = pixels_per_image();
        Vec out(p);
        for (Index j = 0; j < p; ++j)
            out(j) = pixels[static_cast<std::size_t>(i * p + j)] / 255.0;
        return out;
    }
};

inline std::string hex_magic(std::uint32_t magic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", magic);
    return buf;
}

inline IdxImages read_idx_images(std::istream& is) {
    IdxImages out;
    const std::uint32_t magic = io::read_be_u32(is);
    if (magic != kIdxImageMagic)
        throw FormatError(concat("bad IDX image magic number ", hex_magic(magic), " (expected ",
                                 hex_magic(kIdxImageMagic), ")"));
    out.count = io::read_be_u32(is);
    out.rows = io::read_be_u32(is);
    out.cols = io::read_be_u32(is);
    const std::size_t total = std::size_t(out.count) * out.rows * out.cols;
    out.pixels.resize(total);
    if (total > 0 && !is.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(total)))
        throw FormatError(concat("truncated IDX image payload: expected ", total, " bytes"));
    return out;
}

inline IdxImages read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw PreconditionError("cannot open IDX file " + path);
    return read_idx_images(in);
}

/// Reads an IDX label file. Labels are not used by the training method; this only validates the file.
inline std::vector<std::uint8_t> read_idx_labels(std::istream& is) {
    const std::uint32_t magic = io::read_be_u32(is);
    if (magic != kIdxLabelMagic)
        throw FormatError(concat("bad IDX label magic number ", hex_magic(magic), " (expected ",
                                 hex_magic(kIdxLabelMagic), ")"));
    const std::uint32_t count = io::read_be_u32(is);
    std::vector<std::uint8_t> labels(count);
    if (count > 0 && !is.read(reinterpret_cast<char*>(labels.data()), count))
        throw FormatError("truncated IDX label payload");
    return labels;
}

inline void write_idx_images(std::ostream& os, const IdxImages& images) {
    io::write_be_u32(os, kIdxImageMagic);
    io::write_be_u32(os, images.count);
    io::write_be_u32(os, images.rows);
    io::write_be_u32(os, images.cols);
    os.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

/// Positive pairs from the first `count` images: each side gets its own additive Gaussian pixel
/// jitter and is then renormalized.
inline PairedDataset make_image_pairs(const IdxImages& images, Index count, const AugmentSpec& augmentation,
                                      std::uint64_t seed) {
    if (count < 1 || count > Index(images.count))
        throw PreconditionError(concat("requested ", count, " pairs but file has ", images.count, " images"));
    if (augmentation.noise_scale < 0.0)
        throw PreconditionError("noise_scale must be nonnegative");
    const Index d = images.pixels_per_image();
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat anchors(count, d), augments(count, d);
    for (Index n = 0; n < count; ++n) {
        const Vec img = images.image(n);
        Vec a = img, b = img;
        if (augmentation.noise_scale > 0.0) {
            for (Index j = 0; j < d; ++j)
                a(j) += augmentation.noise_scale * gauss(rng);
            for (Index j = 0; j < d; ++j)
                b(j) += augmentation.noise_scale * gauss(rng);
        }
        try {
            anchors.row(n) = normalized(a).transpose();
            augments.row(n) = normalized(b).transpose();
        } catch (const DegenerateInputError&) {
            throw DegenerateInputError(concat("image ", n, " has zero norm after augmentation"));
        }
    }
    return {std::move(anchors), std::move(augments)};
}

inline PairedDataset load_mnist_pairs(const std::string& images_path, Index count, const AugmentSpec& augmentation,
                                      std::uint64_t seed) {
    return make_image_pairs(read_idx_images(images_path), count, augmentation, seed);
}

/// Anchors uniform on the sphere S^{d-1}; augments = normalize(anchor + noise * gaussian).
inline PairedDataset synthetic_pairs(Index N, Index d, double noise, std::uint64_t seed) {
    if (N < 1 || d < 1)
        throw PreconditionError("synthetic_pairs needs N >= 1 and d >= 1");
    if (noise < 0.0)
        throw PreconditionError("noise must be nonnegative");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat anchors(N, d), augments(N, d);
    for (Index n = 0; n < N; ++n) {
        Vec a(d);
        do {
            for (Index j = 0; j < d; ++j)
                a(j) = gauss(rng);
        } while (a.norm() == 0.0);
        a = normalized(a);
        Vec b = a;
        if (noise > 0.0) {
            for (Index j = 0; j < d; ++j)
                b(j) += noise * gauss(rng);
            b = normalized(b);
        }
        anchors.row(n) = a.transpose();
        augments.row(n) = b.transpose();
    }
    return {std::move(anchors), std::move(augments)};
}

} // namespace btntk

#endif
