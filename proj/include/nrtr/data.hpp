#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrtr/charset.hpp"
#include "nrtr/rng.hpp"
#include "nrtr/tensor.hpp"

namespace nrtr {

inline constexpr int kImageHeight = 32;
inline constexpr int kMaxRenderLen = 16;

// Grayscale image (height 32, variable width, values in [0,1]) plus label.
struct ImageSample {
    Tensor<float> pixels; // [32, width], frozen
    std::string label;

    int width() const { return pixels.extent(1); }
};

struct RenderStyle {
    int scale = 4;          // glyph cell magnification; 7*scale must fit in 32 rows
    int x_jitter = 0;       // max per-character horizontal offset, pixels
    double noise_level = 0; // uniform pixel noise amplitude
    bool invert = false;    // swap ink and background polarity
};

// Rasterizes text left to right from the built-in 5x7 font at integer
// scale into a height-32 image, width proportional to length.
// Deterministic given (text, style, seed).
ImageSample render(const std::string& text, const RenderStyle& style, std::uint64_t seed);

// Binary PGM (P5, maxval 255). Loading rescales to height 32 with
// nearest-neighbor when needed and normalizes to [0,1]; parse failures
// report the byte offset.
ImageSample load_pgm(const std::string& path);
void save_pgm(const ImageSample& img, const std::string& path);

// Newline-delimited `relative_path<TAB>label` records; paths resolve
// against the manifest's directory.
std::vector<ImageSample> load_manifest(const std::string& manifest_path);
void write_corpus(const std::vector<ImageSample>& samples, const std::string& dir,
                  const std::string& manifest_name = "manifest.tsv");

// The desk-scale synthetic corpus: `count` random strings of length 1-6
// over the charset, space never at the edges, rendered with the default
// style. Fully reproducible from the seed.
std::vector<ImageSample> make_default_corpus(int count, std::uint64_t seed);

// Random digit-only strings (lengths 1-4), for memorization runs.
std::vector<ImageSample> make_digit_corpus(int count, std::uint64_t seed);

// One training batch; all members share a width bucket. Images are
// right-padded with zeros to the bucket width (a multiple of
// 2^conv_layers); targets are tokenized labels padded with -1.
struct Batch {
    Tensor<float> images; // [B, 32, bucket_width]
    std::vector<int> valid_widths;
    std::vector<TokenSequence> targets;
    int bucket_key = 0;

    int size() const { return images.extent(0); }
    Tensor<float> image(int i) const; // [32, bucket_width] slice
};

// Samples grouped by ceil(width/granularity), shuffled within buckets and
// across batches by `rng`; every sample appears exactly once per epoch.
std::vector<Batch> make_buckets(const std::vector<ImageSample>& samples, int bucket_granularity, int batch_size,
                                int width_multiple, Rng& rng);

} // namespace nrtr
