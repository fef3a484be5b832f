#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "nrtr/data.hpp"
#include "nrtr/errors.hpp"

namespace nrtr {

namespace fs = std::filesystem;

std::vector<ImageSample> load_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<ImageSample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw IoError("manifest '" + manifest_path + "' line " + std::to_string(line_no) +
                          ": expected `path<TAB>label`");
        const std::string rel = line.substr(0, tab);
        const std::string label = line.substr(tab + 1);
        tokenize(label); // validate before doing image work
        ImageSample s = load_pgm((base / rel).string());
        s.label = label;
        out.push_back(std::move(s));
    }
    if (out.empty()) throw IoError("manifest '" + manifest_path + "' has no samples");
    return out;
}

void write_corpus(const std::vector<ImageSample>& samples, const std::string& dir,
                  const std::string& manifest_name) {
    fs::create_directories(dir);
    std::ofstream mf(fs::path(dir) / manifest_name);
    if (!mf) throw IoError("cannot write manifest in " + dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
        save_pgm(samples[i], (fs::path(dir) / name).string());
        mf << name << '\t' << samples[i].label << '\n';
    }
}

namespace {

std::string random_string(Rng& rng, int len_lo, int len_hi, bool digits_only) {
    const int len = len_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(len_hi - len_lo + 1)));
    std::string s;
    s.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        if (digits_only) {
            s.push_back(static_cast<char>('0' + rng.below(10)));
            continue;
        }
        const bool edge = (i == 0 || i == len - 1);
        // ids 0..35 are letters+digits; 36 is space, excluded at the edges
        const int id = static_cast<int>(rng.below(edge ? 36u : 37u));
        s.push_back(charset::id_to_char(id));
    }
    return s;
}

std::vector<ImageSample> make_corpus(int count, std::uint64_t seed, int len_lo, int len_hi, bool digits_only) {
    if (count < 1) throw ConfigError("corpus size must be >= 1");
    Rng rng(seed);
    RenderStyle style;
    style.scale = 4;
    style.x_jitter = 1;
    style.noise_level = 0.03;
    std::vector<ImageSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::string text = random_string(rng, len_lo, len_hi, digits_only);
        out.push_back(render(text, style, rng.next_u64()));
    }
    return out;
}

} // namespace

std::vector<ImageSample> make_default_corpus(int count, std::uint64_t seed) {
    return make_corpus(count, seed, 1, 6, false);
}

std::vector<ImageSample> make_digit_corpus(int count, std::uint64_t seed) {
    return make_corpus(count, seed, 1, 4, true);
}

Tensor<float> Batch::image(int i) const {
    const int h = images.extent(1), w = images.extent(2);
    Tensor<float> out = Tensor<float>::zeros({h, w});
    std::copy_n(images.data().begin() + static_cast<std::size_t>(i) * h * w, static_cast<std::size_t>(h) * w,
                out.data().begin());
    return out;
}

std::vector<Batch> make_buckets(const std::vector<ImageSample>& samples, int bucket_granularity, int batch_size,
                                int width_multiple, Rng& rng) {
    if (bucket_granularity < 1 || bucket_granularity % width_multiple != 0)
        throw ConfigError("bucket granularity must be a positive multiple of " + std::to_string(width_multiple));
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");

    std::map<int, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const int w = samples[i].width();
        const int key = (w + bucket_granularity - 1) / bucket_granularity;
        buckets[key].push_back(i);
    }

    std::vector<Batch> batches;
    for (auto& [key, idx] : buckets) {
        rng.shuffle(idx);
        const int bucket_width = key * bucket_granularity;
        for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
            const int b = static_cast<int>(end - start);
            Batch batch;
            batch.bucket_key = key;
            batch.images = Tensor<float>::zeros({b, kImageHeight, bucket_width});
            std::size_t t_max = 0;
            for (std::size_t k = start; k < end; ++k)
                t_max = std::max(t_max, samples[idx[k]].label.size() + 1);
            for (int bi = 0; bi < b; ++bi) {
                const ImageSample& s = samples[idx[start + static_cast<std::size_t>(bi)]];
                const int w = s.width();
                for (int y = 0; y < kImageHeight; ++y)
                    std::copy_n(s.pixels.data().begin() + static_cast<std::size_t>(y) * w, w,
                                batch.images.data().begin() +
                                    (static_cast<std::size_t>(bi) * kImageHeight + y) * bucket_width);
                batch.valid_widths.push_back(w);
                TokenSequence t = tokenize(s.label);
                t.resize(t_max, kTargetPad);
                batch.targets.push_back(std::move(t));
            }
            batches.push_back(std::move(batch));
        }
    }
    rng.shuffle(batches);
    return batches;
}

} // namespace nrtr
