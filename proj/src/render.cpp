#include <algorithm>

#include "nrtr/data.hpp"
#include "nrtr/errors.hpp"
#include "nrtr/font.hpp"

namespace nrtr {

namespace {

// Advance per character: glyph plus one column of spacing, in cells.
constexpr int kAdvanceCells = kGlyphWidth + 1;

} // namespace

ImageSample render(const std::string& text, const RenderStyle& style, std::uint64_t seed) {
    if (text.empty()) throw IoError("render: empty text");
    if (text.size() > kMaxRenderLen)
        throw IoError("render: text length " + std::to_string(text.size()) + " exceeds " +
                      std::to_string(kMaxRenderLen));
    if (style.scale < 1 || style.scale * kGlyphHeight > kImageHeight)
        throw ConfigError("render: scale " + std::to_string(style.scale) + " does not fit height " +
                          std::to_string(kImageHeight));
    if (style.x_jitter < 0) throw ConfigError("render: negative jitter");
    if (style.noise_level < 0.0 || style.noise_level > 1.0) throw ConfigError("render: noise level outside [0,1]");

    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) {
        const int id = charset::char_to_id(c);
        if (id < 0) throw IoError("render: character '" + std::string(1, c) + "' is outside the charset");
        ids.push_back(id);
    }

    const int s = style.scale;
    const int n = static_cast<int>(ids.size());
    const int width = s * (kAdvanceCells * n + 2); // one-cell margin each side
    const int y0 = (kImageHeight - kGlyphHeight * s) / 2;

    Rng rng(seed);
    Tensor<float> px = Tensor<float>::zeros({kImageHeight, width});
    auto& data = px.data();

    for (int k = 0; k < n; ++k) {
        int x0 = s * (1 + kAdvanceCells * k);
        if (style.x_jitter > 0) {
            const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * style.x_jitter + 1))) -
                          style.x_jitter;
            x0 = std::clamp(x0 + j, 0, width - kGlyphWidth * s);
        }
        const Glyph& g = glyph_for(ids[static_cast<std::size_t>(k)]);
        for (int gy = 0; gy < kGlyphHeight; ++gy)
            for (int gx = 0; gx < kGlyphWidth; ++gx) {
                if ((g[static_cast<std::size_t>(gy)] & (1u << (kGlyphWidth - 1 - gx))) == 0) continue;
                for (int dy = 0; dy < s; ++dy)
                    for (int dx = 0; dx < s; ++dx)
                        data[static_cast<std::size_t>(y0 + gy * s + dy) * width + x0 + gx * s + dx] = 1.0f;
            }
    }

    if (style.noise_level > 0.0) {
        for (auto& v : data) {
            const double noisy = v + style.noise_level * (2.0 * rng.uniform() - 1.0);
            v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
        }
    }
    if (style.invert)
        for (auto& v : data) v = 1.0f - v;

    return ImageSample{px, text};
}

} // namespace nrtr
