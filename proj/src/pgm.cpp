#include <cmath>
#include <fstream>

#include "nrtr/data.hpp"
#include "nrtr/errors.hpp"

namespace nrtr {

namespace {

struct PgmReader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    [[noreturn]] void fail(const std::string& what) const {
        throw IoError("pgm '" + path + "': " + what + " at byte offset " + std::to_string(pos));
    }

    // PGM header tokens are separated by whitespace; '#' starts a comment.
    void skip_separators() {
        while (pos < buf.size()) {
            const char c = buf[pos];
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_int() {
        skip_separators();
        if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9') fail("expected integer");
        long v = 0;
        while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
            v = v * 10 + (buf[pos] - '0');
            if (v > 1 << 24) fail("integer too large");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

} // namespace

ImageSample load_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    PgmReader r{buf, 0, path};

    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') r.fail("not a binary PGM (P5)");
    r.pos = 2;
    const int width = r.read_int();
    const int height = r.read_int();
    const int maxval = r.read_int();
    if (width < 1 || height < 1) r.fail("degenerate dimensions");
    if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval));
    if (r.pos >= buf.size()) r.fail("missing pixel data");
    ++r.pos; // single whitespace byte after maxval
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (buf.size() - r.pos < need) {
        r.pos = buf.size();
        r.fail("pixel data truncated, need " + std::to_string(need) + " bytes");
    }

    std::vector<float> raw(need);
    for (std::size_t i = 0; i < need; ++i)
        raw[i] = static_cast<float>(static_cast<unsigned char>(buf[r.pos + i])) / 255.0f;

    if (height == kImageHeight) {
        return ImageSample{Tensor<float>::from({height, width}, std::move(raw)), ""};
    }

    // Proportional nearest-neighbor rescale to height 32.
    const double ratio = static_cast<double>(kImageHeight) / height;
    const int new_w = std::max(1, static_cast<int>(std::lround(width * ratio)));
    Tensor<float> out = Tensor<float>::zeros({kImageHeight, new_w});
    for (int y = 0; y < kImageHeight; ++y) {
        const int sy = std::min(height - 1, static_cast<int>(y / ratio));
        for (int x = 0; x < new_w; ++x) {
            const int sx = std::min(width - 1, static_cast<int>(x / ratio));
            out.data()[static_cast<std::size_t>(y) * new_w + x] =
                raw[static_cast<std::size_t>(sy) * width + sx];
        }
    }
    return ImageSample{out, ""};
}

void save_pgm(const ImageSample& img, const std::string& path) {
    const int h = img.pixels.extent(0), w = img.pixels.extent(1);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open image for writing: " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    std::string bytes(static_cast<std::size_t>(h) * w, '\0');
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, img.pixels.data()[i]));
        bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing image: " + path);
}

} // namespace nrtr
