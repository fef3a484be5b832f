#pragma once

#include <string>
#include <vector>

#include "nrtr/embeddings.hpp"
#include "nrtr/tensor.hpp"

namespace nrtr {

// Geometry of the image-to-sequence front end: stride-2 convolutions with
// channels doubling per layer, so height * channels stays equal to d_model
// at every layer.
struct ConvStackConfig {
    int n_layers = 2;
    int kernel = 3;
    int d_model = 0;
    int input_height = 32;

    struct LayerShape {
        int width;
        int height;
        int channels;
    };

    void validate() const {
        if (n_layers < 1) throw ConfigError("conv stack needs n_layers >= 1");
        if (kernel < 1) throw ConfigError("conv stack kernel must be >= 1");
        if (d_model < 1) throw ConfigError("conv stack needs positive d_model");
        if (input_height < 1) throw ConfigError("conv stack needs positive input height");
        if (d_model % input_height != 0)
            throw ConfigError("d_model " + std::to_string(d_model) + " must be divisible by input height " +
                              std::to_string(input_height));
        if (input_height % (1 << n_layers) != 0)
            throw ConfigError("input height " + std::to_string(input_height) + " must be divisible by 2^" +
                              std::to_string(n_layers));
    }

    int stride_total() const { return 1 << n_layers; }

    // Channel count after layer n (1-based): (d_model / h0) * 2^n.
    int channels_at(int layer) const { return (d_model / input_height) * (1 << layer); }
    int height_at(int layer) const { return input_height >> layer; }

    // Per-layer (width, height, channels) for an input of width w0, which
    // must already be a multiple of 2^n_layers.
    std::vector<LayerShape> layer_shapes(int w0) const {
        validate();
        if (w0 % stride_total() != 0)
            throw std::invalid_argument("image width " + std::to_string(w0) + " is not a multiple of " +
                                        std::to_string(stride_total()) + "; pad first");
        std::vector<LayerShape> shapes;
        for (int n = 1; n <= n_layers; ++n) {
            LayerShape s{w0 >> n, height_at(n), channels_at(n)};
            if (s.height * s.channels != d_model)
                throw ConfigError("conv stack layer " + std::to_string(n) + " breaks height*channels == d_model");
            shapes.push_back(s);
        }
        return shapes;
    }

    int sequence_len(int w0) const { return w0 / stride_total(); }
};

// Right-pads [h, w] image columns with zeros up to a multiple of `multiple`.
template <typename F>
Tensor<F> pad_image_width(const Tensor<F>& img, int multiple) {
    if (img.rank() != 2) throw std::invalid_argument("pad_image_width: rank-2 image required");
    const int h = img.extent(0), w = img.extent(1);
    const int padded = ((w + multiple - 1) / multiple) * multiple;
    if (padded == w) return img;
    Tensor<F> out = Tensor<F>::zeros({h, padded});
    for (int y = 0; y < h; ++y)
        std::copy_n(img.data().begin() + static_cast<std::size_t>(y) * w, w,
                    out.data().begin() + static_cast<std::size_t>(y) * padded);
    return out;
}

template <typename F>
struct ConvStack {
    ConvStackConfig cfg;
    std::vector<Tensor<F>> kernels; // [k,k,c_in,c_out] per layer
    std::vector<Tensor<F>> biases;  // [c_out] per layer

    static ConvStack init(const ConvStackConfig& cfg, Rng& rng) {
        cfg.validate();
        ConvStack s;
        s.cfg = cfg;
        int c_in = 1;
        for (int n = 1; n <= cfg.n_layers; ++n) {
            const int c_out = cfg.channels_at(n);
            const int fan_in = cfg.kernel * cfg.kernel * c_in;
            const int fan_out = cfg.kernel * cfg.kernel * c_out;
            s.kernels.push_back(glorot_init<F>({cfg.kernel, cfg.kernel, c_in, c_out}, rng, fan_in, fan_out));
            s.biases.push_back(Tensor<F>::zeros({c_out}, true));
            c_in = c_out;
        }
        return s;
    }
};

template <typename F>
struct ImageSequence {
    Tensor<F> seq;     // [w0 / 2^n, d_model]
    int valid_len = 0; // positions whose receptive field avoids padded columns
};

namespace detail {

// Number of output columns whose receptive field stays inside the valid
// input columns [0, valid_in). A full-width input stays full-width: the
// conv's own zero padding is a constant, not image padding.
inline int propagate_valid_width(int valid_in, int width_in, int width_out, int kernel, int stride) {
    if (valid_in >= width_in) return width_out;
    const int pad_total = std::max(0, (width_out - 1) * stride + kernel - width_in);
    const int pad_left = pad_total / 2;
    const int v = (valid_in - kernel + pad_left) / stride + 1;
    return std::max(1, std::min(v, width_out));
}

} // namespace detail

// Runs the conv stack (ReLU after each layer), flattens each column's
// height/channel slots height-major into one d_model vector, and adds
// positional encoding rows. Residual dropout applies to the sum when
// training. `valid_width` is the unpadded image width; the returned
// valid_len counts sequence positions untouched by padded columns.
template <typename F>
ImageSequence<F> modality_transform(const Tensor<F>& img, int valid_width, const ConvStack<F>& stack,
                                    const PositionalEncodingTable<F>& pe, const ForwardCtx& ctx) {
    const ConvStackConfig& cfg = stack.cfg;
    cfg.validate();
    if (img.rank() != 2) throw std::invalid_argument("modality_transform: rank-2 grayscale image required");
    if (img.extent(0) != cfg.input_height)
        throw IoError("modality_transform: image height " + std::to_string(img.extent(0)) + " does not match " +
                      std::to_string(cfg.input_height));
    const int w0 = img.extent(1);
    if (w0 % cfg.stride_total() != 0)
        throw std::invalid_argument("modality_transform: width " + std::to_string(w0) + " is not a multiple of " +
                                    std::to_string(cfg.stride_total()) + "; pad first");
    if (valid_width < 1 || valid_width > w0)
        throw std::invalid_argument("modality_transform: valid width out of range");

    const auto shapes = cfg.layer_shapes(w0);
    Tensor<F> x = reshape(img, {cfg.input_height, w0, 1});
    int valid = valid_width;
    int cur_w = w0;
    for (std::size_t n = 0; n < stack.kernels.size(); ++n) {
        x = relu(conv2d(x, stack.kernels[n], stack.biases[n], 2));
        if (x.extent(0) != shapes[n].height || x.extent(1) != shapes[n].width || x.extent(2) != shapes[n].channels)
            throw std::invalid_argument("modality_transform: layer " + std::to_string(n + 1) +
                                        " produced unexpected shape " + shape_str(x.shape()));
        valid = detail::propagate_valid_width(valid, cur_w, shapes[n].width, cfg.kernel, 2);
        cur_w = shapes[n].width;
    }
    Tensor<F> seq = columns_to_sequence(x);
    if (seq.extent(1) != cfg.d_model)
        throw std::invalid_argument("modality_transform: sequence width != d_model");
    seq = apply_dropout(add(seq, pe.rows(seq.extent(0))), ctx);
    return {seq, valid};
}

} // namespace nrtr
