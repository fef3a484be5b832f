#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nrtr/decoder.hpp"
#include "nrtr/modality.hpp"

namespace nrtr {

struct ModelConfig {
    int d_model = 64;
    int n_heads = 2;
    int head_dim = 0; // 0: heads use the full d_model width
    int n_enc = 2;
    int n_dec = 2;
    int d_ff = 128;
    int conv_layers = 2;
    int input_height = 32;
    int pe_max_len = 512;
    double dropout = 0.1;

    int head_dim_eff() const { return head_dim > 0 ? head_dim : d_model; }

    ConvStackConfig conv_config() const { return ConvStackConfig{conv_layers, 3, d_model, input_height}; }

    void validate() const {
        if (d_model < 2 || d_model % 2 != 0) throw ConfigError("d_model must be even and >= 2");
        if (n_heads < 1) throw ConfigError("h must be >= 1");
        if (head_dim < 0) throw ConfigError("head_dim must be >= 0 (0 selects d_model)");
        if (n_enc < 1 || n_dec < 1) throw ConfigError("n_enc and n_dec must be >= 1");
        if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
        if (pe_max_len < 1) throw ConfigError("pe_max_len must be >= 1");
        conv_config().validate();
    }
};

template <typename F>
struct NamedParam {
    std::string name;
    Tensor<F> tensor;
};

// The full recognizer: conv front end, encoder stack, character embedding,
// decoder stack and output projection, sharing one positional table.
template <typename F>
class Recognizer {
public:
    Recognizer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        pe_ = PositionalEncodingTable<F>::build(cfg_.pe_max_len, cfg_.d_model);
        Rng rng(seed);
        conv_ = ConvStack<F>::init(cfg_.conv_config(), rng);
        encoder_ = Encoder<F>::init(cfg_.n_enc, cfg_.d_model, cfg_.n_heads, cfg_.head_dim_eff(), cfg_.d_ff, rng);
        embedding_ = CharEmbedding<F>::init(cfg_.d_model, rng);
        decoder_ = Decoder<F>::init(cfg_.n_dec, cfg_.d_model, cfg_.n_heads, cfg_.head_dim_eff(), cfg_.d_ff, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const PositionalEncodingTable<F>& pe() const { return pe_; }
    const ConvStack<F>& conv() const { return conv_; }
    const Encoder<F>& encoder() const { return encoder_; }
    Decoder<F>& decoder() { return decoder_; }
    const Decoder<F>& decoder() const { return decoder_; }
    const CharEmbedding<F>& embedding() const { return embedding_; }

    ForwardCtx train_ctx(Rng& rng) const { return ForwardCtx{true, cfg_.dropout, &rng}; }
    static ForwardCtx eval_ctx() { return ForwardCtx{}; }

    // Image [32, w] (width already a multiple of 2^conv_layers) to encoder
    // output plus the count of attention-visible sequence positions.
    ImageSequence<F> encode(const Tensor<F>& img, int valid_width, const ForwardCtx& ctx) const {
        ImageSequence<F> ms = modality_transform(img, valid_width, conv_, pe_, ctx);
        AttentionMask pad;
        const AttentionMask* pad_ptr = nullptr;
        if (ms.valid_len < ms.seq.extent(0)) {
            pad = make_padding_mask(ms.seq.extent(0), ms.valid_len, ms.seq.extent(0));
            pad_ptr = &pad;
        }
        return {encoder_.forward(ms.seq, pad_ptr, ctx), ms.valid_len};
    }

    Tensor<F> logits(const TokenSequence& tgt_tokens, const ImageSequence<F>& enc, const ForwardCtx& ctx) const {
        return decode_logits(tgt_tokens, enc.seq, enc.valid_len, decoder_, embedding_, pe_, ctx);
    }

    // Teacher-forced loss pieces for one sample. `target` is the tokenized
    // label (EOS appended), optionally right-padded with kTargetPad; the
    // decoder input is BOS + label.
    std::pair<Tensor<F>, int> loss_sum(const Tensor<F>& img, int valid_width, const TokenSequence& target,
                                       const ForwardCtx& ctx) const {
        std::size_t unpadded = 0;
        while (unpadded < target.size() && target[unpadded] != kTargetPad) ++unpadded;
        if (unpadded == 0) throw std::invalid_argument("loss_sum: empty target");
        if (target[unpadded - 1] != charset::kEos)
            throw std::invalid_argument("loss_sum: target must end with EOS before any padding");
        TokenSequence input;
        input.reserve(unpadded);
        input.push_back(charset::kBos);
        for (std::size_t i = 0; i + 1 < unpadded; ++i) input.push_back(target[i]);
        const TokenSequence tgt(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(unpadded));
        const ImageSequence<F> enc = encode(img, valid_width, ctx);
        return sequence_loss_sum(logits(input, enc, ctx), tgt);
    }

    GreedyResult recognize(const Tensor<F>& img, int valid_width, int max_len) const {
        const ImageSequence<F> enc = encode(img, valid_width, eval_ctx());
        return greedy_decode(enc.seq, enc.valid_len, decoder_, embedding_, pe_, max_len);
    }

    // Stable name -> tensor registry; registration order defines checkpoint
    // payload order.
    std::vector<NamedParam<F>> named_params() const {
        std::vector<NamedParam<F>> out;
        for (std::size_t n = 0; n < conv_.kernels.size(); ++n) {
            out.push_back({"conv" + std::to_string(n) + ".kernel", conv_.kernels[n]});
            out.push_back({"conv" + std::to_string(n) + ".bias", conv_.biases[n]});
        }
        out.push_back({"char_emb", embedding_.matrix});
        for (std::size_t i = 0; i < encoder_.blocks.size(); ++i) {
            const auto& b = encoder_.blocks[i];
            const std::string p = "enc" + std::to_string(i) + ".";
            append_attention(out, p + "attn.", b.self_attn);
            append_layer_norm(out, p + "ln1.", b.ln1);
            append_ffn(out, p + "ffn.", b.ffn_params);
            append_layer_norm(out, p + "ln2.", b.ln2);
        }
        for (std::size_t i = 0; i < decoder_.blocks.size(); ++i) {
            const auto& b = decoder_.blocks[i];
            const std::string p = "dec" + std::to_string(i) + ".";
            append_attention(out, p + "self_attn.", b.self_attn);
            append_layer_norm(out, p + "ln1.", b.ln1);
            append_attention(out, p + "cross_attn.", b.cross_attn);
            append_layer_norm(out, p + "ln2.", b.ln2);
            append_ffn(out, p + "ffn.", b.ffn_params);
            append_layer_norm(out, p + "ln3.", b.ln3);
        }
        out.push_back({"out_proj.w", decoder_.proj.w});
        out.push_back({"out_proj.b", decoder_.proj.b});
        return out;
    }

    void zero_grads() const {
        for (auto& p : named_params()) p.tensor.zero_grad();
    }

private:
    static void append_attention(std::vector<NamedParam<F>>& out, const std::string& prefix,
                                 const AttentionWeights<F>& w) {
        for (int i = 0; i < w.heads(); ++i) {
            out.push_back({prefix + "wq" + std::to_string(i), w.wq[static_cast<std::size_t>(i)]});
            out.push_back({prefix + "wk" + std::to_string(i), w.wk[static_cast<std::size_t>(i)]});
            out.push_back({prefix + "wv" + std::to_string(i), w.wv[static_cast<std::size_t>(i)]});
        }
        out.push_back({prefix + "wo", w.wo});
    }

    static void append_layer_norm(std::vector<NamedParam<F>>& out, const std::string& prefix,
                                  const LayerNormParams<F>& ln) {
        out.push_back({prefix + "gain", ln.gain});
        out.push_back({prefix + "bias", ln.bias});
    }

    static void append_ffn(std::vector<NamedParam<F>>& out, const std::string& prefix, const FfnParams<F>& f) {
        out.push_back({prefix + "w1", f.w1});
        out.push_back({prefix + "b1", f.b1});
        out.push_back({prefix + "w2", f.w2});
        out.push_back({prefix + "b2", f.b2});
    }

    ModelConfig cfg_;
    PositionalEncodingTable<F> pe_;
    ConvStack<F> conv_;
    Encoder<F> encoder_;
    CharEmbedding<F> embedding_;
    Decoder<F> decoder_;
};

} // namespace nrtr
