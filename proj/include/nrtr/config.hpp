#pragma once

#include <cstdint>
#include <string>

#include "nrtr/model.hpp"

namespace nrtr {

// Plain-text key=value run configuration. Unknown keys are rejected.
struct RunConfig {
    // architecture
    int d_model = 64;
    int h = 2;
    int head_dim = 0; // 0: full d_model per head
    int n_enc = 2;
    int n_dec = 2;
    int d_ff = 128;
    int conv_layers = 2;
    double dropout = 0.1;
    // optimization
    std::int64_t warmup_steps = 400;
    int batch_size = 32;
    std::int64_t max_steps = 2000;
    std::int64_t checkpoint_every = 200;
    double grad_clip = 0.0; // 0 disables clipping
    std::uint64_t seed = 1;
    // data
    std::string train_manifest; // empty: synthesize the default corpus
    std::string out_dir = "checkpoints";
    int bucket_granularity = 32;
    int synth_train_size = 2000;

    ModelConfig model_config() const {
        ModelConfig m;
        m.d_model = d_model;
        m.n_heads = h;
        m.head_dim = head_dim;
        m.n_enc = n_enc;
        m.n_dec = n_dec;
        m.d_ff = d_ff;
        m.conv_layers = conv_layers;
        m.dropout = dropout;
        return m;
    }

    void validate() const;
};

RunConfig parse_run_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);

} // namespace nrtr
