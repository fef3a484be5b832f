#include "nrtr/train.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "nrtr/optimizer.hpp"

namespace nrtr {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> to_u64_shape(const std::vector<int>& shape) {
    return std::vector<std::uint64_t>(shape.begin(), shape.end());
}

int count_with_prefix(const Checkpoint& ckpt, const std::string& prefix, const std::string& suffix) {
    int n = 0;
    while (ckpt.has(prefix + std::to_string(n) + suffix)) ++n;
    return n;
}

const NamedTensorData& require(const Checkpoint& ckpt, const std::string& name) {
    const NamedTensorData* t = ckpt.find(name);
    if (t == nullptr) throw IntegrityError("checkpoint is missing tensor '" + name + "'");
    return *t;
}

} // namespace

Checkpoint snapshot_model(const Recognizer<float>& model) {
    Checkpoint ckpt;
    for (const auto& p : model.named_params())
        ckpt.tensors.push_back({p.name, to_u64_shape(p.tensor.shape()), p.tensor.data()});
    return ckpt;
}

void load_model_params(Recognizer<float>& model, const Checkpoint& ckpt) {
    for (auto& p : model.named_params()) {
        const NamedTensorData& t = require(ckpt, p.name);
        if (t.shape != to_u64_shape(p.tensor.shape()) || t.values.size() != p.tensor.size())
            throw IntegrityError("checkpoint tensor '" + p.name + "' has mismatched shape");
        Tensor<float> dst = p.tensor; // shared storage
        dst.data() = t.values;
    }
}

ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
    ModelConfig cfg;
    const NamedTensorData& emb = require(ckpt, "char_emb");
    if (emb.shape.size() != 2 || emb.shape[0] != static_cast<std::uint64_t>(charset::kVocabSize))
        throw IntegrityError("checkpoint char_emb is not [39, d_model]");
    cfg.d_model = static_cast<int>(emb.shape[1]);

    cfg.conv_layers = count_with_prefix(ckpt, "conv", ".kernel");
    if (cfg.conv_layers < 1) throw IntegrityError("checkpoint has no conv layers");
    const NamedTensorData& k0 = require(ckpt, "conv0.kernel");
    if (k0.shape.size() != 4) throw IntegrityError("checkpoint conv0.kernel is not rank 4");
    const int c1 = static_cast<int>(k0.shape[3]);
    if (c1 < 2 || (2 * cfg.d_model) % c1 != 0) throw IntegrityError("checkpoint conv0 channels are inconsistent");
    cfg.input_height = 2 * cfg.d_model / c1;

    cfg.n_enc = count_with_prefix(ckpt, "enc", ".ln1.gain");
    cfg.n_dec = count_with_prefix(ckpt, "dec", ".ln1.gain");
    if (cfg.n_enc < 1 || cfg.n_dec < 1) throw IntegrityError("checkpoint has no encoder/decoder blocks");

    int h = 0;
    while (ckpt.has("enc0.attn.wq" + std::to_string(h))) ++h;
    if (h < 1) throw IntegrityError("checkpoint has no attention heads");
    cfg.n_heads = h;
    const NamedTensorData& wq0 = require(ckpt, "enc0.attn.wq0");
    if (wq0.shape.size() != 2) throw IntegrityError("checkpoint enc0.attn.wq0 is not rank 2");
    cfg.head_dim = static_cast<int>(wq0.shape[1]);

    const NamedTensorData& w1 = require(ckpt, "enc0.ffn.w1");
    if (w1.shape.size() != 2) throw IntegrityError("checkpoint enc0.ffn.w1 is not rank 2");
    cfg.d_ff = static_cast<int>(w1.shape[1]);

    cfg.dropout = 0.0; // inference-only reconstruction
    return cfg;
}

Recognizer<float> model_from_checkpoint(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    Recognizer<float> model(config_from_checkpoint(ckpt), 0);
    load_model_params(model, ckpt);
    return model;
}

namespace {

Checkpoint snapshot_with_opt(const Recognizer<float>& model, const Adam<float>& opt) {
    Checkpoint ckpt = snapshot_model(model);
    ckpt.tensors.push_back(
        {"opt/step", {1}, {static_cast<float>(opt.completed_steps())}});
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.tensors.push_back({"opt/m/" + params[i].name, to_u64_shape(params[i].tensor.shape()),
                                opt.first_moment(i)});
        ckpt.tensors.push_back({"opt/v/" + params[i].name, to_u64_shape(params[i].tensor.shape()),
                                opt.second_moment(i)});
    }
    return ckpt;
}

void resume_opt(Adam<float>& opt, const Checkpoint& ckpt) {
    const NamedTensorData* step = ckpt.find("opt/step");
    if (step == nullptr)
        throw ConfigError("cannot resume: checkpoint carries no optimizer state (was it averaged?)");
    opt.set_completed_steps(static_cast<std::int64_t>(step->values.at(0)));
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const NamedTensorData& m = require(ckpt, "opt/m/" + params[i].name);
        const NamedTensorData& v = require(ckpt, "opt/v/" + params[i].name);
        if (m.values.size() != opt.first_moment(i).size() || v.values.size() != opt.second_moment(i).size())
            throw IntegrityError("optimizer state for '" + params[i].name + "' has mismatched size");
        opt.first_moment(i) = m.values;
        opt.second_moment(i) = v.values;
    }
}

std::string checkpoint_path(const std::string& out_dir, std::int64_t step) {
    char name[48];
    std::snprintf(name, sizeof(name), "ckpt_%08" PRId64 ".nrtr", step);
    return (fs::path(out_dir) / name).string();
}

} // namespace

TrainOutcome train(const RunConfig& cfg, std::ostream& log, const TrainOptions& opts) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    Rng session(cfg.seed);
    Rng init_rng = session.fork(1);
    Rng data_rng = session.fork(2);
    Rng dropout_rng = session.fork(3);

    Recognizer<float> model(cfg.model_config(), init_rng.next_u64());
    Adam<float> opt(model.named_params());

    if (!opts.resume_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(opts.resume_path);
        load_model_params(model, ckpt);
        resume_opt(opt, ckpt);
    }

    std::vector<ImageSample> corpus;
    if (!opts.corpus.empty())
        corpus = opts.corpus;
    else if (!cfg.train_manifest.empty())
        corpus = load_manifest(cfg.train_manifest);
    else
        corpus = make_default_corpus(cfg.synth_train_size, session.fork(4).next_u64());

    const int width_multiple = cfg.model_config().conv_config().stride_total();
    std::vector<Batch> batches = make_buckets(corpus, cfg.bucket_granularity, cfg.batch_size, width_multiple, data_rng);
    std::size_t batch_idx = 0;

    TrainOutcome outcome;
    std::vector<std::string> saved;
    std::int64_t last_saved_step = -1;
    const auto save_now = [&](std::int64_t step) {
        const std::string path = checkpoint_path(cfg.out_dir, step);
        save_checkpoint(snapshot_with_opt(model, opt), path);
        saved.push_back(path);
        last_saved_step = step;
    };

    const std::int64_t start = opt.completed_steps();
    for (std::int64_t step = start + 1; step <= cfg.max_steps; ++step) {
        if (batch_idx >= batches.size()) {
            batches = make_buckets(corpus, cfg.bucket_granularity, cfg.batch_size, width_multiple, data_rng);
            batch_idx = 0;
        }
        const Batch& batch = batches[batch_idx++];

        float loss_value = 0.0f;
        double lr = 0.0;
        {
            Tape<float> tape;
            const ForwardCtx ctx = model.train_ctx(dropout_rng);
            Tensor<float> total;
            int count = 0;
            for (int i = 0; i < batch.size(); ++i) {
                auto [s, c] = model.loss_sum(batch.image(i), batch.valid_widths[static_cast<std::size_t>(i)],
                                             batch.targets[static_cast<std::size_t>(i)], ctx);
                total = count == 0 ? s : add(total, s);
                count += c;
            }
            const Tensor<float> loss = scale(total, 1.0f / static_cast<float>(count));
            model.zero_grads();
            tape.backward(loss);
            loss_value = loss.value();
        }
        if (cfg.grad_clip > 0.0) clip_grad_norm(opt.params(), cfg.grad_clip);
        lr = lrate(opt.completed_steps() + 1, cfg.d_model, cfg.warmup_steps);
        opt.step(lr);

        char line[96];
        std::snprintf(line, sizeof(line), "%" PRId64 "\t%.8e\t%.6f\n", step, lr, static_cast<double>(loss_value));
        log << line;

        outcome.steps_done = step;
        outcome.last_loss = loss_value;

        if (step % cfg.checkpoint_every == 0) save_now(step);

        if (opts.hook && opts.hook_every > 0 && step % opts.hook_every == 0 && opts.hook(step, model)) break;
    }

    if (outcome.steps_done > 0 && last_saved_step != outcome.steps_done) save_now(outcome.steps_done);

    if (!saved.empty()) {
        outcome.final_checkpoint = saved.back();
        const std::size_t take = std::min<std::size_t>(10, saved.size());
        const std::vector<std::string> window(saved.end() - static_cast<std::ptrdiff_t>(take), saved.end());
        const Checkpoint avg = average_checkpoints(window);
        outcome.averaged_checkpoint = (fs::path(cfg.out_dir) / "final_avg.nrtr").string();
        save_checkpoint(avg, outcome.averaged_checkpoint);
    }
    return outcome;
}

} // namespace nrtr
