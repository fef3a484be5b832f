// Command-line front end: train, recognize, eval, gradcheck.
// Exit codes: 0 success, 1 internal error, 2 usage/IO error,
// 3 data-integrity error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nrtr/eval.hpp"
#include "nrtr/gradcheck.hpp"
#include "nrtr/train.hpp"

namespace {

int cmd_train(const std::string& config_path, const std::string& resume_path) {
    const nrtr::RunConfig cfg = nrtr::load_run_config(config_path);
    nrtr::TrainOptions opts;
    opts.resume_path = resume_path;
    const nrtr::TrainOutcome out = nrtr::train(cfg, std::cout, opts);
    std::cerr << "done: " << out.steps_done << " steps, final checkpoint " << out.final_checkpoint
              << ", averaged " << out.averaged_checkpoint << "\n";
    return 0;
}

int cmd_recognize(const std::string& ckpt_path, const std::string& image_path, int max_len) {
    const nrtr::Recognizer<float> model = nrtr::model_from_checkpoint(ckpt_path);
    nrtr::ImageSample img = nrtr::load_pgm(image_path);
    const nrtr::Tensor<float> padded =
        nrtr::pad_image_width(img.pixels, model.config().conv_config().stride_total());
    const nrtr::GreedyResult res = model.recognize(padded, img.width(), max_len);
    std::cout << res.text << "\n";
    if (res.truncated) std::cerr << "warning: decoding stopped at max length " << max_len << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path, int max_len) {
    const nrtr::Recognizer<float> model = nrtr::model_from_checkpoint(ckpt_path);
    const std::vector<nrtr::ImageSample> samples = nrtr::load_manifest(manifest_path);
    const nrtr::EvalResult r = nrtr::evaluate(model, samples, max_len);
    char line[96];
    std::snprintf(line, sizeof(line), "%.2f\t%.4f\t%d\n", r.word_accuracy_pct(), r.char_error_rate(), r.samples);
    std::cout << line;
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto results = nrtr::run_gradcheck(seed);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-12s\tmax_rel_err=%.3e\t%s\n", r.component.c_str(), r.max_rel_err,
                    r.pass() ? "ok" : "FAIL");
        ok = ok && r.pass();
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"no-recurrence scene-text recognizer"};
    app.require_subcommand(1);

    std::string config_path, resume_path, ckpt_path, image_path, manifest_path;
    int max_len = 32;
    std::uint64_t seed = 1;

    auto* train = app.add_subcommand("train", "run teacher-forced training");
    train->add_option("--config", config_path, "key=value run configuration")->required();
    train->add_option("--resume", resume_path, "checkpoint to continue from");

    auto* recognize = app.add_subcommand("recognize", "greedy-decode one PGM image");
    recognize->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    recognize->add_option("--image", image_path, "binary PGM (P5) image")->required();
    recognize->add_option("--max-len", max_len, "decoding length cap");

    auto* eval = app.add_subcommand("eval", "score a manifest of labeled images");
    eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval->add_option("--manifest", manifest_path, "path<TAB>label manifest")->required();
    eval->add_option("--max-len", max_len, "decoding length cap");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", seed, "suite seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, resume_path);
        if (recognize->parsed()) return cmd_recognize(ckpt_path, image_path, max_len);
        if (eval->parsed()) return cmd_eval(ckpt_path, manifest_path, max_len);
        if (gradcheck->parsed()) return cmd_gradcheck(seed);
    } catch (const nrtr::IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const nrtr::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nrtr::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
