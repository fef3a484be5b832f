// End-to-end checks of the installed command line (subprocess level).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "nrtr/data.hpp"
#include "nrtr/train.hpp"

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args, bool merge_stderr = false) {
    const std::string cmd =
        std::string(NRTR_CLI_PATH) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
    RunResult r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[512];
    while (fgets(buf, sizeof(buf), p) != nullptr) r.out += buf;
    const int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "nrtr_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// One small trained-ish model shared by the recognize/eval cases.
const std::string& shared_checkpoint() {
    static const std::string path = [] {
        nrtr::ModelConfig mc;
        mc.d_model = 64;
        mc.n_heads = 1;
        mc.head_dim = 16;
        mc.n_enc = 1;
        mc.n_dec = 1;
        mc.d_ff = 32;
        nrtr::Recognizer<float> model(mc, 31);
        const std::string p = (work_dir() / "model.nrtr").string();
        nrtr::save_checkpoint(nrtr::snapshot_model(model), p);
        return p;
    }();
    return path;
}

} // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("train").exit_code == 2);                      // missing --config
    CHECK(run_cli("recognize --ckpt a.nrtr").exit_code == 2);    // missing --image
    CHECK(run_cli("bogus-subcommand").exit_code == 2);
}

TEST_CASE("train rejects malformed configs before any step") {
    const auto cfg = work_dir() / "bad.cfg";
    {
        std::ofstream f(cfg);
        f << "d_model=64\nnot_a_key=3\n";
    }
    const RunResult r = run_cli("train --config " + cfg.string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.empty()); // no training log lines

    const RunResult verbose = run_cli("train --config " + cfg.string(), true);
    CHECK(verbose.out.find("not_a_key") != std::string::npos);
}

TEST_CASE("train runs a tiny config end to end and logs TSV") {
    const auto out_dir = work_dir() / "run";
    const auto manifest_dir = work_dir() / "train_data";
    nrtr::write_corpus(nrtr::make_digit_corpus(6, 5), manifest_dir.string());
    const auto cfg = work_dir() / "ok.cfg";
    {
        std::ofstream f(cfg);
        f << "d_model=64\nh=1\nhead_dim=16\nn_enc=1\nn_dec=1\nd_ff=32\n"
          << "batch_size=2\nmax_steps=3\ncheckpoint_every=2\nseed=4\n"
          << "train_manifest=" << (manifest_dir / "manifest.tsv").string() << "\n"
          << "out_dir=" << out_dir.string() << "\n";
    }
    const RunResult r = run_cli("train --config " + cfg.string());
    CHECK(r.exit_code == 0);
    int lines = 0;
    for (char c : r.out)
        if (c == '\n') ++lines;
    CHECK(lines == 3);
    CHECK(r.out.substr(0, 2) == "1\t");
    CHECK(fs::exists(out_dir / "final_avg.nrtr"));

    // resume picks up after the last step
    const RunResult r2 = run_cli("train --config " + cfg.string() + " --resume " +
                                 (out_dir / "ckpt_00000003.nrtr").string());
    CHECK(r2.exit_code == 0);
    CHECK(r2.out.empty()); // max_steps already reached
}

TEST_CASE("recognize prints a deterministic string") {
    const auto img_path = work_dir() / "digit.pgm";
    nrtr::save_pgm(nrtr::render("3", nrtr::RenderStyle{}, 8), img_path.string());

    const std::string args = "recognize --ckpt " + shared_checkpoint() + " --image " + img_path.string();
    const RunResult a = run_cli(args);
    const RunResult b = run_cli(args);
    CHECK(a.exit_code == 0);
    CHECK(a.out == b.out);
    CHECK(!a.out.empty());
    CHECK(a.out.back() == '\n');
}

TEST_CASE("recognize exit codes for missing and corrupt inputs") {
    CHECK(run_cli("recognize --ckpt " + shared_checkpoint() + " --image /nonexistent.pgm").exit_code == 2);
    CHECK(run_cli("recognize --ckpt /nonexistent.nrtr --image /nonexistent.pgm").exit_code == 2);

    // corrupt a payload byte: integrity failure is exit 3
    const auto broken = work_dir() / "broken.nrtr";
    fs::copy_file(shared_checkpoint(), broken, fs::copy_options::overwrite_existing);
    {
        std::fstream f(broken, std::ios::binary | std::ios::in | std::ios::out);
        f.seekg(0, std::ios::end);
        const auto size = static_cast<std::streamoff>(f.tellg());
        f.seekp(size - 16);
        const char b = 0x77;
        f.write(&b, 1);
    }
    const auto img_path = work_dir() / "x.pgm";
    nrtr::save_pgm(nrtr::render("x", nrtr::RenderStyle{}, 8), img_path.string());
    CHECK(run_cli("recognize --ckpt " + broken.string() + " --image " + img_path.string()).exit_code == 3);
}

TEST_CASE("eval reports a tab-separated summary") {
    const auto data_dir = work_dir() / "eval_data";
    nrtr::write_corpus(nrtr::make_digit_corpus(3, 6), data_dir.string());
    const RunResult r =
        run_cli("eval --ckpt " + shared_checkpoint() + " --manifest " + (data_dir / "manifest.tsv").string());
    CHECK(r.exit_code == 0);
    int tabs = 0;
    for (char c : r.out)
        if (c == '\t') ++tabs;
    CHECK(tabs == 2);
    CHECK(r.out.find("\t3\n") != std::string::npos); // sample count last

    CHECK(run_cli("eval --ckpt " + shared_checkpoint() + " --manifest /nonexistent.tsv").exit_code == 2);

    const auto empty = work_dir() / "empty.tsv";
    std::ofstream(empty.string()).close();
    CHECK(run_cli("eval --ckpt " + shared_checkpoint() + " --manifest " + empty.string()).exit_code == 2);
}

TEST_CASE("gradcheck subcommand passes and prints per-component lines") {
    const RunResult r = run_cli("gradcheck --seed 2");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("attention") != std::string::npos);
    CHECK(r.out.find("encdec_loss") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
}
