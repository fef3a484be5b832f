#include "nrtr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "nrtr/errors.hpp"

namespace nrtr {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for doubles is spotty across stdlibs
        std::istringstream is(value);
        is >> out;
        if (!is || !is.eof()) throw ConfigError("config key '" + key + "': bad numeric value '" + value + "'");
    } else {
        const char* first = value.data();
        const char* last = first + value.size();
        const auto r = std::from_chars(first, last, out);
        if (r.ec != std::errc{} || r.ptr != last)
            throw ConfigError("config key '" + key + "': bad integer value '" + value + "'");
    }
    return out;
}

} // namespace

void RunConfig::validate() const {
    model_config().validate();
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
    if (bucket_granularity < 1 || bucket_granularity % (1 << conv_layers) != 0)
        throw ConfigError("bucket_granularity must be a positive multiple of 2^conv_layers");
    if (synth_train_size < 1) throw ConfigError("synth_train_size must be >= 1");
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
        {"d_model", [&](const std::string& k, const std::string& v) { cfg.d_model = parse_number<int>(k, v); }},
        {"h", [&](const std::string& k, const std::string& v) { cfg.h = parse_number<int>(k, v); }},
        {"head_dim", [&](const std::string& k, const std::string& v) { cfg.head_dim = parse_number<int>(k, v); }},
        {"n_enc", [&](const std::string& k, const std::string& v) { cfg.n_enc = parse_number<int>(k, v); }},
        {"n_dec", [&](const std::string& k, const std::string& v) { cfg.n_dec = parse_number<int>(k, v); }},
        {"d_ff", [&](const std::string& k, const std::string& v) { cfg.d_ff = parse_number<int>(k, v); }},
        {"conv_layers",
         [&](const std::string& k, const std::string& v) { cfg.conv_layers = parse_number<int>(k, v); }},
        {"dropout", [&](const std::string& k, const std::string& v) { cfg.dropout = parse_number<double>(k, v); }},
        {"warmup_steps",
         [&](const std::string& k, const std::string& v) { cfg.warmup_steps = parse_number<std::int64_t>(k, v); }},
        {"batch_size", [&](const std::string& k, const std::string& v) { cfg.batch_size = parse_number<int>(k, v); }},
        {"max_steps",
         [&](const std::string& k, const std::string& v) { cfg.max_steps = parse_number<std::int64_t>(k, v); }},
        {"checkpoint_every",
         [&](const std::string& k, const std::string& v) {
             cfg.checkpoint_every = parse_number<std::int64_t>(k, v);
         }},
        {"grad_clip", [&](const std::string& k, const std::string& v) { cfg.grad_clip = parse_number<double>(k, v); }},
        {"seed",
         [&](const std::string& k, const std::string& v) { cfg.seed = parse_number<std::uint64_t>(k, v); }},
        {"train_manifest", [&](const std::string&, const std::string& v) { cfg.train_manifest = v; }},
        {"out_dir", [&](const std::string&, const std::string& v) { cfg.out_dir = v; }},
        {"bucket_granularity",
         [&](const std::string& k, const std::string& v) { cfg.bucket_granularity = parse_number<int>(k, v); }},
        {"synth_train_size",
         [&](const std::string& k, const std::string& v) { cfg.synth_train_size = parse_number<int>(k, v); }},
    };

    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        it->second(key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config_text(text, path);
}

} // namespace nrtr
