#include "nrtr/eval.hpp"

#include <algorithm>

#include "nrtr/modality.hpp"

namespace nrtr {

int edit_distance(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

EvalResult evaluate(const Recognizer<float>& model, const std::vector<ImageSample>& samples, int max_len) {
    EvalResult r;
    const int multiple = model.config().conv_config().stride_total();
    for (const auto& s : samples) {
        const Tensor<float> padded = pad_image_width(s.pixels, multiple);
        const GreedyResult g = model.recognize(padded, s.width(), max_len);
        ++r.samples;
        if (g.text == s.label) ++r.exact_matches;
        r.total_edits += edit_distance(g.text, s.label);
        r.total_label_chars += static_cast<int>(s.label.size());
    }
    return r;
}

} // namespace nrtr
