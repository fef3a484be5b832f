#pragma once

#include <string>
#include <vector>

#include "nrtr/data.hpp"
#include "nrtr/model.hpp"

namespace nrtr {

int edit_distance(const std::string& a, const std::string& b);

struct EvalResult {
    int samples = 0;
    int exact_matches = 0;
    int total_edits = 0;
    int total_label_chars = 0;

    double word_accuracy_pct() const { return samples == 0 ? 0.0 : 100.0 * exact_matches / samples; }
    double char_error_rate() const {
        return total_label_chars == 0 ? 0.0 : static_cast<double>(total_edits) / total_label_chars;
    }
};

// Greedy-decodes every sample and scores exact-match word accuracy plus the
// per-character edit-distance rate.
EvalResult evaluate(const Recognizer<float>& model, const std::vector<ImageSample>& samples, int max_len = 32);

} // namespace nrtr
