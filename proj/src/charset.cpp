#include "nrtr/charset.hpp"

#include <stdexcept>

#include "nrtr/errors.hpp"

namespace nrtr {

namespace charset {

char id_to_char(int id) {
    if (id >= 0 && id < 26) return static_cast<char>('a' + id);
    if (id >= 26 && id < 36) return static_cast<char>('0' + (id - 26));
    if (id == kSpace) return ' ';
    throw std::invalid_argument("id_to_char: id " + std::to_string(id) + " has no character");
}

int char_to_id(char c) {
    if (c >= 'a' && c <= 'z') return c - 'a';
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= '0' && c <= '9') return 26 + (c - '0');
    if (c == ' ') return kSpace;
    return -1;
}

} // namespace charset

TokenSequence tokenize(const std::string& text) {
    if (text.empty()) throw IoError("tokenize: empty label rejected");
    TokenSequence out;
    out.reserve(text.size() + 1);
    for (std::size_t i = 0; i < text.size(); ++i) {
        const int id = charset::char_to_id(text[i]);
        if (id < 0)
            throw IoError("tokenize: character '" + std::string(1, text[i]) + "' at position " + std::to_string(i) +
                          " is outside the charset");
        out.push_back(id);
    }
    out.push_back(charset::kEos);
    return out;
}

std::string detokenize(const TokenSequence& tokens) {
    std::string out;
    for (int id : tokens) {
        if (id == charset::kEos) break;
        if (id == charset::kBos) throw std::invalid_argument("detokenize: BOS is internal and must not appear");
        out.push_back(charset::id_to_char(id));
    }
    return out;
}

} // namespace nrtr
