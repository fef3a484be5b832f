#pragma once

#include <string>
#include <vector>

namespace nrtr {

// The 38 output classes: 26 lowercase letters (0-25), 10 digits (26-35),
// space (36) and end-of-sequence (37). The begin-of-sequence symbol (38)
// is a decoder-input-only embedding row and never an output class.
namespace charset {

inline constexpr int kNumClasses = 38;
inline constexpr int kSpace = 36;
inline constexpr int kEos = 37;
inline constexpr int kBos = 38;
inline constexpr int kVocabSize = 39; // output classes + BOS embedding row

// Character for ids 0..36; EOS and BOS have no character.
char id_to_char(int id);

// Id for a renderable character, folding uppercase to lowercase.
// Returns -1 for characters outside the charset.
int char_to_id(char c);

} // namespace charset

using TokenSequence = std::vector<int>;

// Sentinel for batch-padded target positions, excluded from losses.
inline constexpr int kTargetPad = -1;

// Token ids for `text` with EOS appended. Uppercase folds to lowercase;
// empty text or out-of-charset characters are rejected.
TokenSequence tokenize(const std::string& text);

// Inverse of tokenize: reads ids up to the first EOS. BOS must not appear.
std::string detokenize(const TokenSequence& tokens);

} // namespace nrtr
