#pragma once

#include <array>
#include <cstdint>

namespace nrtr {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

// Fixed 5x7 bitmap for one renderable charset id (0..36); rows[r] holds
// kGlyphWidth bits, bit 4 = leftmost column. Space is all zeros.
using Glyph = std::array<std::uint8_t, kGlyphHeight>;

const Glyph& glyph_for(int charset_id);

} // namespace nrtr
