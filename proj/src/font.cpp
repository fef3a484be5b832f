#include "nrtr/font.hpp"

#include <stdexcept>
#include <string>

namespace nrtr {

namespace {

struct GlyphRows {
    const char* rows[kGlyphHeight];
};

// 5x7 dot-matrix glyphs for a-z, 0-9 and space, in charset id order.
constexpr GlyphRows kGlyphArt[37] = {
    // a
    {{"     ",
      "     ",
      " ### ",
      "    #",
      " ####",
      "#   #",
      " ####"}},
    // b
    {{"#    ",
      "#    ",
      "#### ",
      "#   #",
      "#   #",
      "#   #",
      "#### "}},
    // c
    {{"     ",
      "     ",
      " ### ",
      "#    ",
      "#    ",
      "#   #",
      " ### "}},
    // d
    {{"    #",
      "    #",
      " ####",
      "#   #",
      "#   #",
      "#   #",
      " ####"}},
    // e
    {{"     ",
      "     ",
      " ### ",
      "#   #",
      "#####",
      "#    ",
      " ### "}},
    // f
    {{"  ## ",
      " #  #",
      " #   ",
      "###  ",
      " #   ",
      " #   ",
      " #   "}},
    // g
    {{"     ",
      " ####",
      "#   #",
      "#   #",
      " ####",
      "    #",
      " ### "}},
    // h
    {{"#    ",
      "#    ",
      "#### ",
      "#   #",
      "#   #",
      "#   #",
      "#   #"}},
    // i
    {{"  #  ",
      "     ",
      " ##  ",
      "  #  ",
      "  #  ",
      "  #  ",
      " ### "}},
    // j
    {{"   # ",
      "     ",
      "  ## ",
      "   # ",
      "   # ",
      "#  # ",
      " ##  "}},
    // k
    {{"#    ",
      "#    ",
      "#  # ",
      "# #  ",
      "##   ",
      "# #  ",
      "#  # "}},
    // l
    {{" ##  ",
      "  #  ",
      "  #  ",
      "  #  ",
      "  #  ",
      "  #  ",
      " ### "}},
    // m
    {{"     ",
      "     ",
      "## # ",
      "# # #",
      "# # #",
      "# # #",
      "# # #"}},
    // n
    {{"     ",
      "     ",
      "#### ",
      "#   #",
      "#   #",
      "#   #",
      "#   #"}},
    // o
    {{"     ",
      "     ",
      " ### ",
      "#   #",
      "#   #",
      "#   #",
      " ### "}},
    // p
    {{"     ",
      "#### ",
      "#   #",
      "#   #",
      "#### ",
      "#    ",
      "#    "}},
    // q
    {{"     ",
      " ####",
      "#   #",
      "#   #",
      " ####",
      "    #",
      "    #"}},
    // r
    {{"     ",
      "     ",
      "# ## ",
      "##  #",
      "#    ",
      "#    ",
      "#    "}},
    // s
    {{"     ",
      "     ",
      " ####",
      "#    ",
      " ### ",
      "    #",
      "#### "}},
    // t
    {{" #   ",
      " #   ",
      "###  ",
      " #   ",
      " #   ",
      " #  #",
      "  ## "}},
    // u
    {{"     ",
      "     ",
      "#   #",
      "#   #",
      "#   #",
      "#  ##",
      " ## #"}},
    // v
    {{"     ",
      "     ",
      "#   #",
      "#   #",
      "#   #",
      " # # ",
      "  #  "}},
    // w
    {{"     ",
      "     ",
      "#   #",
      "#   #",
      "# # #",
      "# # #",
      " # # "}},
    // x
    {{"     ",
      "     ",
      "#   #",
      " # # ",
      "  #  ",
      " # # ",
      "#   #"}},
    // y
    {{"     ",
      "#   #",
      "#   #",
      "#   #",
      " ####",
      "    #",
      " ### "}},
    // z
    {{"     ",
      "     ",
      "#####",
      "   # ",
      "  #  ",
      " #   ",
      "#####"}},
    // 0
    {{" ### ",
      "#   #",
      "#  ##",
      "# # #",
      "##  #",
      "#   #",
      " ### "}},
    // 1
    {{"  #  ",
      " ##  ",
      "  #  ",
      "  #  ",
      "  #  ",
      "  #  ",
      " ### "}},
    // 2
    {{" ### ",
      "#   #",
      "    #",
      "   # ",
      "  #  ",
      " #   ",
      "#####"}},
    // 3
    {{"#####",
      "   # ",
      "  #  ",
      "   # ",
      "    #",
      "#   #",
      " ### "}},
    // 4
    {{"   # ",
      "  ## ",
      " # # ",
      "#  # ",
      "#####",
      "   # ",
      "   # "}},
    // 5
    {{"#####",
      "#    ",
      "#### ",
      "    #",
      "    #",
      "#   #",
      " ### "}},
    // 6
    {{"  ## ",
      " #   ",
      "#    ",
      "#### ",
      "#   #",
      "#   #",
      " ### "}},
    // 7
    {{"#####",
      "    #",
      "   # ",
      "  #  ",
      " #   ",
      " #   ",
      " #   "}},
    // 8
    {{" ### ",
      "#   #",
      "#   #",
      " ### ",
      "#   #",
      "#   #",
      " ### "}},
    // 9
    {{" ### ",
      "#   #",
      "#   #",
      " ####",
      "    #",
      "   # ",
      " ##  "}},
    // space
    {{"     ",
      "     ",
      "     ",
      "     ",
      "     ",
      "     ",
      "     "}},
};

std::array<Glyph, 37> build_glyphs() {
    std::array<Glyph, 37> out{};
    for (int id = 0; id < 37; ++id)
        for (int r = 0; r < kGlyphHeight; ++r) {
            std::uint8_t bits = 0;
            for (int c = 0; c < kGlyphWidth; ++c)
                if (kGlyphArt[id].rows[r][c] == '#') bits |= static_cast<std::uint8_t>(1u << (kGlyphWidth - 1 - c));
            out[static_cast<std::size_t>(id)][static_cast<std::size_t>(r)] = bits;
        }
    return out;
}

} // namespace

const Glyph& glyph_for(int charset_id) {
    static const std::array<Glyph, 37> glyphs = build_glyphs();
    if (charset_id < 0 || charset_id >= 37)
        throw std::invalid_argument("glyph_for: id " + std::to_string(charset_id) + " is not renderable");
    return glyphs[static_cast<std::size_t>(charset_id)];
}

} // namespace nrtr
