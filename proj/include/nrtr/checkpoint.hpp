#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nrtr {

// CRC-32 (IEEE, reflected polynomial 0xEDB88320) over a byte range.
std::uint32_t crc32(const void* data, std::size_t len);

struct NamedTensorData {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> values;
};

// Portable binary snapshot. Layout, all integers little-endian:
//   magic "NRTR" | version u32 | tensor count u32
//   per tensor: name length u32, name bytes, rank u32, extents u64 each
//   payload: per-tensor float32 values in manifest order
//   crc32 u32 over the payload bytes
// Optimizer state travels as tensors under the reserved "opt/" prefix and
// is stripped by averaging.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    std::vector<NamedTensorData> tensors;

    const NamedTensorData* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }

    // Model tensors only, in manifest order.
    std::vector<const NamedTensorData*> model_tensors() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Raises IoError for unreadable/malformed files and IntegrityError when the
// payload checksum does not verify.
Checkpoint load_checkpoint(const std::string& path);

// Elementwise mean of the model tensors across checkpoints; optimizer state
// is omitted. All checkpoints must agree on the model tensor manifest.
// Accumulates in 64-bit, so averaging k identical checkpoints reproduces
// the input bitwise.
Checkpoint average_checkpoints(const std::vector<std::string>& paths);

} // namespace nrtr
