#include "nrtr/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "nrtr/errors.hpp"

namespace nrtr {

namespace {

constexpr char kMagic[4] = {'N', 'R', 'T', 'R'};

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw IoError("checkpoint '" + path + "': truncated at byte offset " + std::to_string(pos));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

bool is_opt_tensor(const std::string& name) { return name.rfind("opt/", 0) == 0; }

} // namespace

std::uint32_t crc32(const void* data, std::size_t len) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

const NamedTensorData* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::vector<const NamedTensorData*> Checkpoint::model_tensors() const {
    std::vector<const NamedTensorData*> out;
    for (const auto& t : tensors)
        if (!is_opt_tensor(t.name)) out.push_back(&t);
    return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string head;
    head.append(kMagic, 4);
    put_u32(head, Checkpoint::kVersion);
    put_u32(head, static_cast<std::uint32_t>(ckpt.tensors.size()));
    std::string payload;
    for (const auto& t : ckpt.tensors) {
        put_u32(head, static_cast<std::uint32_t>(t.name.size()));
        head.append(t.name);
        put_u32(head, static_cast<std::uint32_t>(t.shape.size()));
        std::uint64_t numel = 1;
        for (std::uint64_t e : t.shape) {
            put_u64(head, e);
            numel *= e;
        }
        if (numel != t.values.size())
            throw std::invalid_argument("checkpoint tensor '" + t.name + "' shape does not match value count");
        for (float v : t.values) put_f32(payload, v);
    }
    std::string tail;
    put_u32(tail, crc32(payload.data(), payload.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    f.write(tail.data(), static_cast<std::streamsize>(tail.size()));
    if (!f) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};

    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw IoError("checkpoint '" + path + "': bad magic at byte offset 0");
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion)
        throw IoError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();

    Checkpoint ckpt;
    std::uint64_t total = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensorData t;
        const std::uint32_t name_len = r.u32();
        t.name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            t.shape.push_back(r.u64());
            numel *= t.shape.back();
        }
        t.values.resize(numel);
        total += numel;
        ckpt.tensors.push_back(std::move(t));
    }

    const std::size_t payload_pos = r.pos;
    r.need(total * 4 + 4);
    for (auto& t : ckpt.tensors)
        for (auto& v : t.values) v = r.f32();

    const std::uint32_t stored = r.u32();
    const std::uint32_t actual = crc32(buf.data() + payload_pos, total * 4);
    if (stored != actual)
        throw IntegrityError("checkpoint '" + path + "': payload checksum mismatch (stored " +
                             std::to_string(stored) + ", computed " + std::to_string(actual) + ")");
    if (r.pos != buf.size())
        throw IoError("checkpoint '" + path + "': " + std::to_string(buf.size() - r.pos) + " trailing bytes");
    return ckpt;
}

Checkpoint average_checkpoints(const std::vector<std::string>& paths) {
    if (paths.empty()) throw std::invalid_argument("average_checkpoints: no inputs");
    Checkpoint first = load_checkpoint(paths[0]);
    Checkpoint out;
    for (const auto* t : first.model_tensors()) out.tensors.push_back(*t);

    std::vector<std::vector<double>> acc(out.tensors.size());
    for (std::size_t i = 0; i < out.tensors.size(); ++i)
        acc[i].assign(out.tensors[i].values.begin(), out.tensors[i].values.end());

    for (std::size_t p = 1; p < paths.size(); ++p) {
        Checkpoint c = load_checkpoint(paths[p]);
        const auto mt = c.model_tensors();
        std::string mismatches;
        if (mt.size() != out.tensors.size()) {
            for (const auto* t : mt)
                if (!first.has(t->name)) mismatches += " " + t->name;
            for (const auto& t : out.tensors)
                if (!c.has(t.name)) mismatches += " " + t.name;
            throw IntegrityError("average_checkpoints: '" + paths[p] + "' manifest differs:" + mismatches);
        }
        for (std::size_t i = 0; i < mt.size(); ++i) {
            if (mt[i]->name != out.tensors[i].name || mt[i]->shape != out.tensors[i].shape)
                throw IntegrityError("average_checkpoints: '" + paths[p] + "' manifest differs at tensor '" +
                                     mt[i]->name + "' vs '" + out.tensors[i].name + "'");
            for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += static_cast<double>(mt[i]->values[j]);
        }
    }

    const double k = static_cast<double>(paths.size());
    for (std::size_t i = 0; i < out.tensors.size(); ++i)
        for (std::size_t j = 0; j < acc[i].size(); ++j)
            out.tensors[i].values[j] = static_cast<float>(acc[i][j] / k);
    return out;
}

} // namespace nrtr
