#include "dadl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "container writer assumes a little-endian host");

namespace dadl {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
        table[i] = c;
    }
    return table;
}

const std::array<std::uint32_t, 256>& crc_table() {
    static const auto table = make_crc_table();
    return table;
}

constexpr char kMagic[4] = {'D', 'A', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void append_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

class Reader {
public:
    Reader(const std::string& buf, std::size_t offset) : buf_(buf), pos_(offset) {}
    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint64_t u64() { return read<std::uint64_t>(); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void floats(float* dst, std::size_t n) {
        need(n * 4);
        std::memcpy(dst, buf_.data() + pos_, n * 4);
        pos_ += n * 4;
    }
    std::size_t pos() const { return pos_; }

private:
    template <typename T>
    T read() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw FormatError("container truncated");
    }
    const std::string& buf_;
    std::size_t pos_;
};

}  // namespace

std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t len) {
    const auto& table = crc_table();
    const auto* p = static_cast<const unsigned char*>(data);
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

const Tensor* TensorContainer::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("rename failed for " + path);
}

void save_container(const std::string& path, const TensorContainer& container) {
    std::string payload;
    const std::string meta = container.meta.dump();
    append_u64(payload, meta.size());
    payload += meta;
    append_u64(payload, container.tensors.size());
    for (const auto& [name, tensor] : container.tensors) {
        append_u64(payload, name.size());
        payload += name;
        append_u64(payload, static_cast<std::uint64_t>(tensor.rank()));
        for (int i = 0; i < tensor.rank(); ++i) append_u64(payload, static_cast<std::uint64_t>(tensor.dim(i)));
        const std::int64_t n = tensor.size();
        std::vector<float> f(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = static_cast<float>(tensor[i]);
        payload.append(reinterpret_cast<const char*>(f.data()), f.size() * 4);
    }

    std::string file;
    file.append(kMagic, 4);
    append_u32(file, kVersion);
    file += payload;
    append_u32(file, crc32(payload.data(), payload.size()));
    atomic_write_file(path, file);
}

TensorContainer load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw FormatError("container truncated");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad container magic");
    std::uint32_t version;
    std::memcpy(&version, buf.data() + 4, 4);
    if (version != kVersion) throw FormatError("unknown container version " + std::to_string(version));

    const std::size_t payload_begin = 8;
    const std::size_t payload_end = buf.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + payload_end, 4);
    const std::uint32_t actual_crc = crc32(buf.data() + payload_begin, payload_end - payload_begin);
    if (stored_crc != actual_crc) throw FormatError("container CRC mismatch");

    Reader r(buf, payload_begin);
    TensorContainer c;
    const std::uint64_t meta_len = r.u64();
    const std::string meta = r.bytes(meta_len);
    try {
        c.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("container metadata is not valid JSON: ") + e.what());
    }
    const std::uint64_t count = r.u64();
    for (std::uint64_t t = 0; t < count; ++t) {
        const std::uint64_t name_len = r.u64();
        std::string name = r.bytes(name_len);
        const std::uint64_t rank = r.u64();
        if (rank > 8) throw FormatError("implausible tensor rank in container");
        Shape shape;
        std::uint64_t n = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            const std::uint64_t d = r.u64();
            if (d == 0 || d > (1u << 30)) throw FormatError("implausible tensor dimension in container");
            shape.push_back(static_cast<int>(d));
            n *= d;
        }
        std::vector<float> f(n);
        r.floats(f.data(), n);
        Tensor tensor(shape);
        for (std::uint64_t i = 0; i < n; ++i) tensor[static_cast<std::int64_t>(i)] = static_cast<double>(f[i]);
        c.tensors.emplace_back(std::move(name), std::move(tensor));
    }
    if (r.pos() != payload_end) throw FormatError("container has trailing bytes");
    return c;
}

}  // namespace dadl
