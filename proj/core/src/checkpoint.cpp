#include "pertrl/nets/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "pertrl/util/errors.hpp"

namespace pertrl::nets {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'T', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void write_doubles(std::ostream& os, const double* p, std::size_t n) {
    // Little-endian doubles, byte by byte so the format is host-independent.
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, p + i, 8);
        unsigned char buf[8];
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
        os.write(reinterpret_cast<const char*>(buf), 8);
    }
}

void read_doubles(std::istream& is, double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char buf[8];
        is.read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
        std::memcpy(p + i, &bits, 8);
    }
}

}  // namespace

const diff::ParamVector& Checkpoint::section(const std::string& name) const {
    for (const auto& [n, pv] : sections)
        if (n == name) return pv;
    throw DataError("checkpoint: missing section " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        write_string(os, k);
        write_string(os, v);
    }
    write_u32(os, static_cast<std::uint32_t>(ckpt.sections.size()));
    for (const auto& [name, pv] : ckpt.sections) {
        write_string(os, name);
        const auto& layout = *pv.layout();
        write_u32(os, static_cast<std::uint32_t>(layout.slot_count()));
        for (std::size_t i = 0; i < layout.slot_count(); ++i) {
            const auto& s = layout.slot(i);
            write_string(os, s.name);
            write_u32(os, static_cast<std::uint32_t>(s.rows));
            write_u32(os, static_cast<std::uint32_t>(s.cols));
        }
        write_doubles(os, pv.values().data(), static_cast<std::size_t>(pv.size()));
    }
    if (!os) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    if (read_u32(is) != kVersion) throw DataError("checkpoint: unsupported version");
    Checkpoint ckpt;
    const std::uint32_t n_meta = read_u32(is);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = read_string(is);
        ckpt.meta[k] = read_string(is);
    }
    const std::uint32_t n_sections = read_u32(is);
    for (std::uint32_t i = 0; i < n_sections; ++i) {
        std::string name = read_string(is);
        const std::uint32_t n_slots = read_u32(is);
        auto layout = std::make_shared<diff::ParamLayout>();
        for (std::uint32_t s = 0; s < n_slots; ++s) {
            std::string sn = read_string(is);
            const int rows = static_cast<int>(read_u32(is));
            const int cols = static_cast<int>(read_u32(is));
            layout->add(sn, rows, cols);
        }
        diff::ParamVector pv{diff::LayoutPtr(layout)};
        read_doubles(is, pv.values().data(), static_cast<std::size_t>(pv.size()));
        ckpt.sections.emplace_back(std::move(name), std::move(pv));
    }
    if (!is) throw DataError("checkpoint: truncated file " + path);
    return ckpt;
}

}  // namespace pertrl::nets
