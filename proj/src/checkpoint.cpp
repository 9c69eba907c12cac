#include "finepseudo/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace fp {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'P', 'C', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[off + b]) << (8 * b);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_group(const TensorGroup& group) {
    nlohmann::json manifest;
    manifest["group"] = group.group;
    manifest["tensors"] = nlohmann::json::array();
    for (const auto& t : group.tensors)
        manifest["tensors"].push_back({{"name", t.name}, {"dims", {t.value.rows(), t.value.cols()}}});
    const std::string header = manifest.dump();

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    for (const auto& t : group.tensors) {
        const Matrix& m = t.value;  // row-major storage
        for (Index i = 0; i < m.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    }
    return out;
}

TensorGroup decode_tensor_group(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw FormatError("truncated checkpoint header", bytes.size());
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw FormatError("bad checkpoint magic, expected FPCK", 0);
    const std::uint32_t header_len = get_u32(bytes, 4);
    if (bytes.size() < 8ull + header_len) throw FormatError("truncated checkpoint manifest", bytes.size());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), 8);
    }
    TensorGroup g;
    std::size_t off = 8 + header_len;
    try {
        g.group = manifest.at("group").get<std::string>();
        for (const auto& entry : manifest.at("tensors")) {
            NamedTensor t;
            t.name = entry.at("name").get<std::string>();
            const auto dims = entry.at("dims").get<std::vector<std::int64_t>>();
            if (dims.size() != 2 || dims[0] < 0 || dims[1] < 0)
                throw FormatError("bad dims for tensor '" + t.name + "'", 8);
            const std::uint64_t need = static_cast<std::uint64_t>(dims[0]) * static_cast<std::uint64_t>(dims[1]) * 4;
            if (bytes.size() < off + need) throw FormatError("truncated tensor '" + t.name + "'", bytes.size());
            t.value.resize(dims[0], dims[1]);
            for (Index i = 0; i < t.value.size(); ++i, off += 4) {
                const float v = std::bit_cast<float>(get_u32(bytes, off));
                if (!std::isfinite(v)) throw FormatError("non-finite value in tensor '" + t.name + "'", off);
                t.value.data()[i] = v;
            }
            g.tensors.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), 8);
    }
    if (off != bytes.size()) throw FormatError("trailing bytes after checkpoint payload", off);
    return g;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("io", "write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fp
