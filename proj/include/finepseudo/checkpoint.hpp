#pragma once

#include "finepseudo/params.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fp {

// Parameter-group blob: "FPCK", u32 LE manifest length N, N bytes of UTF-8
// JSON {"group": ..., "tensors": [{"name": ..., "dims": [rows, cols]}, ...]},
// then every tensor as row-major little-endian f32, in manifest order.

struct NamedTensor {
    std::string name;
    Matrix value;
};

struct TensorGroup {
    std::string group;
    std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_tensor_group(const TensorGroup& group);
TensorGroup decode_tensor_group(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

template <class P>
TensorGroup to_tensor_group(const P& params, std::string group) {
    TensorGroup g{std::move(group), {}};
    params.visit([&](const char* name, const Matrix& m) { g.tensors.push_back({name, m}); });
    return g;
}

/// Copies tensors into `params`, resizing each to the stored dims. Names
/// must match the struct's tensor order exactly.
template <class P>
void from_tensor_group(P& params, const TensorGroup& g) {
    std::size_t k = 0;
    params.visit([&](const char* name, Matrix& m) {
        if (k >= g.tensors.size() || g.tensors[k].name != name)
            throw FormatError("checkpoint group '" + g.group + "' is missing tensor '" + name + "'", 0);
        m = g.tensors[k].value;
        ++k;
    });
    if (k != g.tensors.size()) throw FormatError("checkpoint group '" + g.group + "' has extra tensors", 0);
}

template <class P>
void save_params(const P& params, const std::string& group, const std::filesystem::path& path) {
    write_bytes(path, encode_tensor_group(to_tensor_group(params, group)));
}

template <class P>
P load_params(const std::filesystem::path& path) {
    P params;
    from_tensor_group(params, decode_tensor_group(read_bytes(path)));
    return params;
}

}  // namespace fp
