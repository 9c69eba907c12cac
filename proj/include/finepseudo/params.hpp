#pragma once

#include "finepseudo/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace fp {

// Parameter structs expose `visit(f)` calling f(name, Matrix&) for every
// tensor in a fixed order. The helpers below work on any such struct.

template <class P>
std::vector<Matrix*> tensors_of(P& p) {
    std::vector<Matrix*> out;
    p.visit([&](const char*, Matrix& m) { out.push_back(&m); });
    return out;
}

template <class P>
std::vector<const Matrix*> tensors_of(const P& p) {
    std::vector<const Matrix*> out;
    p.visit([&](const char*, const Matrix& m) { out.push_back(&m); });
    return out;
}

template <class P>
std::vector<std::string> tensor_names(const P& p) {
    std::vector<std::string> out;
    p.visit([&](const char* name, const Matrix&) { out.emplace_back(name); });
    return out;
}

template <class P>
P zeros_like(const P& p) {
    P out = p;
    out.visit([](const char*, Matrix& m) { m.setZero(); });
    return out;
}

template <class P>
std::size_t param_count(const P& p) {
    std::size_t n = 0;
    p.visit([&](const char*, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

template <class P>
std::vector<double> flatten(const P& p) {
    std::vector<double> out;
    out.reserve(param_count(p));
    p.visit([&](const char*, const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); });
    return out;
}

template <class P>
void unflatten(P& p, std::span<const double> flat) {
    std::size_t off = 0;
    p.visit([&](const char*, Matrix& m) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + m.size()), m.data());
        off += static_cast<std::size_t>(m.size());
    });
}

/// dst += scale * src, tensor by tensor.
template <class P>
void add_scaled(P& dst, const P& src, double scale) {
    auto d = tensors_of(dst);
    auto s = tensors_of(src);
    for (std::size_t k = 0; k < d.size(); ++k) *d[k] += scale * *s[k];
}

template <class P>
bool all_finite(const P& p) {
    bool ok = true;
    p.visit([&](const char*, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
}

}  // namespace fp
