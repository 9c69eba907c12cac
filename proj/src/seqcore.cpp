#include "finepseudo/seqcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fp {

FrameSequence::FrameSequence(Matrix frames) : frames_(std::move(frames)) {
    if (frames_.rows() < 2)
        throw DimensionError("sequence needs at least 2 frames, got " + std::to_string(frames_.rows()));
    if (frames_.cols() < 1) throw DimensionError("sequence needs feature dimension >= 1");
    if (!frames_.allFinite()) throw DomainError("sequence contains non-finite entries");
}

double cosine_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw DimensionError("cosine_distance: length " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        dot += x[k] * y[k];
        nx += x[k] * x[k];
        ny += y[k] * y[k];
    }
    if (nx <= 0.0 || ny <= 0.0) throw DomainError("cosine_distance: zero-norm vector");
    const double cos = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
    return 1.0 - cos;
}

void cosine_distance_grad(std::span<const double> x, std::span<const double> y, double scale,
                          std::span<double> grad_x, std::span<double> grad_y) {
    double dot = 0.0, nx2 = 0.0, ny2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        dot += x[k] * y[k];
        nx2 += x[k] * x[k];
        ny2 += y[k] * y[k];
    }
    if (nx2 <= 0.0 || ny2 <= 0.0) throw DomainError("cosine_distance_grad: zero-norm vector");
    const double inv = 1.0 / std::sqrt(nx2 * ny2);
    const double cos = dot * inv;
    // d(1 - cos)/dx = -(y / (|x||y|) - cos * x / |x|^2)
    for (std::size_t k = 0; k < x.size(); ++k) {
        grad_x[k] -= scale * (y[k] * inv - cos * x[k] / nx2);
        grad_y[k] -= scale * (x[k] * inv - cos * y[k] / ny2);
    }
}

CostMatrix cost_matrix(const FrameSequence& u, const FrameSequence& v) {
    if (u.dim() != v.dim())
        throw DimensionError("cost_matrix: feature dims " + std::to_string(u.dim()) + " vs " +
                             std::to_string(v.dim()));
    // Same arithmetic as cosine_distance, with squared norms hoisted out.
    auto sq_norms = [](const FrameSequence& s) {
        std::vector<double> out(static_cast<std::size_t>(s.length()));
        for (Index t = 0; t < s.length(); ++t) {
            double n = 0.0;
            for (double x : s.frame(t)) n += x * x;
            if (n <= 0.0) throw DomainError("cost_matrix: frame " + std::to_string(t) + " has zero norm");
            out[static_cast<std::size_t>(t)] = n;
        }
        return out;
    };
    const auto nu = sq_norms(u);
    const auto nv = sq_norms(v);
    const Index f = u.dim();
    CostMatrix c(u.length(), v.length());
    for (Index i = 0; i < u.length(); ++i) {
        const double* x = u.frames().data() + i * f;
        for (Index j = 0; j < v.length(); ++j) {
            const double* y = v.frames().data() + j * f;
            double dot = 0.0;
            for (Index k = 0; k < f; ++k) dot += x[k] * y[k];
            const double cos = std::clamp(dot / std::sqrt(nu[static_cast<std::size_t>(i)] * nv[static_cast<std::size_t>(j)]), -1.0, 1.0);
            c(i, j) = 1.0 - cos;
        }
    }
    return c;
}

Matrix resample_rows(const Matrix& rows, Index t_out) {
    if (t_out < 2) throw DimensionError("resample_to_length: target length must be >= 2");
    const Index t_in = rows.rows();
    if (t_out == t_in) return rows;
    if (t_in < 1) throw DimensionError("resample_to_length: empty input");
    Matrix out(t_out, rows.cols());
    const double scale = t_in > 1 ? static_cast<double>(t_in - 1) / static_cast<double>(t_out - 1) : 0.0;
    for (Index t = 0; t < t_out; ++t) {
        const double pos = static_cast<double>(t) * scale;
        Index i0 = static_cast<Index>(std::floor(pos));
        i0 = std::min(i0, t_in - 1);
        const double frac = pos - static_cast<double>(i0);
        if (i0 + 1 >= t_in || frac == 0.0) {
            out.row(t) = rows.row(i0);
        } else {
            out.row(t) = (1.0 - frac) * rows.row(i0) + frac * rows.row(i0 + 1);
        }
    }
    return out;
}

FrameSequence resample_to_length(const FrameSequence& seq, Index t_out) {
    return FrameSequence(resample_rows(seq.frames(), t_out));
}

Matrix quantize_f32(const Matrix& m) {
    return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
    return v;
}

constexpr std::uint8_t kMagic[4] = {'F', 'P', 'S', 'Q'};
constexpr std::size_t kHeaderBytes = 16;

}  // namespace

std::vector<std::uint8_t> encode_sequence(const FrameSequence& seq) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(kHeaderBytes + static_cast<std::size_t>(seq.length() * seq.dim()) * 4);
    put_u32(out, kSequenceFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(seq.length()));
    put_u32(out, static_cast<std::uint32_t>(seq.dim()));
    const Matrix& m = seq.frames();
    for (Index t = 0; t < m.rows(); ++t)
        for (Index f = 0; f < m.cols(); ++f) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(t, f))));
    return out;
}

FrameSequence decode_sequence(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("truncated magic", bytes.size());
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw FormatError("bad magic, expected FPSQ", 0);
    if (bytes.size() < 8) throw FormatError("truncated version field", bytes.size());
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kSequenceFormatVersion)
        throw FormatError("unsupported version " + std::to_string(version), 4);
    if (bytes.size() < kHeaderBytes) throw FormatError("truncated header", bytes.size());
    const std::uint32_t t = get_u32(bytes, 8);
    const std::uint32_t f = get_u32(bytes, 12);
    if (t < 2) throw FormatError("frame count must be >= 2, got " + std::to_string(t), 8);
    if (f < 1) throw FormatError("feature dim must be >= 1", 12);
    const std::uint64_t expected = kHeaderBytes + static_cast<std::uint64_t>(t) * f * 4;
    if (bytes.size() < expected) throw FormatError("truncated payload", bytes.size());
    if (bytes.size() > expected) throw FormatError("trailing bytes after payload", expected);
    Matrix m(t, f);
    std::size_t off = kHeaderBytes;
    for (std::uint32_t i = 0; i < t; ++i) {
        for (std::uint32_t j = 0; j < f; ++j, off += 4) {
            const float v = std::bit_cast<float>(get_u32(bytes, off));
            if (!std::isfinite(v)) throw FormatError("non-finite payload value", off);
            m(i, j) = v;
        }
    }
    return FrameSequence(std::move(m));
}

void save_sequence(const FrameSequence& seq, const std::filesystem::path& path) {
    const auto bytes = encode_sequence(seq);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("io", "write failed for " + path.string());
}

FrameSequence load_sequence(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_sequence(bytes);
}

}  // namespace fp
