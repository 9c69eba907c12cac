#include "finepseudo/seqcore.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

using namespace fp;

namespace {

double cos_dist(std::vector<double> x, std::vector<double> y) { return cosine_distance(x, y); }

Matrix random_frames(Index t, Index f, std::uint64_t seed) {
    Rng rng = make_stream(seed, "test/frames");
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(t, f);
    for (Index i = 0; i < t; ++i)
        for (Index j = 0; j < f; ++j) m(i, j) = n(rng);
    return quantize_f32(m);
}

}  // namespace

TEST_CASE("cosine distance examples") {
    CHECK(cos_dist({1, 0}, {1, 0}) == doctest::Approx(0.0));
    CHECK(cos_dist({1, 0}, {-1, 0}) == doctest::Approx(2.0));
    CHECK(cos_dist({1, 0}, {1, 1}) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cos_dist({0, 0}, {1, 0}), DomainError);
    CHECK_THROWS_AS(cos_dist({1, 0, 0}, {1, 0}), DimensionError);
}

TEST_CASE("cosine distance is symmetric and bounded") {
    const Matrix m = random_frames(20, 5, 3);
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.rows(); ++j) {
            const std::span<const double> a(m.data() + i * 5, 5), b(m.data() + j * 5, 5);
            const double d = cosine_distance(a, b);
            CHECK(d >= 0.0);
            CHECK(d <= 2.0);
            CHECK(d == cosine_distance(b, a));
        }
}

TEST_CASE("sequence rejects degenerate shapes") {
    CHECK_THROWS_AS(FrameSequence(Matrix::Ones(1, 3)), DimensionError);
    CHECK_THROWS_AS(FrameSequence(Matrix(3, 0)), DimensionError);
    Matrix bad = Matrix::Ones(3, 2);
    bad(1, 1) = std::nan("");
    CHECK_THROWS_AS(FrameSequence{bad}, DomainError);
}

TEST_CASE("cost matrix") {
    SUBCASE("orthogonal frames against themselves") {
        const FrameSequence u(Matrix::Identity(2, 2));
        const CostMatrix c = cost_matrix(u, u);
        CHECK(c(0, 0) == doctest::Approx(0.0));
        CHECK(c(0, 1) == doctest::Approx(1.0));
        CHECK(c(1, 0) == doctest::Approx(1.0));
        CHECK(c(1, 1) == doctest::Approx(0.0));
    }
    SUBCASE("zero diagonal, transpose symmetry, agreement with cosine_distance") {
        const FrameSequence u(random_frames(6, 4, 1)), v(random_frames(5, 4, 2));
        const CostMatrix uu = cost_matrix(u, u);
        for (Index i = 0; i < 6; ++i) CHECK(uu(i, i) == doctest::Approx(0.0).epsilon(1e-12));
        const CostMatrix uv = cost_matrix(u, v), vu = cost_matrix(v, u);
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 5; ++j) {
                CHECK(uv(i, j) == vu(j, i));
                CHECK(uv(i, j) == doctest::Approx(cosine_distance(u.frame(i), v.frame(j))).epsilon(1e-14));
            }
    }
    SUBCASE("feature dims must match") {
        const FrameSequence u(random_frames(3, 4, 1)), v(random_frames(3, 5, 2));
        CHECK_THROWS_AS(cost_matrix(u, v), DimensionError);
    }
}

TEST_CASE("resample to length") {
    SUBCASE("same length is bit-identical") {
        const FrameSequence s(random_frames(7, 3, 4));
        CHECK(resample_to_length(s, 7) == s);
    }
    SUBCASE("linear midpoint") {
        Matrix m(2, 1);
        m << 0.0, 2.0;
        const FrameSequence r = resample_to_length(FrameSequence(m), 3);
        REQUIRE(r.length() == 3);
        CHECK(r.frames()(0, 0) == 0.0);
        CHECK(r.frames()(1, 0) == doctest::Approx(1.0));
        CHECK(r.frames()(2, 0) == 2.0);
    }
    SUBCASE("constant stays constant") {
        const FrameSequence s(Matrix::Constant(5, 2, 0.25));
        const FrameSequence r = resample_to_length(s, 11);
        CHECK((r.frames().array() - 0.25).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("monotone inputs stay inside the envelope") {
        Matrix m(6, 2);
        for (Index t = 0; t < 6; ++t) m.row(t) << t * t, -3.0 * t;
        const Matrix r = resample_rows(m, 17);
        for (Index f = 0; f < 2; ++f) {
            CHECK(r.col(f).minCoeff() >= m.col(f).minCoeff());
            CHECK(r.col(f).maxCoeff() <= m.col(f).maxCoeff());
        }
    }
    CHECK_THROWS_AS(resample_rows(Matrix::Ones(4, 2), 1), DimensionError);
}

TEST_CASE("sequence file round trip is bit exact") {
    const FrameSequence s(random_frames(9, 6, 5));
    const auto bytes = encode_sequence(s);
    CHECK(bytes.size() == 16 + 9 * 6 * 4);
    CHECK(decode_sequence(bytes) == s);
    CHECK(encode_sequence(decode_sequence(bytes)) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "finepseudo_test_seq.fpsq";
    save_sequence(s, path);
    CHECK(load_sequence(path) == s);
    std::filesystem::remove(path);
}

TEST_CASE("sequence header layout") {
    Matrix m(2, 1);
    m << 1.0, -2.0;
    const auto b = encode_sequence(FrameSequence(m));
    CHECK(std::vector<std::uint8_t>(b.begin(), b.begin() + 4) == std::vector<std::uint8_t>{'F', 'P', 'S', 'Q'});
    CHECK(b[4] == 1);
    CHECK(b[8] == 2);
    CHECK(b[12] == 1);
    // 1.0f little endian
    CHECK(std::vector<std::uint8_t>(b.begin() + 16, b.begin() + 20) == std::vector<std::uint8_t>{0, 0, 0x80, 0x3f});
}

TEST_CASE("sequence decode errors carry byte offsets") {
    const auto good = encode_sequence(FrameSequence(random_frames(3, 2, 6)));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    try {
        decode_sequence(bad_magic);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }

    auto bad_version = good;
    bad_version[4] = 2;
    try {
        decode_sequence(bad_version);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 4);
    }

    auto truncated = good;
    truncated.pop_back();
    try {
        decode_sequence(truncated);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == truncated.size());
    }

    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_sequence(trailing), FormatError);

    CHECK_THROWS_AS(decode_sequence(std::vector<std::uint8_t>{'F', 'P'}), FormatError);

    auto one_frame = good;
    one_frame[8] = 1;
    CHECK_THROWS_AS(decode_sequence(one_frame), FormatError);

    auto nan_payload = good;
    nan_payload[16] = 0;
    nan_payload[17] = 0;
    nan_payload[18] = 0xc0;
    nan_payload[19] = 0x7f;
    try {
        decode_sequence(nan_payload);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 16);
    }
}
