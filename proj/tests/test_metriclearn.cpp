#include "finepseudo/metriclearn.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

using namespace fp;

namespace {

using Key = std::tuple<std::size_t, std::size_t, std::size_t>;

std::set<Key> keys(const std::vector<Triplet>& ts) {
    std::set<Key> out;
    for (const auto& t : ts) out.insert({t.anchor, t.positive, t.negative});
    return out;
}

Matrix random_distances(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix d = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(n));
    for (Index i = 0; i < d.rows(); ++i)
        for (Index j = i + 1; j < d.cols(); ++j) d(i, j) = d(j, i) = u(rng);
    return d;
}

}  // namespace

TEST_CASE("mining examples") {
    const std::vector<int> labels{0, 0, 1, 1};

    SUBCASE("equal distances keep every triplet under hard mining") {
        Matrix d = Matrix::Constant(4, 4, 0.7);
        d.diagonal().setZero();
        const auto all = mine_triplets(d, labels, MiningStrategy::AllNegatives, 0.1);
        const auto hard = mine_triplets(d, labels, MiningStrategy::HardNegatives, 0.1);
        CHECK(all.size() == 8);
        CHECK(keys(hard) == keys(all));
        for (const auto& t : all) {
            CHECK(labels[t.anchor] == labels[t.positive]);
            CHECK(labels[t.anchor] != labels[t.negative]);
            CHECK(t.anchor != t.positive);
        }
    }
    SUBCASE("a satisfied margin is not hard") {
        const std::vector<int> l4{0, 0, 1, 1};
        Matrix d4 = Matrix::Constant(4, 4, 0.5);
        d4.diagonal().setZero();
        d4(0, 1) = d4(1, 0) = 0.3;
        d4(2, 3) = d4(3, 2) = 0.3;
        CHECK(mine_triplets(d4, l4, MiningStrategy::HardNegatives, 0.1).empty());
        CHECK(mine_triplets(d4, l4, MiningStrategy::AllNegatives, 0.1).size() == 8);
    }
    SUBCASE("hardest picks the closest negative") {
        const std::vector<int> l{0, 0, 1, 1, 2, 2};
        Matrix d = Matrix::Constant(6, 6, 1.0);
        d.diagonal().setZero();
        d(0, 1) = d(1, 0) = 0.1;
        d(0, 2) = d(2, 0) = 0.4;
        d(0, 3) = d(3, 0) = 0.2;
        d(0, 4) = d(4, 0) = 0.9;
        const auto ts = mine_triplets(d, l, MiningStrategy::HardestNegative, 0.1);
        const auto it = std::find_if(ts.begin(), ts.end(), [](const Triplet& t) { return t.anchor == 0; });
        REQUIRE(it != ts.end());
        CHECK(it->negative == 3);
        CHECK(it->d_neg == 0.2);
    }
}

TEST_CASE("mining subset relations on random distances") {
    Rng rng = make_stream(3, "test/mining");
    const std::vector<int> labels{0, 0, 0, 1, 1, 2, 2, 2};
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix d = random_distances(labels.size(), rng);
        const auto all = mine_triplets(d, labels, MiningStrategy::AllNegatives, 0.1);
        const auto hard = mine_triplets(d, labels, MiningStrategy::HardNegatives, 0.1);
        const auto hardest = mine_triplets(d, labels, MiningStrategy::HardestNegative, 0.1);
        const auto inactive = mine_triplets(d, labels, MiningStrategy::InactiveHingeNegatives, 0.1);
        const auto all_k = keys(all);
        for (const auto& k : keys(hardest)) CHECK(all_k.count(k) == 1);
        std::set<Key> active;
        for (const auto& t : all)
            if (t.d_pos - t.d_neg + 0.1 > 0.0) active.insert({t.anchor, t.positive, t.negative});
        CHECK(keys(hard) == active);
        for (const auto& t : inactive) CHECK(t.d_neg - t.d_pos > 0.1);
        CHECK(loss_at(inactive.empty() ? all : inactive, 0.1).loss >= 0.0);
    }
}

TEST_CASE("a lone class instance violates the sampler contract") {
    Matrix d = Matrix::Constant(3, 3, 0.5);
    d.diagonal().setZero();
    const std::vector<int> labels{0, 0, 1};
    CHECK_THROWS_AS(mine_triplets(d, labels, MiningStrategy::AllNegatives, 0.1), ContractError);
}

TEST_CASE("triplet hinge examples") {
    const std::vector<Triplet> equal{{0, 1, 2, 0.4, 0.4}};
    CHECK(loss_at(equal, 0.1).loss == doctest::Approx(0.1));

    const std::vector<Triplet> close{{0, 1, 2, 0.3, 0.35}};
    const TripletLoss c = loss_at(close, 0.1);
    CHECK(c.loss == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(c.grad_pos[0] == 1.0);
    CHECK(c.grad_neg[0] == -1.0);

    const std::vector<Triplet> easy{{0, 1, 2, 0.3, 0.5}};
    const TripletLoss e = loss_at(easy, 0.1);
    CHECK(e.loss == 0.0);
    CHECK(e.grad_pos[0] == 0.0);
    CHECK(e.grad_neg[0] == 0.0);

    const std::vector<Triplet> mixed{{0, 1, 2, 0.3, 0.35}, {0, 1, 3, 0.3, 0.5}};
    CHECK(loss_at(mixed, 0.1).loss == doctest::Approx(0.025).epsilon(1e-12));
    CHECK_THROWS_AS(loss_at(std::vector<Triplet>{}, 0.1), DomainError);
}

TEST_CASE("score loss examples") {
    const std::vector<double> half{0.5, 0.5};
    const std::vector<int> t{1, 0};
    CHECK(loss_score(half, t).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    const std::vector<double> neg{0.8};
    const std::vector<int> zero{0};
    CHECK(loss_score(neg, zero).loss == doctest::Approx(-std::log(0.2)).epsilon(1e-14));
    CHECK(loss_score(neg, zero).loss == doctest::Approx(1.60944).epsilon(1e-5));

    const std::vector<double> sure{1.0 - 1e-12};
    const std::vector<int> one{1};
    CHECK(loss_score(sure, one).loss < 1e-11);

    const std::vector<double> bad{1.0};
    CHECK_THROWS_AS(loss_score(bad, one), DomainError);
    CHECK_THROWS_AS(loss_score(half, one), DimensionError);
}

TEST_CASE("combined loss") {
    CHECK(loss_av(0.4, 0.7, 1.0) == doctest::Approx(1.1));
    CHECK(loss_av(0.4, 0.7, 0.0) == 0.4);
}

TEST_CASE("config validation") {
    MetricLearnConfig c;
    CHECK_NOTHROW(c.validate());
    c.margin = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MetricLearnConfig{};
    c.score_weight = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_mining_strategy(to_string(MiningStrategy::HardestNegative)) == MiningStrategy::HardestNegative);
    CHECK_THROWS_AS(parse_mining_strategy("easiest"), ConfigError);
}

TEST_CASE("class balanced batches") {
    Rng rng = make_stream(0, "test/batches");
    std::vector<int> labels;
    for (int c = 0; c < 6; ++c)
        for (int k = 0; k < 5; ++k) labels.push_back(c);
    labels.push_back(9);  // singleton, dropped
    const auto batches = class_balanced_batches(labels, 8, 4, rng);
    std::set<std::size_t> seen;
    for (const auto& b : batches) {
        CHECK(b.size() <= 8);
        std::map<int, int> counts;
        for (auto i : b) {
            CHECK(seen.insert(i).second);
            ++counts[labels[i]];
        }
        CHECK(counts.size() >= 2);
        for (const auto& [label, n] : counts) CHECK(n >= 2);
    }
    CHECK(seen.count(labels.size() - 1) == 0);

    const std::vector<int> one_class{0, 0, 0, 1};
    CHECK_THROWS_AS(class_balanced_batches(one_class, 8, 4, rng), ConfigError);
    CHECK_THROWS_AS(class_balanced_batches(labels, 8, 1, rng), ConfigError);
}

TEST_CASE("pairwise distances are symmetric with zero diagonal") {
    Rng rng = make_stream(0, "test/pairwise");
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<FrameSequence> seqs;
    for (int k = 0; k < 4; ++k) {
        Matrix m(5, 3);
        for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 3; ++j) m(i, j) = n(rng);
        seqs.emplace_back(m);
    }
    const Matrix d = pairwise_softdtw(seqs, 0.1);
    for (Index i = 0; i < 4; ++i) {
        CHECK(d(i, i) == 0.0);
        for (Index j = 0; j < 4; ++j) {
            CHECK(d(i, j) == d(j, i));
            if (i != j) CHECK(d(i, j) == doctest::Approx(softdtw_distance(seqs[i], seqs[j], 0.1)).epsilon(1e-14));
        }
    }
}

TEST_CASE("an epoch of metric learning lowers the batch loss") {
    const EncoderDims dims{4, 8, 4, 4, 6};
    Rng rng = make_stream(1, "test/metric-epoch");
    AlignabilityModel model{AlignEncoderParams::init(dims, rng), ScoreNetParams::init(dims, rng), 0};
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Matrix> protos(3, Matrix(6, 4));
    for (auto& p : protos)
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 4; ++j) p(i, j) = n(rng);
    std::vector<Matrix> clips;
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) {
            Matrix m = protos[static_cast<std::size_t>(c)];
            for (Index i = 0; i < 6; ++i)
                for (Index j = 0; j < 4; ++j) m(i, j) += 0.3 * n(rng);
            clips.push_back(m);
            labels.push_back(c);
        }
    MetricLearnConfig cfg;
    cfg.strategy = MiningStrategy::AllNegatives;
    cfg.batch_size = 12;
    const double before = alignability_batch_loss(model, clips, labels, cfg).total;
    MetricOptimizer opt(model);
    const Matrix frozen = model.encoder.w1;
    for (int e = 0; e < 15; ++e) train_metric_epoch(model, opt, clips, labels, cfg, 3e-3, rng);
    CHECK(alignability_batch_loss(model, clips, labels, cfg).total < before);
    CHECK(model.version > 0);
    CHECK(model.encoder.w1 == frozen);
}
