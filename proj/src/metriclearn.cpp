#include "finepseudo/metriclearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fp {

MiningStrategy parse_mining_strategy(const std::string& name) {
    if (name == "all") return MiningStrategy::AllNegatives;
    if (name == "hard") return MiningStrategy::HardNegatives;
    if (name == "hardest") return MiningStrategy::HardestNegative;
    if (name == "inactive") return MiningStrategy::InactiveHingeNegatives;
    throw ConfigError("unknown mining strategy '" + name + "'");
}

std::string to_string(MiningStrategy s) {
    switch (s) {
        case MiningStrategy::AllNegatives: return "all";
        case MiningStrategy::HardNegatives: return "hard";
        case MiningStrategy::HardestNegative: return "hardest";
        case MiningStrategy::InactiveHingeNegatives: return "inactive";
    }
    return "hard";
}

void MetricLearnConfig::validate() const {
    if (!(margin > 0.0)) throw ConfigError("metric: margin must be > 0");
    if (!(score_weight >= 0.0)) throw ConfigError("metric: score weight must be >= 0");
    if (batch_size < 4) throw ConfigError("metric: batch size must be >= 4");
    if (instances_per_class < 2) throw ConfigError("metric: instances per class must be >= 2");
    if (!(gamma > 0.0)) throw ConfigError("metric: gamma must be > 0");
    if (epochs < 0) throw ConfigError("metric: epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("metric: learning rate must be > 0");
    if (!(score_lr_scale > 0.0)) throw ConfigError("metric: score lr scale must be > 0");
}

Matrix pairwise_softdtw(std::span<const FrameSequence> seqs, double gamma, unsigned threads) {
    const std::size_t n = seqs.size();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    Matrix d = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(n));
    std::vector<double> values(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t k) {
        values[k] = softdtw_distance(seqs[pairs[k].first], seqs[pairs[k].second], gamma);
    });
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        d(static_cast<Index>(i), static_cast<Index>(j)) = values[k];
        d(static_cast<Index>(j), static_cast<Index>(i)) = values[k];
    }
    return d;
}

std::vector<Triplet> mine_triplets(const Matrix& distances, std::span<const int> labels, MiningStrategy strategy,
                                   double margin) {
    const std::size_t n = labels.size();
    if (distances.rows() != static_cast<Index>(n) || distances.cols() != static_cast<Index>(n))
        throw DimensionError("mine_triplets: distance matrix does not match the batch");
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    for (const auto& [label, count] : counts)
        if (count < 2)
            throw ContractError("batch sampler contract violated: class " + std::to_string(label) +
                                " has a single instance in the batch");

    auto dist = [&](std::size_t a, std::size_t b) { return distances(static_cast<Index>(a), static_cast<Index>(b)); };
    std::vector<Triplet> out;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t p = 0; p < n; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            const double d_pos = dist(a, p);
            if (strategy == MiningStrategy::HardestNegative) {
                std::size_t best = n;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < n; ++k) {
                    if (labels[k] == labels[a]) continue;
                    if (dist(a, k) < best_d) {
                        best_d = dist(a, k);
                        best = k;
                    }
                }
                if (best < n) out.push_back({a, p, best, d_pos, best_d});
                continue;
            }
            for (std::size_t k = 0; k < n; ++k) {
                if (labels[k] == labels[a]) continue;
                const double d_neg = dist(a, k);
                const double gap = d_neg - d_pos;
                const bool keep = strategy == MiningStrategy::AllNegatives ||
                                  (strategy == MiningStrategy::HardNegatives && gap < margin) ||
                                  (strategy == MiningStrategy::InactiveHingeNegatives && gap > margin);
                if (keep) out.push_back({a, p, k, d_pos, d_neg});
            }
        }
    }
    return out;
}

std::vector<Triplet> mine_triplets(std::span<const FrameSequence> embeddings, std::span<const int> labels,
                                   double gamma, MiningStrategy strategy, double margin) {
    if (embeddings.size() != labels.size()) throw DimensionError("mine_triplets: embeddings vs labels");
    return mine_triplets(pairwise_softdtw(embeddings, gamma), labels, strategy, margin);
}

TripletLoss loss_at(std::span<const Triplet> triplets, double margin) {
    if (triplets.empty()) throw DomainError("loss_at: empty triplet list");
    TripletLoss out;
    out.grad_pos.assign(triplets.size(), 0.0);
    out.grad_neg.assign(triplets.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(triplets.size());
    for (std::size_t k = 0; k < triplets.size(); ++k) {
        const double h = triplets[k].d_pos - triplets[k].d_neg + margin;
        if (h > 0.0) {
            out.loss += h;
            out.grad_pos[k] = inv;
            out.grad_neg[k] = -inv;
        }
    }
    out.loss *= inv;
    return out;
}

ScoreLoss loss_score(std::span<const double> scores, std::span<const int> targets) {
    if (scores.size() != targets.size()) throw DimensionError("loss_score: scores vs targets");
    if (scores.empty()) throw DomainError("loss_score: no pairs");
    ScoreLoss out;
    out.grad_scores.resize(scores.size());
    const double inv = 1.0 / static_cast<double>(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const double s = scores[k];
        if (!(s > 0.0 && s < 1.0)) throw DomainError("loss_score: score outside (0, 1)");
        if (targets[k] == 1) {
            out.loss -= std::log(s);
            out.grad_scores[k] = -inv / s;
        } else {
            out.loss -= std::log1p(-s);
            out.grad_scores[k] = inv / (1.0 - s);
        }
    }
    out.loss *= inv;
    return out;
}

double pair_alignability(const ScoreNetParams& score, const FrameSequence& u, const FrameSequence& v, double gamma) {
    return alignability_score(score, softdtw_distance(u, v, gamma));
}

BatchLoss alignability_batch_loss(const AlignabilityModel& model, std::span<const Matrix> clips,
                                  std::span<const int> labels, const MetricLearnConfig& config) {
    const std::size_t n = clips.size();
    if (labels.size() != n) throw DimensionError("alignability_batch_loss: clips vs labels");

    std::vector<AlignEncoderCache> caches(n);
    std::vector<FrameSequence> emb;
    emb.reserve(n);
    for (std::size_t i = 0; i < n; ++i) emb.emplace_back(fa_forward(model.encoder, clips[i], &caches[i]));

    const Matrix dist = pairwise_softdtw(emb, config.gamma);
    Matrix upstream = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(n));  // dL/dD(i, j), i < j

    BatchLoss out;
    out.grad_score = zeros_like(model.score);

    const auto triplets = mine_triplets(dist, labels, config.strategy, config.margin);
    out.triplets = triplets.size();
    if (!triplets.empty()) {
        const TripletLoss tl = loss_at(triplets, config.margin);
        out.loss_at = tl.loss;
        for (std::size_t k = 0; k < triplets.size(); ++k) {
            const auto& t = triplets[k];
            upstream(static_cast<Index>(std::min(t.anchor, t.positive)), static_cast<Index>(std::max(t.anchor, t.positive))) += tl.grad_pos[k];
            upstream(static_cast<Index>(std::min(t.anchor, t.negative)), static_cast<Index>(std::max(t.anchor, t.negative))) += tl.grad_neg[k];
        }
    }

    // Score loss over every unordered pair; gradient taken through the logit
    // (dL/dlogit = S - y) for stability.
    std::vector<double> scores;
    std::vector<int> targets;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            pairs.emplace_back(i, j);
            scores.push_back(alignability_score(model.score, dist(static_cast<Index>(i), static_cast<Index>(j))));
            targets.push_back(labels[i] == labels[j] ? 1 : 0);
        }
    }
    out.pairs = pairs.size();
    if (!pairs.empty()) {
        double loss = 0.0;
        const double inv = 1.0 / static_cast<double>(pairs.size());
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double d = dist(static_cast<Index>(pairs[k].first), static_cast<Index>(pairs[k].second));
            const double logit = score_logit(model.score, d);
            // -[y log s + (1-y) log(1-s)] = softplus(logit) - y * logit
            loss += std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit))) - targets[k] * logit;
            const double g_logit = config.score_weight * inv * (scores[k] - targets[k]);
            if (g_logit == 0.0) continue;
            const ScoreGradient sg = score_backward(model.score, d, g_logit);
            add_scaled(out.grad_score, sg.params, 1.0);
            upstream(static_cast<Index>(pairs[k].first), static_cast<Index>(pairs[k].second)) += sg.d_distance;
        }
        out.loss_score = loss * inv;
    }
    out.total = loss_av(out.loss_at, out.loss_score, config.score_weight);

    // Back through soft-DTW into each embedding; per-pair buffers summed in a
    // fixed order.
    std::vector<std::pair<std::size_t, std::size_t>> active;
    for (const auto& [i, j] : pairs)
        if (upstream(static_cast<Index>(i), static_cast<Index>(j)) != 0.0) active.emplace_back(i, j);
    std::vector<Matrix> gu(active.size()), gv(active.size());
    parallel_for(active.size(), 0, [&](std::size_t k) {
        const auto [i, j] = active[k];
        gu[k] = Matrix::Zero(emb[i].length(), emb[i].dim());
        gv[k] = Matrix::Zero(emb[j].length(), emb[j].dim());
        softdtw_backprop(emb[i], emb[j], config.gamma, upstream(static_cast<Index>(i), static_cast<Index>(j)), gu[k], gv[k]);
    });
    std::vector<Matrix> grad_emb(n);
    for (std::size_t i = 0; i < n; ++i) grad_emb[i] = Matrix::Zero(emb[i].length(), emb[i].dim());
    for (std::size_t k = 0; k < active.size(); ++k) {
        grad_emb[active[k].first] += gu[k];
        grad_emb[active[k].second] += gv[k];
    }

    out.grad_encoder = zeros_like(model.encoder);
    for (std::size_t i = 0; i < n; ++i) {
        if (grad_emb[i].isZero(0.0)) continue;
        add_scaled(out.grad_encoder, fa_backward(model.encoder, caches[i], grad_emb[i]), 1.0);
    }
    return out;
}

std::vector<std::vector<std::size_t>> class_balanced_batches(std::span<const int> labels, std::size_t batch_size,
                                                             std::size_t instances_per_class, Rng& rng) {
    if (instances_per_class < 2) throw ConfigError("batches: instances per class must be >= 2");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::vector<std::vector<std::size_t>> groups;
    std::size_t eligible = 0;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2) continue;
        ++eligible;
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::size_t> sizes(idx.size() / instances_per_class, instances_per_class);
        const std::size_t rest = idx.size() % instances_per_class;
        if (rest == 1) {
            // A lone leftover joins the last chunk; split that evenly when both halves keep a pair.
            const std::size_t merged = sizes.back() + 1;
            if (merged >= 4) {
                sizes.back() = merged - merged / 2;
                sizes.push_back(merged / 2);
            } else {
                sizes.back() = merged;
            }
        } else if (rest > 1) {
            sizes.push_back(rest);
        }
        std::size_t s = 0;
        for (std::size_t n : sizes) {
            groups.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s), idx.begin() + static_cast<std::ptrdiff_t>(s + n));
            s += n;
        }
    }
    if (eligible < 2) throw ConfigError("metric learning needs at least 2 classes with at least 2 samples each");
    std::shuffle(groups.begin(), groups.end(), rng);

    // Greedy packing; a batch never holds two groups of the same class.
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::vector<int>> batch_classes;
    for (auto& g : groups) {
        const int cls = labels[g[0]];
        bool placed = false;
        for (std::size_t b = 0; b < batches.size() && !placed; ++b) {
            const bool has_class = std::find(batch_classes[b].begin(), batch_classes[b].end(), cls) != batch_classes[b].end();
            if (!has_class && batches[b].size() + g.size() <= batch_size) {
                batches[b].insert(batches[b].end(), g.begin(), g.end());
                batch_classes[b].push_back(cls);
                placed = true;
            }
        }
        if (!placed) {
            batches.push_back(g);
            batch_classes.push_back({cls});
        }
    }
    // Single-class batches carry no negatives; fold them into another batch.
    for (std::size_t b = 0; b < batches.size();) {
        if (batch_classes[b].size() >= 2 || batches.size() == 1) {
            ++b;
            continue;
        }
        std::size_t target = b == 0 ? 1 : 0;
        for (std::size_t c = 0; c < batches.size(); ++c) {
            if (c == b) continue;
            if (std::find(batch_classes[c].begin(), batch_classes[c].end(), batch_classes[b][0]) == batch_classes[c].end()) {
                target = c;
                break;
            }
        }
        batches[target].insert(batches[target].end(), batches[b].begin(), batches[b].end());
        batch_classes[target].push_back(batch_classes[b][0]);
        batches.erase(batches.begin() + static_cast<std::ptrdiff_t>(b));
        batch_classes.erase(batch_classes.begin() + static_cast<std::ptrdiff_t>(b));
        b = 0;
    }
    return batches;
}

MetricEpochStats train_metric_epoch(AlignabilityModel& model, MetricOptimizer& opt, std::span<const Matrix> clips,
                                    std::span<const int> labels, const MetricLearnConfig& config, double lr, Rng& rng) {
    config.validate();
    const auto batches = class_balanced_batches(labels, config.batch_size, config.instances_per_class, rng);
    MetricEpochStats stats;
    for (const auto& batch : batches) {
        std::vector<Matrix> bc;
        std::vector<int> bl;
        for (std::size_t i : batch) {
            bc.push_back(clips[i]);
            bl.push_back(labels[i]);
        }
        BatchLoss bl_out = alignability_batch_loss(model, bc, bl, config);
        if (config.freeze_input_layer) {
            bl_out.grad_encoder.w1.setZero();
            bl_out.grad_encoder.b1.setZero();
        }
        opt.encoder.step(model.encoder, bl_out.grad_encoder, lr);
        opt.score.step(model.score, bl_out.grad_score, config.score_lr_scale * lr);
        ++model.version;
        stats.loss_at += bl_out.loss_at;
        stats.loss_score += bl_out.loss_score;
        stats.triplets += bl_out.triplets;
        ++stats.batches;
    }
    if (stats.batches > 0) {
        stats.loss_at /= static_cast<double>(stats.batches);
        stats.loss_score /= static_cast<double>(stats.batches);
    }
    return stats;
}

}  // namespace fp
