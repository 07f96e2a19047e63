#include "curricuweb/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "curricuweb/errors.hpp"
#include "curricuweb/parallel.hpp"
#include "curricuweb/rng.hpp"

namespace curricuweb {

void SelfTrainConfig::validate() const {
    if (seeds_per_label < 1 || seeds_per_attribute_query < 1)
        throw ConfigError("seed counts must be positive");
    if (!std::isfinite(confidence_add_threshold)) throw ConfigError("confidence_add_threshold must be finite");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (epochs_per_iteration < 1) throw ConfigError("epochs_per_iteration must be >= 1");
}

namespace {

// The class a web record was retrieved for.
const std::string& query_class(const ImageRecord& r) {
    const std::string* found = nullptr;
    for (const auto& [cls, y] : r.labels) {
        if (y <= 0) continue;
        if (found != nullptr) throw DataError("web record '" + r.id + "' has more than one positive class");
        found = &cls;
    }
    if (found == nullptr) throw DataError("web record '" + r.id + "' has no positive class");
    return *found;
}

}  // namespace

SeedSelection select_seeds(std::span<const ImageRecord> web_records, const SelfTrainConfig& cfg,
                           std::span<const std::string> expected_queries) {
    cfg.validate();
    struct Group {
        QueryKind kind;
        std::vector<const ImageRecord*> members;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Group> groups;
    for (const auto& r : web_records) {
        if (!r.origin) throw DataError("web record '" + r.id + "' carries no originating query");
        if (r.origin->kind == QueryKind::related) continue;
        auto [it, inserted] = groups.try_emplace(r.origin->text, Group{r.origin->kind, {}});
        if (inserted) order.push_back(r.origin->text);
        it->second.members.push_back(&r);
    }

    SeedSelection out;
    for (const auto& q : expected_queries)
        if (!groups.contains(q)) out.warnings.push_back("query '" + q + "' returned no records; skipped");

    std::unordered_set<std::string> taken;
    for (const auto& text : order) {
        auto& g = groups.at(text);
        std::stable_sort(g.members.begin(), g.members.end(),
                         [](const ImageRecord* a, const ImageRecord* b) { return a->origin->rank < b->origin->rank; });
        const std::size_t limit = g.kind == QueryKind::base ? cfg.seeds_per_label : cfg.seeds_per_attribute_query;
        for (std::size_t i = 0; i < std::min(limit, g.members.size()); ++i) {
            const ImageRecord& r = *g.members[i];
            if (taken.insert(r.id).second) out.seeds.push_back({r.id, query_class(r)});
        }
    }
    return out;
}

Eigen::VectorXd RelevanceClassifier::logits(std::span<const float> feature) const {
    if (Eigen::Index(feature.size()) != weights.rows()) throw ShapeError("feature dim does not match classifier");
    Eigen::VectorXd x(weights.rows());
    for (std::size_t d = 0; d < feature.size(); ++d) x(Eigen::Index(d)) = feature[d];
    return weights.transpose() * x + biases;
}

bool operator==(const RelevanceClassifier& a, const RelevanceClassifier& b) {
    return a.classes == b.classes && a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           (a.weights.array() == b.weights.array()).all() && a.biases.size() == b.biases.size() &&
           (a.biases.array() == b.biases.array()).all();
}

namespace {

struct Labelled {
    std::size_t record;
    Eigen::Index cls;
};

// Multinomial logistic regression by per-sample SGD from zero weights.
RelevanceClassifier fit_softmax(const FeatureBlob& features, std::span<const Labelled> pool,
                                const std::vector<std::string>& classes, const SelfTrainConfig& cfg, Rng rng) {
    const Eigen::Index D = features.dim(), C = Eigen::Index(classes.size());
    RelevanceClassifier model{classes, Eigen::MatrixXd::Zero(D, C), Eigen::VectorXd::Zero(C)};
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Eigen::VectorXd x(D);
    for (std::uint32_t e = 0; e < cfg.epochs_per_iteration; ++e) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t i : order) {
            const auto row = features.row(pool[i].record);
            for (Eigen::Index d = 0; d < D; ++d) x(d) = row[std::size_t(d)];
            Eigen::VectorXd z = model.weights.transpose() * x + model.biases;
            z = (z.array() - z.maxCoeff()).exp();
            z /= z.sum();
            z(pool[i].cls) -= 1.0;
            model.weights.noalias() -= cfg.learning_rate * (x * z.transpose());
            model.biases -= cfg.learning_rate * z;
        }
    }
    return model;
}

}  // namespace

SelfTrainResult self_train(const FeatureBlob& features, std::span<const ImageRecord> web_records,
                           std::span<const Seed> seeds, const SelfTrainConfig& cfg) {
    cfg.validate();
    if (features.count() != web_records.size())
        throw ShapeError("feature rows (" + std::to_string(features.count()) + ") do not match web records (" +
                         std::to_string(web_records.size()) + ")");

    std::vector<std::string> classes;
    {
        std::set<std::string> all;
        for (const auto& r : web_records) all.insert(query_class(r));
        classes.assign(all.begin(), all.end());
    }
    auto class_index = [&](const std::string& cls) {
        auto it = std::lower_bound(classes.begin(), classes.end(), cls);
        if (it == classes.end() || *it != cls) throw DataError("seed class '" + cls + "' has no web records");
        return Eigen::Index(it - classes.begin());
    };

    std::unordered_map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < web_records.size(); ++i) index_of.emplace(web_records[i].id, i);

    std::vector<Labelled> pool;
    std::vector<bool> in_pool(web_records.size(), false);
    std::set<Eigen::Index> seed_classes;
    for (const auto& s : seeds) {
        auto it = index_of.find(s.image_id);
        if (it == index_of.end()) throw DataError("seed '" + s.image_id + "' is not a web record");
        if (in_pool[it->second]) continue;
        in_pool[it->second] = true;
        pool.push_back({it->second, class_index(s.cls)});
        seed_classes.insert(pool.back().cls);
    }
    if (seed_classes.size() < 2) throw ConfigError("self-training needs seeds from at least two classes");

    std::vector<Eigen::Index> own_class(web_records.size());
    for (std::size_t i = 0; i < web_records.size(); ++i) own_class[i] = class_index(query_class(web_records[i]));

    const Rng root(cfg.seed);
    SelfTrainResult result;
    std::vector<Eigen::VectorXd> logits(web_records.size());
    for (std::uint32_t it = 0; it < cfg.max_iterations; ++it) {
        result.pool_sizes.push_back(pool.size());
        result.classifier = fit_softmax(features, pool, classes, cfg, root.split(std::uint64_t(it)));
        ++result.iterations;

        parallel_for(web_records.size(),
                     [&](std::size_t i) { logits[i] = result.classifier.logits(features.row(i)); });

        std::vector<Labelled> added;
        for (std::size_t i = 0; i < web_records.size(); ++i) {
            if (in_pool[i]) continue;
            Eigen::Index top = 0;
            logits[i].maxCoeff(&top);
            if (top == own_class[i] && logits[i](top) >= cfg.confidence_add_threshold) added.push_back({i, top});
        }
        if (added.empty()) {
            result.stabilized = true;
            break;
        }
        if (it + 1 == cfg.max_iterations) break;
        for (const auto& a : added) {
            in_pool[a.record] = true;
            pool.push_back(a);
        }
    }

    for (std::size_t i = 0; i < web_records.size(); ++i)
        result.scores.emplace(web_records[i].id, logits[i](own_class[i]));
    return result;
}

// ---- PCA ----

Eigen::MatrixXd PcaModel::project(const FeatureBlob& blob) const {
    if (Eigen::Index(blob.dim()) != mean.size()) throw ShapeError("blob dim does not match PCA model");
    Eigen::MatrixXd x(Eigen::Index(blob.count()), mean.size());
    for (std::size_t i = 0; i < blob.count(); ++i) {
        const auto row = blob.row(i);
        for (std::size_t d = 0; d < row.size(); ++d) x(Eigen::Index(i), Eigen::Index(d)) = row[d];
    }
    x.rowwise() -= mean.transpose();
    return x * components;
}

PcaModel fit_pca(const FeatureBlob& blob, std::uint32_t d) {
    if (d < 1) throw ConfigError("PCA dimension must be >= 1");
    if (d > blob.count()) throw ConfigError("PCA dimension exceeds sample count");
    if (d > blob.dim()) throw ConfigError("PCA dimension exceeds feature dim");

    const Eigen::Index n = blob.count(), D = blob.dim();
    Eigen::MatrixXd x(n, D);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = blob.row(std::size_t(i));
        for (Eigen::Index j = 0; j < D; ++j) x(i, j) = row[std::size_t(j)];
    }
    PcaModel model;
    model.mean = x.colwise().mean().transpose();
    x.rowwise() -= model.mean.transpose();
    const double denom = n > 1 ? double(n - 1) : 1.0;
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DataError("covariance eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    model.components.resize(D, d);
    model.variances.resize(d);
    for (std::uint32_t k = 0; k < d; ++k) {
        const Eigen::Index src = D - 1 - Eigen::Index(k);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        model.components.col(k) = v;
        model.variances(k) = std::max(0.0, solver.eigenvalues()(src));
    }
    return model;
}

std::set<std::string> knn_relevance(std::span<const ImageRecord> target_records, const FeatureBlob& target_features,
                                    std::span<const ImageRecord> web_records, const FeatureBlob& web_features,
                                    const PcaModel& pca, std::uint32_t k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (target_features.count() != target_records.size() || web_features.count() != web_records.size())
        throw ShapeError("feature rows do not match records");

    const Eigen::MatrixXd targets = pca.project(l2_normalize(target_features));
    const Eigen::MatrixXd webs = pca.project(l2_normalize(web_features));

    std::map<std::string, std::vector<std::size_t>> web_by_class;
    for (std::size_t j = 0; j < web_records.size(); ++j)
        for (const auto& cls : web_records[j].positive_classes()) web_by_class[cls].push_back(j);

    std::vector<std::vector<std::size_t>> picked(target_records.size());
    parallel_for(target_records.size(), [&](std::size_t i) {
        const auto positives = target_records[i].positive_classes();
        if (positives.size() != 1) return;
        auto it = web_by_class.find(positives.front());
        if (it == web_by_class.end()) return;

        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(it->second.size());
        for (std::size_t j : it->second) cand.emplace_back((webs.row(Eigen::Index(j)) - targets.row(Eigen::Index(i))).squaredNorm(), j);
        const std::size_t take = std::min<std::size_t>(k, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(take), cand.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return web_records[a.second].id < web_records[b.second].id;
        });
        for (std::size_t n = 0; n < take; ++n) picked[i].push_back(cand[n].second);
    });

    std::set<std::string> out;
    for (const auto& p : picked)
        for (std::size_t j : p) out.insert(web_records[j].id);
    return out;
}

void apply_scores(std::span<ImageRecord> records, const std::map<std::string, double>& scores) {
    for (auto& r : records) {
        if (r.source != Source::web) continue;
        auto it = scores.find(r.id);
        if (it != scores.end()) r.relevance = it->second;
    }
}

void apply_membership(std::span<ImageRecord> records, const std::set<std::string>& members) {
    for (auto& r : records)
        if (r.source == Source::web) r.relevance = members.contains(r.id) ? kMemberRelevance : kNonMemberRelevance;
}

}  // namespace curricuweb
