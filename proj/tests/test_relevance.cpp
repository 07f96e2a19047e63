#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "curricuweb/errors.hpp"
#include "curricuweb/relevance.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace curricuweb;

namespace {

ImageRecord web(const std::string& id, const std::string& cls, const std::string& query, QueryKind kind,
                std::uint32_t rank) {
    ImageRecord r;
    r.id = id;
    r.source = Source::web;
    r.labels = {{cls, 1}};
    r.origin = QueryOrigin{query, kind, rank};
    return r;
}

ImageRecord target(const std::string& id, std::map<std::string, int> labels) {
    ImageRecord r;
    r.id = id;
    r.labels = std::move(labels);
    return r;
}

FeatureBlob blob_of(const std::vector<std::vector<double>>& rows) {
    std::vector<float> data;
    for (const auto& r : rows)
        for (double v : r) data.push_back(float(v));
    return FeatureBlob(std::uint32_t(rows.size()), std::uint32_t(rows.empty() ? 1 : rows[0].size()), std::move(data));
}

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> out(std::size_t(m.rows()), std::vector<double>(std::size_t(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[std::size_t(i)][std::size_t(j)] = m(i, j);
    return out;
}

FeatureBlob random_blob(Rng& rng, std::uint32_t n, std::uint32_t d, double scale = 1.0) {
    std::vector<float> data(std::size_t(n) * d);
    for (auto& v : data) v = float(scale * rng.normal());
    return FeatureBlob(n, d, std::move(data));
}

}  // namespace

TEST_CASE("base query seeds take the top 80") {
    std::vector<ImageRecord> recs;
    for (std::uint32_t i = 100; i >= 1; --i) recs.push_back(web("c" + std::to_string(i), "cat", "cat", QueryKind::base, i));
    const auto sel = select_seeds(recs, SelfTrainConfig{});
    REQUIRE(sel.seeds.size() == 80);
    for (std::uint32_t i = 0; i < 80; ++i) {
        CHECK(sel.seeds[i].image_id == "c" + std::to_string(i + 1));
        CHECK(sel.seeds[i].cls == "cat");
    }
}

TEST_CASE("attributed query seeds truncate at availability and deduplicate") {
    std::vector<ImageRecord> recs;
    for (std::uint32_t i = 1; i <= 5; ++i)
        recs.push_back(web("s" + std::to_string(i), "cat", "cat sitting", QueryKind::attributed, i));
    CHECK(select_seeds(recs, SelfTrainConfig{}).seeds.size() == 5);

    // One image retrieved by both queries: the manifest holds it once.
    std::vector<ImageRecord> both{web("x", "cat", "cat", QueryKind::base, 1),
                                  web("y", "cat", "cat sitting", QueryKind::attributed, 4)};
    const auto sel = select_seeds(both, SelfTrainConfig{});
    CHECK(sel.seeds.size() == 2);

    std::vector<ImageRecord> dup{web("x", "cat", "cat", QueryKind::base, 1)};
    const std::vector<Seed> seeds = select_seeds(dup, SelfTrainConfig{}).seeds;
    CHECK(std::count_if(seeds.begin(), seeds.end(), [](const Seed& s) { return s.image_id == "x"; }) == 1);
}

TEST_CASE("related records never seed and missing queries warn") {
    std::vector<ImageRecord> recs{web("r", "cat", "related:abc", QueryKind::related, 1),
                                  web("b", "cat", "cat", QueryKind::base, 1)};
    const std::vector<std::string> expected{"cat", "cat walking"};
    const auto sel = select_seeds(recs, SelfTrainConfig{}, expected);
    REQUIRE(sel.seeds.size() == 1);
    CHECK(sel.seeds[0].image_id == "b");
    REQUIRE(sel.warnings.size() == 1);
    CHECK(sel.warnings[0].find("cat walking") != std::string::npos);
}

TEST_CASE("self-training separates planted outliers") {
    const auto ws = fixture::two_clusters(5, 8, 200, 10, 8.0, 10.0);
    const SelfTrainConfig cfg;
    const auto seeds = select_seeds(ws.records, cfg).seeds;
    CHECK(seeds.size() == 160);
    const auto res = self_train(ws.features, ws.records, seeds, cfg);
    CHECK(res.iterations <= cfg.max_iterations);
    CHECK(std::is_sorted(res.pool_sizes.begin(), res.pool_sizes.end()));
    double min_inlier = 1e300, max_outlier = -1e300;
    for (const auto& [id, s] : res.scores) {
        if (id.starts_with("out_")) max_outlier = std::max(max_outlier, s);
        else min_inlier = std::min(min_inlier, s);
    }
    CHECK(max_outlier < min_inlier);
    const auto again = self_train(ws.features, ws.records, seeds, cfg);
    CHECK(again.scores == res.scores);
    CHECK(again.classifier == res.classifier);
}

TEST_CASE("a stop at the first iteration returns the first fit unchanged") {
    const auto ws = fixture::two_clusters(6, 4, 30, 0, 4.0, 0.0);
    SelfTrainConfig cfg;
    cfg.confidence_add_threshold = 1e6;
    const auto seeds = select_seeds(ws.records, cfg).seeds;
    const auto res = self_train(ws.features, ws.records, seeds, cfg);
    CHECK(res.iterations == 1);
    CHECK(res.stabilized);
    SelfTrainConfig once = cfg;
    once.max_iterations = 1;
    CHECK(self_train(ws.features, ws.records, seeds, once).classifier == res.classifier);
}

TEST_CASE("the pool grows when confident records exist") {
    const auto ws = fixture::two_clusters(7, 4, 60, 0, 5.0, 0.0);
    SelfTrainConfig cfg;
    cfg.seeds_per_label = 10;
    cfg.confidence_add_threshold = 1.0;
    const auto res = self_train(ws.features, ws.records, select_seeds(ws.records, cfg).seeds, cfg);
    REQUIRE(res.pool_sizes.size() >= 2);
    CHECK(res.pool_sizes[1] > res.pool_sizes[0]);
    CHECK(std::is_sorted(res.pool_sizes.begin(), res.pool_sizes.end()));
}

TEST_CASE("a record whose class logit is negative keeps a negative score") {
    auto ws = fixture::two_clusters(8, 4, 40, 0, 5.0, 0.0);
    // A record filed under A whose features sit deep in cluster B.
    auto rec = ws.records.front();
    rec.id = "mislabelled";
    rec.origin->rank = 999;
    ws.records.push_back(rec);
    std::vector<float> data(ws.features.data().begin(), ws.features.data().end());
    for (float v : {-8.0f, 0.0f, 0.0f, 0.0f}) data.push_back(v);
    const FeatureBlob feats(ws.features.count() + 1, 4, std::move(data));
    SelfTrainConfig cfg;
    cfg.seeds_per_label = 20;
    const auto res = self_train(feats, ws.records, select_seeds(ws.records, cfg).seeds, cfg);
    CHECK(res.scores.at("mislabelled") < 0.0);
}

TEST_CASE("single-class seed pool is a config error") {
    const auto ws = fixture::two_clusters(9, 4, 10, 0, 4.0, 0.0);
    std::vector<Seed> seeds{{ws.records[0].id, "A"}, {ws.records[1].id, "A"}};
    CHECK_THROWS_AS(self_train(ws.features, ws.records, seeds, SelfTrainConfig{}), ConfigError);
}

TEST_CASE("pca on a line reconstructs exactly") {
    Rng rng(1);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 20; ++i) {
        const double t = double(rng.below(40)) / 4.0 - 5.0;  // exact in float
        rows.push_back({1 + 2 * t, -1 + t, 0.5 - 0.5 * t});
    }
    const auto blob = blob_of(rows);
    const auto pca = fit_pca(blob, 1);
    const Eigen::MatrixXd proj = pca.project(blob);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd back = pca.mean + pca.components * proj.row(i).transpose();
        for (int d = 0; d < 3; ++d) CHECK(std::abs(back(d) - double(blob.row(std::size_t(i))[std::size_t(d)])) < 1e-8);
    }
}

TEST_CASE("full-dimension pca is an isometry") {
    Rng rng(2);
    const auto blob = random_blob(rng, 30, 6);
    const auto pca = fit_pca(blob, 6);
    const auto proj = pca.project(blob);
    const Eigen::MatrixXd gram = pca.components.transpose() * pca.components;
    CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-5);
    for (int i = 0; i < 30; ++i)
        for (int j = i + 1; j < 30; ++j) {
            double orig = 0;
            for (int d = 0; d < 6; ++d) {
                const double diff = double(blob.row(std::size_t(i))[std::size_t(d)]) - blob.row(std::size_t(j))[std::size_t(d)];
                orig += diff * diff;
            }
            CHECK(std::abs((proj.row(i) - proj.row(j)).norm() - std::sqrt(orig)) < 1e-6);
        }
}

TEST_CASE("captured variance matches a Jacobi eigen oracle") {
    Rng rng(3);
    std::vector<std::vector<double>> rows(50, std::vector<double>(8));
    for (auto& r : rows)
        for (std::size_t d = 0; d < 8; ++d) r[d] = rng.normal() * double(d + 1);
    const auto blob = blob_of(rows);
    std::vector<std::vector<double>> exact;
    for (std::size_t i = 0; i < 50; ++i) exact.emplace_back(blob.row(i).begin(), blob.row(i).end());
    const auto ev = oracle::jacobi_eigenvalues(oracle::covariance(exact));
    const auto pca = fit_pca(blob, 3);
    const double want = ev[0] + ev[1] + ev[2];
    CHECK(std::abs(pca.variances.sum() - want) / want < 1e-6);
    // Variance of the projected data agrees too.
    const auto proj = rows_of(pca.project(blob));
    const auto cov = oracle::covariance(proj);
    CHECK(std::abs(cov[0][0] + cov[1][1] + cov[2][2] - want) / want < 1e-6);
    for (Eigen::Index c = 0; c < 3; ++c) {
        Eigen::Index arg = 0;
        pca.components.col(c).cwiseAbs().maxCoeff(&arg);
        CHECK(pca.components(arg, c) > 0);
    }
}

TEST_CASE("pca dimension errors") {
    Rng rng(4);
    const auto blob = random_blob(rng, 5, 3);
    CHECK_THROWS_AS(fit_pca(blob, 4), ConfigError);
    CHECK_THROWS_AS(fit_pca(blob, 0), ConfigError);
    CHECK_THROWS_AS(fit_pca(random_blob(rng, 2, 6), 3), ConfigError);
}

TEST_CASE("knn on an identical feature") {
    const std::vector<ImageRecord> t{target("t", {{"cat", 1}})};
    const std::vector<ImageRecord> w{web("w", "cat", "cat", QueryKind::base, 1)};
    const auto feats = blob_of({{1, 2, 3}});
    const auto pca = fit_pca(blob_of({{1, 2, 3}, {0, 1, 0}, {2, 0, 1}}), 2);
    CHECK(knn_relevance(t, feats, w, feats, pca, 1) == std::set<std::string>{"w"});
}

TEST_CASE("knn: class without web images contributes nothing") {
    const std::vector<ImageRecord> t{target("t1", {{"cat", 1}}), target("t2", {{"dog", 1}})};
    const std::vector<ImageRecord> w{web("w", "cat", "cat", QueryKind::base, 1)};
    const auto tf = blob_of({{1, 0}, {0, 1}});
    const auto wf = blob_of({{1, 0.1}});
    const auto pca = fit_pca(blob_of({{1, 0}, {0, 1}, {1, 1}}), 2);
    CHECK(knn_relevance(t, tf, w, wf, pca, 3) == std::set<std::string>{"w"});
    // Multi-label targets do not query.
    const std::vector<ImageRecord> multi{target("m", {{"cat", 1}, {"dog", 1}})};
    CHECK(knn_relevance(multi, blob_of({{1, 0}}), w, wf, pca, 3).empty());
}

TEST_CASE("knn matches exhaustive search and ignores web order") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const std::uint32_t dim = 4, n = 10;
        const auto wf = random_blob(rng, n, dim);
        std::vector<ImageRecord> w;
        for (std::uint32_t i = 0; i < n; ++i) w.push_back(web("w" + std::to_string(i), "c", "c", QueryKind::base, i + 1));
        const auto tf = random_blob(rng, 3, dim);
        std::vector<ImageRecord> tr;
        for (int i = 0; i < 3; ++i) tr.push_back(target("t" + std::to_string(i), {{"c", 1}}));
        const auto pca = fit_pca(wf, 3);
        const auto got = knn_relevance(tr, tf, w, wf, pca, 3);

        const auto wp = rows_of(pca.project(l2_normalize(wf)));
        const auto tp = rows_of(pca.project(l2_normalize(tf)));
        std::vector<std::string> ids;
        for (const auto& r : w) ids.push_back(r.id);
        std::set<std::string> want;
        for (const auto& q : tp)
            for (const auto& id : oracle::knn(q, wp, ids, 3)) want.insert(id);
        CHECK(got == want);

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<std::size_t>(perm));
        std::vector<ImageRecord> w2;
        std::vector<float> data;
        for (auto i : perm) {
            w2.push_back(w[i]);
            for (float v : wf.row(i)) data.push_back(v);
        }
        CHECK(knn_relevance(tr, tf, w2, FeatureBlob(n, dim, std::move(data)), pca, 3) == got);
    }
}

TEST_CASE("knn ties break by id") {
    // Two web images at the same point; k = 1 takes the smaller id.
    const std::vector<ImageRecord> t{target("t", {{"c", 1}})};
    const std::vector<ImageRecord> w{web("wb", "c", "c", QueryKind::base, 1), web("wa", "c", "c", QueryKind::base, 2)};
    const auto pca = fit_pca(blob_of({{1, 0}, {0, 1}, {1, 1}}), 2);
    CHECK(knn_relevance(t, blob_of({{1, 0}}), w, blob_of({{0, 1}, {0, 1}}), pca, 1) == std::set<std::string>{"wa"});
}

TEST_CASE("scores and membership land on web records only") {
    std::vector<ImageRecord> recs{web("w1", "c", "c", QueryKind::base, 1), web("w2", "c", "c", QueryKind::base, 2),
                                  target("t", {{"c", 1}})};
    apply_scores(recs, {{"w1", 3.5}, {"w2", -1.0}});
    CHECK(recs[0].relevance == 3.5);
    CHECK(recs[1].relevance == -1.0);
    CHECK_FALSE(recs[2].relevance.has_value());
    apply_membership(recs, {"w2"});
    CHECK(recs[0].relevance == kNonMemberRelevance);
    CHECK(recs[1].relevance == kMemberRelevance);
    CHECK_FALSE(recs[2].relevance.has_value());
}
