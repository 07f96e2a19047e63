#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "curricuweb/errors.hpp"
#include "curricuweb/eval.hpp"
#include "curricuweb/rng.hpp"
#include "oracles.hpp"

using namespace curricuweb;

namespace {

Box random_box(Rng& rng, double extent = 40) {
    const double x = double(rng.below(std::uint64_t(extent))), y = double(rng.below(std::uint64_t(extent)));
    return {x, y, x + 1 + double(rng.below(20)), y + 1 + double(rng.below(20))};
}

Detection det(const std::string& img, Box b, double score) { return Detection{img, "cat", b, score}; }
GroundTruthBox gt(const std::string& img, Box b) { return GroundTruthBox{img, "cat", b}; }

}  // namespace

TEST_CASE("iou examples") {
    const Box a{0, 0, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, Box{20, 20, 30, 30}) == 0.0);
    CHECK(iou(a, Box{10, 0, 20, 10}) == 0.0);
    const Box b{5, 0, 15, 10};
    CHECK(std::abs(iou(a, b) - 1.0 / 3.0) < 1e-6);
    CHECK(std::abs(oracle::pixel_iou(a, b, 8) - 1.0 / 3.0) < 1e-6);
}

TEST_CASE("iou agrees with pixel counting and is symmetric") {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const Box a = random_box(rng, 15), b = random_box(rng, 15);
        CHECK(std::abs(iou(a, b) - oracle::pixel_iou(a, b, 2)) < 1e-9);
        CHECK(iou(a, b) == iou(b, a));
    }
}

TEST_CASE("nms examples") {
    const std::vector<Detection> one{det("i", {0, 0, 5, 5}, 0.3)};
    CHECK(nms(one) == one);
    const std::vector<Detection> twins{det("i", {0, 0, 5, 5}, 0.8), det("i", {0, 0, 5, 5}, 0.9)};
    const auto kept = nms(twins);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms matches a greedy oracle") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        std::vector<Detection> dets;
        const auto n = 1 + rng.below(8);
        for (std::uint64_t i = 0; i < n; ++i) dets.push_back(det("i", random_box(rng, 20), double(rng.below(5)) / 4));
        const auto got = nms(dets, 0.4);
        CHECK(got == oracle::greedy_nms(dets, 0.4));
        for (std::size_t i = 0; i < got.size(); ++i)
            for (std::size_t j = i + 1; j < got.size(); ++j) CHECK(iou(got[i].box, got[j].box) <= 0.4);
    }
}

TEST_CASE("average precision examples") {
    const std::vector<GroundTruthBox> g{gt("i", {0, 0, 10, 10})};
    const std::vector<Detection> perfect{det("i", {0, 0, 10, 10}, 0.9)};
    CHECK(average_precision(perfect, g)->ap == 1.0);
    const std::vector<Detection> weak{det("i", {0, 0, 10, 3}, 0.9)};
    CHECK(iou(weak[0].box, g[0].box) == doctest::Approx(0.3));
    CHECK(average_precision(weak, g)->ap == 0.0);
    CHECK_FALSE(average_precision(perfect, {}).has_value());
}

TEST_CASE("hand-enumerated precision/recall table") {
    // Ranked: TP, FP, TP, FP over 3 ground truths.
    const std::vector<GroundTruthBox> g{gt("a", {0, 0, 10, 10}), gt("a", {20, 20, 30, 30}), gt("b", {0, 0, 10, 10})};
    const std::vector<Detection> d{det("a", {0, 0, 10, 10}, 0.9), det("a", {50, 50, 60, 60}, 0.8),
                                   det("b", {0, 0, 10, 10}, 0.7), det("b", {40, 40, 45, 45}, 0.6)};
    const auto curve = average_precision(d, g);
    REQUIRE(curve);
    const std::vector<double> p{1.0, 0.5, 2.0 / 3.0, 0.5}, r{1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(curve->precision[i] == doctest::Approx(p[i]));
        CHECK(curve->recall[i] == doctest::Approx(r[i]));
    }
    // Recall levels 0..0.3 take max precision 1; 0.4..0.6 take 2/3; 0.7..1.0 take 0.
    const double want = (4 * 1.0 + 3 * (2.0 / 3.0)) / 11.0;
    CHECK(std::abs(curve->ap - want) < 1e-12);
    CHECK(std::abs(oracle::average_precision(d, g) - want) < 1e-12);
}

TEST_CASE("average precision matches the brute-force oracle") {
    Rng rng(3);
    for (int t = 0; t < 300; ++t) {
        std::vector<GroundTruthBox> g;
        const auto ng = 1 + rng.below(5);
        for (std::uint64_t i = 0; i < ng; ++i) g.push_back(gt(rng.below(2) ? "a" : "b", random_box(rng, 10)));
        std::vector<Detection> d;
        const auto nd = rng.below(11);
        for (std::uint64_t i = 0; i < nd; ++i) {
            Box b = rng.below(2) ? g[rng.below(g.size())].box : random_box(rng, 10);
            b.x2 += double(rng.below(3));
            d.push_back(det(rng.below(2) ? "a" : "b", b, double(rng.below(6)) / 5));
        }
        const auto curve = average_precision(d, g);
        REQUIRE(curve);
        CHECK(std::abs(curve->ap - oracle::average_precision(d, g)) < 1e-9);
        CHECK(std::is_sorted(curve->recall.begin(), curve->recall.end()));
        CHECK(curve->ap >= 0.0);
        CHECK(curve->ap <= 1.0);

        // Strictly monotone score transforms leave AP unchanged.
        auto e = d;
        for (auto& x : e) x.score = std::exp(3 * x.score) - 7;
        CHECK(average_precision(e, g)->ap == curve->ap);
    }
}

TEST_CASE("mean_ap examples") {
    std::map<std::string, std::optional<PrCurve>> m;
    m["A"] = PrCurve{{}, {}, 1.0};
    m["B"] = PrCurve{{}, {}, 0.0};
    CHECK(mean_ap(m) == 0.5);
    m.clear();
    m["A"] = PrCurve{{}, {}, 0.42};
    m["C"] = std::nullopt;
    CHECK(mean_ap(m) == 0.42);
    m.clear();
    m["C"] = std::nullopt;
    CHECK_THROWS_AS(mean_ap(m), EvaluationError);

    Rng rng(4);
    m.clear();
    double sum = 0;
    for (int i = 0; i < 20; ++i) {
        const double ap = rng.uniform();
        m["c" + std::to_string(100 + i)] = PrCurve{{}, {}, ap};
        sum += ap;
    }
    CHECK(std::abs(mean_ap(m) - sum / 20) < 1e-12);
}

TEST_CASE("evaluate warns on classes without ground truth and prints a table") {
    const std::vector<GroundTruthBox> g{gt("i", {0, 0, 10, 10})};
    std::vector<Detection> d{det("i", {0, 0, 10, 10}, 0.9)};
    d.push_back(Detection{"i", "dog", {0, 0, 4, 4}, 0.5});
    const auto rep = evaluate(d, g);
    CHECK(rep.map == 1.0);
    CHECK_FALSE(rep.per_class.at("dog").has_value());
    CHECK(rep.warnings.size() == 1);
    std::ostringstream out;
    print_evaluation(out, rep);
    CHECK(out.str().find("mAP 1") != std::string::npos);
    CHECK(out.str().find("AP cat 1") != std::string::npos);
}

TEST_CASE("detections round-trip") {
    const std::vector<Detection> d{det("i", {0, 0, 10, 10}, 0.9), Detection{"j", "dog", {1.5, 2, 3, 4.25}, 0.125}};
    std::stringstream s;
    write_detections(s, d);
    CHECK(load_detections(s) == d);
}
