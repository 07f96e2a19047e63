#pragma once

// Random datasets shared by several test binaries.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "curricuweb/curriculum.hpp"
#include "curricuweb/dataset.hpp"
#include "curricuweb/pipeline.hpp"
#include "curricuweb/synthetic.hpp"
#include "curricuweb/rng.hpp"
#include "curricuweb/wsddn.hpp"

namespace fixture {

struct Dataset {
    std::vector<std::string> classes;
    std::vector<curricuweb::ImageRecord> records;
    std::vector<curricuweb::RegionSet> regions;
    curricuweb::FeatureBlob features{0, 1};
};

// Mixed web/target, train/test, possibly multi-label records, each with
// 1..max_regions regions of dimension `dim`.
inline Dataset random_dataset(curricuweb::Rng& rng, std::size_t n, std::uint32_t classes, std::uint32_t dim,
                              std::uint32_t max_regions = 4) {
    using namespace curricuweb;
    Dataset ds;
    for (std::uint32_t c = 0; c < classes; ++c) ds.classes.push_back("c" + std::to_string(c));
    std::vector<float> data;
    for (std::size_t i = 0; i < n; ++i) {
        ImageRecord r;
        r.id = "r" + std::to_string(1000 + i);
        r.source = rng.below(3) == 0 ? Source::web : Source::target;
        r.split = rng.below(5) == 0 ? Split::test : Split::train;
        const std::uint32_t main = std::uint32_t(rng.below(classes));
        for (std::uint32_t c = 0; c < classes; ++c) {
            const bool pos = c == main || (r.source == Source::target && rng.below(4) == 0);
            r.labels[ds.classes[c]] = pos ? 1 : -1;
        }
        r.difficulty = double(rng.below(20)) / 20.0;  // coarse values force ties
        if (r.source == Source::web) r.relevance = rng.uniform(-5, 15);
        r.content_hash = rng.next_u64();
        r.path = r.id;

        RegionSet rs{r.id, {}, {}};
        const std::uint32_t count = 1 + std::uint32_t(rng.below(max_regions));
        for (std::uint32_t k = 0; k < count; ++k) {
            const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
            rs.boxes.push_back({x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40)});
            rs.feature_rows.push_back(std::uint32_t(data.size() / dim));
            for (std::uint32_t d = 0; d < dim; ++d) data.push_back(float(rng.normal()));
        }
        ds.records.push_back(std::move(r));
        ds.regions.push_back(std::move(rs));
    }
    const auto rows = std::uint32_t(data.size() / dim);
    ds.features = FeatureBlob(rows, dim, std::move(data));
    return ds;
}

// Target train records, the set the pipeline ranks by difficulty.
inline std::vector<curricuweb::ImageRecord> target_train(const std::vector<curricuweb::ImageRecord>& records) {
    std::vector<curricuweb::ImageRecord> out;
    for (const auto& r : records)
        if (r.source == curricuweb::Source::target && r.split == curricuweb::Split::train) out.push_back(r);
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("curricuweb_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct WebSet {
    std::vector<curricuweb::ImageRecord> records;
    curricuweb::FeatureBlob features{0, 1};
    std::vector<std::string> outliers;
};

// Two Gaussian clusters (unit variance) centred at +/- separation along the
// first axis, one per class, plus outliers placed `outlier_distance` out
// along the remaining axes and labelled with alternating classes. Each
// class is retrieved by a base query ranking its inliers first.
inline WebSet two_clusters(std::uint64_t seed, std::uint32_t dim, std::uint32_t inliers_per_class,
                           std::uint32_t outliers, double separation, double outlier_distance) {
    using namespace curricuweb;
    Rng rng(seed);
    WebSet ws;
    std::vector<float> data;
    const char* names[2] = {"A", "B"};
    std::uint32_t next_rank[2] = {1, 1};
    auto add = [&](const std::string& id, int cls, const std::vector<double>& x) {
        ImageRecord r;
        r.id = id;
        r.source = Source::web;
        r.labels = {{names[cls], 1}, {names[1 - cls], -1}};
        r.path = id;
        r.origin = QueryOrigin{names[cls], QueryKind::base, next_rank[cls]++};
        ws.records.push_back(r);
        for (double v : x) data.push_back(float(v));
    };
    for (int cls = 0; cls < 2; ++cls)
        for (std::uint32_t i = 0; i < inliers_per_class; ++i) {
            std::vector<double> x(dim);
            for (auto& v : x) v = rng.normal();
            x[0] += cls == 0 ? separation : -separation;
            add(std::string(names[cls]) + "_" + std::to_string(1000 + i), cls, x);
        }
    for (std::uint32_t o = 0; o < outliers; ++o) {
        std::vector<double> x(dim);
        for (auto& v : x) v = rng.normal();
        const std::uint32_t axis = dim > 1 ? 1 + o % (dim - 1) : 0;
        x[axis] += (o / (dim > 1 ? dim - 1 : 1)) % 2 ? -outlier_distance : outlier_distance;
        const std::string id = "out_" + std::to_string(100 + o);
        add(id, int(o % 2), x);
        ws.outliers.push_back(id);
    }
    const auto rows = std::uint32_t(data.size() / dim);
    ws.features = FeatureBlob(rows, dim, std::move(data));
    return ws;
}

// The synthetic setting of the end-to-end trend check: 2 classes, 20 target
// train images per class (half hard), 20 easy web images per class plus 3
// mislabelled web outliers.
inline curricuweb::SyntheticSpec trend_spec(std::uint64_t seed) {
    curricuweb::SyntheticSpec s;
    s.classes = 2;
    s.images_per_class = 20;
    s.test_images_per_class = 10;
    s.web_per_class = 20;
    s.web_outliers_per_class = 3;
    s.dim = 16;
    s.easy_fraction = 0.5;
    s.signal = 4.0;
    s.seed = seed;
    return s;
}

// Pipeline settings used with trend_spec. The semantic threshold is set on
// the logit scale the linear relevance head actually reaches.
inline curricuweb::PipelineConfig trend_config(const curricuweb::SyntheticPaths& p, const std::string& out_dir,
                                               curricuweb::Variant v, std::uint64_t seed) {
    curricuweb::PipelineConfig c;
    c.variant = v;
    c.manifest = p.manifest;
    c.image_features = p.image_features;
    c.regions = p.regions;
    c.region_features = p.region_features;
    c.ground_truth = p.ground_truth;
    c.output_dir = out_dir;
    c.train.learning_rate = 0.05;
    c.train.epochs_per_stage = 20;
    c.train.seed = seed;
    c.relevance_threshold = 3.0;
    c.self_train.seeds_per_label = 10;
    return c;
}

}  // namespace fixture
