#include "curricuweb/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <fmt/format.h>

#include "curricuweb/errors.hpp"
#include "curricuweb/rng.hpp"
#include "curricuweb/webquery.hpp"

namespace curricuweb {

namespace {

constexpr std::uint32_t kGrid = 4;          // image is a 4x4 grid of cells
constexpr double kCell = 50.0;              // pixels per cell side
constexpr double kHardSignatureGain = 0.6;  // hard images show a weaker object

std::vector<double> random_direction(Rng& rng, std::uint32_t dim, double norm) {
    std::vector<double> v(dim);
    double sq = 0;
    for (auto& x : v) {
        x = rng.normal();
        sq += x * x;
    }
    const double scale = norm / std::sqrt(sq);
    for (auto& x : v) x *= scale;
    return v;
}

Box cell_box(std::uint32_t cell, Rng& rng) {
    const double cx = double(cell % kGrid) * kCell, cy = double(cell / kGrid) * kCell;
    const double x1 = cx + rng.uniform(2.0, 8.0), y1 = cy + rng.uniform(2.0, 8.0);
    return Box{x1, y1, x1 + rng.uniform(30.0, 40.0), y1 + rng.uniform(30.0, 40.0)};
}

}  // namespace

void SyntheticSpec::validate() const {
    if (classes < 1 || classes > 20) throw ConfigError("synthetic classes must be in [1, 20]");
    if (images_per_class < 1) throw ConfigError("images_per_class must be >= 1");
    if (regions_per_image < 3 || regions_per_image > kGrid * kGrid)
        throw ConfigError(fmt::format("regions_per_image must be in [3, {}]", kGrid * kGrid));
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (!(easy_fraction >= 0 && easy_fraction <= 1)) throw ConfigError("easy_fraction must lie in [0,1]");
    if (!(noise >= 0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
    if (!(signal > 0) || !std::isfinite(signal)) throw ConfigError("signal must be > 0");
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const Rng root(spec.seed);
    const auto all_classes = voc_classes();
    std::vector<std::string> names(all_classes.begin(), all_classes.begin() + spec.classes);

    Rng class_rng = root.split("classes");
    std::vector<std::vector<double>> signature, context;
    for (std::uint32_t c = 0; c < spec.classes; ++c) {
        signature.push_back(random_direction(class_rng, spec.dim, spec.signal));
        context.push_back(random_direction(class_rng, spec.dim, spec.signal));
    }

    SyntheticData out{{}, FeatureBlob(0, spec.dim), {}, FeatureBlob(0, spec.dim), {}, names, {}, {}};
    std::vector<float> region_data, image_data;

    enum class Kind { web_inlier, web_outlier, target };
    auto emit = [&](ImageRecord rec, std::uint32_t cls, Kind kind, bool easy, std::uint64_t stream) {
        Rng rng = root.split("image").split(stream);
        for (std::uint32_t c = 0; c < spec.classes; ++c) rec.labels[names[c]] = c == cls ? 1 : -1;
        rec.difficulty = easy ? rng.uniform(0.02, 0.10) : rng.uniform(0.20, 0.40);
        rec.content_hash = fnv1a64(rec.id);
        rec.path = rec.id + ".pgm";

        const std::uint32_t count = easy ? 3 : spec.regions_per_image;
        std::vector<std::uint32_t> cells(kGrid * kGrid);
        std::iota(cells.begin(), cells.end(), 0u);
        rng.shuffle(std::span<std::uint32_t>(cells));

        const std::vector<double> junk =
            kind == Kind::web_outlier ? random_direction(rng, spec.dim, spec.signal) : std::vector<double>{};
        RegionSet rs{rec.id, {}, {}};
        std::vector<double> object(spec.dim, 0.0), background(spec.dim, 0.0);
        std::uint32_t sig_row = 0;
        for (std::uint32_t r = 0; r < count; ++r) {
            const Box box = cell_box(cells[r], rng);
            std::vector<double> f(spec.dim, 0.0);
            if (r == 0) {
                // Object region: signature for inliers, unrelated content for outliers.
                const double gain = easy ? 1.0 : kHardSignatureGain;
                for (std::uint32_t d = 0; d < spec.dim; ++d)
                    f[d] = kind == Kind::web_outlier ? junk[d] : gain * signature[cls][d];
                if (kind == Kind::target) out.ground_truth.push_back({rec.id, names[cls], box});
            } else if (!easy && r % 2 == 1) {
                f = context[cls];
            }
            for (std::uint32_t d = 0; d < spec.dim; ++d) f[d] += spec.noise * rng.normal();

            const auto row = std::uint32_t(region_data.size() / spec.dim);
            if (r == 0) sig_row = row;
            for (std::uint32_t d = 0; d < spec.dim; ++d) {
                region_data.push_back(static_cast<float>(f[d]));
                (r == 0 ? object : background)[d] += f[d];
            }
            rs.boxes.push_back(box);
            rs.feature_rows.push_back(row);
        }
        // Whole-image descriptor: the object region plus the mean background.
        for (std::uint32_t d = 0; d < spec.dim; ++d)
            image_data.push_back(static_cast<float>(object[d] + background[d] / double(count - 1)));
        out.regions.push_back(std::move(rs));
        out.records.push_back(std::move(rec));
        out.easy.push_back(easy);
        out.signature_rows.push_back(sig_row);
    };

    std::uint64_t stream = 0;
    for (std::uint32_t c = 0; c < spec.classes; ++c) {
        const std::uint32_t total = spec.web_per_class + spec.web_outliers_per_class;
        for (std::uint32_t i = 0; i < total; ++i) {
            const bool outlier = i >= spec.web_per_class;
            ImageRecord rec;
            rec.id = outlier ? fmt::format("web_{}_out_{:03}", names[c], i - spec.web_per_class)
                             : fmt::format("web_{}_{:03}", names[c], i);
            rec.source = Source::web;
            rec.split = Split::train;
            rec.origin = QueryOrigin{names[c], QueryKind::base, i + 1};
            emit(std::move(rec), c, outlier ? Kind::web_outlier : Kind::web_inlier, true, stream++);
        }
    }
    for (Split split : {Split::train, Split::test}) {
        const std::uint32_t per_class = split == Split::train ? spec.images_per_class : spec.test_images_per_class;
        for (std::uint32_t c = 0; c < spec.classes; ++c) {
            // Exactly round(easy_fraction * n) easy images per class, in a shuffled order.
            const auto n_easy = std::uint32_t(std::lround(spec.easy_fraction * per_class));
            std::vector<bool> easy(per_class, false);
            std::fill(easy.begin(), easy.begin() + n_easy, true);
            Rng mix = root.split("easy").split(std::uint64_t(split == Split::train ? 0 : 1) * 64 + c);
            std::vector<std::uint32_t> idx(per_class);
            std::iota(idx.begin(), idx.end(), 0u);
            mix.shuffle(std::span<std::uint32_t>(idx));
            for (std::uint32_t i = 0; i < per_class; ++i) {
                ImageRecord rec;
                rec.id = fmt::format("{}_{}_{:03}", to_string(split), names[c], i);
                rec.source = Source::target;
                rec.split = split;
                emit(std::move(rec), c, Kind::target, easy[idx[i]], stream++);
            }
        }
    }

    const auto count = [&](const std::vector<float>& v) { return std::uint32_t(v.size() / spec.dim); };
    const std::uint32_t region_count = count(region_data), image_count = count(image_data);
    out.region_features = FeatureBlob(region_count, spec.dim, std::move(region_data));
    out.image_features = FeatureBlob(image_count, spec.dim, std::move(image_data));
    return out;
}

SyntheticPaths synthetic_paths(const std::string& dir) {
    const std::filesystem::path base(dir);
    return SyntheticPaths{(base / "manifest.jsonl").string(), (base / "image_features.fvec").string(),
                          (base / "regions.jsonl").string(), (base / "region_features.fvec").string(),
                          (base / "groundtruth.jsonl").string()};
}

SyntheticPaths write_synthetic(const std::string& dir, const SyntheticData& data) {
    std::filesystem::create_directories(dir);
    const SyntheticPaths p = synthetic_paths(dir);
    write_manifest_file(p.manifest, data.records);
    write_feature_blob_file(p.image_features, data.image_features);
    write_regions_file(p.regions, data.regions);
    write_feature_blob_file(p.region_features, data.region_features);
    write_ground_truth_file(p.ground_truth, data.ground_truth);
    return p;
}

}  // namespace curricuweb
