#include "curricuweb/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "curricuweb/errors.hpp"
#include "curricuweb/parallel.hpp"

namespace curricuweb {

std::string_view to_string(RelevanceMode m) {
    switch (m) {
    case RelevanceMode::manifest: return "manifest";
    case RelevanceMode::semantic: return "semantic";
    case RelevanceMode::knn: return "knn";
    }
    return "manifest";
}

RelevanceMode parse_relevance_mode(std::string_view s) {
    if (s == "manifest") return RelevanceMode::manifest;
    if (s == "semantic") return RelevanceMode::semantic;
    if (s == "knn") return RelevanceMode::knn;
    throw ConfigError("unknown relevance mode '" + std::string(s) + "'");
}

namespace {

std::string num(double v) { return fmt::format("{:.9g}", v); }

// Runs fn, prefixing any library error with the stage name.
template <typename Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const TransportError& e) {
        throw TransportError(std::string(name) + ": " + e.what(), e.retryable());
    } catch (const Error& e) {
        if (e.family() == ErrorFamily::config) throw ConfigError(std::string(name) + ": " + e.what());
        throw DataError(std::string(name) + ": " + e.what());
    }
}

FeatureBlob select_rows(const FeatureBlob& blob, const std::vector<std::size_t>& rows) {
    std::vector<float> data;
    data.reserve(rows.size() * blob.dim());
    for (std::size_t r : rows) {
        const auto row = blob.row(r);
        data.insert(data.end(), row.begin(), row.end());
    }
    return FeatureBlob(std::uint32_t(rows.size()), blob.dim(), std::move(data));
}

template <typename T>
std::vector<T> pick(std::span<const T> items, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(items[i]);
    return out;
}

void score_relevance(const PipelineConfig& cfg, std::vector<ImageRecord>& records, RunReport& report) {
    const FeatureBlob features = read_feature_blob_file(cfg.image_features);
    if (features.count() != records.size())
        throw ConfigError(fmt::format("image features have {} rows for {} manifest records", features.count(),
                                      records.size()));

    std::vector<std::size_t> web_idx, target_idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split != Split::train) continue;
        (records[i].source == Source::web ? web_idx : target_idx).push_back(i);
    }
    const auto web = pick<ImageRecord>(records, web_idx);
    const FeatureBlob web_features = select_rows(features, web_idx);

    if (cfg.relevance_mode == RelevanceMode::semantic) {
        const SeedSelection seeds = select_seeds(web, cfg.self_train);
        for (const auto& w : seeds.warnings) report.warnings.push_back(w);
        const SelfTrainResult st = self_train(web_features, web, seeds.seeds, cfg.self_train);
        apply_scores(records, st.scores);
        report.config.emplace_back("self_train_iterations", std::to_string(st.iterations));
    } else {
        const auto targets = pick<ImageRecord>(records, target_idx);
        const FeatureBlob target_features = select_rows(features, target_idx);
        std::vector<std::size_t> all_idx = web_idx;
        all_idx.insert(all_idx.end(), target_idx.begin(), target_idx.end());
        const PcaModel pca = fit_pca(l2_normalize(select_rows(features, all_idx)), cfg.pca_dim);
        apply_membership(records, knn_relevance(targets, target_features, web, web_features, pca, cfg.knn_k));
    }
}

void score_difficulty(const PipelineConfig& cfg, std::vector<ImageRecord>& records) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].source == Source::target && records[i].split == Split::train && !records[i].difficulty)
            todo.push_back(i);
    std::vector<double> scores(todo.size());
    parallel_for(todo.size(), [&](std::size_t k) {
        GrayImage img = read_pgm(records[todo[k]].path);
        if (cfg.resize_longer_side > 0) img = resize_longer_side(img, cfg.resize_longer_side);
        scores[k] = mean_edge_strength(img, cfg.edge);
    });
    for (std::size_t k = 0; k < todo.size(); ++k) records[todo[k]].difficulty = scores[k];
}

}  // namespace

std::vector<Detection> detect_image(const ImageRecord& record, const RegionSet& regions, const FeatureBlob& features,
                                    const ModelWeights& weights, std::span<const std::string> classes,
                                    double nms_threshold) {
    const DetectionOutput out = forward(gather_regions(regions, features), weights);
    std::vector<Detection> dets;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<Detection> per_class;
        for (std::size_t r = 0; r < regions.boxes.size(); ++r)
            per_class.push_back({record.id, classes[c], regions.boxes[r], out.per_region(Eigen::Index(r), Eigen::Index(c))});
        auto kept = nms(per_class, nms_threshold);
        dets.insert(dets.end(), kept.begin(), kept.end());
    }
    return dets;
}

std::string format_report(const RunReport& report) {
    std::ostringstream out;
    out << "variant " << report.variant << '\n';
    out << "seed " << report.seed << '\n';
    for (const auto& [k, v] : report.config) out << "config " << k << ' ' << v << '\n';
    out << "stages " << report.stage_admitted.size() << '\n';
    for (std::size_t s = 0; s < report.stage_admitted.size(); ++s)
        out << "stage " << s + 1 << " admitted " << report.stage_admitted[s] << '\n';
    for (std::size_t s = 0; s < report.epoch_loss.size(); ++s)
        for (std::size_t e = 0; e < report.epoch_loss[s].size(); ++e)
            out << "loss " << s + 1 << ' ' << e + 1 << ' ' << num(report.epoch_loss[s][e]) << '\n';
    for (const auto& [cls, ap] : report.ap) out << "AP " << cls << ' ' << (ap ? num(*ap) : "absent") << '\n';
    out << "mAP " << num(report.map) << '\n';
    for (const auto& w : report.warnings) out << "warning " << w << '\n';

    out << '\n' << "== " << report.variant << " (seed " << report.seed << ") ==\n";
    for (std::size_t s = 0; s < report.stage_admitted.size(); ++s) {
        const auto& losses = report.epoch_loss[s];
        out << fmt::format("  stage {:>2}: {:>5} images, loss {} -> {}\n", s + 1, report.stage_admitted[s],
                           losses.empty() ? "-" : fmt::format("{:.4f}", losses.front()),
                           losses.empty() ? "-" : fmt::format("{:.4f}", losses.back()));
    }
    for (const auto& [cls, ap] : report.ap)
        out << fmt::format("  {:<14} AP {}\n", cls, ap ? fmt::format("{:5.1f}%", 100.0 * *ap) : std::string("  n/a"));
    out << fmt::format("  {:<14} mAP {:5.1f}%\n", "mean", 100.0 * report.map);
    return out.str();
}

RunReport run_pipeline(const PipelineConfig& cfg) {
    RunReport report;
    report.variant = std::string(to_string(cfg.variant));
    report.seed = cfg.train.seed;
    report.config = {
        {"learning_rate", num(cfg.train.learning_rate)},
        {"epochs_per_stage", std::to_string(cfg.train.epochs_per_stage)},
        {"weight_decay", num(cfg.train.weight_decay)},
        {"epsilon_clip", num(cfg.train.epsilon_clip)},
        {"num_regions", std::to_string(cfg.num_regions)},
        {"edge_sigma", num(cfg.edge.sigma)},
        {"edge_radius", std::to_string(cfg.edge.kernel_radius)},
        {"edge_zc_threshold", num(cfg.edge.zc_threshold)},
        {"relevance_mode", std::string(to_string(cfg.relevance_mode))},
        {"relevance_threshold", num(cfg.relevance_threshold)},
        {"knn_k", std::to_string(cfg.knn_k)},
        {"pca_dim", std::to_string(cfg.pca_dim)},
        {"nms_threshold", num(cfg.nms_threshold)},
        {"eval_iou", num(cfg.eval_iou)},
    };

    stage("config", [&] {
        cfg.train.validate();
        if (cfg.output_dir.empty()) throw ConfigError("output directory is required");
        for (const auto* p : {&cfg.manifest, &cfg.regions, &cfg.region_features, &cfg.ground_truth})
            if (p->empty() || !std::filesystem::exists(*p)) throw ConfigError("input '" + *p + "' does not exist");
        return 0;
    });

    auto records = stage("load", [&] { return load_manifest_file(cfg.manifest); });
    const auto region_list = stage("load", [&] { return load_regions_file(cfg.regions); });
    const auto region_features = stage("load", [&] { return read_feature_blob_file(cfg.region_features); });
    const auto ground_truth = stage("load", [&] { return load_ground_truth_file(cfg.ground_truth); });
    const auto regions = stage("load", [&] {
        check_region_rows(region_list, region_features);
        return index_regions(region_list);
    });

    const CurriculumSchedule schedule =
        stage("schedule", [&] { return make_schedule(cfg.variant, cfg.relevance_threshold, cfg.num_regions); });
    const bool needs_relevance = std::any_of(schedule.stages.begin(), schedule.stages.end(),
                                             [](const Stage& s) { return s.admit_web && s.relevance_threshold; });
    const bool needs_difficulty = std::any_of(schedule.stages.begin(), schedule.stages.end(),
                                              [](const Stage& s) { return s.difficulty_region.has_value(); });

    if (needs_relevance && cfg.relevance_mode != RelevanceMode::manifest)
        stage("relevance", [&] {
            score_relevance(cfg, records, report);
            return 0;
        });

    const DifficultyRanking ranking = stage("difficulty", [&] {
        if (!needs_difficulty) return DifficultyRanking{};
        score_difficulty(cfg, records);
        std::vector<ImageRecord> targets;
        for (const auto& r : records)
            if (r.source == Source::target && r.split == Split::train) targets.push_back(r);
        return rank_by_difficulty(targets);
    });

    const std::vector<std::string> classes = collect_classes(records);
    const TrainResult trained = stage("train", [&] {
        TrainingData data{records, &regions, &region_features, classes};
        return train(data, schedule, ranking, cfg.train);
    });
    report.stage_admitted = trained.stage_admitted;
    report.epoch_loss = trained.epoch_loss;

    std::vector<Detection> detections;
    const EvaluationReport eval = stage("evaluate", [&] {
        std::vector<std::size_t> test_idx;
        std::set<std::string> test_ids;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].split == Split::test) {
                test_idx.push_back(i);
                test_ids.insert(records[i].id);
            }
        if (test_idx.empty()) throw EvaluationError("manifest has no test-split records");

        std::vector<std::vector<Detection>> per_image(test_idx.size());
        parallel_for(test_idx.size(), [&](std::size_t k) {
            const ImageRecord& rec = records[test_idx[k]];
            auto it = regions.find(rec.id);
            if (it == regions.end()) throw DataError("test record '" + rec.id + "' has no regions");
            per_image[k] = detect_image(rec, it->second, region_features, trained.weights, classes, cfg.nms_threshold);
        });
        for (auto& d : per_image) detections.insert(detections.end(), d.begin(), d.end());

        std::vector<GroundTruthBox> gt;
        for (const auto& g : ground_truth)
            if (test_ids.contains(g.image_id)) gt.push_back(g);
        return evaluate(detections, gt, cfg.eval_iou);
    });
    for (const auto& [cls, curve] : eval.per_class)
        report.ap.emplace(cls, curve ? std::optional<double>(curve->ap) : std::nullopt);
    report.map = eval.map;
    for (const auto& w : eval.warnings) report.warnings.push_back(w);

    stage("write", [&] {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.output_dir);
        const fs::path out(cfg.output_dir);
        write_weights_file((out / "weights.wgt").string(), trained.weights);
        write_detections_file((out / "detections.jsonl").string(), detections);
        write_manifest_file((out / "scored_manifest.jsonl").string(), records);
        std::ofstream f(out / "report.txt", std::ios::trunc);
        if (!f) throw DataError("cannot write report");
        f << format_report(report);
        return 0;
    });
    return report;
}

}  // namespace curricuweb
