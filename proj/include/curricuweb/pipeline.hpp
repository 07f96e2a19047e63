#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "curricuweb/curriculum.hpp"
#include "curricuweb/eval.hpp"
#include "curricuweb/relevance.hpp"
#include "curricuweb/wsddn.hpp"

namespace curricuweb {

enum class RelevanceMode {
    manifest,  // use relevance values already in the manifest
    semantic,  // self-trained web-to-web classifier logits
    knn,       // nearest-neighbour membership
};

std::string_view to_string(RelevanceMode m);
RelevanceMode parse_relevance_mode(std::string_view s);

struct PipelineConfig {
    Variant variant = Variant::wsddn;

    std::string manifest;
    std::string image_features;   // one row per manifest record; needed for semantic/knn
    std::string regions;
    std::string region_features;
    std::string ground_truth;
    std::string output_dir;

    TrainConfig train;
    EdgeConfig edge;
    std::uint32_t num_regions = 5;
    std::uint32_t resize_longer_side = 600;  // 0 keeps images at native size

    RelevanceMode relevance_mode = RelevanceMode::semantic;
    double relevance_threshold = 8.0;
    std::uint32_t knn_k = 10;
    std::uint32_t pca_dim = 64;
    SelfTrainConfig self_train;

    double nms_threshold = 0.4;
    double eval_iou = 0.5;
};

struct RunReport {
    std::string variant;
    std::uint64_t seed = 0;
    std::vector<std::size_t> stage_admitted;
    std::vector<std::vector<double>> epoch_loss;
    std::map<std::string, std::optional<double>> ap;
    double map = 0;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::string> warnings;
};

// Key-value lines followed by a human-readable summary. Stable byte output.
std::string format_report(const RunReport& report);

// Detections of one image: every region scored for every class, then
// per-class NMS.
std::vector<Detection> detect_image(const ImageRecord& record, const RegionSet& regions, const FeatureBlob& features,
                                    const ModelWeights& weights, std::span<const std::string> classes,
                                    double nms_threshold);

// Relevance scoring, difficulty scoring, schedule, gated training and
// evaluation. Writes weights.wgt, detections.jsonl, scored_manifest.jsonl
// and report.txt into output_dir. Errors are rethrown prefixed with the
// failing stage name.
RunReport run_pipeline(const PipelineConfig& config);

}  // namespace curricuweb
