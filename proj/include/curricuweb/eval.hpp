#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curricuweb/dataset.hpp"

namespace curricuweb {

struct Detection {
    std::string image_id;
    std::string cls;
    Box box;
    double score = 0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

double iou(const Box& a, const Box& b);

// Greedy suppression for one image and class. Candidates are visited by
// descending score, then ascending (x1, y1, x2, y2), then input order; a
// candidate is dropped when its IoU with a kept box exceeds the threshold.
std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold = 0.4);

struct PrCurve {
    std::vector<double> precision;  // one point per ranked detection
    std::vector<double> recall;
    double ap = 0;
};

// 11-point interpolated AP for one class. Detections are ranked by
// descending score (ties: image id, then box); each takes the unmatched
// ground truth in its image with the highest IoU when that IoU reaches
// `iou_threshold`. Returns nullopt when the class has no ground truth.
std::optional<PrCurve> average_precision(std::span<const Detection> detections,
                                         std::span<const GroundTruthBox> ground_truth, double iou_threshold = 0.5);

// Unweighted mean over the classes with a defined AP; EvaluationError if none.
double mean_ap(const std::map<std::string, std::optional<PrCurve>>& per_class);

struct EvaluationReport {
    std::map<std::string, std::optional<PrCurve>> per_class;
    double map = 0;
    std::vector<std::string> warnings;
};

// Groups by class over the union of detection and ground-truth classes.
EvaluationReport evaluate(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truth,
                          double iou_threshold = 0.5);

// Fixed-width table followed by "AP <class> <value>" and "mAP <value>" lines.
void print_evaluation(std::ostream& out, const EvaluationReport& report);

std::vector<Detection> load_detections(std::istream& in);
std::vector<Detection> load_detections_file(const std::string& path);
void write_detections(std::ostream& out, std::span<const Detection> detections);
void write_detections_file(const std::string& path, std::span<const Detection> detections);

}  // namespace curricuweb
