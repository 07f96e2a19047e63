#include "curricuweb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "curricuweb/errors.hpp"
#include "jsonl.hpp"

namespace curricuweb {

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& da = detections[a];
        const auto& db = detections[b];
        if (da.score != db.score) return da.score > db.score;
        return da.box < db.box;
    });

    std::vector<Detection> kept;
    for (std::size_t i : order) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                            [&](const Detection& k) { return iou(k.box, detections[i].box) > iou_threshold; });
        if (!suppressed) kept.push_back(detections[i]);
    }
    return kept;
}

std::optional<PrCurve> average_precision(std::span<const Detection> detections,
                                         std::span<const GroundTruthBox> ground_truth, double iou_threshold) {
    if (ground_truth.empty()) return std::nullopt;
    for (const auto& d : detections)
        if (!std::isfinite(d.score)) throw DataError("detection score must be finite");

    std::map<std::string, std::vector<std::size_t>> gt_by_image;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) gt_by_image[ground_truth[g].image_id].push_back(g);
    std::vector<bool> matched(ground_truth.size(), false);

    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& da = detections[a];
        const auto& db = detections[b];
        if (da.score != db.score) return da.score > db.score;
        if (da.image_id != db.image_id) return da.image_id < db.image_id;
        return da.box < db.box;
    });

    PrCurve curve;
    std::size_t tp = 0, fp = 0;
    const double npos = double(ground_truth.size());
    for (std::size_t i : order) {
        const Detection& d = detections[i];
        std::optional<std::size_t> best;
        double best_iou = -1.0;
        if (auto it = gt_by_image.find(d.image_id); it != gt_by_image.end()) {
            for (std::size_t g : it->second) {
                if (matched[g]) continue;
                const double o = iou(d.box, ground_truth[g].box);
                if (o > best_iou) {
                    best_iou = o;
                    best = g;
                }
            }
        }
        if (best && best_iou >= iou_threshold) {
            matched[*best] = true;
            ++tp;
        } else {
            ++fp;
        }
        curve.precision.push_back(double(tp) / double(tp + fp));
        curve.recall.push_back(double(tp) / npos);
    }

    double sum = 0;
    for (int step = 0; step <= 10; ++step) {
        const double r = step / 10.0;
        double p = 0;
        for (std::size_t k = 0; k < curve.recall.size(); ++k)
            if (curve.recall[k] >= r) p = std::max(p, curve.precision[k]);
        sum += p;
    }
    curve.ap = sum / 11.0;
    return curve;
}

double mean_ap(const std::map<std::string, std::optional<PrCurve>>& per_class) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [cls, curve] : per_class) {
        if (!curve) continue;
        sum += curve->ap;
        ++n;
    }
    if (n == 0) throw EvaluationError("no class has ground truth; mAP undefined");
    return sum / double(n);
}

EvaluationReport evaluate(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truth,
                          double iou_threshold) {
    std::map<std::string, std::vector<Detection>> dets;
    std::map<std::string, std::vector<GroundTruthBox>> gts;
    std::set<std::string> classes;
    for (const auto& d : detections) {
        dets[d.cls].push_back(d);
        classes.insert(d.cls);
    }
    for (const auto& g : ground_truth) {
        gts[g.cls].push_back(g);
        classes.insert(g.cls);
    }

    EvaluationReport report;
    for (const auto& cls : classes) {
        auto curve = average_precision(dets[cls], gts[cls], iou_threshold);
        if (!curve) report.warnings.push_back("class '" + cls + "' has no ground truth; excluded from mAP");
        report.per_class.emplace(cls, std::move(curve));
    }
    report.map = mean_ap(report.per_class);
    return report;
}

void print_evaluation(std::ostream& out, const EvaluationReport& report) {
    out << fmt::format("{:<16} {:>8}\n", "class", "AP(%)");
    for (const auto& [cls, curve] : report.per_class)
        out << fmt::format("{:<16} {:>8}\n", cls, curve ? fmt::format("{:.1f}", 100.0 * curve->ap) : std::string("n/a"));
    out << fmt::format("{:<16} {:>8.1f}\n", "mean", 100.0 * report.map);
    for (const auto& [cls, curve] : report.per_class)
        if (curve) out << fmt::format("AP {} {:.6f}\n", cls, curve->ap);
    out << fmt::format("mAP {:.6f}\n", report.map);
}

std::vector<Detection> load_detections(std::istream& in) {
    std::vector<Detection> out;
    detail::for_each_json_line(in, [&](const detail::json& obj, std::size_t line_no) {
        Detection d;
        d.image_id = detail::require(obj, "image_id", line_no).get<std::string>();
        d.cls = detail::require(obj, "class", line_no).get<std::string>();
        d.box = detail::box_from_json(detail::require(obj, "box", line_no), line_no);
        d.score = detail::require(obj, "score", line_no).get<double>();
        if (!std::isfinite(d.score)) throw ParseError(line_no, "score must be finite");
        out.push_back(std::move(d));
    });
    return out;
}

std::vector<Detection> load_detections_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    return load_detections(f);
}

void write_detections(std::ostream& out, std::span<const Detection> detections) {
    for (const auto& d : detections) {
        detail::json obj;
        obj["image_id"] = d.image_id;
        obj["class"] = d.cls;
        obj["box"] = detail::box_to_json(d.box);
        obj["score"] = d.score;
        out << obj.dump() << '\n';
    }
}

void write_detections_file(const std::string& path, std::span<const Detection> detections) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path + "'");
    write_detections(f, detections);
}

}  // namespace curricuweb
