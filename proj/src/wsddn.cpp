#include "curricuweb/wsddn.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>

#include "curricuweb/errors.hpp"
#include "curricuweb/rng.hpp"

namespace curricuweb {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Φ may exceed [0,1] by rounding in the column sums.
constexpr double kScoreSlack = 1e-9;

}  // namespace

ModelWeights ModelWeights::zeros(std::uint32_t dim, std::uint32_t classes) {
    if (dim < 1 || classes < 1) throw ShapeError("model needs dim >= 1 and classes >= 1");
    return ModelWeights{Eigen::MatrixXd::Zero(dim, classes), Eigen::VectorXd::Zero(classes),
                        Eigen::MatrixXd::Zero(dim, classes), Eigen::VectorXd::Zero(classes)};
}

ModelWeights ModelWeights::random(std::uint32_t dim, std::uint32_t classes, Rng& rng, double scale) {
    ModelWeights w = zeros(dim, classes);
    for (Eigen::Index d = 0; d < w.cls_weight.rows(); ++d)
        for (Eigen::Index c = 0; c < w.cls_weight.cols(); ++c) w.cls_weight(d, c) = rng.uniform(-scale, scale);
    for (Eigen::Index d = 0; d < w.det_weight.rows(); ++d)
        for (Eigen::Index c = 0; c < w.det_weight.cols(); ++c) w.det_weight(d, c) = rng.uniform(-scale, scale);
    return w;
}

void ModelWeights::validate() const {
    const auto D = cls_weight.rows(), C = cls_weight.cols();
    if (D < 1 || C < 1) throw ShapeError("model needs dim >= 1 and classes >= 1");
    if (cls_bias.size() != C || det_weight.rows() != D || det_weight.cols() != C || det_bias.size() != C)
        throw ShapeError("inconsistent weight shapes");
    if (!all_finite(cls_weight) || !cls_bias.allFinite() || !all_finite(det_weight) || !det_bias.allFinite())
        throw DataError("weights contain non-finite entries");
}

bool operator==(const ModelWeights& a, const ModelWeights& b) {
    auto same = [](const auto& x, const auto& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
    };
    return same(a.cls_weight, b.cls_weight) && same(a.cls_bias, b.cls_bias) && same(a.det_weight, b.det_weight) &&
           same(a.det_bias, b.det_bias);
}

// ---- serialization ----

namespace {

constexpr std::array<char, 4> kWeightsMagic{'W', 'G', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated weights file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

double get_f32(std::istream& in) {
    const float v = std::bit_cast<float>(get_u32(in));
    if (!std::isfinite(v)) throw FormatError("non-finite value in weights file");
    return v;
}

}  // namespace

void write_weights(std::ostream& out, const ModelWeights& w) {
    w.validate();
    out.write(kWeightsMagic.data(), 4);
    put_u32(out, w.dim());
    put_u32(out, w.classes());
    for (Eigen::Index d = 0; d < w.cls_weight.rows(); ++d)
        for (Eigen::Index c = 0; c < w.cls_weight.cols(); ++c) put_f32(out, w.cls_weight(d, c));
    for (Eigen::Index c = 0; c < w.cls_bias.size(); ++c) put_f32(out, w.cls_bias(c));
    for (Eigen::Index d = 0; d < w.det_weight.rows(); ++d)
        for (Eigen::Index c = 0; c < w.det_weight.cols(); ++c) put_f32(out, w.det_weight(d, c));
    for (Eigen::Index c = 0; c < w.det_bias.size(); ++c) put_f32(out, w.det_bias(c));
}

ModelWeights read_weights(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4)) throw FormatError("truncated weights header");
    if (magic != kWeightsMagic) throw FormatError("bad magic, expected WGT1");
    const std::uint32_t dim = get_u32(in);
    const std::uint32_t classes = get_u32(in);
    ModelWeights w = ModelWeights::zeros(dim, classes);
    for (Eigen::Index d = 0; d < w.cls_weight.rows(); ++d)
        for (Eigen::Index c = 0; c < w.cls_weight.cols(); ++c) w.cls_weight(d, c) = get_f32(in);
    for (Eigen::Index c = 0; c < w.cls_bias.size(); ++c) w.cls_bias(c) = get_f32(in);
    for (Eigen::Index d = 0; d < w.det_weight.rows(); ++d)
        for (Eigen::Index c = 0; c < w.det_weight.cols(); ++c) w.det_weight(d, c) = get_f32(in);
    for (Eigen::Index c = 0; c < w.det_bias.size(); ++c) w.det_bias(c) = get_f32(in);
    return w;
}

void write_weights_file(const std::string& path, const ModelWeights& w) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path + "'");
    write_weights(f, w);
}

ModelWeights read_weights_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    return read_weights(f);
}

// ---- forward / loss / backward ----

DetectionOutput forward(const Eigen::MatrixXd& regions, const ModelWeights& weights) {
    if (regions.rows() < 1) throw ShapeError("forward needs at least one region");
    if (regions.cols() != weights.cls_weight.rows())
        throw ShapeError("region features have dim " + std::to_string(regions.cols()) + ", model expects " +
                         std::to_string(weights.cls_weight.rows()));
    if (!regions.allFinite()) throw DataError("region features contain non-finite values");

    DetectionOutput out;
    Eigen::MatrixXd cls = regions * weights.cls_weight;
    cls.rowwise() += weights.cls_bias.transpose();
    Eigen::MatrixXd det = regions * weights.det_weight;
    det.rowwise() += weights.det_bias.transpose();

    // Classification stream: softmax over classes for each region.
    for (Eigen::Index r = 0; r < cls.rows(); ++r) {
        const double m = cls.row(r).maxCoeff();
        cls.row(r) = (cls.row(r).array() - m).exp();
        cls.row(r) /= cls.row(r).sum();
    }
    // Localization stream: softmax over regions for each class.
    for (Eigen::Index c = 0; c < det.cols(); ++c) {
        const double m = det.col(c).maxCoeff();
        det.col(c) = (det.col(c).array() - m).exp();
        det.col(c) /= det.col(c).sum();
    }

    out.per_region = cls.cwiseProduct(det);
    // Summation rounding can overshoot 1 by an ulp.
    out.image_score = out.per_region.colwise().sum().transpose().cwiseMin(1.0);
    out.cls_softmax = std::move(cls);
    out.det_softmax = std::move(det);
    return out;
}

namespace {

void check_labels(const Eigen::VectorXd& labels, Eigen::Index classes) {
    if (labels.size() != classes)
        throw ShapeError("label vector has " + std::to_string(labels.size()) + " entries, expected " +
                         std::to_string(classes));
    for (Eigen::Index c = 0; c < labels.size(); ++c)
        if (labels(c) != 1.0 && labels(c) != -1.0) throw DomainError("labels must be +1 or -1");
}

// y(Φ - 1/2) + 1/2, written so the saturated cases are exact.
double log_argument(double phi, double y) { return y > 0 ? phi : 1.0 - phi; }

double checked_score(double phi) {
    if (!(phi >= -kScoreSlack && phi <= 1.0 + kScoreSlack))
        throw DomainError("image score " + std::to_string(phi) + " outside [0,1]");
    return std::clamp(phi, 0.0, 1.0);
}

}  // namespace

double loss(const Eigen::VectorXd& image_score, const Eigen::VectorXd& labels, double epsilon_clip) {
    check_labels(labels, image_score.size());
    double total = 0.0;
    for (Eigen::Index c = 0; c < image_score.size(); ++c) {
        const double arg = log_argument(checked_score(image_score(c)), labels(c));
        total += -std::log(std::clamp(arg, epsilon_clip, 1.0));
    }
    return total + 0.0;
}

LossAndGradient backward(const Eigen::MatrixXd& regions, const ModelWeights& weights, const Eigen::VectorXd& labels,
                         double epsilon_clip) {
    const DetectionOutput fw = forward(regions, weights);
    const Eigen::Index R = regions.rows(), C = weights.cls_weight.cols();
    check_labels(labels, C);

    LossAndGradient out;
    // dL/dΦ_c; zero where the clip is active.
    Eigen::RowVectorXd d_score(C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const double arg = log_argument(checked_score(fw.image_score(c)), labels(c));
        out.loss += -std::log(std::clamp(arg, epsilon_clip, 1.0));
        d_score(c) = arg > epsilon_clip ? -labels(c) / arg : 0.0;
    }
    out.loss += 0.0;

    const Eigen::MatrixXd& A = fw.cls_softmax;
    const Eigen::MatrixXd& B = fw.det_softmax;
    const Eigen::MatrixXd grad_a = B.array().rowwise() * d_score.array();
    const Eigen::MatrixXd grad_b = A.array().rowwise() * d_score.array();

    Eigen::MatrixXd d_cls(R, C), d_det(R, C);
    for (Eigen::Index r = 0; r < R; ++r) {
        const double inner = A.row(r).dot(grad_a.row(r));
        d_cls.row(r) = A.row(r).array() * (grad_a.row(r).array() - inner);
    }
    for (Eigen::Index c = 0; c < C; ++c) {
        const double inner = B.col(c).dot(grad_b.col(c));
        d_det.col(c) = B.col(c).array() * (grad_b.col(c).array() - inner);
    }

    out.gradient.cls_weight = regions.transpose() * d_cls;
    out.gradient.cls_bias = d_cls.colwise().sum().transpose();
    out.gradient.det_weight = regions.transpose() * d_det;
    out.gradient.det_bias = d_det.colwise().sum().transpose();
    return out;
}

Eigen::VectorXd label_vector(const ImageRecord& record, std::span<const std::string> classes) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(classes.size()));
    for (std::size_t c = 0; c < classes.size(); ++c) y(Eigen::Index(c)) = record.label(classes[c]) > 0 ? 1.0 : -1.0;
    return y;
}

Eigen::MatrixXd gather_regions(const RegionSet& regions, const FeatureBlob& features) {
    if (regions.feature_rows.empty()) throw DataError("image '" + regions.image_id + "' has no regions");
    Eigen::MatrixXd x(Eigen::Index(regions.feature_rows.size()), Eigen::Index(features.dim()));
    for (std::size_t r = 0; r < regions.feature_rows.size(); ++r) {
        const auto row_index = regions.feature_rows[r];
        if (row_index >= features.count())
            throw DataError("image '" + regions.image_id + "' references feature row " + std::to_string(row_index) +
                            " past the blob end");
        const auto row = features.row(row_index);
        for (std::size_t d = 0; d < row.size(); ++d) x(Eigen::Index(r), Eigen::Index(d)) = row[d];
    }
    return x;
}

std::map<std::string, RegionSet> index_regions(std::span<const RegionSet> regions) {
    std::map<std::string, RegionSet> out;
    for (const auto& rs : regions)
        if (!out.emplace(rs.image_id, rs).second)
            throw IntegrityError("duplicate regions for image '" + rs.image_id + "'");
    return out;
}

// ---- training ----

void TrainConfig::validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (epochs_per_stage < 1) throw ConfigError("epochs_per_stage must be >= 1");
    if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
    if (!(epsilon_clip > 0 && epsilon_clip <= 1e-3)) throw ConfigError("epsilon_clip must lie in (0, 1e-3]");
}

TrainResult train(const TrainingData& data, const CurriculumSchedule& schedule, const DifficultyRanking& ranking,
                  const TrainConfig& config) {
    config.validate();
    schedule.validate();
    if (data.regions == nullptr || data.features == nullptr) throw ConfigError("training data is incomplete");
    if (data.classes.empty()) throw ConfigError("training needs at least one class");

    const Rng root(config.seed);
    Rng init = root.split("init");
    TrainResult result{ModelWeights::random(data.features->dim(), std::uint32_t(data.classes.size()), init), {}, {}};
    ModelWeights& w = result.weights;

    // Region matrices and labels are built on first admission.
    std::map<std::size_t, std::pair<Eigen::MatrixXd, Eigen::VectorXd>> cache;
    auto inputs = [&](std::size_t i) -> const std::pair<Eigen::MatrixXd, Eigen::VectorXd>& {
        auto it = cache.find(i);
        if (it != cache.end()) return it->second;
        const ImageRecord& rec = data.records[i];
        auto rs = data.regions->find(rec.id);
        if (rs == data.regions->end()) throw DataError("record '" + rec.id + "' has no regions");
        return cache.emplace(i, std::pair{gather_regions(rs->second, *data.features), label_vector(rec, data.classes)})
            .first->second;
    };

    const Rng shuffles = root.split("shuffle");
    for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
        std::vector<std::size_t> admitted;
        for (std::size_t i = 0; i < data.records.size(); ++i)
            if (gate(data.records[i], schedule.stages[s], ranking) == 1) admitted.push_back(i);
        if (admitted.empty()) throw ScheduleError("stage " + std::to_string(s + 1) + " empty");
        result.stage_admitted.push_back(admitted.size());

        auto& losses = result.epoch_loss.emplace_back();
        const Rng stage_rng = shuffles.split(std::uint64_t(s));
        for (std::uint32_t e = 0; e < config.epochs_per_stage; ++e) {
            std::vector<std::size_t> order = admitted;
            Rng epoch_rng = stage_rng.split(std::uint64_t(e));
            epoch_rng.shuffle(std::span<std::size_t>(order));

            double total = 0;
            for (std::size_t i : order) {
                const auto& [x, y] = inputs(i);
                const LossAndGradient lg = backward(x, w, y, config.epsilon_clip);
                total += lg.loss;
                const double lr = config.learning_rate, wd = config.weight_decay;
                w.cls_weight -= lr * (lg.gradient.cls_weight + wd * w.cls_weight);
                w.cls_bias -= lr * lg.gradient.cls_bias;
                w.det_weight -= lr * (lg.gradient.det_weight + wd * w.det_weight);
                w.det_bias -= lr * lg.gradient.det_bias;
            }
            losses.push_back(total / double(order.size()));
        }
    }
    w.validate();
    return result;
}

}  // namespace curricuweb
