#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curricuweb/curriculum.hpp"
#include "curricuweb/dataset.hpp"

namespace curricuweb {

class Rng;

// Parameters of the two-stream head: one linear layer per stream, applied to
// each region feature. Gradients share this shape.
struct ModelWeights {
    Eigen::MatrixXd cls_weight;  // dim x C
    Eigen::VectorXd cls_bias;    // C
    Eigen::MatrixXd det_weight;  // dim x C
    Eigen::VectorXd det_bias;    // C

    static ModelWeights zeros(std::uint32_t dim, std::uint32_t classes);
    // Weights uniform in [-scale, scale], biases zero.
    static ModelWeights random(std::uint32_t dim, std::uint32_t classes, Rng& rng, double scale = 0.01);

    std::uint32_t dim() const { return std::uint32_t(cls_weight.rows()); }
    std::uint32_t classes() const { return std::uint32_t(cls_weight.cols()); }
    // Throws ShapeError / DataError on inconsistent shapes or non-finite entries.
    void validate() const;

    friend bool operator==(const ModelWeights& a, const ModelWeights& b);
};

// "WGT1", u32 dim, u32 C, then cls_weight, cls_bias, det_weight, det_bias as
// little-endian f32; weight matrices row-major (dim-major).
void write_weights(std::ostream& out, const ModelWeights& w);
ModelWeights read_weights(std::istream& in);
void write_weights_file(const std::string& path, const ModelWeights& w);
ModelWeights read_weights_file(const std::string& path);

struct DetectionOutput {
    Eigen::MatrixXd cls_softmax;  // R x C, rows sum to 1
    Eigen::MatrixXd det_softmax;  // R x C, columns sum to 1
    Eigen::MatrixXd per_region;   // elementwise product
    Eigen::VectorXd image_score;  // column sums, in [0,1]
};

// `regions` is R x D, one row per proposal.
DetectionOutput forward(const Eigen::MatrixXd& regions, const ModelWeights& weights);

// Binary log loss summed over classes, with the log argument clipped to [eps, 1].
// labels[c] must be +1 or -1.
double loss(const Eigen::VectorXd& image_score, const Eigen::VectorXd& labels, double epsilon_clip = 1e-12);

struct LossAndGradient {
    double loss = 0;
    ModelWeights gradient;
};

// Analytic gradient of loss(forward(regions, weights).image_score, labels).
LossAndGradient backward(const Eigen::MatrixXd& regions, const ModelWeights& weights, const Eigen::VectorXd& labels,
                         double epsilon_clip = 1e-12);

// +1/-1 vector in `classes` order; absent classes are -1.
Eigen::VectorXd label_vector(const ImageRecord& record, std::span<const std::string> classes);

// Gathers the feature rows of one image into an R x D matrix.
Eigen::MatrixXd gather_regions(const RegionSet& regions, const FeatureBlob& features);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::uint32_t epochs_per_stage = 10;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    double epsilon_clip = 1e-12;

    void validate() const;
};

struct TrainingData {
    std::span<const ImageRecord> records;
    const std::map<std::string, RegionSet>* regions = nullptr;  // by image id
    const FeatureBlob* features = nullptr;
    std::span<const std::string> classes;
};

struct TrainResult {
    ModelWeights weights;
    std::vector<std::size_t> stage_admitted;
    // Mean pre-update loss over the admitted images, per stage then epoch.
    std::vector<std::vector<double>> epoch_loss;
};

// Stages run in order. Each epoch shuffles the stage's admitted records with
// a generator split from the seed by (stage, epoch) and applies one SGD step
// per image. Records with gate 0 never touch the weights or the generator.
TrainResult train(const TrainingData& data, const CurriculumSchedule& schedule, const DifficultyRanking& ranking,
                  const TrainConfig& config);

std::map<std::string, RegionSet> index_regions(std::span<const RegionSet> regions);

}  // namespace curricuweb
