#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curricuweb/dataset.hpp"

namespace curricuweb {

// Relevance written for kNN membership. Finite so manifests stay valid;
// far outside any logit a softmax head produces.
inline constexpr double kMemberRelevance = 1e9;
inline constexpr double kNonMemberRelevance = -1e9;

// ---- semantic relevance ----

struct SelfTrainConfig {
    std::uint32_t seeds_per_label = 80;
    std::uint32_t seeds_per_attribute_query = 20;
    double confidence_add_threshold = 8.0;
    std::uint32_t max_iterations = 5;
    double learning_rate = 0.1;
    std::uint32_t epochs_per_iteration = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Seed {
    std::string image_id;
    std::string cls;
    friend bool operator==(const Seed&, const Seed&) = default;
};

struct SeedSelection {
    std::vector<Seed> seeds;
    std::vector<std::string> warnings;
};

// Takes the top-ranked records of every base query (seeds_per_label) and
// every attributed query (seeds_per_attribute_query). Queries are visited in
// order of first appearance; related-image records never seed. Each record
// is labelled with its single positive class; duplicates keep the first seed.
// `expected_queries` lists query texts that should have produced records;
// missing ones are reported as warnings.
SeedSelection select_seeds(std::span<const ImageRecord> web_records, const SelfTrainConfig& cfg,
                           std::span<const std::string> expected_queries = {});

// Linear softmax classifier over image features.
struct RelevanceClassifier {
    std::vector<std::string> classes;
    Eigen::MatrixXd weights;  // dim x C
    Eigen::VectorXd biases;   // C

    Eigen::VectorXd logits(std::span<const float> feature) const;
    friend bool operator==(const RelevanceClassifier& a, const RelevanceClassifier& b);
};

struct SelfTrainResult {
    RelevanceClassifier classifier;
    // Logit of each record's own (query) class under the final model.
    std::map<std::string, double> scores;
    std::uint32_t iterations = 0;           // classifier fits performed
    std::vector<std::size_t> pool_sizes;    // labelled pool size at each fit
    bool stabilized = false;                // stopped because nothing new was confident
};

// `features` row i belongs to web_records[i]. Refits from scratch on the
// growing pool each iteration; a record joins the pool when its query class
// is the arg-max and that logit reaches confidence_add_threshold.
SelfTrainResult self_train(const FeatureBlob& features, std::span<const ImageRecord> web_records,
                           std::span<const Seed> seeds, const SelfTrainConfig& cfg);

// ---- distribution relevance ----

struct PcaModel {
    Eigen::VectorXd mean;          // dim
    Eigen::MatrixXd components;    // dim x d, orthonormal columns
    Eigen::VectorXd variances;     // d eigenvalues, descending

    std::uint32_t dims() const { return std::uint32_t(components.cols()); }
    Eigen::MatrixXd project(const FeatureBlob& blob) const;  // count x d
};

// Sample covariance (n - 1 denominator). Components are the top-d
// eigenvectors, each signed so its largest-magnitude entry is positive.
PcaModel fit_pca(const FeatureBlob& blob, std::uint32_t d);

// For every single-label target image, the k nearest web images of the same
// class after L2 normalisation and PCA projection; ties by ascending id.
// `target_features` / `web_features` rows align with the record spans.
std::set<std::string> knn_relevance(std::span<const ImageRecord> target_records, const FeatureBlob& target_features,
                                    std::span<const ImageRecord> web_records, const FeatureBlob& web_features,
                                    const PcaModel& pca, std::uint32_t k);

// Writes semantic logits into the web records' relevance fields.
void apply_scores(std::span<ImageRecord> records, const std::map<std::string, double>& scores);
// Writes +/-kMemberRelevance by membership for web records.
void apply_membership(std::span<ImageRecord> records, const std::set<std::string>& members);

}  // namespace curricuweb
