#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curricuweb/dataset.hpp"

namespace curricuweb {

// Desk-scale stand-in for a web + target detection dataset.
//
// Every class c owns a signature vector s_c and a context vector k_c (both
// of norm `signal`). A positive image holds exactly one region carrying s_c;
// its box is the ground truth. Easy images have that region plus two plain
// noise regions. Hard images weaken the signature region and surround it
// with regions_per_image - 1 distractors, half of which carry the class
// context k_c, so a detector that keys on co-occurring background fires on
// the wrong box. Web images are always easy; web outliers are labelled with
// a class but show unrelated content and sit at the bottom of their query's
// ranking. Target train/test images are easy with probability easy_fraction.
struct SyntheticSpec {
    std::uint32_t classes = 2;
    std::uint32_t images_per_class = 10;       // target train images per class
    std::uint32_t test_images_per_class = 5;   // held-out target images per class
    std::uint32_t web_per_class = 0;           // easy web inliers per class
    std::uint32_t web_outliers_per_class = 0;
    std::uint32_t regions_per_image = 8;
    std::uint32_t dim = 8;
    double easy_fraction = 0.5;
    double noise = 1.0;
    double signal = 4.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticData {
    std::vector<ImageRecord> records;  // web train, target train, target test
    FeatureBlob image_features;        // one row per record, same order
    std::vector<RegionSet> regions;
    FeatureBlob region_features;
    std::vector<GroundTruthBox> ground_truth;  // every target image
    std::vector<std::string> class_names;
    // Per record: true when generated easy (single dominant region).
    std::vector<bool> easy;
    // Row in region_features of each record's signature region.
    std::vector<std::uint32_t> signature_rows;
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

struct SyntheticPaths {
    std::string manifest;
    std::string image_features;
    std::string regions;
    std::string region_features;
    std::string ground_truth;
};

// File names used when a synthetic dataset is written into `dir`.
SyntheticPaths synthetic_paths(const std::string& dir);
SyntheticPaths write_synthetic(const std::string& dir, const SyntheticData& data);

}  // namespace curricuweb
