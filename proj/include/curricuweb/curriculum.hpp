#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "curricuweb/dataset.hpp"

namespace curricuweb {

// ---- difficulty scoring ----

class GrayImage {
public:
    GrayImage(std::uint32_t width, std::uint32_t height, std::vector<double> pixels);

    std::uint32_t width() const { return width_; }
    std::uint32_t height() const { return height_; }
    double at(std::uint32_t x, std::uint32_t y) const { return pixels_[std::size_t(y) * width_ + x]; }
    std::span<const double> pixels() const { return pixels_; }

private:
    std::uint32_t width_;
    std::uint32_t height_;
    std::vector<double> pixels_;
};

// Reads binary (P5) or ASCII (P2) PGM, scaling intensities by maxval into [0,1].
GrayImage read_pgm(const std::string& path);

// Bilinear resize so the longer side equals `longer_side`; aspect ratio kept.
GrayImage resize_longer_side(const GrayImage& img, std::uint32_t longer_side);

struct EdgeConfig {
    double sigma = 2.0;
    std::uint32_t kernel_radius = 4;
    double zc_threshold = 0.01;
};

// Marks LoG zero-crossings: pixel p is an edge when some 4-neighbour q has a
// response of strictly opposite sign and |resp(p) - resp(q)| > zc_threshold.
// Only pixels where the whole kernel fits carry a response; the rest are never edges.
// Responses within 1e-12 of zero count as zero.
// Returns one byte per pixel, row-major.
std::vector<std::uint8_t> edge_map(const GrayImage& img, const EdgeConfig& cfg = {});

// Fraction of edge pixels over all pixels.
double mean_edge_strength(const GrayImage& img, const EdgeConfig& cfg = {});

// ---- ranking and regions ----

class DifficultyRanking {
public:
    struct Entry {
        std::string image_id;
        double difficulty;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    std::vector<std::string> classes() const;
    // Ascending difficulty, ties by ascending id. Empty for unknown classes.
    std::span<const Entry> list(const std::string& cls) const;
    // 0-based position of id in the class list.
    std::optional<std::size_t> position(const std::string& cls, const std::string& id) const;
    std::size_t size(const std::string& cls) const { return list(cls).size(); }

private:
    friend DifficultyRanking rank_by_difficulty(std::span<const ImageRecord> records);

    std::map<std::string, std::vector<Entry>> lists_;
    std::map<std::string, std::unordered_map<std::string, std::size_t>> positions_;
};

// Records enter the list of every class they are labelled +1 for.
DifficultyRanking rank_by_difficulty(std::span<const ImageRecord> records);

// Number of easiest images of a class with n images admitted by region t of
// num_regions (1-based): ceil(t * n / num_regions).
std::size_t region_quota(std::size_t n, std::uint32_t t, std::uint32_t num_regions);

// Per region (index 0 is region 1): class -> admitted count.
std::vector<std::map<std::string, std::size_t>> build_regions(const DifficultyRanking& ranking,
                                                              std::uint32_t num_regions = 5);

// ---- schedules ----

struct RegionGate {
    std::uint32_t region = 1;       // 1-based
    std::uint32_t num_regions = 1;

    double fraction() const { return double(region) / double(num_regions); }
    friend bool operator==(const RegionGate&, const RegionGate&) = default;
};

// One training stage. The relevance gate applies to web records, the
// difficulty gate to target records.
struct Stage {
    bool admit_web = false;
    bool admit_target = false;
    std::optional<double> relevance_threshold;
    std::optional<RegionGate> difficulty_region;

    friend bool operator==(const Stage&, const Stage&) = default;
};

struct CurriculumSchedule {
    std::vector<Stage> stages;

    // Throws ConfigError on an empty schedule, non-nested target regions or a
    // non-finite threshold.
    void validate() const;
    friend bool operator==(const CurriculumSchedule&, const CurriculumSchedule&) = default;
};

enum class Variant { wsddn, curr_wsddn, web_rel, web_eth, web_rel_eth, web_rel_etc };

std::string_view to_string(Variant v);
// Accepts the display names (WSDDN, CurrWSDDN, WebRel, WebETH, WebRelETH, WebRelETC), case-insensitively.
Variant parse_variant(std::string_view name);

CurriculumSchedule make_schedule(Variant variant, double relevance_threshold = 8.0, std::uint32_t num_regions = 5);

// Line-delimited stage descriptors.
void write_schedule(std::ostream& out, const CurriculumSchedule& schedule);
CurriculumSchedule load_schedule(std::istream& in);
void write_schedule_file(const std::string& path, const CurriculumSchedule& schedule);
CurriculumSchedule load_schedule_file(const std::string& path);

// f(u, v) = sigma(u) * psi(v) for one record at one stage; always 0 or 1.
// Test-split records are never admitted.
int gate(const ImageRecord& record, const Stage& stage, const DifficultyRanking& ranking);

}  // namespace curricuweb
