#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace curricuweb {

enum class Source { web, target };
enum class Split { train, test };
enum class QueryKind { base, attributed, related };

std::string_view to_string(Source s);
std::string_view to_string(Split s);
std::string_view to_string(QueryKind k);
Source parse_source(std::string_view s);
Split parse_split(std::string_view s);
QueryKind parse_query_kind(std::string_view s);

// Axis-aligned box in pixel units, continuous coordinates.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const { return x2 > x1 && y2 > y1; }

    friend bool operator==(const Box&, const Box&) = default;
    friend auto operator<=>(const Box&, const Box&) = default;
};

// Query a web record was retrieved by; seed selection reads it back.
struct QueryOrigin {
    std::string text;
    QueryKind kind = QueryKind::base;
    std::uint32_t rank = 1;

    friend bool operator==(const QueryOrigin&, const QueryOrigin&) = default;
};

struct ImageRecord {
    std::string id;
    Source source = Source::target;
    // class -> +1 / -1. A class missing from the map reads as -1.
    std::map<std::string, int> labels;
    std::vector<std::string> attributes;
    std::string path;
    Split split = Split::train;
    std::optional<double> difficulty;
    std::optional<double> relevance;
    std::uint64_t content_hash = 0;
    std::optional<QueryOrigin> origin;

    int label(const std::string& cls) const;
    std::vector<std::string> positive_classes() const;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Hash of the file at `path` when it can be read, else of the path string.
std::uint64_t content_hash_for(const std::string& path);

// Line-delimited JSON manifest. Blank lines are skipped.
std::vector<ImageRecord> load_manifest(std::istream& in);
std::vector<ImageRecord> load_manifest_file(const std::string& path);
void write_manifest(std::ostream& out, std::span<const ImageRecord> records);
void write_manifest_file(const std::string& path, std::span<const ImageRecord> records);

// Sorted union of every class named in any record's labels.
std::vector<std::string> collect_classes(std::span<const ImageRecord> records);

// Dense row-major float matrix.
class FeatureBlob {
public:
    FeatureBlob(std::uint32_t count, std::uint32_t dim);
    FeatureBlob(std::uint32_t count, std::uint32_t dim, std::vector<float> data);

    std::uint32_t count() const { return count_; }
    std::uint32_t dim() const { return dim_; }
    std::span<const float> data() const { return data_; }
    std::span<const float> row(std::size_t i) const;
    std::span<float> row(std::size_t i);

    friend bool operator==(const FeatureBlob&, const FeatureBlob&) = default;

private:
    std::uint32_t count_;
    std::uint32_t dim_;
    std::vector<float> data_;
};

FeatureBlob read_feature_blob(std::istream& in);
FeatureBlob read_feature_blob_file(const std::string& path);
void write_feature_blob(std::ostream& out, const FeatureBlob& blob);
void write_feature_blob_file(const std::string& path, const FeatureBlob& blob);

// Scales every nonzero row to unit Euclidean norm.
FeatureBlob l2_normalize(const FeatureBlob& blob);

struct RegionSet {
    std::string image_id;
    std::vector<Box> boxes;
    std::vector<std::uint32_t> feature_rows;

    friend bool operator==(const RegionSet&, const RegionSet&) = default;
};

std::vector<RegionSet> load_regions(std::istream& in);
std::vector<RegionSet> load_regions_file(const std::string& path);
void write_regions(std::ostream& out, std::span<const RegionSet> regions);
void write_regions_file(const std::string& path, std::span<const RegionSet> regions);

// Throws DataError when any feature row points past the blob.
void check_region_rows(std::span<const RegionSet> regions, const FeatureBlob& blob);

struct GroundTruthBox {
    std::string image_id;
    std::string cls;
    Box box;

    friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

std::vector<GroundTruthBox> load_ground_truth(std::istream& in);
std::vector<GroundTruthBox> load_ground_truth_file(const std::string& path);
void write_ground_truth(std::ostream& out, std::span<const GroundTruthBox> boxes);
void write_ground_truth_file(const std::string& path, std::span<const GroundTruthBox> boxes);

}  // namespace curricuweb
