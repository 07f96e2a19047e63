#include "curricuweb/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include "curricuweb/errors.hpp"
#include "curricuweb/rng.hpp"
#include "jsonl.hpp"

namespace curricuweb {

using detail::json;

std::string_view to_string(Source s) { return s == Source::web ? "web" : "target"; }
std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string_view to_string(QueryKind k) {
    switch (k) {
    case QueryKind::base: return "base";
    case QueryKind::attributed: return "attributed";
    case QueryKind::related: return "related";
    }
    return "base";
}

Source parse_source(std::string_view s) {
    if (s == "web") return Source::web;
    if (s == "target") return Source::target;
    throw DataError("unknown source '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw DataError("unknown split '" + std::string(s) + "'");
}

QueryKind parse_query_kind(std::string_view s) {
    if (s == "base") return QueryKind::base;
    if (s == "attributed") return QueryKind::attributed;
    if (s == "related") return QueryKind::related;
    throw DataError("unknown query kind '" + std::string(s) + "'");
}

int ImageRecord::label(const std::string& cls) const {
    auto it = labels.find(cls);
    return it == labels.end() ? -1 : it->second;
}

std::vector<std::string> ImageRecord::positive_classes() const {
    std::vector<std::string> out;
    for (const auto& [cls, y] : labels)
        if (y > 0) out.push_back(cls);
    return out;
}

std::uint64_t content_hash_for(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (f) {
        std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        if (!f.bad()) return fnv1a64(bytes);
    }
    return fnv1a64(path);
}

// ---- manifest ----

namespace {

ImageRecord record_from_json(const json& obj, std::size_t line_no) {
    ImageRecord r;
    r.id = detail::require(obj, "id", line_no).get<std::string>();
    if (r.id.empty()) throw ParseError(line_no, "empty id");
    try {
        r.source = parse_source(detail::require(obj, "source", line_no).get<std::string>());
        r.split = parse_split(detail::require(obj, "split", line_no).get<std::string>());
    } catch (const ParseError&) {
        throw;
    } catch (const DataError& e) {
        throw ParseError(line_no, e.what());
    }

    const json& labels = detail::require(obj, "labels", line_no);
    if (!labels.is_object()) throw ParseError(line_no, "labels must be an object");
    for (const auto& [cls, y] : labels.items()) {
        if (!y.is_number_integer() || (y.get<int>() != 1 && y.get<int>() != -1))
            throw ParseError(line_no, "label for '" + cls + "' must be -1 or 1");
        r.labels[cls] = y.get<int>();
    }
    if (r.split == Split::train && r.labels.empty())
        throw ParseError(line_no, "train record '" + r.id + "' has no labels");

    r.path = detail::require(obj, "path", line_no).get<std::string>();
    const json& attrs = detail::require(obj, "attributes", line_no);
    if (!attrs.is_array()) throw ParseError(line_no, "attributes must be an array");
    for (const auto& a : attrs) r.attributes.push_back(a.get<std::string>());

    auto finite_field = [&](const char* key) -> std::optional<double> {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return std::nullopt;
        const double v = it->get<double>();
        if (!std::isfinite(v)) throw ParseError(line_no, std::string(key) + " must be finite");
        return v;
    };
    r.difficulty = finite_field("difficulty");
    if (r.difficulty && *r.difficulty < 0) throw ParseError(line_no, "difficulty must be >= 0");
    r.relevance = finite_field("relevance");

    if (auto it = obj.find("content_hash"); it != obj.end())
        r.content_hash = it->get<std::uint64_t>();
    else
        r.content_hash = content_hash_for(r.path);

    if (auto it = obj.find("query"); it != obj.end()) {
        QueryOrigin o;
        o.text = it->get<std::string>();
        if (auto k = obj.find("query_kind"); k != obj.end()) {
            try {
                o.kind = parse_query_kind(k->get<std::string>());
            } catch (const DataError& e) {
                throw ParseError(line_no, e.what());
            }
        }
        if (auto rk = obj.find("rank"); rk != obj.end()) {
            const auto rank = rk->get<std::int64_t>();
            if (rank < 1) throw ParseError(line_no, "rank must be >= 1");
            o.rank = static_cast<std::uint32_t>(rank);
        }
        r.origin = std::move(o);
    }
    return r;
}

json record_to_json(const ImageRecord& r) {
    json obj;
    obj["id"] = r.id;
    obj["source"] = to_string(r.source);
    json labels = json::object();
    for (const auto& [cls, y] : r.labels) labels[cls] = y;
    obj["labels"] = labels;
    obj["path"] = r.path;
    obj["attributes"] = r.attributes;
    obj["split"] = to_string(r.split);
    if (r.difficulty) obj["difficulty"] = *r.difficulty;
    if (r.relevance) obj["relevance"] = *r.relevance;
    obj["content_hash"] = r.content_hash;
    if (r.origin) {
        obj["query"] = r.origin->text;
        obj["query_kind"] = to_string(r.origin->kind);
        obj["rank"] = r.origin->rank;
    }
    return obj;
}

template <typename T>
T with_input_file(const std::string& path, T (*fn)(std::istream&)) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    return fn(f);
}

template <typename Fn>
void with_output_file(const std::string& path, Fn&& fn, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path + "'");
    fn(f);
    f.flush();
    if (!f) throw DataError("write failed for '" + path + "'");
}

}  // namespace

std::vector<ImageRecord> load_manifest(std::istream& in) {
    std::vector<ImageRecord> records;
    std::unordered_set<std::string> seen;
    detail::for_each_json_line(in, [&](const json& obj, std::size_t line_no) {
        ImageRecord r = record_from_json(obj, line_no);
        if (!seen.insert(r.id).second)
            throw IntegrityError("duplicate record id '" + r.id + "' at line " + std::to_string(line_no));
        records.push_back(std::move(r));
    });
    return records;
}

std::vector<ImageRecord> load_manifest_file(const std::string& path) {
    return with_input_file(path, &load_manifest);
}

void write_manifest(std::ostream& out, std::span<const ImageRecord> records) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_manifest_file(const std::string& path, std::span<const ImageRecord> records) {
    with_output_file(path, [&](std::ostream& o) { write_manifest(o, records); });
}

std::vector<std::string> collect_classes(std::span<const ImageRecord> records) {
    std::set<std::string> classes;
    for (const auto& r : records)
        for (const auto& [cls, y] : r.labels) classes.insert(cls);
    return {classes.begin(), classes.end()};
}

// ---- feature blobs ----

FeatureBlob::FeatureBlob(std::uint32_t count, std::uint32_t dim)
    : FeatureBlob(count, dim, std::vector<float>(std::size_t(count) * dim, 0.0f)) {}

FeatureBlob::FeatureBlob(std::uint32_t count, std::uint32_t dim, std::vector<float> data)
    : count_(count), dim_(dim), data_(std::move(data)) {
    if (dim_ < 1) throw ShapeError("feature blob dim must be >= 1");
    if (data_.size() != std::size_t(count_) * dim_)
        throw ShapeError("feature blob holds " + std::to_string(data_.size()) + " values, expected " +
                         std::to_string(std::size_t(count_) * dim_));
    for (float v : data_)
        if (!std::isfinite(v)) throw DataError("feature blob contains a non-finite value");
}

std::span<const float> FeatureBlob::row(std::size_t i) const {
    if (i >= count_) throw ShapeError("feature row " + std::to_string(i) + " out of range");
    return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::span<float> FeatureBlob::row(std::size_t i) {
    if (i >= count_) throw ShapeError("feature row " + std::to_string(i) + " out of range");
    return std::span<float>(data_).subspan(i * dim_, dim_);
}

namespace {

constexpr std::array<char, 4> kFvecMagic{'F', 'V', 'E', 'C'};
constexpr std::uint32_t kFvecVersion = 1;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
    return true;
}

}  // namespace

FeatureBlob read_feature_blob(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4)) throw FormatError("truncated FVEC header");
    if (magic != kFvecMagic) throw FormatError("bad magic, expected FVEC");
    std::uint32_t version = 0, count = 0, dim = 0;
    if (!get_u32(in, version) || !get_u32(in, count) || !get_u32(in, dim))
        throw FormatError("truncated FVEC header");
    if (version != kFvecVersion) throw FormatError("unsupported FVEC version " + std::to_string(version));
    if (dim < 1) throw FormatError("FVEC dim must be >= 1");

    const std::size_t n = std::size_t(count) * dim;
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        if (!get_u32(in, bits))
            throw FormatError("truncated FVEC payload at value " + std::to_string(i) + " of " + std::to_string(n));
        data[i] = std::bit_cast<float>(bits);
        if (!std::isfinite(data[i])) throw FormatError("non-finite value at index " + std::to_string(i));
    }
    return FeatureBlob(count, dim, std::move(data));
}

FeatureBlob read_feature_blob_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    return read_feature_blob(f);
}

void write_feature_blob(std::ostream& out, const FeatureBlob& blob) {
    out.write(kFvecMagic.data(), 4);
    put_u32(out, kFvecVersion);
    put_u32(out, blob.count());
    put_u32(out, blob.dim());
    for (float v : blob.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void write_feature_blob_file(const std::string& path, const FeatureBlob& blob) {
    with_output_file(path, [&](std::ostream& o) { write_feature_blob(o, blob); }, std::ios::binary);
}

FeatureBlob l2_normalize(const FeatureBlob& blob) {
    FeatureBlob out = blob;
    for (std::size_t i = 0; i < out.count(); ++i) {
        auto row = out.row(i);
        double sq = 0;
        for (float v : row) sq += double(v) * v;
        if (sq == 0) continue;
        const double norm = std::sqrt(sq);
        for (float& v : row) v = static_cast<float>(v / norm);
    }
    return out;
}

// ---- regions ----

std::vector<RegionSet> load_regions(std::istream& in) {
    std::vector<RegionSet> out;
    detail::for_each_json_line(in, [&](const json& obj, std::size_t line_no) {
        RegionSet rs;
        rs.image_id = detail::require(obj, "image_id", line_no).get<std::string>();
        const json& boxes = detail::require(obj, "boxes", line_no);
        const json& rows = detail::require(obj, "feature_rows", line_no);
        if (!boxes.is_array() || !rows.is_array()) throw ParseError(line_no, "boxes and feature_rows must be arrays");
        for (const auto& b : boxes) rs.boxes.push_back(detail::box_from_json(b, line_no));
        for (const auto& r : rows) {
            if (!r.is_number_unsigned()) throw ParseError(line_no, "feature_rows must be nonnegative integers");
            rs.feature_rows.push_back(r.get<std::uint32_t>());
        }
        if (rs.boxes.size() != rs.feature_rows.size())
            throw ParseError(line_no, "boxes and feature_rows differ in length");
        out.push_back(std::move(rs));
    });
    return out;
}

std::vector<RegionSet> load_regions_file(const std::string& path) {
    return with_input_file(path, &load_regions);
}

void write_regions(std::ostream& out, std::span<const RegionSet> regions) {
    for (const auto& rs : regions) {
        json obj;
        obj["image_id"] = rs.image_id;
        json boxes = json::array();
        for (const auto& b : rs.boxes) boxes.push_back(detail::box_to_json(b));
        obj["boxes"] = boxes;
        obj["feature_rows"] = rs.feature_rows;
        out << obj.dump() << '\n';
    }
}

void write_regions_file(const std::string& path, std::span<const RegionSet> regions) {
    with_output_file(path, [&](std::ostream& o) { write_regions(o, regions); });
}

void check_region_rows(std::span<const RegionSet> regions, const FeatureBlob& blob) {
    for (const auto& rs : regions)
        for (auto row : rs.feature_rows)
            if (row >= blob.count())
                throw DataError("regions of '" + rs.image_id + "' reference feature row " + std::to_string(row) +
                                " but the blob has " + std::to_string(blob.count()) + " rows");
}

// ---- ground truth ----

std::vector<GroundTruthBox> load_ground_truth(std::istream& in) {
    std::vector<GroundTruthBox> out;
    detail::for_each_json_line(in, [&](const json& obj, std::size_t line_no) {
        GroundTruthBox g;
        g.image_id = detail::require(obj, "image_id", line_no).get<std::string>();
        g.cls = detail::require(obj, "class", line_no).get<std::string>();
        g.box = detail::box_from_json(detail::require(obj, "box", line_no), line_no);
        out.push_back(std::move(g));
    });
    return out;
}

std::vector<GroundTruthBox> load_ground_truth_file(const std::string& path) {
    return with_input_file(path, &load_ground_truth);
}

void write_ground_truth(std::ostream& out, std::span<const GroundTruthBox> boxes) {
    for (const auto& g : boxes) {
        json obj;
        obj["image_id"] = g.image_id;
        obj["class"] = g.cls;
        obj["box"] = detail::box_to_json(g.box);
        out << obj.dump() << '\n';
    }
}

void write_ground_truth_file(const std::string& path, std::span<const GroundTruthBox> boxes) {
    with_output_file(path, [&](std::ostream& o) { write_ground_truth(o, boxes); });
}

}  // namespace curricuweb
