#include "curricuweb/webquery.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <fmt/format.h>

#include "curricuweb/errors.hpp"
#include "curricuweb/rng.hpp"
#include "jsonl.hpp"

namespace curricuweb {

void AttributeTable::add(const std::string& cls, ClassAttributes attrs) {
    if (cls.empty()) throw ConfigError("attribute table class names must be nonempty");
    for (const auto* list : {&attrs.viewpoints, &attrs.poses, &attrs.habitats})
        for (const auto& a : *list)
            if (a.empty()) throw ConfigError("empty attribute for class '" + cls + "'");
    if (!rows_.emplace(cls, std::move(attrs)).second) throw ConfigError("duplicate class '" + cls + "' in attribute table");
    order_.push_back(cls);
}

const ClassAttributes* AttributeTable::find(const std::string& cls) const {
    auto it = rows_.find(cls);
    return it == rows_.end() ? nullptr : &it->second;
}

std::vector<std::string> voc_classes() {
    return {"aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",         "car",
            "cat",       "chair",   "cow",   "diningtable", "dog",    "horse",       "motorbike",
            "person",    "pottedplant", "sheep", "sofa",    "train",  "tvmonitor"};
}

AttributeTable default_attribute_table() {
    const std::vector<std::string> views{"front view", "side view"};
    AttributeTable t;
    for (const auto& cls : voc_classes()) {
        ClassAttributes a;
        if (cls == "bottle" || cls == "pottedplant" || cls == "tvmonitor") {
            t.add(cls, a);
            continue;
        }
        a.viewpoints = views;
        if (cls == "bird") a.habitats = {"water", "sky"};
        else if (cls == "cat" || cls == "dog") a.poses = {"sitting", "walking", "jumping"};
        else if (cls == "cow" || cls == "sheep") a.poses = {"walking"};
        else if (cls == "horse") a.poses = {"walking", "jumping"};
        else if (cls == "person") a.poses = {"sitting", "standing", "walking"};
        t.add(cls, std::move(a));
    }
    return t;
}

std::vector<Query> expand_queries(std::span<const std::string> classes, const AttributeTable& table) {
    std::vector<Query> out;
    std::unordered_set<std::string> texts;
    auto push = [&](Query q) {
        if (texts.insert(q.text).second) out.push_back(std::move(q));
    };
    for (const auto& cls : classes) {
        push(Query{cls, std::nullopt, cls, QueryKind::base});
        const ClassAttributes* attrs = table.find(cls);
        if (attrs == nullptr) continue;
        for (const auto* list : {&attrs->viewpoints, &attrs->poses, &attrs->habitats})
            for (const auto& a : *list) push(Query{cls, a, cls + " " + a, QueryKind::attributed});
    }
    return out;
}

// ---- fixture-backed client ----

FixtureSearchClient::FixtureSearchClient(std::string path) : path_(std::move(path)) {}

void FixtureSearchClient::load() {
    if (loaded_) return;
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    std::error_code ec;
    if (fs::is_directory(path_, ec)) {
        for (const auto& e : fs::directory_iterator(path_, ec))
            if (e.path().extension() == ".jsonl") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path_, ec)) {
        files.emplace_back(path_);
    } else {
        throw TransportError("fixture path '" + path_ + "' does not exist", false);
    }

    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw TransportError("cannot read fixture '" + file.string() + "'", true);
        try {
            detail::for_each_json_line(in, [&](const detail::json& obj, std::size_t line_no) {
                Entry e;
                e.query_text = detail::require(obj, "query_text", line_no).get<std::string>();
                const auto rank = detail::require(obj, "rank", line_no).get<std::int64_t>();
                if (rank < 1) throw ParseError(line_no, "rank must be >= 1");
                e.hit.rank = std::uint32_t(rank);
                e.hit.image_ref = detail::require(obj, "image_ref", line_no).get<std::string>();
                if (auto it = obj.find("content_hash"); it != obj.end())
                    e.hit.content_hash = it->get<std::uint64_t>();
                else
                    e.hit.content_hash = fnv1a64(e.hit.image_ref);
                if (auto it = obj.find("related"); it != obj.end())
                    for (const auto& r : *it) e.related.push_back(r.get<std::string>());
                entries_.push_back(std::move(e));
            });
        } catch (const DataError& err) {
            throw ProtocolError("malformed fixture '" + file.string() + "': " + err.what());
        }
    }
    loaded_ = true;
}

std::vector<SearchHit> FixtureSearchClient::search(const std::string& text, std::uint32_t limit) {
    load();
    std::vector<SearchHit> hits;
    for (const auto& e : entries_)
        if (e.query_text == text) hits.push_back(e.hit);
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
    if (hits.size() > limit) hits.resize(limit);
    return hits;
}

std::vector<SearchHit> FixtureSearchClient::related(const std::string& image_ref, std::uint32_t limit) {
    load();
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.hit.image_ref == image_ref; });
    if (it == entries_.end()) throw TransportError("no fixture entry for image '" + image_ref + "'", false);
    std::vector<SearchHit> hits;
    for (const auto& ref : it->related) {
        if (hits.size() >= limit) break;
        hits.push_back(SearchHit{std::uint32_t(hits.size() + 1), ref, fnv1a64(ref)});
    }
    return hits;
}

std::vector<SearchResult> fetch(SearchClient& client, const Query& query, std::uint32_t limit) {
    if (limit < 1) throw ConfigError("fetch limit must be >= 1");
    std::vector<SearchHit> hits = client.search(query.text, limit);
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
    for (std::size_t i = 1; i < hits.size(); ++i)
        if (hits[i].rank == hits[i - 1].rank)
            throw ProtocolError(fmt::format("duplicate rank {} for query '{}'", hits[i].rank, query.text));
    if (hits.size() > limit) hits.resize(limit);

    std::vector<SearchResult> out;
    out.reserve(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i)
        out.push_back(SearchResult{query, std::uint32_t(i + 1), hits[i].image_ref, hits[i].content_hash});
    return out;
}

RelatedExpansion expand_related(SearchClient& client, std::span<const SearchResult> seeds, std::uint32_t per_seed_limit) {
    if (seeds.empty()) throw ConfigError("related expansion needs at least one seed");
    if (per_seed_limit < 1) throw ConfigError("per_seed_limit must be >= 1");
    RelatedExpansion out;
    std::size_t failures = 0;
    std::optional<TransportError> last_error;
    for (const auto& seed : seeds) {
        std::vector<SearchHit> hits;
        try {
            hits = client.related(seed.image_ref, per_seed_limit);
        } catch (const TransportError& e) {
            ++failures;
            last_error = e;
            out.warnings.push_back("related lookup failed for '" + seed.image_ref + "': " + e.what());
            continue;
        }
        Query q{seed.query.cls, seed.query.attribute, "related:" + seed.image_ref, QueryKind::related};
        const std::size_t n = std::min<std::size_t>(hits.size(), per_seed_limit);
        for (std::size_t i = 0; i < n; ++i)
            out.results.push_back(SearchResult{q, std::uint32_t(i + 1), hits[i].image_ref, hits[i].content_hash});
    }
    if (failures == seeds.size()) throw *last_error;
    return out;
}

std::vector<ImageRecord> dedup_and_manifest(std::span<const SearchResult> results, std::span<const std::string> classes) {
    std::vector<ImageRecord> out;
    std::unordered_set<std::uint64_t> seen;
    for (const auto& r : results) {
        if (!seen.insert(r.content_hash).second) continue;
        ImageRecord rec;
        rec.id = fmt::format("web_{:016x}", r.content_hash);
        rec.source = Source::web;
        for (const auto& cls : classes) rec.labels[cls] = -1;
        rec.labels[r.query.cls] = 1;
        if (r.query.attribute) rec.attributes.push_back(*r.query.attribute);
        rec.path = r.image_ref;
        rec.split = Split::train;
        rec.content_hash = r.content_hash;
        rec.origin = QueryOrigin{r.query.text, r.query.kind, r.rank};
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace curricuweb
