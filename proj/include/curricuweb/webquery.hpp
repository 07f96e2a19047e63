#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curricuweb/dataset.hpp"

namespace curricuweb {

struct ClassAttributes {
    std::vector<std::string> viewpoints;
    std::vector<std::string> poses;
    std::vector<std::string> habitats;
};

// Attribute lists per class, kept in insertion order.
class AttributeTable {
public:
    void add(const std::string& cls, ClassAttributes attrs);
    const ClassAttributes* find(const std::string& cls) const;
    std::span<const std::string> classes() const { return order_; }

private:
    std::vector<std::string> order_;
    std::map<std::string, ClassAttributes> rows_;
};

// Viewpoint / pose / habitat attributes for the 20 VOC classes.
AttributeTable default_attribute_table();

// The 20 VOC class names in their conventional order.
std::vector<std::string> voc_classes();

struct Query {
    std::string cls;
    std::optional<std::string> attribute;
    std::string text;
    QueryKind kind = QueryKind::base;

    friend bool operator==(const Query&, const Query&) = default;
};

// Per class: the base query, then one query per attribute (viewpoints,
// poses, habitats in table order). Attributes are never combined.
std::vector<Query> expand_queries(std::span<const std::string> classes, const AttributeTable& table);

struct SearchResult {
    Query query;
    std::uint32_t rank = 1;
    std::string image_ref;
    std::uint64_t content_hash = 0;
};

// Raw hit as returned by a search backend, before ranking is normalised.
struct SearchHit {
    std::uint32_t rank = 1;
    std::string image_ref;
    std::uint64_t content_hash = 0;
};

class SearchClient {
public:
    virtual ~SearchClient() = default;
    // Hits for a text query, at most `limit`, in backend rank order.
    virtual std::vector<SearchHit> search(const std::string& text, std::uint32_t limit) = 0;
    // Visually related images for a previously returned image.
    virtual std::vector<SearchHit> related(const std::string& image_ref, std::uint32_t limit) = 0;
};

// Serves fixture entries {query_text, rank, image_ref, content_hash,
// related: [image_ref...]} from a line-delimited file, or from every *.jsonl
// file in a directory (sorted by name). Loads lazily; a missing path raises
// a non-retryable TransportError on first use, a malformed entry a ProtocolError.
class FixtureSearchClient : public SearchClient {
public:
    explicit FixtureSearchClient(std::string path);

    std::vector<SearchHit> search(const std::string& text, std::uint32_t limit) override;
    std::vector<SearchHit> related(const std::string& image_ref, std::uint32_t limit) override;

private:
    struct Entry {
        std::string query_text;
        SearchHit hit;
        std::vector<std::string> related;
    };

    void load();

    std::string path_;
    bool loaded_ = false;
    std::vector<Entry> entries_;
};

// At most `limit` results with ranks 1..n. Duplicate backend ranks are a ProtocolError.
std::vector<SearchResult> fetch(SearchClient& client, const Query& query, std::uint32_t limit);

struct RelatedExpansion {
    std::vector<SearchResult> results;
    std::vector<std::string> warnings;
};

// Queries the related-image endpoint once per seed. Results inherit the
// seed's class and attribute with kind = related, concatenated in seed
// order. Per-seed failures become warnings; if every seed fails the last
// TransportError is rethrown.
RelatedExpansion expand_related(SearchClient& client, std::span<const SearchResult> seeds,
                                std::uint32_t per_seed_limit = 20);

// One web record per distinct content hash, first occurrence wins.
// Labels: +1 for the query class, -1 for every other class in `classes`.
std::vector<ImageRecord> dedup_and_manifest(std::span<const SearchResult> results,
                                            std::span<const std::string> classes);

}  // namespace curricuweb
