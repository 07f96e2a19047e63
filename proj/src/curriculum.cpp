#include "curricuweb/curriculum.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "curricuweb/errors.hpp"
#include "jsonl.hpp"

namespace curricuweb {

using detail::json;

GrayImage::GrayImage(std::uint32_t width, std::uint32_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width_ < 1 || height_ < 1) throw SizeError("image dimensions must be >= 1");
    if (pixels_.size() != std::size_t(width_) * height_) throw ShapeError("pixel count does not match dimensions");
    for (double p : pixels_)
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("pixel intensities must lie in [0,1]");
}

namespace {

// Skips whitespace and '#' comments in a PGM header.
bool next_header_token(std::istream& in, long& value) {
    for (;;) {
        int c = in.peek();
        if (c == EOF) return false;
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    return static_cast<bool>(in >> value);
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image '" + path + "'");
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P5" && magic != "P2") throw FormatError("'" + path + "' is not a PGM (P2/P5) image");

    long w = 0, h = 0, maxval = 0;
    if (!next_header_token(in, w) || !next_header_token(in, h) || !next_header_token(in, maxval))
        throw FormatError("truncated PGM header in '" + path + "'");
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw FormatError("invalid PGM header in '" + path + "'");

    const std::size_t n = std::size_t(w) * std::size_t(h);
    std::vector<double> px(n);
    if (magic == "P5") {
        in.get();  // single whitespace after maxval
        const bool wide = maxval > 255;
        for (std::size_t i = 0; i < n; ++i) {
            unsigned v = 0;
            unsigned char b[2];
            if (!in.read(reinterpret_cast<char*>(b), wide ? 2 : 1)) throw FormatError("truncated PGM data in '" + path + "'");
            v = wide ? (unsigned(b[0]) << 8 | b[1]) : b[0];
            px[i] = std::min(1.0, double(v) / double(maxval));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            long v = 0;
            if (!(in >> v) || v < 0) throw FormatError("truncated PGM data in '" + path + "'");
            px[i] = std::min(1.0, double(v) / double(maxval));
        }
    }
    return GrayImage(std::uint32_t(w), std::uint32_t(h), std::move(px));
}

GrayImage resize_longer_side(const GrayImage& img, std::uint32_t longer_side) {
    if (longer_side < 1) throw ConfigError("resize target must be >= 1");
    const std::uint32_t longer = std::max(img.width(), img.height());
    if (longer == longer_side) return img;
    const double scale = double(longer_side) / double(longer);
    const auto nw = std::max<std::uint32_t>(1, std::uint32_t(std::lround(img.width() * scale)));
    const auto nh = std::max<std::uint32_t>(1, std::uint32_t(std::lround(img.height() * scale)));

    std::vector<double> out(std::size_t(nw) * nh);
    for (std::uint32_t y = 0; y < nh; ++y) {
        const double sy = std::clamp((y + 0.5) / scale - 0.5, 0.0, double(img.height() - 1));
        const auto y0 = std::uint32_t(sy);
        const auto y1 = std::min(y0 + 1, img.height() - 1);
        const double fy = sy - y0;
        for (std::uint32_t x = 0; x < nw; ++x) {
            const double sx = std::clamp((x + 0.5) / scale - 0.5, 0.0, double(img.width() - 1));
            const auto x0 = std::uint32_t(sx);
            const auto x1 = std::min(x0 + 1, img.width() - 1);
            const double fx = sx - x0;
            const double top = img.at(x0, y0) * (1 - fx) + img.at(x1, y0) * fx;
            const double bot = img.at(x0, y1) * (1 - fx) + img.at(x1, y1) * fx;
            out[std::size_t(y) * nw + x] = std::clamp(top * (1 - fy) + bot * fy, 0.0, 1.0);
        }
    }
    return GrayImage(nw, nh, std::move(out));
}

namespace {

constexpr double kZeroResponse = 1e-12;

// Scale-normalised Laplacian of Gaussian, shifted to zero sum.
std::vector<double> log_kernel(const EdgeConfig& cfg) {
    const int r = int(cfg.kernel_radius);
    const int side = 2 * r + 1;
    const double s2 = cfg.sigma * cfg.sigma;
    std::vector<double> k(std::size_t(side) * side);
    double sum = 0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const double rho2 = double(dx * dx + dy * dy);
            const double v = (rho2 - 2.0 * s2) / (2.0 * std::numbers::pi * s2 * s2) * std::exp(-rho2 / (2.0 * s2));
            k[std::size_t(dy + r) * side + (dx + r)] = v;
            sum += v;
        }
    }
    const double mean = sum / double(k.size());
    for (double& v : k) v -= mean;
    return k;
}

}  // namespace

std::vector<std::uint8_t> edge_map(const GrayImage& img, const EdgeConfig& cfg) {
    if (!(cfg.sigma > 0) || cfg.kernel_radius < 1 || !(cfg.zc_threshold >= 0))
        throw ConfigError("edge config needs sigma > 0, radius >= 1, zc_threshold >= 0");
    const std::uint32_t r = cfg.kernel_radius;
    const std::uint32_t w = img.width(), h = img.height();
    if (w <= 2 * r || h <= 2 * r)
        throw SizeError("image " + std::to_string(w) + "x" + std::to_string(h) + " is too small for kernel radius " +
                        std::to_string(r));

    const auto kernel = log_kernel(cfg);
    const std::uint32_t side = 2 * r + 1;

    // Response relative to the centre pixel: identical to plain convolution
    // with a zero-sum kernel, but exactly zero on flat neighbourhoods.
    // Rounding residue (e.g. on linear ramps) carries no sign.
    std::vector<double> resp(std::size_t(w) * h, 0.0);
    for (std::uint32_t y = r; y < h - r; ++y) {
        for (std::uint32_t x = r; x < w - r; ++x) {
            const double centre = img.at(x, y);
            double acc = 0;
            for (std::uint32_t ky = 0; ky < side; ++ky)
                for (std::uint32_t kx = 0; kx < side; ++kx)
                    acc += kernel[std::size_t(ky) * side + kx] * (img.at(x + kx - r, y + ky - r) - centre);
            resp[std::size_t(y) * w + x] = std::abs(acc) <= kZeroResponse ? 0.0 : acc;
        }
    }

    auto crosses = [&](std::size_t p, std::size_t q) {
        const double a = resp[p], b = resp[q];
        return ((a > 0 && b < 0) || (a < 0 && b > 0)) && std::abs(a - b) > cfg.zc_threshold;
    };

    std::vector<std::uint8_t> edges(std::size_t(w) * h, 0);
    for (std::uint32_t y = r; y < h - r; ++y) {
        for (std::uint32_t x = r; x < w - r; ++x) {
            const std::size_t p = std::size_t(y) * w + x;
            bool edge = false;
            if (x > r) edge = edge || crosses(p, p - 1);
            if (x + 1 < w - r) edge = edge || crosses(p, p + 1);
            if (y > r) edge = edge || crosses(p, p - w);
            if (y + 1 < h - r) edge = edge || crosses(p, p + w);
            edges[p] = edge ? 1 : 0;
        }
    }
    return edges;
}

double mean_edge_strength(const GrayImage& img, const EdgeConfig& cfg) {
    const auto edges = edge_map(img, cfg);
    std::size_t count = 0;
    for (auto e : edges) count += e;
    return double(count) / double(edges.size());
}

// ---- ranking ----

std::vector<std::string> DifficultyRanking::classes() const {
    std::vector<std::string> out;
    for (const auto& [cls, list] : lists_) out.push_back(cls);
    return out;
}

std::span<const DifficultyRanking::Entry> DifficultyRanking::list(const std::string& cls) const {
    auto it = lists_.find(cls);
    if (it == lists_.end()) return {};
    return it->second;
}

std::optional<std::size_t> DifficultyRanking::position(const std::string& cls, const std::string& id) const {
    auto it = positions_.find(cls);
    if (it == positions_.end()) return std::nullopt;
    auto jt = it->second.find(id);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
}

DifficultyRanking rank_by_difficulty(std::span<const ImageRecord> records) {
    DifficultyRanking ranking;
    for (const auto& r : records) {
        if (!r.difficulty) throw DataError("record '" + r.id + "' has no difficulty score");
        for (const auto& cls : r.positive_classes()) ranking.lists_[cls].push_back({r.id, *r.difficulty});
    }
    for (auto& [cls, list] : ranking.lists_) {
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            if (a.difficulty != b.difficulty) return a.difficulty < b.difficulty;
            return a.image_id < b.image_id;
        });
        auto& pos = ranking.positions_[cls];
        for (std::size_t i = 0; i < list.size(); ++i) pos.emplace(list[i].image_id, i);
    }
    return ranking;
}

std::size_t region_quota(std::size_t n, std::uint32_t t, std::uint32_t num_regions) {
    if (num_regions < 1) throw ConfigError("num_regions must be >= 1");
    return (std::size_t(t) * n + num_regions - 1) / num_regions;
}

std::vector<std::map<std::string, std::size_t>> build_regions(const DifficultyRanking& ranking,
                                                              std::uint32_t num_regions) {
    if (num_regions < 1) throw ConfigError("num_regions must be >= 1");
    std::vector<std::map<std::string, std::size_t>> regions(num_regions);
    for (const auto& cls : ranking.classes())
        for (std::uint32_t t = 1; t <= num_regions; ++t)
            regions[t - 1][cls] = region_quota(ranking.size(cls), t, num_regions);
    return regions;
}

// ---- schedules ----

void CurriculumSchedule::validate() const {
    if (stages.empty()) throw ConfigError("schedule has no stages");
    // Largest target fraction seen so far, as a rational a/b.
    std::uint64_t prev_num = 0, prev_den = 1;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const Stage& s = stages[i];
        if (!s.admit_web && !s.admit_target)
            throw ConfigError("stage " + std::to_string(i + 1) + " admits no source");
        if (s.relevance_threshold && !std::isfinite(*s.relevance_threshold))
            throw ConfigError("stage " + std::to_string(i + 1) + " has a non-finite relevance threshold");
        if (s.difficulty_region) {
            const auto& g = *s.difficulty_region;
            if (g.num_regions < 1 || g.region < 1 || g.region > g.num_regions)
                throw ConfigError("stage " + std::to_string(i + 1) + " has an invalid curriculum region");
        }
        if (!s.admit_target) continue;
        const std::uint64_t num = s.difficulty_region ? s.difficulty_region->region : 1;
        const std::uint64_t den = s.difficulty_region ? s.difficulty_region->num_regions : 1;
        if (num * prev_den < prev_num * den)
            throw ConfigError("stage " + std::to_string(i + 1) + " shrinks the target curriculum region");
        prev_num = num;
        prev_den = den;
    }
}

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::wsddn: return "WSDDN";
    case Variant::curr_wsddn: return "CurrWSDDN";
    case Variant::web_rel: return "WebRel";
    case Variant::web_eth: return "WebETH";
    case Variant::web_rel_eth: return "WebRelETH";
    case Variant::web_rel_etc: return "WebRelETC";
    }
    return "WSDDN";
}

Variant parse_variant(std::string_view name) {
    auto lower = [](std::string_view s) {
        std::string out(s);
        for (char& c : out) c = char(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    const std::string key = lower(name);
    for (Variant v : {Variant::wsddn, Variant::curr_wsddn, Variant::web_rel, Variant::web_eth, Variant::web_rel_eth,
                      Variant::web_rel_etc})
        if (lower(to_string(v)) == key) return v;
    throw ConfigError("unknown variant '" + std::string(name) + "'");
}

CurriculumSchedule make_schedule(Variant variant, double relevance_threshold, std::uint32_t num_regions) {
    if (!std::isfinite(relevance_threshold)) throw ConfigError("relevance threshold must be finite");
    if (num_regions < 1) throw ConfigError("num_regions must be >= 1");

    const Stage target_all{.admit_target = true};
    const Stage web_gated{.admit_web = true, .relevance_threshold = relevance_threshold};
    auto target_regions = [&](CurriculumSchedule& s) {
        for (std::uint32_t t = 1; t <= num_regions; ++t)
            s.stages.push_back(Stage{.admit_target = true, .difficulty_region = RegionGate{t, num_regions}});
    };

    CurriculumSchedule s;
    switch (variant) {
    case Variant::wsddn:
        s.stages.push_back(target_all);
        break;
    case Variant::curr_wsddn:
        target_regions(s);
        break;
    case Variant::web_rel:
        s.stages.push_back(Stage{.admit_web = true, .admit_target = true, .relevance_threshold = relevance_threshold});
        break;
    case Variant::web_eth:
        s.stages.push_back(Stage{.admit_web = true});
        s.stages.push_back(target_all);
        break;
    case Variant::web_rel_eth:
        s.stages.push_back(web_gated);
        s.stages.push_back(target_all);
        break;
    case Variant::web_rel_etc:
        s.stages.push_back(web_gated);
        target_regions(s);
        break;
    }
    s.validate();
    return s;
}

void write_schedule(std::ostream& out, const CurriculumSchedule& schedule) {
    for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
        const Stage& s = schedule.stages[i];
        json obj;
        obj["stage"] = i + 1;
        json sources = json::array();
        if (s.admit_web) sources.push_back("web");
        if (s.admit_target) sources.push_back("target");
        obj["sources"] = sources;
        if (s.relevance_threshold) obj["relevance_threshold"] = *s.relevance_threshold;
        if (s.difficulty_region) {
            obj["region"] = s.difficulty_region->region;
            obj["num_regions"] = s.difficulty_region->num_regions;
        }
        out << obj.dump() << '\n';
    }
}

CurriculumSchedule load_schedule(std::istream& in) {
    CurriculumSchedule schedule;
    detail::for_each_json_line(in, [&](const json& obj, std::size_t line_no) {
        Stage s;
        const json& sources = detail::require(obj, "sources", line_no);
        if (!sources.is_array()) throw ParseError(line_no, "sources must be an array");
        for (const auto& src : sources) {
            const auto name = src.get<std::string>();
            if (name == "web") s.admit_web = true;
            else if (name == "target") s.admit_target = true;
            else throw ParseError(line_no, "unknown source '" + name + "'");
        }
        if (auto it = obj.find("relevance_threshold"); it != obj.end()) s.relevance_threshold = it->get<double>();
        if (auto it = obj.find("region"); it != obj.end())
            s.difficulty_region = RegionGate{it->get<std::uint32_t>(),
                                             detail::require(obj, "num_regions", line_no).get<std::uint32_t>()};
        schedule.stages.push_back(s);
    });
    schedule.validate();
    return schedule;
}

void write_schedule_file(const std::string& path, const CurriculumSchedule& schedule) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path + "'");
    write_schedule(f, schedule);
}

CurriculumSchedule load_schedule_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    return load_schedule(f);
}

int gate(const ImageRecord& record, const Stage& stage, const DifficultyRanking& ranking) {
    if (record.split != Split::train) return 0;
    const bool web = record.source == Source::web;
    if (web ? !stage.admit_web : !stage.admit_target) return 0;

    if (web && stage.relevance_threshold) {
        if (!record.relevance) throw DataError("record '" + record.id + "' has no relevance score");
        if (!(*record.relevance >= *stage.relevance_threshold)) return 0;
    }

    if (!web && stage.difficulty_region) {
        const auto& g = *stage.difficulty_region;
        bool ranked = false;
        for (const auto& cls : record.positive_classes()) {
            const auto pos = ranking.position(cls, record.id);
            if (!pos) continue;
            ranked = true;
            if (*pos < region_quota(ranking.size(cls), g.region, g.num_regions)) return 1;
        }
        if (!ranked) throw DataError("record '" + record.id + "' has no difficulty rank");
        return 0;
    }
    return 1;
}

}  // namespace curricuweb
