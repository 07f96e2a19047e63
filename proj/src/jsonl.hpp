#pragma once

// Shared helpers for the line-delimited JSON formats. Internal to the library.

#include <istream>
#include <string>

#include <json.hpp>

#include "curricuweb/dataset.hpp"
#include "curricuweb/errors.hpp"

namespace curricuweb::detail {

using json = nlohmann::ordered_json;

// Calls fn(object, line_number) for each nonblank line.
template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
        try {
            fn(obj, line_no);
        } catch (const json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
}

inline const json& require(const json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line_no, std::string("missing key '") + key + "'");
    return *it;
}

inline Box box_from_json(const json& v, std::size_t line_no) {
    if (!v.is_array() || v.size() != 4) throw ParseError(line_no, "box must be a 4-array");
    for (const auto& c : v)
        if (!c.is_number()) throw ParseError(line_no, "box coordinates must be numbers");
    Box b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
    if (!b.valid()) throw ParseError(line_no, "box needs x2 > x1 and y2 > y1");
    return b;
}

inline json box_to_json(const Box& b) {
    return json::array({b.x1, b.y1, b.x2, b.y2});
}

}  // namespace curricuweb::detail
