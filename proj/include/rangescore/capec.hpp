#pragma once

#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "json.hpp"
#include "rangescore/catalog.hpp"
#include "rangescore/errors.hpp"

namespace rangescore {

/// Technique -> CAPEC mapping plus the undirected CAPEC parent/child graph.
class capec_graph {
public:
    using adjacency_map = std::map<std::string, std::set<std::string>>;

    capec_graph() = default;

    /// Symmetrizes `hierarchy` and adds every mapped pattern as a vertex.
    capec_graph(adjacency_map tech_to_capec, const adjacency_map& hierarchy)
        : tech_to_capec_(std::move(tech_to_capec)) {
        for (auto& [v, neighbours] : hierarchy) {
            adjacency_[v];
            for (auto& n : neighbours) {
                if (n == v) continue;
                adjacency_[v].insert(n);
                adjacency_[n].insert(v);
            }
        }
        for (auto& [tech, patterns] : tech_to_capec_)
            for (auto& p : patterns) adjacency_[p];
    }

    const adjacency_map& tech_to_capec() const noexcept { return tech_to_capec_; }
    const adjacency_map& hierarchy() const noexcept { return adjacency_; }

    std::size_t vertex_count() const noexcept { return adjacency_.size(); }

    std::size_t edge_count() const noexcept {
        std::size_t twice = 0;
        for (auto& [v, n] : adjacency_) twice += n.size();
        return twice / 2;
    }

    /// Patterns mapped to `technique_id`; a sub-technique without its own
    /// mapping inherits its parent's. Null when nothing is mapped.
    const std::set<std::string>* patterns_for(std::string_view technique_id) const {
        auto lookup = [this](std::string_view id) -> const std::set<std::string>* {
            auto it = tech_to_capec_.find(std::string(id));
            return it == tech_to_capec_.end() || it->second.empty() ? nullptr : &it->second;
        };
        if (auto own = lookup(technique_id)) return own;
        if (auto dot = technique_id.find('.'); dot != std::string_view::npos)
            return lookup(technique_id.substr(0, dot));
        return nullptr;
    }

private:
    adjacency_map tech_to_capec_;
    adjacency_map adjacency_;
};

namespace detail {

inline const nlohmann::json& record_list(const nlohmann::json& doc, const char* key, std::string_view what) {
    if (doc.is_array()) return doc;
    if (doc.is_object() && doc.contains(key) && doc[key].is_array()) return doc[key];
    throw catalog_error(std::string(what) + ": expected a list of records under \"" + key + "\"");
}

inline std::set<std::string> string_set(const nlohmann::json& rec, const char* key, std::string_view what) {
    std::set<std::string> out;
    auto it = rec.find(key);
    if (it == rec.end()) return out;
    if (!it->is_array()) throw catalog_error(std::string(what) + ": \"" + key + "\" must be a list");
    for (auto& v : *it) {
        if (!v.is_string()) throw catalog_error(std::string(what) + ": \"" + key + "\" entries must be strings");
        out.insert(v.get<std::string>());
    }
    return out;
}

inline std::string required_string(const nlohmann::json& rec, const char* key, std::string_view what) {
    if (!rec.is_object() || !rec.contains(key) || !rec[key].is_string() || rec[key].get<std::string>().empty())
        throw catalog_error(std::string(what) + ": record lacks \"" + key + "\"");
    return rec[key].get<std::string>();
}

inline nlohmann::json parse_capec_file(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const io_error& e) {
        throw catalog_error(e.what());
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw catalog_error("malformed CAPEC file " + path.string() + ": " + e.what());
    }
}

} // namespace detail

/// Builds the graph from parsed mapping (`{"mappings": [{technique_id,
/// capec_ids}]}`) and hierarchy (`{"patterns": [{capec_id, parent_ids}]}`)
/// documents. Bare top-level arrays are accepted as well.
inline capec_graph parse_capec_graph(const nlohmann::json& mapping, const nlohmann::json& hierarchy) {
    capec_graph::adjacency_map tech_to_capec;
    for (auto& rec : detail::record_list(mapping, "mappings", "CAPEC mapping")) {
        auto tech = detail::required_string(rec, "technique_id", "CAPEC mapping");
        auto ids = detail::string_set(rec, "capec_ids", "CAPEC mapping");
        auto [it, inserted] = tech_to_capec.emplace(tech, ids);
        if (!inserted && it->second != ids)
            throw catalog_error("CAPEC mapping: conflicting duplicate entry for " + tech);
    }
    capec_graph::adjacency_map parents;
    for (auto& rec : detail::record_list(hierarchy, "patterns", "CAPEC hierarchy")) {
        auto id = detail::required_string(rec, "capec_id", "CAPEC hierarchy");
        auto& p = parents[id];
        for (auto& parent : detail::string_set(rec, "parent_ids", "CAPEC hierarchy")) p.insert(parent);
    }
    return capec_graph(std::move(tech_to_capec), parents);
}

inline capec_graph load_capec_graph(const std::filesystem::path& mapping_path,
                                    const std::filesystem::path& hierarchy_path) {
    return parse_capec_graph(detail::parse_capec_file(mapping_path), detail::parse_capec_file(hierarchy_path));
}

/// Shortest hierarchy path between any pattern of `tech_a` and any pattern
/// of `tech_b`. Absent when either side is unmapped or nothing connects.
inline std::optional<std::size_t> capec_distance(const capec_graph& graph, std::string_view tech_a,
                                                 std::string_view tech_b) {
    auto from = graph.patterns_for(tech_a);
    auto to = graph.patterns_for(tech_b);
    if (!from || !to) return std::nullopt;

    // Multi-source BFS from every pattern of tech_a.
    std::map<std::string, std::size_t> dist;
    std::deque<std::string> queue;
    for (auto& p : *from) {
        dist.emplace(p, 0);
        queue.push_back(p);
    }
    while (!queue.empty()) {
        auto v = std::move(queue.front());
        queue.pop_front();
        auto d = dist.at(v);
        if (to->count(v)) return d;
        auto it = graph.hierarchy().find(v);
        if (it == graph.hierarchy().end()) continue;
        for (auto& n : it->second)
            if (dist.emplace(n, d + 1).second) queue.push_back(n);
    }
    return std::nullopt;
}

/// Partial credit for a technique guessed at `distance`: gamma^d, 0 when absent.
inline double technique_credit(std::optional<std::size_t> distance, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("gamma must lie in (0, 1)");
    if (!distance) return 0.0;
    return std::pow(gamma, static_cast<double>(*distance));
}

} // namespace rangescore
