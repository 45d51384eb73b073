#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rangescore/catalog.hpp"
#include "rangescore/reports.hpp"

namespace rangescore {

enum class node_kind { tactic, technique, subtechnique, mitigation, detection };

inline std::string_view to_string(node_kind k) {
    switch (k) {
    case node_kind::tactic: return "tactic";
    case node_kind::technique: return "technique";
    case node_kind::subtechnique: return "subtechnique";
    case node_kind::mitigation: return "mitigation";
    case node_kind::detection: return "detection";
    }
    return "tactic";
}

inline bool is_attack(node_kind k) noexcept {
    return k == node_kind::tactic || k == node_kind::technique || k == node_kind::subtechnique;
}
inline bool is_defense(node_kind k) noexcept { return !is_attack(k); }

/// Sequence of ids from the root down to a node.
using node_path = std::vector<std::string>;

inline std::string join_path(const node_path& path) {
    std::string out;
    for (auto& id : path) {
        if (!out.empty()) out += '/';
        out += id;
    }
    return out;
}

struct node {
    node_kind kind = node_kind::tactic;
    std::string id;
    double weight = 0.0;
    bool desirable = false;  // defense leaves only
    std::vector<node> children;

    const node* child(std::string_view child_id) const {
        for (auto& c : children)
            if (c.id == child_id) return &c;
        return nullptr;
    }
    node* child(std::string_view child_id) {
        for (auto& c : children)
            if (c.id == child_id) return &c;
        return nullptr;
    }
};

/// Placeholder root for responses that name no tactic; never equals a real tactic id.
inline constexpr std::string_view unknown_tactic_id = "unknown-tactic";

/// Attack-defense tree restricted to the report shape: a tactic root,
/// technique children, sub-techniques beneath their parent technique, and
/// mitigation/detection leaves on techniques or sub-techniques.
struct report_adtree {
    node root;

    const node* find(const node_path& path) const {
        if (path.empty() || path.front() != root.id) return nullptr;
        const node* cur = &root;
        for (std::size_t i = 1; i < path.size() && cur; ++i) cur = cur->child(path[i]);
        return cur;
    }

    /// Level-order visit of every node with its path.
    void visit_bfs(const std::function<void(const node&, const node_path&)>& fn) const {
        std::deque<std::pair<const node*, node_path>> queue;
        queue.emplace_back(&root, node_path{root.id});
        while (!queue.empty()) {
            auto [n, path] = std::move(queue.front());
            queue.pop_front();
            fn(*n, path);
            for (auto& c : n->children) {
                auto next = path;
                next.push_back(c.id);
                queue.emplace_back(&c, std::move(next));
            }
        }
    }

    std::size_t size() const {
        std::size_t n = 0;
        visit_bfs([&](const node&, const node_path&) { ++n; });
        return n;
    }

    std::vector<node_path> paths() const {
        std::vector<node_path> out;
        visit_bfs([&](const node&, const node_path& p) { out.push_back(p); });
        return out;
    }
};

/// Per-category weights after defaults are applied. Values are not
/// range-checked here, so callers may scale them freely.
struct category_weights {
    double tactic = 1.0;
    double techniques = 1.0;
    double subtechniques = 1.0;
    double mitigations = 1.0;
    double detections = 1.0;
};

inline category_weights resolve_weights(const field_weights& w) {
    return {w.tactic.value_or(1.0), w.techniques.value_or(1.0), w.subtechniques.value_or(1.0),
            w.desirable_mitigations.value_or(1.0), w.desirable_detection.value_or(1.0)};
}

namespace detail {

inline void attach_defenses(node& attack, const technique_entry& entry, const red_report& red) {
    for (auto& m : entry.mitigation_ids)
        attack.children.push_back({node_kind::mitigation, m, 0.0, red.desirable_mitigation_ids.count(m) > 0, {}});
    for (auto& d : entry.detection_component_ids)
        attack.children.push_back({node_kind::detection, d, 0.0, red.desirable_detection_ids.count(d) > 0, {}});
}

} // namespace detail

/// Reference tree: the red report's attack skeleton with every catalog
/// mitigation and detection attached to each technique and sub-technique.
inline report_adtree build_reference_tree(const red_report& red, const attack_catalog& catalog) {
    report_adtree tree;
    tree.root = {node_kind::tactic, red.tactic_id, 0.0, false, {}};
    for (auto& tid : red.technique_ids) {
        auto entry = catalog.find_technique(tid);
        if (!entry) throw validation_error(red.report_id, "technique_ids", "unknown technique id " + tid);
        node tech{node_kind::technique, tid, 0.0, false, {}};
        for (auto& sid : red.subtechnique_ids) {
            auto sub = catalog.find_technique(sid);
            if (!sub || sub->parent_id != tid) continue;
            node subnode{node_kind::subtechnique, sid, 0.0, false, {}};
            detail::attach_defenses(subnode, *sub, red);
            tech.children.push_back(std::move(subnode));
        }
        detail::attach_defenses(tech, *entry, red);
        tree.root.children.push_back(std::move(tech));
    }
    return tree;
}

/// Response tree: the blue report's presumed skeleton, with each reported
/// mitigation/detection under every presumed node the catalog deems it valid
/// for. Items valid for no presumed node are parked under the root.
/// A presumed sub-technique whose parent was not presumed brings the parent
/// technique node along.
inline report_adtree build_response_tree(const blue_report& blue, const attack_catalog& catalog) {
    report_adtree tree;
    tree.root = {node_kind::tactic, blue.presumed_tactic_id.value_or(std::string(unknown_tactic_id)), 0.0, false, {}};

    std::set<std::string> techniques = blue.presumed_technique_ids;
    for (auto& sid : blue.presumed_subtechnique_ids)
        if (auto sub = catalog.find_technique(sid); sub && sub->parent_id) techniques.insert(*sub->parent_id);

    for (auto& tid : techniques) {
        node tech{node_kind::technique, tid, 0.0, false, {}};
        for (auto& sid : blue.presumed_subtechnique_ids) {
            auto sub = catalog.find_technique(sid);
            if (sub && sub->parent_id == tid) tech.children.push_back({node_kind::subtechnique, sid, 0.0, false, {}});
        }
        tree.root.children.push_back(std::move(tech));
    }

    // Leaves are collected per attack node first and appended afterwards so
    // no sibling vector grows while it is being walked.
    struct slot {
        std::size_t tech;
        std::optional<std::size_t> sub;
        const technique_entry* entry;
        std::vector<node> leaves;
    };
    std::vector<slot> slots;
    for (std::size_t t = 0; t < tree.root.children.size(); ++t) {
        auto& tech = tree.root.children[t];
        slots.push_back({t, std::nullopt, catalog.find_technique(tech.id), {}});
        for (std::size_t s = 0; s < tech.children.size(); ++s)
            slots.push_back({t, s, catalog.find_technique(tech.children[s].id), {}});
    }

    std::vector<node> parked;
    auto place = [&](node_kind kind, const std::string& id, auto valid) {
        bool placed = false;
        for (auto& sl : slots) {
            if (sl.entry && valid(*sl.entry)) {
                sl.leaves.push_back({kind, id, 0.0, false, {}});
                placed = true;
            }
        }
        if (!placed) parked.push_back({kind, id, 0.0, false, {}});
    };
    std::set<std::string> mitigation_ids;
    for (auto& m : blue.mitigations) mitigation_ids.insert(m.mitigation_id);
    for (auto& m : mitigation_ids)
        place(node_kind::mitigation, m, [&](const technique_entry& e) { return e.mitigation_ids.count(m) > 0; });
    for (auto& d : blue.detection_types)
        place(node_kind::detection, d, [&](const technique_entry& e) { return e.detection_component_ids.count(d) > 0; });

    // Sub-technique slots first: their indices refer to the pre-append layout.
    for (auto& sl : slots) {
        if (!sl.sub) continue;
        auto& target = tree.root.children[sl.tech].children[*sl.sub].children;
        for (auto& leaf : sl.leaves) target.push_back(std::move(leaf));
    }
    for (auto& sl : slots) {
        if (sl.sub) continue;
        auto& target = tree.root.children[sl.tech].children;
        for (auto& leaf : sl.leaves) target.push_back(std::move(leaf));
    }
    for (auto& leaf : parked) tree.root.children.push_back(std::move(leaf));
    return tree;
}

/// Assigns per-node weights: each category's weight is split evenly across
/// that category's nodes. Defense leaf weights are stored unscaled.
inline report_adtree assign_reference_weights(report_adtree tree, const category_weights& w) {
    std::map<node_kind, std::size_t> counts;
    tree.visit_bfs([&](const node& n, const node_path&) { ++counts[n.kind]; });
    auto share = [&](node_kind k) {
        double category = 0.0;
        switch (k) {
        case node_kind::tactic: category = w.tactic; break;
        case node_kind::technique: category = w.techniques; break;
        case node_kind::subtechnique: category = w.subtechniques; break;
        case node_kind::mitigation: category = w.mitigations; break;
        case node_kind::detection: category = w.detections; break;
        }
        auto n = counts[k];
        return n == 0 ? 0.0 : category / static_cast<double>(n);
    };
    std::function<void(node&)> apply = [&](node& n) {
        n.weight = share(n.kind);
        for (auto& c : n.children) apply(c);
    };
    apply(tree.root);
    return tree;
}

inline report_adtree assign_reference_weights(report_adtree tree, const field_weights& w) {
    return assign_reference_weights(std::move(tree), resolve_weights(w));
}

/// Graphviz DOT rendering for debugging.
inline std::string to_dot(const report_adtree& tree, std::string_view graph_name = "adtree") {
    std::ostringstream out;
    out << "digraph \"" << graph_name << "\" {\n  node [fontname=\"Helvetica\"];\n";
    std::map<std::string, std::string> ids;
    tree.visit_bfs([&](const node& n, const node_path& path) {
        auto key = join_path(path);
        auto name = "n" + std::to_string(ids.size());
        ids[key] = name;
        const char* shape = is_attack(n.kind) ? "box" : "ellipse";
        const char* color = is_attack(n.kind) ? "#c0392b" : (n.desirable ? "#1e8449" : "#2471a3");
        out << "  " << name << " [label=\"" << n.id << "\\n" << to_string(n.kind) << "\", shape=" << shape
            << ", color=\"" << color << "\"];\n";
        if (path.size() > 1) {
            node_path parent(path.begin(), path.end() - 1);
            out << "  " << ids[join_path(parent)] << " -> " << name << ";\n";
        }
    });
    out << "}\n";
    return out.str();
}

} // namespace rangescore
