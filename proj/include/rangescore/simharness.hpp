#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <map>
#include <random>
#include <ranges>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rangescore/capec.hpp"
#include "rangescore/catalog.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/reports.hpp"

namespace rangescore {

/// Seeded helper around mt19937_64. Draws use plain modulo so sequences do
/// not depend on the standard library's distribution implementations.
class sim_rng {
public:
    explicit sim_rng(std::uint64_t seed) : engine_(seed) {}

    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(engine_() % n); }
    bool chance(unsigned percent) { return below(100) < percent; }

    template <class T>
    const T& pick(const std::vector<T>& items) {
        if (items.empty()) throw error("sim_rng: pick from empty list");
        return items[below(items.size())];
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

namespace detail {

template <class Set>
std::vector<std::string> as_vector(const Set& s) {
    return {s.begin(), s.end()};
}

inline bool fully_defensible(const technique_entry& t) {
    return !t.mitigation_ids.empty() && !t.detection_component_ids.empty();
}

inline std::vector<std::string> sample(sim_rng& rng, std::vector<std::string> items, std::size_t n) {
    rng.shuffle(items);
    items.resize(std::min(n, items.size()));
    std::sort(items.begin(), items.end());
    return items;
}

} // namespace detail

/// Synthetic red reports over fully defensible techniques: one tactic, one to
/// three techniques, some sub-techniques, random desirables and weights.
inline std::vector<red_report> generate_red_reports(const attack_catalog& catalog, std::size_t count,
                                                    std::uint64_t seed, timestamp base_time) {
    using namespace std::chrono;
    sim_rng rng(seed);

    std::map<std::string, std::vector<std::string>> techniques_by_tactic;
    for (auto& [id, t] : catalog.techniques())
        if (!t.is_subtechnique() && detail::fully_defensible(t))
            for (auto& ta : t.tactic_ids) techniques_by_tactic[ta].push_back(id);
    std::vector<std::string> tactics;
    for (auto& [ta, ids] : techniques_by_tactic) tactics.push_back(ta);
    if (tactics.empty()) throw error("catalog has no fully defensible techniques");

    static const std::vector<double> weight_levels{0.25, 0.5, 0.75, 1.0};
    static const std::vector<std::string> objectives{"credential theft", "persistence on host", "data staging",
                                                     "lateral foothold", "service disruption", "reconnaissance"};

    std::vector<red_report> out;
    for (std::size_t i = 0; i < count; ++i) {
        red_report red;
        char id[32];
        std::snprintf(id, sizeof id, "R%03zu", i + 1);
        red.report_id = id;
        red.objective = rng.pick(objectives);
        red.tactic_id = rng.pick(tactics);
        red.target = "host-" + std::to_string(10 + rng.below(40));
        red.start_time = base_time + minutes(20 * i) + seconds(rng.below(600));
        red.outcome = rng.chance(85) ? attack_outcome::success
                                     : (rng.chance(50) ? attack_outcome::partial : attack_outcome::failure);

        auto& pool = techniques_by_tactic[red.tactic_id];
        for (auto& tid : detail::sample(rng, pool, 1 + rng.below(3))) red.technique_ids.insert(tid);

        std::vector<const technique_entry*> nodes;
        for (auto& tid : red.technique_ids) {
            auto entry = catalog.find_technique(tid);
            nodes.push_back(entry);
            std::vector<std::string> subs;
            for (auto& sid : entry->subtechnique_ids) {
                auto sub = catalog.find_technique(sid);
                if (detail::fully_defensible(*sub) && sub->tactic_ids.count(red.tactic_id)) subs.push_back(sid);
            }
            if (subs.empty() || !rng.chance(50)) continue;
            for (auto& sid : detail::sample(rng, subs, 1 + rng.below(2))) {
                red.subtechnique_ids.insert(sid);
                nodes.push_back(catalog.find_technique(sid));
            }
        }

        for (auto* n : nodes) {
            if (rng.chance(70))
                for (auto& m : detail::sample(rng, detail::as_vector(n->mitigation_ids), 1 + rng.below(2)))
                    red.desirable_mitigation_ids.insert(m);
            if (rng.chance(60))
                for (auto& d : detail::sample(rng, detail::as_vector(n->detection_component_ids), 1))
                    red.desirable_detection_ids.insert(d);
        }

        if (rng.chance(50)) {
            red.weights.tactic = rng.pick(weight_levels);
            red.weights.techniques = rng.pick(weight_levels);
            if (!red.subtechnique_ids.empty()) red.weights.subtechniques = rng.pick(weight_levels);
            red.weights.desirable_mitigations = rng.pick(weight_levels);
            red.weights.desirable_detection = rng.pick(weight_levels);
        }
        out.push_back(std::move(red));
    }
    return out;
}

/// Attack nodes of `red` that the catalog gives neither a mitigation nor a
/// detection; no response can earn defense credit there.
inline std::vector<std::string> undefendable_nodes(const red_report& red, const attack_catalog& catalog) {
    std::vector<std::string> out;
    auto check = [&](const std::string& id) {
        auto t = catalog.find_technique(id);
        if (t && t->mitigation_ids.empty() && t->detection_component_ids.empty()) out.push_back(id);
    };
    for (auto& id : red.technique_ids) check(id);
    for (auto& id : red.subtechnique_ids) check(id);
    return out;
}

/// Ground-truth response: the red skeleton, one desirable (else any valid)
/// mitigation applied and one detection per attack node, detection starting
/// with the attack. Undefendable nodes get no defenses.
inline blue_report derive_perfect_blue(const red_report& red, const attack_catalog& catalog) {
    blue_report blue;
    blue.report_id = "B-" + red.report_id;
    blue.attack_ref = red.report_id;
    blue.presumed_tactic_id = red.tactic_id;
    blue.presumed_technique_ids = red.technique_ids;
    blue.presumed_subtechnique_ids = red.subtechnique_ids;
    blue.target = red.target;
    blue.detection_start_time = red.start_time;

    std::set<std::string> mitigations;
    auto choose = [](const std::set<std::string>& valid, const std::set<std::string>& desirable)
        -> std::optional<std::string> {
        for (auto& id : valid)
            if (desirable.count(id)) return id;
        if (!valid.empty()) return *valid.begin();
        return std::nullopt;
    };
    auto cover = [&](const std::string& id) {
        auto t = catalog.find_technique(id);
        if (!t) throw validation_error(red.report_id, "technique_ids", "unknown technique id " + id);
        if (auto m = choose(t->mitigation_ids, red.desirable_mitigation_ids)) mitigations.insert(*m);
        if (auto d = choose(t->detection_component_ids, red.desirable_detection_ids)) blue.detection_types.insert(*d);
    };
    for (auto& id : red.technique_ids) cover(id);
    for (auto& id : red.subtechnique_ids) cover(id);
    for (auto& m : mitigations) blue.mitigations.push_back({m, true});
    return blue;
}

/// Techniques of the same kind (technique or sub-technique) reachable from
/// `technique_id` through the CAPEC graph, nearest first.
inline std::vector<std::string> capec_neighbours(const attack_catalog& catalog, const capec_graph& capec,
                                                 std::string_view technique_id) {
    auto self = catalog.find_technique(technique_id);
    if (!self) return {};
    std::vector<std::pair<std::size_t, std::string>> found;
    for (auto& [id, t] : catalog.techniques()) {
        if (id == technique_id || t.is_subtechnique() != self->is_subtechnique()) continue;
        if (auto d = capec_distance(capec, technique_id, id)) found.emplace_back(*d, id);
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& [d, id] : found) out.push_back(id);
    return out;
}

/// Noisy response for property tests: a mix of correct, swapped, missing and
/// spurious elements with a random detection delay.
inline blue_report random_blue(const red_report& red, const attack_catalog& catalog, const capec_graph& capec,
                               std::uint64_t seed) {
    using namespace std::chrono;
    sim_rng rng(seed);
    blue_report blue;
    blue.report_id = "B-" + red.report_id;
    if (rng.chance(70)) blue.attack_ref = red.report_id;
    blue.target = red.target;

    auto tactics = detail::as_vector(catalog.tactics() | std::views::keys);
    if (rng.chance(70)) blue.presumed_tactic_id = red.tactic_id;
    else if (rng.chance(70)) blue.presumed_tactic_id = rng.pick(tactics);

    std::vector<std::string> all_techniques, all_subs;
    for (auto& [id, t] : catalog.techniques()) (t.is_subtechnique() ? all_subs : all_techniques).push_back(id);

    auto perturb = [&](const std::set<std::string>& ids, std::set<std::string>& into, const std::vector<std::string>& pool) {
        for (auto& id : ids) {
            auto roll = rng.below(100);
            if (roll < 55) {
                into.insert(id);
            } else if (roll < 85) {
                auto near = capec_neighbours(catalog, capec, id);
                if (!near.empty()) into.insert(near[rng.below(std::min<std::size_t>(near.size(), 6))]);
                else into.insert(rng.pick(pool));
            }
        }
        if (rng.chance(25)) into.insert(rng.pick(pool));
    };
    perturb(red.technique_ids, blue.presumed_technique_ids, all_techniques);
    perturb(red.subtechnique_ids, blue.presumed_subtechnique_ids, all_subs);

    std::set<std::string> valid_mitigations, valid_detections;
    for (auto* ids : {&red.technique_ids, &red.subtechnique_ids})
        for (auto& id : *ids) {
            auto t = catalog.find_technique(id);
            valid_mitigations.insert(t->mitigation_ids.begin(), t->mitigation_ids.end());
            valid_detections.insert(t->detection_component_ids.begin(), t->detection_component_ids.end());
        }
    std::set<std::string> mitigations;
    for (auto& m : detail::sample(rng, detail::as_vector(valid_mitigations), rng.below(4))) mitigations.insert(m);
    if (rng.chance(30)) mitigations.insert(rng.pick(detail::as_vector(catalog.mitigations() | std::views::keys)));
    for (auto& m : mitigations) blue.mitigations.push_back({m, rng.chance(65)});
    for (auto& d : detail::sample(rng, detail::as_vector(valid_detections), rng.below(4))) blue.detection_types.insert(d);
    if (rng.chance(30))
        blue.detection_types.insert(rng.pick(detail::as_vector(catalog.data_components() | std::views::keys)));

    auto offset = static_cast<long long>(rng.below(5400)) - 300;
    blue.detection_start_time = red.start_time + seconds(offset);
    return blue;
}

// ---------------------------------------------------------------------------
// Degradations

enum class degradation_kind {
    drop_technique,
    swap_technique_to_capec_neighbor,
    drop_mitigation,
    unapply_mitigation,
    drop_detection,
    delay_detection,
    wrong_tactic,
};

inline constexpr degradation_kind all_degradation_kinds[] = {
    degradation_kind::drop_technique,  degradation_kind::swap_technique_to_capec_neighbor,
    degradation_kind::drop_mitigation, degradation_kind::unapply_mitigation,
    degradation_kind::drop_detection,  degradation_kind::delay_detection,
    degradation_kind::wrong_tactic,
};

inline std::string_view to_string(degradation_kind k) {
    switch (k) {
    case degradation_kind::drop_technique: return "drop_technique";
    case degradation_kind::swap_technique_to_capec_neighbor: return "swap_technique_to_capec_neighbor";
    case degradation_kind::drop_mitigation: return "drop_mitigation";
    case degradation_kind::unapply_mitigation: return "unapply_mitigation";
    case degradation_kind::drop_detection: return "drop_detection";
    case degradation_kind::delay_detection: return "delay_detection";
    case degradation_kind::wrong_tactic: return "wrong_tactic";
    }
    return "drop_technique";
}

/// Score a degradation is aimed at.
enum class score_dimension { comprehension, defense, implementation, responsiveness };

inline score_dimension targeted_dimension(degradation_kind k) {
    switch (k) {
    case degradation_kind::drop_mitigation:
    case degradation_kind::drop_detection: return score_dimension::defense;
    case degradation_kind::unapply_mitigation: return score_dimension::implementation;
    case degradation_kind::delay_detection: return score_dimension::responsiveness;
    default: return score_dimension::comprehension;
    }
}

struct degradation {
    degradation_kind kind = degradation_kind::drop_technique;
    std::uint64_t seed = 0;
    std::chrono::seconds delay{0};  // delay_detection only; zero picks one from the seed
};

namespace detail {

inline std::vector<std::string> swap_sources(const blue_report& blue, const attack_catalog& catalog,
                                             const capec_graph& capec) {
    std::vector<std::string> out;
    for (auto& id : blue.presumed_technique_ids) {
        auto near = capec_neighbours(catalog, capec, id);
        if (std::any_of(near.begin(), near.end(), [&](auto& n) { return !blue.presumed_technique_ids.count(n); }))
            out.push_back(id);
    }
    return out;
}

} // namespace detail

inline bool degradation_applicable(const blue_report& blue, degradation_kind kind, const attack_catalog& catalog,
                                   const capec_graph& capec) {
    switch (kind) {
    case degradation_kind::drop_technique: return !blue.presumed_technique_ids.empty();
    case degradation_kind::swap_technique_to_capec_neighbor: return !detail::swap_sources(blue, catalog, capec).empty();
    case degradation_kind::drop_mitigation: return !blue.mitigations.empty();
    case degradation_kind::unapply_mitigation:
        return std::any_of(blue.mitigations.begin(), blue.mitigations.end(), [](auto& m) { return m.applied; });
    case degradation_kind::drop_detection: return !blue.detection_types.empty();
    case degradation_kind::delay_detection: return true;
    case degradation_kind::wrong_tactic: return catalog.tactics().size() > 1;
    }
    return false;
}

/// Applies one degradation; deterministic given `d.seed`. Throws
/// validation_error when the degradation does not apply to `blue`.
inline blue_report degrade_blue(blue_report blue, const degradation& d, const attack_catalog& catalog,
                                const capec_graph& capec) {
    if (!degradation_applicable(blue, d.kind, catalog, capec))
        throw validation_error(blue.report_id, std::string(to_string(d.kind)), "degradation does not apply");
    sim_rng rng(d.seed);
    auto drop_with_subtechniques = [&](const std::string& tid) {
        blue.presumed_technique_ids.erase(tid);
        std::erase_if(blue.presumed_subtechnique_ids, [&](const std::string& sid) {
            auto sub = catalog.find_technique(sid);
            return sub && sub->parent_id == tid;
        });
    };

    switch (d.kind) {
    case degradation_kind::drop_technique:
        drop_with_subtechniques(rng.pick(detail::as_vector(blue.presumed_technique_ids)));
        break;
    case degradation_kind::swap_technique_to_capec_neighbor: {
        auto source = rng.pick(detail::swap_sources(blue, catalog, capec));
        std::vector<std::string> targets;
        for (auto& n : capec_neighbours(catalog, capec, source))
            if (!blue.presumed_technique_ids.count(n)) targets.push_back(n);
        auto target = targets[rng.below(std::min<std::size_t>(targets.size(), 3))];
        drop_with_subtechniques(source);
        blue.presumed_technique_ids.insert(target);
        break;
    }
    case degradation_kind::drop_mitigation:
        blue.mitigations.erase(blue.mitigations.begin() + static_cast<std::ptrdiff_t>(rng.below(blue.mitigations.size())));
        break;
    case degradation_kind::unapply_mitigation: {
        std::vector<std::size_t> applied;
        for (std::size_t i = 0; i < blue.mitigations.size(); ++i)
            if (blue.mitigations[i].applied) applied.push_back(i);
        blue.mitigations[rng.pick(applied)].applied = false;
        break;
    }
    case degradation_kind::drop_detection:
        blue.detection_types.erase(rng.pick(detail::as_vector(blue.detection_types)));
        break;
    case degradation_kind::delay_detection: {
        auto delay = d.delay.count() > 0 ? d.delay : std::chrono::seconds(60 + rng.below(3600));
        blue.detection_start_time += delay;
        break;
    }
    case degradation_kind::wrong_tactic: {
        std::vector<std::string> others;
        for (auto& [id, name] : catalog.tactics())
            if (id != blue.presumed_tactic_id) others.push_back(id);
        blue.presumed_tactic_id = rng.pick(others);
        break;
    }
    }
    return blue;
}

} // namespace rangescore
