#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rangescore/adtree.hpp"
#include "rangescore/capec.hpp"
#include "rangescore/catalog.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/io.hpp"
#include "rangescore/matching.hpp"
#include "rangescore/posture.hpp"
#include "rangescore/reports.hpp"
#include "rangescore/scoring.hpp"
#include "rangescore/simharness.hpp"

namespace rangescore::cli {

namespace fs = std::filesystem;

enum exit_code : int { ok = 0, validation_failure = 1, io_failure = 2, catalog_failure = 3 };

/// Environment variable naming the default configuration file.
inline constexpr const char* config_env_var = "RANGESCORE_CONFIG";

/// Paths and team roster from the configuration file; command-line flags
/// take precedence over every entry.
struct run_config {
    fs::path attack, capec_map, capec_hierarchy, red_dir, blue_dir, overlay, out, svg_dir;
    scoring_config scoring;
    std::map<std::string, std::string> roster;  // blue report_id -> team id
};

namespace detail {

inline run_config load_run_config(const fs::path& path) {
    run_config rc;
    if (path.empty()) return rc;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw config_error("configuration " + path.string() + " is not valid JSON: " + e.what());
    }
    rc.scoring = scoring_config_from_json(doc);
    auto base = path.parent_path();
    if (doc.contains("paths")) {
        auto& p = doc["paths"];
        if (!p.is_object()) throw config_error("paths must be an object");
        static const std::map<std::string, fs::path run_config::*> keys{
            {"attack", &run_config::attack},         {"capec_map", &run_config::capec_map},
            {"capec_hierarchy", &run_config::capec_hierarchy}, {"red", &run_config::red_dir},
            {"blue", &run_config::blue_dir},         {"overlay", &run_config::overlay},
            {"out", &run_config::out},               {"svg_dir", &run_config::svg_dir}};
        for (auto& [k, v] : p.items()) {
            auto it = keys.find(k);
            if (it == keys.end()) throw config_error("unknown paths key \"" + k + "\"");
            if (!v.is_string()) throw config_error("paths." + k + " must be a string");
            fs::path value = v.get<std::string>();
            rc.*(it->second) = value.is_absolute() ? value : base / value;
        }
    }
    if (doc.contains("roster")) {
        auto& r = doc["roster"];
        if (!r.is_object()) throw config_error("roster must be an object");
        for (auto& [k, v] : r.items()) {
            if (!v.is_string()) throw config_error("roster." + k + " must be a string");
            rc.roster[k] = v.get<std::string>();
        }
    }
    return rc;
}

inline fs::path config_path(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(config_env_var); env && *env) return env;
    return {};
}

inline void override_path(fs::path& target, const std::string& flag) {
    if (!flag.empty()) target = flag;
}

inline void require(const fs::path& p, const char* flag) {
    if (p.empty()) throw config_error(std::string("missing ") + flag + " (flag or config paths entry)");
}

/// JSON files below `dir` in sorted order; `recursive` descends one level for team directories.
inline std::vector<fs::path> json_files(const fs::path& dir, bool recursive) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw io_error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    auto collect = [&](const fs::path& d) {
        for (auto& entry : fs::directory_iterator(d))
            if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
    };
    collect(dir);
    if (recursive)
        for (auto& entry : fs::directory_iterator(dir))
            if (entry.is_directory()) collect(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

struct loaded_blue {
    blue_report report;
    std::string team;
};

struct loaded_reports {
    std::vector<red_report> reds;
    std::vector<loaded_blue> blues;
    std::vector<std::string> errors;  // "file: report: field: message"
};

inline std::string team_of(const fs::path& file, const fs::path& blue_dir, const std::string& report_id,
                           const std::map<std::string, std::string>& roster) {
    if (auto it = roster.find(report_id); it != roster.end()) return it->second;
    auto rel = fs::relative(file, blue_dir);
    if (std::distance(rel.begin(), rel.end()) > 1) return rel.begin()->string();
    return "blue";
}

inline loaded_reports load_reports(const run_config& rc, const attack_catalog& catalog) {
    loaded_reports out;
    overlay_map overlays;
    if (!rc.overlay.empty()) {
        try {
            overlays = parse_overlay(read_text_file(rc.overlay), catalog);
        } catch (const validation_error& e) {
            out.errors.push_back(rc.overlay.string() + ": " + e.what());
        }
    }
    for (auto& file : json_files(rc.red_dir, false)) {
        try {
            out.reds.push_back(parse_red_report(read_text_file(file), catalog, overlays));
        } catch (const validation_error& e) {
            out.errors.push_back(file.string() + ": " + e.what());
        }
    }
    if (!rc.blue_dir.empty()) {
        for (auto& file : json_files(rc.blue_dir, true)) {
            try {
                auto blue = parse_blue_report(read_text_file(file), catalog);
                auto team = team_of(file, rc.blue_dir, blue.report_id, rc.roster);
                out.blues.push_back({std::move(blue), std::move(team)});
            } catch (const validation_error& e) {
                out.errors.push_back(file.string() + ": " + e.what());
            }
        }
    }
    return out;
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; the first failure
/// (lowest index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn fn) {
    std::vector<std::exception_ptr> failures(n);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < std::min<std::size_t>(jobs, n); ++w)
            workers.emplace_back([&] {
                for (auto i = next++; i < n; i = next++) guarded(i);
            });
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
}

inline std::string svg_name(const std::string& team) { return "posture-" + team + ".svg"; }

inline void write_svgs(const fs::path& dir, const std::vector<team_posture>& postures) {
    for (auto& p : postures) write_text_file(dir / svg_name(p.team_id), render_posture_svg(p));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

struct common_flags {
    std::string config, attack, capec_map, capec_hierarchy, red, blue, overlay, out, svg_dir;
};

inline run_config resolve(const common_flags& f) {
    auto rc = detail::load_run_config(detail::config_path(f.config));
    detail::override_path(rc.attack, f.attack);
    detail::override_path(rc.capec_map, f.capec_map);
    detail::override_path(rc.capec_hierarchy, f.capec_hierarchy);
    detail::override_path(rc.red_dir, f.red);
    detail::override_path(rc.blue_dir, f.blue);
    detail::override_path(rc.overlay, f.overlay);
    detail::override_path(rc.out, f.out);
    detail::override_path(rc.svg_dir, f.svg_dir);
    return rc;
}

inline int cmd_validate(const common_flags& f, std::ostream& out, std::ostream& err) {
    auto rc = resolve(f);
    detail::require(rc.attack, "--attack");
    detail::require(rc.red_dir, "--red");
    auto catalog = load_attack_snapshot(rc.attack);
    auto loaded = detail::load_reports(rc, catalog);
    for (auto& e : loaded.errors) err << "error: " << e << "\n";
    if (!loaded.errors.empty()) {
        err << loaded.errors.size() << " report(s) failed validation\n";
        return validation_failure;
    }
    out << "ok: " << loaded.reds.size() << " red, " << loaded.blues.size() << " blue report(s) valid\n";
    return ok;
}

struct evaluate_flags {
    std::string dot_dir;
    unsigned jobs = 1;
};

inline int cmd_evaluate(const common_flags& f, const evaluate_flags& ef, std::ostream& out, std::ostream& err) {
    auto rc = resolve(f);
    detail::require(rc.attack, "--attack");
    detail::require(rc.capec_map, "--capec-map");
    detail::require(rc.capec_hierarchy, "--capec-hierarchy");
    detail::require(rc.red_dir, "--red");
    detail::require(rc.blue_dir, "--blue");
    auto catalog = load_attack_snapshot(rc.attack);
    auto capec = load_capec_graph(rc.capec_map, rc.capec_hierarchy);
    auto loaded = detail::load_reports(rc, catalog);
    if (!loaded.errors.empty()) {
        for (auto& e : loaded.errors) err << "error: " << e << "\n";
        return validation_failure;
    }
    if (loaded.reds.empty()) throw validation_error("", "red", "no red reports found in " + rc.red_dir.string());

    evaluation_document doc;
    doc.catalog_version = catalog.snapshot_version();
    doc.config = rc.scoring;

    // Every team answers the same red reports; pairing runs per team.
    std::map<std::string, std::vector<blue_report>> by_team;
    for (auto& b : loaded.blues) by_team[b.team].push_back(b.report);
    if (by_team.empty()) by_team["blue"];

    struct job {
        report_pair pair;
        std::string team;
    };
    std::vector<job> jobs;
    for (auto& [team, blues] : by_team) {
        auto paired = pair_reports(loaded.reds, blues, pairing_policy{rc.scoring.pairing_window});
        for (auto& w : paired.warnings) doc.warnings.push_back(team + ": " + w);
        for (auto& u : paired.unmatched) doc.unmatched_blues.push_back({team, u.report_id});
        for (auto& p : paired.pairs) jobs.push_back({std::move(p), team});
    }

    doc.results.resize(jobs.size());
    detail::parallel_for(jobs.size(), ef.jobs, [&](std::size_t i) {
        doc.results[i] = evaluate_pair(jobs[i].pair, catalog, capec, rc.scoring, jobs[i].team);
    });
    doc.postures = aggregate_all(doc.results, rc.scoring.posture);

    auto text = export_results(doc);
    if (rc.out.empty()) out << text;
    else write_text_file(rc.out, text);
    if (!rc.svg_dir.empty()) detail::write_svgs(rc.svg_dir, doc.postures);
    if (!ef.dot_dir.empty()) {
        for (auto& j : jobs) {
            auto stem = j.team + "-" + j.pair.red.report_id;
            write_text_file(fs::path(ef.dot_dir) / (stem + "-reference.dot"),
                            to_dot(build_reference_tree(j.pair.red, catalog), stem + " reference"));
            if (j.pair.blue)
                write_text_file(fs::path(ef.dot_dir) / (stem + "-response.dot"),
                                to_dot(build_response_tree(*j.pair.blue, catalog), stem + " response"));
        }
    }
    if (!rc.out.empty())
        out << "evaluated " << doc.results.size() << " pair(s) for " << doc.postures.size() << " team(s) -> "
            << rc.out.string() << "\n";
    return ok;
}

inline int cmd_posture(const std::string& in, const std::string& out_path, const std::string& svg_dir,
                       std::ostream& out) {
    auto doc = parse_evaluation_document(read_text_file(in));
    doc.postures = aggregate_all(doc.results, doc.config.posture);
    auto text = export_results(doc);
    if (out_path.empty()) {
        for (auto& p : doc.postures) {
            out << p.team_id << ":";
            auto values = p.dims.values();
            for (std::size_t i = 0; i < values.size(); ++i)
                out << " " << posture_dimension_names[i] << "=" << rangescore::detail::fmt(values[i]);
            out << " final=" << rangescore::detail::fmt(p.final_mean) << " attacks=" << p.n_attacks << "\n";
        }
    } else {
        write_text_file(out_path, text);
    }
    if (!svg_dir.empty()) detail::write_svgs(svg_dir, doc.postures);
    return ok;
}

struct gen_flags {
    std::string out;
    std::size_t count = 20;
    std::size_t teams = 3;
    std::uint64_t seed = 1;
};

/// Writes a synthetic exercise: red/, blue/team-N/ and config.json. Team 1
/// answers perfectly; the others carry seeded degradations, and some of
/// their responses are missing or lack an explicit attack reference.
inline int cmd_gen(const common_flags& f, const gen_flags& g, std::ostream& out) {
    auto rc = resolve(f);
    detail::require(rc.attack, "--attack");
    detail::require(rc.capec_map, "--capec-map");
    detail::require(rc.capec_hierarchy, "--capec-hierarchy");
    if (g.out.empty()) throw config_error("missing --out");
    if (g.teams == 0) throw config_error("--teams must be at least 1");
    auto catalog = load_attack_snapshot(rc.attack);
    auto capec = load_capec_graph(rc.capec_map, rc.capec_hierarchy);

    auto base = parse_rfc3339("2024-05-14T09:00:00Z");
    auto reds = generate_red_reports(catalog, g.count, g.seed, base);
    fs::path root = g.out;
    for (auto& red : reds) write_text_file(root / "red" / (red.report_id + ".json"), serialize(red));

    sim_rng rng(g.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t t = 1; t <= g.teams; ++t) {
        auto team = "team-" + std::to_string(t);
        for (auto& red : reds) {
            auto blue = derive_perfect_blue(red, catalog);
            blue.report_id = team + "-" + red.report_id;
            if (t > 1) {
                if (rng.chance(10)) continue;  // attack went unnoticed
                auto steps = rng.below(4);
                for (std::size_t s = 0; s < steps; ++s) {
                    auto kind = all_degradation_kinds[rng.below(std::size(all_degradation_kinds))];
                    if (!degradation_applicable(blue, kind, catalog, capec)) continue;
                    blue = degrade_blue(blue, degradation{kind, rng.below(1u << 30), std::chrono::seconds{0}}, catalog,
                                        capec);
                }
                if (rng.chance(20)) blue.attack_ref.reset();
            }
            write_text_file(root / "blue" / team / (blue.report_id + ".json"), serialize(blue));
        }
    }

    auto attack_abs = fs::absolute(rc.attack), map_abs = fs::absolute(rc.capec_map),
         hier_abs = fs::absolute(rc.capec_hierarchy);
    auto rel = [&](const fs::path& p) { return fs::relative(p, fs::absolute(root)).generic_string(); };
    nlohmann::json config = to_json(rc.scoring);
    config["paths"] = {{"attack", rel(attack_abs)},
                       {"capec_map", rel(map_abs)},
                       {"capec_hierarchy", rel(hier_abs)},
                       {"red", "red"},
                       {"blue", "blue"},
                       {"out", "out/evaluation.json"},
                       {"svg_dir", "out"}};
    write_text_file(root / "config.json", config.dump(2) + "\n");
    out << "wrote " << reds.size() << " red report(s) and " << g.teams << " team(s) to " << root.string() << "\n";
    return ok;
}

inline int cmd_catalog_info(const common_flags& f, bool as_json, std::ostream& out) {
    auto rc = resolve(f);
    detail::require(rc.attack, "--attack");
    auto catalog = load_attack_snapshot(rc.attack);
    nlohmann::json info{{"snapshot_version", catalog.snapshot_version()},
                        {"techniques", catalog.techniques().size()},
                        {"subtechniques", catalog.subtechnique_count()},
                        {"mitigations", catalog.mitigations().size()},
                        {"tactics", catalog.tactics().size()},
                        {"data_components", catalog.data_components().size()}};
    if (as_json) {
        out << info.dump(2) << "\n";
        return ok;
    }
    out << "snapshot        " << catalog.snapshot_version() << "\n"
        << "techniques      " << catalog.techniques().size() << " (" << catalog.subtechnique_count()
        << " sub-techniques)\n"
        << "mitigations     " << catalog.mitigations().size() << "\n"
        << "tactics         " << catalog.tactics().size() << "\n"
        << "data components " << catalog.data_components().size() << "\n";
    return ok;
}

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cyber range blue team scoring engine", "rangescore"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "rangescore 1.0.0");

    common_flags flags;
    auto add_catalog = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Configuration file (default: $RANGESCORE_CONFIG)");
        sub->add_option("--attack", flags.attack, "ATT&CK STIX 2.1 bundle");
    };
    auto add_capec = [&](CLI::App* sub) {
        sub->add_option("--capec-map", flags.capec_map, "Technique to CAPEC mapping file");
        sub->add_option("--capec-hierarchy", flags.capec_hierarchy, "CAPEC hierarchy file");
    };
    auto add_reports = [&](CLI::App* sub) {
        sub->add_option("--red", flags.red, "Directory of red reports");
        sub->add_option("--blue", flags.blue, "Directory of blue reports (team subdirectories allowed)");
        sub->add_option("--overlay", flags.overlay, "White team overlay file");
    };

    auto validate = app.add_subcommand("validate", "Parse and validate reports");
    add_catalog(validate);
    add_reports(validate);

    evaluate_flags ef;
    auto evaluate = app.add_subcommand("evaluate", "Score blue responses and write the evaluation document");
    add_catalog(evaluate);
    add_capec(evaluate);
    add_reports(evaluate);
    evaluate->add_option("--out", flags.out, "Evaluation document path (default: stdout)");
    evaluate->add_option("--svg-dir", flags.svg_dir, "Directory for per-team posture charts");
    evaluate->add_option("--dot-dir", ef.dot_dir, "Directory for Graphviz dumps of every tree");
    evaluate->add_option("--jobs", ef.jobs, "Concurrent pair evaluations")->check(CLI::Range(1u, 256u));

    std::string posture_in, posture_out, posture_svg;
    auto posture = app.add_subcommand("posture", "Re-aggregate postures from an evaluation document");
    posture->add_option("--in", posture_in, "Evaluation document")->required();
    posture->add_option("--out", posture_out, "Rewritten document (default: summary on stdout)");
    posture->add_option("--svg-dir", posture_svg, "Directory for per-team posture charts");

    gen_flags gf;
    auto gen = app.add_subcommand("gen", "Generate a synthetic exercise");
    add_catalog(gen);
    add_capec(gen);
    gen->add_option("--out", gf.out, "Output directory")->required();
    gen->add_option("--count", gf.count, "Number of red reports");
    gen->add_option("--teams", gf.teams, "Number of blue teams");
    gen->add_option("--seed", gf.seed, "Random seed");

    bool info_json = false;
    auto catalog = app.add_subcommand("catalog", "ATT&CK snapshot commands");
    catalog->require_subcommand(1);
    auto info = catalog->add_subcommand("info", "Snapshot statistics");
    add_catalog(info);
    info->add_flag("--json", info_json, "Machine-readable output");

    std::vector<std::string> argv_storage{"rangescore"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? ok : validation_failure;
    }

    try {
        if (*validate) return cmd_validate(flags, out, err);
        if (*evaluate) return cmd_evaluate(flags, ef, out, err);
        if (*posture) return cmd_posture(posture_in, posture_out, posture_svg, out);
        if (*gen) return cmd_gen(flags, gf, out);
        if (*info) return cmd_catalog_info(flags, info_json, out);
    } catch (const catalog_error& e) {
        err << "catalog error: " << e.what() << "\n";
        return catalog_failure;
    } catch (const io_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return io_failure;
    } catch (const validation_error& e) {
        err << "validation error: " << e.what() << "\n";
        return validation_failure;
    } catch (const config_error& e) {
        err << "configuration error: " << e.what() << "\n";
        return validation_failure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return io_failure;
    } catch (const error& e) {
        err << "error: " << e.what() << "\n";
        return validation_failure;
    }
    return ok;
}

} // namespace rangescore::cli
