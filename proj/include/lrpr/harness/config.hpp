///
/// \file config.hpp
///
/// Experiment configuration for the harness: JSON file with a single flat
/// `experiment` object. Every key is optional; missing keys keep the
/// per-experiment defaults returned by `default_config`.
///
#pragma once

#include "../altmin.hpp"
#include "../pst.hpp"
#include "../synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lrpr::harness
{

class ConfigError : public Error
{
public:
    using Error::Error;
};

enum class ExperimentKind
{
    recover,
    time_compare,
    rank_est,
    pca_linear,
    pst_demo,
};

inline const char* to_string(ExperimentKind k) noexcept
{
    switch (k)
    {
    case ExperimentKind::recover: return "recover";
    case ExperimentKind::time_compare: return "time_compare";
    case ExperimentKind::rank_est: return "rank_est";
    case ExperimentKind::pca_linear: return "pca_linear";
    case ExperimentKind::pst_demo: return "pst_demo";
    }
    return "?";
}

inline std::optional<ExperimentKind> parse_kind(std::string s)
{
    for (auto& c : s)
    {
        c = c == '-' ? '_' : c;
    }
    for (ExperimentKind k : {ExperimentKind::recover, ExperimentKind::time_compare,
                             ExperimentKind::rank_est, ExperimentKind::pca_linear,
                             ExperimentKind::pst_demo})
    {
        if (s == to_string(k))
        {
            return k;
        }
    }
    return std::nullopt;
}

struct TimeCompareOptions
{
    double rwf_m_per_n  = 4.0;   // baseline uses m = rwf_m_per_n · n
    Index rwf_max_iters = 1000;  // per column
    double target       = 1e-6;  // relative error both methods must reach
    double cap_ratio    = 5.0;   // stop the baseline once slower by this factor
    double min_speedup  = 2.0;
};

struct PstOptions
{
    Index q_full = 6000;
    std::vector<Index> change_times{2992};
    std::vector<double> change_se{0.8};
    std::vector<std::string> variants{"pst", "pst_all"};
    std::vector<std::string> check_variants;  // must reach success_se; empty: all variants
    bool control          = false;  // stationary detect-only run from an accurate estimate
    Index control_batches = 20;
    double control_eps    = 1e-3;
    double success_se     = 1e-3;
};

struct ExperimentConfig
{
    ExperimentKind kind = ExperimentKind::recover;
    SynthConfig synth;
    AltMinConfig altmin;
    TrackerConfig tracker;
    Index trials       = 100;
    Index keep_best    = 90;
    std::string out_dir = "out";
    Index threads      = 0;  // 0: LRPR_THREADS or hardware concurrency
    double rank_success_rate = 0.9;
    TimeCompareOptions time_compare;
    PstOptions pst;

    void validate() const
    {
        synth.validate();
        altmin.validate();
        if (kind == ExperimentKind::pst_demo)
        {
            tracker.validate();
            if (pst.change_times.size() != pst.change_se.size())
            {
                throw ConfigError("change_times and change_se must have equal length");
            }
            for (const auto& v : pst.check_variants)
            {
                if (std::find(pst.variants.begin(), pst.variants.end(), v) == pst.variants.end())
                {
                    throw ConfigError("check variant '" + v + "' is not among the variants run");
                }
            }
            for (const auto& v : pst.variants)
            {
                if (v != "pst" && v != "pst_all")
                {
                    throw ConfigError("unknown tracker variant '" + v + "'");
                }
            }
            if (pst.q_full < tracker.alpha)
            {
                throw ConfigError("q_full must hold at least one mini-batch");
            }
        }
        if (trials < 1)
        {
            throw ConfigError("trials must be >= 1");
        }
        if (keep_best < 1 || keep_best > trials)
        {
            throw ConfigError("keep_best must lie in [1, trials]");
        }
        if (threads < 0)
        {
            throw ConfigError("threads must be >= 0");
        }
    }
};

/// Defaults for each experiment, matching the synthetic setups they reproduce.
inline ExperimentConfig default_config(ExperimentKind kind)
{
    ExperimentConfig c;
    c.kind = kind;
    switch (kind)
    {
    case ExperimentKind::recover:
    case ExperimentKind::rank_est:
        c.synth.n = 200;
        c.synth.q = 400;
        c.synth.r = 4;
        c.synth.m = 80;
        break;
    case ExperimentKind::time_compare:
        c.synth.n   = 600;
        c.synth.q   = 1000;
        c.synth.r   = 4;
        c.synth.m   = 150;
        c.trials    = 10;
        c.keep_best = 10;
        break;
    case ExperimentKind::pca_linear:
        c.synth.n = 20;
        c.synth.q = 40;
        c.synth.r = 2;
        c.synth.m = 8;
        // Contraction is roughly 0.6 per iteration here; 30 stops near 1e-7.
        c.altmin.t_outer     = 60;
        c.synth.t_outer      = 60;
        c.altmin.success_tol = 1e-8;
        break;
    case ExperimentKind::pst_demo:
        c.synth.n   = 300;
        c.synth.r   = 2;
        c.synth.m   = 100;
        c.synth.q   = 250;
        c.tracker.rank = 2;
        break;
    }
    return c;
}

namespace detail
{
/// 1-based line of the first occurrence of `"key"` in `text`, 0 if absent.
inline std::size_t line_of_key(const std::string& text, const std::string& key)
{
    const auto pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos)
    {
        return 0;
    }
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

inline std::string at_line(std::size_t line)
{
    return line ? "line " + std::to_string(line) + ": " : std::string{};
}

template <typename E>
E enum_from(const nlohmann::json& v, const std::map<std::string, E>& names)
{
    const auto s  = v.get<std::string>();
    const auto it = names.find(s);
    if (it == names.end())
    {
        std::string allowed;
        for (const auto& [k, _] : names)
        {
            allowed += (allowed.empty() ? "" : ", ") + k;
        }
        throw ConfigError("unknown value '" + s + "' (expected one of: " + allowed + ")");
    }
    return it->second;
}

using Setter = std::function<void(const nlohmann::json&, ExperimentConfig&)>;

inline const std::map<std::string, Setter>& setters()
{
    using J = nlohmann::json;
    static const std::map<std::string, Setter> table = {
        {"kind", [](const J&, ExperimentConfig&) {}},  // handled before defaults
        {"n", [](const J& v, ExperimentConfig& c) { c.synth.n = v.get<Index>(); }},
        {"q", [](const J& v, ExperimentConfig& c) { c.synth.q = v.get<Index>(); }},
        {"r",
         [](const J& v, ExperimentConfig& c) {
             c.synth.r      = v.get<Index>();
             c.tracker.rank = c.synth.r;
         }},
        {"m", [](const J& v, ExperimentConfig& c) { c.synth.m = v.get<Index>(); }},
        {"seed", [](const J& v, ExperimentConfig& c) { c.synth.seed = v.get<std::uint64_t>(); }},
        {"trials", [](const J& v, ExperimentConfig& c) { c.trials = v.get<Index>(); }},
        {"keep_best", [](const J& v, ExperimentConfig& c) { c.keep_best = v.get<Index>(); }},
        {"threads", [](const J& v, ExperimentConfig& c) { c.threads = v.get<Index>(); }},
        {"out", [](const J& v, ExperimentConfig& c) { c.out_dir = v.get<std::string>(); }},
        {"t_outer",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.t_outer = v.get<Index>();
             c.synth.t_outer  = c.altmin.t_outer;
         }},
        {"sample_split",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.sample_split = v.get<bool>();
             c.synth.sample_split  = c.altmin.sample_split;
         }},
        {"rwf_schedule",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_schedule.kind = enum_from<RwfSchedule::Kind>(
                 v, {{"linear", RwfSchedule::Kind::linear},
                     {"logarithmic", RwfSchedule::Kind::logarithmic}});
             c.tracker.rwf_schedule.kind = c.altmin.rwf_schedule.kind;
         }},
        {"rwf_start",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_schedule.start  = v.get<Index>();
             c.tracker.rwf_schedule.start = c.altmin.rwf_schedule.start;
         }},
        {"rwf_end",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_schedule.end  = v.get<Index>();
             c.tracker.rwf_schedule.end = c.altmin.rwf_schedule.end;
         }},
        {"rwf_c_big",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_schedule.c_big  = v.get<double>();
             c.tracker.rwf_schedule.c_big = c.altmin.rwf_schedule.c_big;
         }},
        {"rwf_c_small",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_schedule.c_small  = v.get<double>();
             c.tracker.rwf_schedule.c_small = c.altmin.rwf_schedule.c_small;
         }},
        {"rwf_step",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_step  = v.get<double>();
             c.tracker.rwf_step = c.altmin.rwf_step;
         }},
        {"rwf_init_trunc",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rwf_init_trunc  = v.get<double>();
             c.tracker.rwf_init_trunc = c.altmin.rwf_init_trunc;
         }},
        {"rwf_warm_select",
         [](const J& v, ExperimentConfig& c) { c.altmin.rwf_warm_select = v.get<bool>(); }},
        {"cg_tol",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.cg_tol  = v.get<double>();
             c.tracker.cg_tol = c.altmin.cg_tol;
         }},
        {"cg_max_iters",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.cg_max_iters  = v.get<Index>();
             c.tracker.cg_max_iters = c.altmin.cg_max_iters;
         }},
        {"rank_mode",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.rank.mode = enum_from<RankMode>(v, {{"fixed", RankMode::fixed},
                                                          {"threshold", RankMode::threshold},
                                                          {"gap", RankMode::gap}});
         }},
        {"rank", [](const J& v, ExperimentConfig& c) { c.altmin.rank.fixed_rank = v.get<Index>(); }},
        {"omega", [](const J& v, ExperimentConfig& c) { c.altmin.rank.omega = v.get<double>(); }},
        {"omega_mult",
         [](const J& v, ExperimentConfig& c) { c.altmin.rank.omega_mult = v.get<double>(); }},
        {"c_y",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.c_y  = v.get<double>();
             c.tracker.c_y = c.altmin.c_y;
         }},
        {"threshold_mode",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.threshold_mode = enum_from<ThresholdMode>(
                 v, {{"global", ThresholdMode::global},
                     {"per_column", ThresholdMode::per_column}});
             c.tracker.threshold_mode = c.altmin.threshold_mode;
         }},
        {"init_mode",
         [](const J& v, ExperimentConfig& c) {
             c.altmin.init_mode = enum_from<InitMode>(
                 v, {{"spectral", InitMode::spectral}, {"random", InitMode::random}});
         }},
        {"stop_rel_change",
         [](const J& v, ExperimentConfig& c) { c.altmin.stop_rel_change = v.get<double>(); }},
        {"success_tol",
         [](const J& v, ExperimentConfig& c) { c.altmin.success_tol = v.get<double>(); }},
        {"rank_success_rate",
         [](const J& v, ExperimentConfig& c) { c.rank_success_rate = v.get<double>(); }},
        {"rwf_m_per_n",
         [](const J& v, ExperimentConfig& c) { c.time_compare.rwf_m_per_n = v.get<double>(); }},
        {"rwf_max_iters",
         [](const J& v, ExperimentConfig& c) { c.time_compare.rwf_max_iters = v.get<Index>(); }},
        {"target", [](const J& v, ExperimentConfig& c) { c.time_compare.target = v.get<double>(); }},
        {"cap_ratio",
         [](const J& v, ExperimentConfig& c) { c.time_compare.cap_ratio = v.get<double>(); }},
        {"min_speedup",
         [](const J& v, ExperimentConfig& c) { c.time_compare.min_speedup = v.get<double>(); }},
        {"alpha", [](const J& v, ExperimentConfig& c) { c.tracker.alpha = v.get<Index>(); }},
        {"t_epochs", [](const J& v, ExperimentConfig& c) { c.tracker.t_epochs = v.get<Index>(); }},
        {"omega_det",
         [](const J& v, ExperimentConfig& c) { c.tracker.omega_det = v.get<double>(); }},
        {"detection",
         [](const J& v, ExperimentConfig& c) {
             c.tracker.detection = enum_from<DetectionRule>(
                 v, {{"subspace_shift", DetectionRule::subspace_shift},
                     {"eigen_gap", DetectionRule::eigen_gap}});
         }},
        {"q_full", [](const J& v, ExperimentConfig& c) { c.pst.q_full = v.get<Index>(); }},
        {"change_times",
         [](const J& v, ExperimentConfig& c) { c.pst.change_times = v.get<std::vector<Index>>(); }},
        {"change_se",
         [](const J& v, ExperimentConfig& c) { c.pst.change_se = v.get<std::vector<double>>(); }},
        {"variants",
         [](const J& v, ExperimentConfig& c) {
             c.pst.variants = v.get<std::vector<std::string>>();
         }},
        {"check_variants",
         [](const J& v, ExperimentConfig& c) {
             c.pst.check_variants = v.get<std::vector<std::string>>();
         }},
        {"control", [](const J& v, ExperimentConfig& c) { c.pst.control = v.get<bool>(); }},
        {"control_batches",
         [](const J& v, ExperimentConfig& c) { c.pst.control_batches = v.get<Index>(); }},
        {"control_eps",
         [](const J& v, ExperimentConfig& c) { c.pst.control_eps = v.get<double>(); }},
        {"success_se", [](const J& v, ExperimentConfig& c) { c.pst.success_se = v.get<double>(); }},
    };
    return table;
}
}  // namespace detail

///
/// Parse a configuration document. `expected` (from the CLI subcommand)
/// supplies the kind when the file omits it and must agree when both exist.
/// Errors carry the offending line where it can be located.
///
inline ExperimentConfig parse_config(const std::string& text,
                                     std::optional<ExperimentKind> expected = std::nullopt)
{
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + static_cast<std::size_t>(
                                  std::count(text.begin(), text.begin() + upto, '\n'));
        throw ConfigError(detail::at_line(line) + "malformed JSON (" + e.what() + ")");
    }
    if (!doc.is_object() || !doc.contains("experiment") || !doc["experiment"].is_object())
    {
        throw ConfigError("config must be an object with an \"experiment\" object");
    }
    const auto& ex = doc["experiment"];

    std::optional<ExperimentKind> kind = expected;
    if (ex.contains("kind"))
    {
        const std::size_t line = detail::line_of_key(text, "kind");
        if (!ex["kind"].is_string())
        {
            throw ConfigError(detail::at_line(line) + "\"kind\" must be a string");
        }
        const auto parsed = parse_kind(ex["kind"].get<std::string>());
        if (!parsed)
        {
            throw ConfigError(detail::at_line(line) + "unknown experiment kind '" +
                              ex["kind"].get<std::string>() + "'");
        }
        if (expected && *parsed != *expected)
        {
            throw ConfigError(detail::at_line(line) + "config is for '" + to_string(*parsed) +
                              "' but the command runs '" + to_string(*expected) + "'");
        }
        kind = parsed;
    }
    if (!kind)
    {
        throw ConfigError("experiment kind missing");
    }

    ExperimentConfig cfg = default_config(*kind);
    const auto& table    = detail::setters();
    for (auto it = ex.begin(); it != ex.end(); ++it)
    {
        const std::size_t line = detail::line_of_key(text, it.key());
        const auto setter      = table.find(it.key());
        if (setter == table.end())
        {
            throw ConfigError(detail::at_line(line) + "unknown key \"" + it.key() + "\"");
        }
        try
        {
            setter->second(it.value(), cfg);
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(detail::at_line(line) + "bad value for \"" + it.key() +
                              "\": " + e.what());
        }
        catch (const ConfigError& e)
        {
            throw ConfigError(detail::at_line(line) + "\"" + it.key() + "\": " + e.what());
        }
    }
    try
    {
        cfg.validate();
    }
    catch (const ConfigError&)
    {
        throw;
    }
    catch (const Error& e)
    {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path,
                                    std::optional<ExperimentKind> expected = std::nullopt)
{
    std::ifstream in(path);
    if (!in)
    {
        throw ConfigError("cannot open config '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try
    {
        return parse_config(ss.str(), expected);
    }
    catch (const ConfigError& e)
    {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace lrpr::harness
