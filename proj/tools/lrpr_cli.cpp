// Command-line experiment runner.
//
//   lrpr recover      --config configs/recover.json --trials 100 --out out/recover
//   lrpr time-compare --trials 10
//   lrpr rank-est | pca-linear | pst-demo | selftest
//
// Exit codes: 0 success, 1 configuration or I/O error, 2 threshold failure.

#include "lrpr/harness/config.hpp"
#include "lrpr/harness/experiments.hpp"
#include "lrpr/harness/selftest.hpp"
#include "lrpr/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>

using namespace lrpr;
using namespace lrpr::harness;

namespace
{

constexpr int kOk          = 0;
constexpr int kConfigError = 1;
constexpr int kFailed      = 2;

struct CommonFlags
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<Index> trials;
    std::optional<std::string> out;
    std::optional<Index> threads;
};

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("--config", f.config, "JSON experiment file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "base seed");
    sub->add_option("--trials", f.trials, "number of trials");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--threads", f.threads, "worker threads (0: automatic)");
}

ExperimentConfig resolve(ExperimentKind kind, const CommonFlags& f)
{
    ExperimentConfig cfg = f.config.empty() ? default_config(kind) : load_config(f.config, kind);
    if (f.seed)
    {
        cfg.synth.seed = *f.seed;
    }
    if (f.trials)
    {
        // keep the best-k fraction when only the trial count changes
        const double frac = static_cast<double>(cfg.keep_best) / static_cast<double>(cfg.trials);
        cfg.trials        = *f.trials;
        cfg.keep_best = std::max<Index>(1, static_cast<Index>(std::floor(frac * static_cast<double>(cfg.trials) + 1e-9)));
    }
    if (f.out)
    {
        cfg.out_dir = *f.out;
    }
    if (f.threads)
    {
        cfg.threads = *f.threads;
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

void write_summary(const ExperimentConfig& cfg, nlohmann::json summary)
{
    summary["experiment"] = to_string(cfg.kind);
    summary["seed"]       = cfg.synth.seed;
    summary["trials"]     = cfg.trials;
    summary["keep_best"]  = cfg.keep_best;
    write_file(cfg.out_dir, "summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
}

int run_recover_cmd(const ExperimentConfig& cfg)
{
    const RecoverReport rep = run_recover(cfg);
    write_file(cfg.out_dir, "trials.csv", [&](std::ostream& os) { write_trials_csv(os, rep.trials); });
    write_file(cfg.out_dir, "aggregate.csv",
               [&](std::ostream& os) { write_aggregate_csv(os, rep.aggregate); });
    if (rep.first_uhat.size())
    {
        io::save_csv(cfg.out_dir + "/uhat_trial0.csv", rep.first_uhat);
        io::save_binary(cfg.out_dir + "/xhat_trial0.bin", rep.first_xhat);
    }
    std::cout << to_string(cfg.kind) << ": n=" << cfg.synth.n << " q=" << cfg.synth.q
              << " r=" << cfg.synth.r << " m=" << cfg.synth.m << " trials=" << cfg.trials << '\n'
              << "  converged trials: " << rep.converged << '/' << cfg.trials << '\n'
              << "  best-" << cfg.keep_best << " final relative mat-dist: " << rep.final_error
              << " (threshold " << cfg.altmin.success_tol << ")\n"
              << "  " << (rep.passed ? "PASS" : "FAIL") << '\n';
    write_summary(cfg, {{"final_matdist_rel", rep.final_error},
                        {"converged", rep.converged},
                        {"passed", rep.passed}});
    return rep.passed ? kOk : kFailed;
}

int run_rank_cmd(const ExperimentConfig& cfg)
{
    const RankReport rep = run_rank_est(cfg);
    write_file(cfg.out_dir, "rank_trials.csv", [&](std::ostream& os) { write_rank_csv(os, rep.trials); });
    write_file(cfg.out_dir, "eigenvalues.csv", [&](std::ostream& os) { write_eigen_csv(os, rep.trials); });
    std::cout << "rank_est: n=" << cfg.synth.n << " q=" << cfg.synth.q << " r=" << cfg.synth.r
              << " m=" << cfg.synth.m << " trials=" << cfg.trials << '\n'
              << "  threshold rule correct: " << rep.threshold_hits << '/' << cfg.trials << '\n'
              << "  gap rule correct:       " << rep.gap_hits << '/' << cfg.trials << '\n'
              << "  " << (rep.passed ? "PASS" : "FAIL") << '\n';
    write_summary(cfg, {{"threshold_hits", rep.threshold_hits},
                        {"gap_hits", rep.gap_hits},
                        {"passed", rep.passed}});
    return rep.passed ? kOk : kFailed;
}

int run_time_cmd(const ExperimentConfig& cfg)
{
    const TimeCompareReport rep = run_time_compare(cfg);
    write_file(cfg.out_dir, "time_compare.csv",
               [&](std::ostream& os) { write_time_compare_csv(os, rep.trials); });
    std::cout << "time_compare: n=" << cfg.synth.n << " q=" << cfg.synth.q << " r=" << cfg.synth.r
              << " m=" << cfg.synth.m << " vs RWF m=" << cfg.time_compare.rwf_m_per_n << "n\n";
    for (const auto& t : rep.trials)
    {
        std::cout << "  trial " << t.trial << ": altmin " << t.altmin_time_s << " s, rwf "
                  << (t.rwf_censored ? ">" : "") << t.rwf_time_s << " s, speed-up "
                  << (t.rwf_censored ? ">=" : "") << t.ratio() << '\n';
    }
    std::cout << "  median speed-up: " << rep.median_ratio << " (threshold "
              << cfg.time_compare.min_speedup << ")\n"
              << "  " << (rep.passed ? "PASS" : "FAIL") << '\n';
    write_summary(cfg, {{"median_speedup", rep.median_ratio}, {"passed", rep.passed}});
    return rep.passed ? kOk : kFailed;
}

int run_pst_cmd(const ExperimentConfig& cfg)
{
    if (cfg.pst.control)
    {
        const ControlReport rep = run_control(cfg);
        write_file(cfg.out_dir, "control.csv", [&](std::ostream& os) { write_control_csv(os, rep.runs); });
        std::cout << "pst_demo (stationary control): runs without detection " << rep.clean_runs
                  << '/' << cfg.trials << '\n'
                  << "  " << (rep.passed ? "PASS" : "FAIL") << '\n';
        write_summary(cfg, {{"clean_runs", rep.clean_runs}, {"passed", rep.passed}});
        return rep.passed ? kOk : kFailed;
    }
    const PstReport rep = run_pst_demo(cfg);
    write_file(cfg.out_dir, "pst_trials.csv", [&](std::ostream& os) { write_pst_trials_csv(os, rep.trials); });
    write_file(cfg.out_dir, "pst_aggregate.csv", [&](std::ostream& os) {
        write_pst_aggregate_csv(os, rep.variants, cfg.tracker.alpha);
    });
    write_file(cfg.out_dir, "pst_delays.csv", [&](std::ostream& os) {
        write_delay_histogram_csv(os, rep.variants, cfg.tracker.alpha);
    });
    nlohmann::json summary;
    std::cout << "pst_demo: n=" << cfg.synth.n << " r=" << cfg.synth.r << " m=" << cfg.synth.m
              << " alpha=" << cfg.tracker.alpha << " trials=" << cfg.trials << '\n';
    for (const auto& v : rep.variants)
    {
        std::cout << "  " << v.variant << ": final SE (best " << v.n_kept << ") " << v.final_se
                  << ", detections " << v.detections.detected << ", missed " << v.detections.missed
                  << ", false " << v.detections.false_alarms << ", max delay "
                  << v.detections.max_delay << '\n';
        summary[v.variant] = {{"final_se", v.final_se},
                              {"detected", v.detections.detected},
                              {"missed", v.detections.missed},
                              {"false_alarms", v.detections.false_alarms},
                              {"max_delay", v.detections.max_delay}};
    }
    std::cout << "  " << (rep.passed ? "PASS" : "FAIL") << '\n';
    summary["passed"] = rep.passed;
    write_summary(cfg, summary);
    return rep.passed ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Low-rank phase retrieval experiments"};
    app.require_subcommand(1);

    struct Sub
    {
        const char* name;
        const char* help;
        ExperimentKind kind;
    };
    const Sub subs[] = {
        {"recover", "AltMin recovery battery with best-k aggregation", ExperimentKind::recover},
        {"time-compare", "time to accuracy against standalone RWF", ExperimentKind::time_compare},
        {"rank-est", "rank estimation study", ExperimentKind::rank_est},
        {"pca-linear", "phase-known (compressive PCA) battery", ExperimentKind::pca_linear},
        {"pst-demo", "subspace tracking with a planted change", ExperimentKind::pst_demo},
    };
    CommonFlags flags;
    std::optional<ExperimentKind> chosen;
    for (const auto& s : subs)
    {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, flags);
        sub->callback([&chosen, k = s.kind] { chosen = k; });
    }
    bool selftest = false;
    app.add_subcommand("selftest", "run the invariant suite")->callback([&] { selftest = true; });

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (selftest)
    {
        const auto results = run_selftest(&std::cout);
        const auto failed  = std::count_if(results.begin(), results.end(),
                                           [](const CheckResult& r) { return !r.passed; });
        std::cout << results.size() - static_cast<std::size_t>(failed) << '/' << results.size()
                  << " checks passed\n";
        return failed == 0 ? kOk : kFailed;
    }

    ExperimentConfig cfg;
    try
    {
        cfg = resolve(*chosen, flags);
    }
    catch (const ConfigError& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }

    try
    {
        switch (cfg.kind)
        {
        case ExperimentKind::recover:
        case ExperimentKind::pca_linear: return run_recover_cmd(cfg);
        case ExperimentKind::rank_est: return run_rank_cmd(cfg);
        case ExperimentKind::time_compare: return run_time_cmd(cfg);
        case ExperimentKind::pst_demo: return run_pst_cmd(cfg);
        }
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}
