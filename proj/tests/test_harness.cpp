#include <lrpr/harness/config.hpp>
#include <lrpr/harness/experiments.hpp>
#include <lrpr/harness/trials.hpp>

#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <stdexcept>

using namespace lrpr;
using namespace lrpr::harness;

namespace
{

std::string message_of(const std::string& text, std::optional<ExperimentKind> kind = {})
{
    try
    {
        parse_config(text, kind);
    }
    catch (const ConfigError& e)
    {
        return e.what();
    }
    return {};
}

TrialRecord record(Index id, std::vector<double> errors)
{
    TrialRecord r;
    r.trial = id;
    for (std::size_t t = 0; t < errors.size(); ++t)
    {
        IterationRecord row;
        row.iter        = static_cast<Index>(t);
        row.elapsed_s   = 0.1 * static_cast<double>(t + 1);
        row.se          = errors[t];
        row.matdist_rel = errors[t];
        r.rows.push_back(row);
    }
    return r;
}

ExperimentConfig tiny_recover()
{
    ExperimentConfig cfg = default_config(ExperimentKind::recover);
    cfg.synth.n          = 20;
    cfg.synth.q          = 30;
    cfg.synth.r          = 2;
    cfg.synth.m          = 20;
    cfg.trials           = 4;
    cfg.keep_best        = 3;
    cfg.altmin.t_outer   = 6;
    cfg.altmin.rank.fixed_rank = 2;
    return cfg;
}

/// Aggregate CSV with the elapsed column blanked.
std::string timeless_aggregate(const std::vector<AggregateRow>& rows)
{
    std::vector<AggregateRow> copy = rows;
    for (auto& r : copy)
    {
        r.mean_elapsed_s = 0.0;
    }
    std::ostringstream os;
    write_aggregate_csv(os, copy);
    return os.str();
}

}  // namespace

TEST(Config, DefaultsPerKind)
{
    const ExperimentConfig rec = parse_config(R"({"experiment": {"kind": "recover"}})");
    EXPECT_EQ(rec.synth.n, 200);
    EXPECT_EQ(rec.synth.q, 400);
    EXPECT_EQ(rec.synth.m, 80);
    EXPECT_EQ(rec.trials, 100);
    EXPECT_EQ(rec.keep_best, 90);
    const ExperimentConfig tc = parse_config(R"({"experiment": {}})", ExperimentKind::time_compare);
    EXPECT_EQ(tc.synth.n, 600);
    EXPECT_EQ(tc.synth.m, 150);
}

TEST(Config, FlatKeysOverrideDefaults)
{
    const ExperimentConfig cfg = parse_config(R"({"experiment": {
        "kind": "pst-demo", "n": 50, "alpha": 40, "omega_det": 0.5,
        "change_times": [100, 300], "change_se": [0.8, 0.01], "q_full": 400,
        "variants": ["pst_all"], "check_variants": ["pst_all"]}})");
    EXPECT_EQ(cfg.kind, ExperimentKind::pst_demo);
    EXPECT_EQ(cfg.synth.n, 50);
    EXPECT_EQ(cfg.tracker.alpha, 40);
    EXPECT_DOUBLE_EQ(cfg.tracker.omega_det, 0.5);
    ASSERT_EQ(cfg.pst.change_times.size(), 2u);
    EXPECT_EQ(cfg.pst.change_times[1], 300);
}

TEST(Config, UnknownKeyNamesItsLine)
{
    const std::string msg = message_of("{\n  \"experiment\": {\n    \"n\": 20,\n    \"bogus\": 1\n  }\n}\n",
                                       ExperimentKind::recover);
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
}

TEST(Config, MalformedJsonNamesItsLine)
{
    const std::string msg = message_of("{\n  \"experiment\": {\n    \"n\": ,\n  }\n}\n");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Config, WrongValueTypeNamesItsLine)
{
    const std::string msg =
        message_of("{\"experiment\": {\n\"kind\": \"recover\",\n\"trials\": \"many\"}}");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Config, KindMismatchRejected)
{
    EXPECT_NE(message_of(R"({"experiment": {"kind": "recover"}})", ExperimentKind::rank_est), "");
    EXPECT_NE(message_of(R"({"experiment": {"kind": "nonsense"}})"), "");
    EXPECT_NE(message_of(R"({"experiment": {}})"), "");
    EXPECT_NE(message_of(R"([1, 2])"), "");
}

TEST(Config, ValidationErrors)
{
    EXPECT_NE(message_of(R"({"experiment": {"kind": "recover", "trials": 5, "keep_best": 6}})"), "");
    EXPECT_NE(message_of(R"({"experiment": {"kind": "recover", "r": 500}})"), "");
    EXPECT_NE(message_of(R"({"experiment": {"kind": "pst_demo", "change_times": [1], "change_se": []}})"), "");
    EXPECT_NE(message_of(R"({"experiment": {"kind": "recover", "rank_mode": "psychic"}})"), "");
}

TEST(Config, KindNamesAcceptDashes)
{
    EXPECT_EQ(parse_kind("time-compare"), ExperimentKind::time_compare);
    EXPECT_EQ(parse_kind("pca_linear"), ExperimentKind::pca_linear);
    EXPECT_FALSE(parse_kind("selftest").has_value());
}

TEST(Config, ShippedSamplesLoad)
{
    const std::string dir = LRPR_CONFIG_DIR;
    const std::pair<const char*, ExperimentKind> files[] = {
        {"recover.json", ExperimentKind::recover},
        {"time_compare.json", ExperimentKind::time_compare},
        {"rank_est.json", ExperimentKind::rank_est},
        {"pca_linear.json", ExperimentKind::pca_linear},
        {"pst_large_change.json", ExperimentKind::pst_demo},
        {"pst_small_change.json", ExperimentKind::pst_demo},
        {"pst_control.json", ExperimentKind::pst_demo},
    };
    for (const auto& [name, kind] : files)
    {
        EXPECT_NO_THROW(load_config(dir + "/" + name, kind)) << name;
    }
    const ExperimentConfig small = load_config(dir + "/pst_small_change.json");
    ASSERT_EQ(small.pst.change_se.size(), 1u);
    EXPECT_DOUBLE_EQ(small.pst.change_se[0], 0.01);
}

TEST(Seeds, TrialSeedsAreDistinct)
{
    std::set<std::uint64_t> seen;
    for (Index t = 0; t < 1000; ++t)
    {
        seen.insert(trial_seed(42, t));
    }
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_NE(trial_seed(1, 0), trial_seed(2, 0));
}

TEST(RunIndexed, ResultsAreOrderedByIndex)
{
    const auto out = run_indexed<Index>(50, 4, [](Index i) { return i * i; });
    for (Index i = 0; i < 50; ++i)
    {
        EXPECT_EQ(out[static_cast<std::size_t>(i)], i * i);
    }
}

TEST(RunIndexed, FirstExceptionIsRethrown)
{
    EXPECT_THROW(run_indexed<int>(20, 3,
                                  [](Index i) -> int {
                                      if (i == 7)
                                      {
                                          throw std::runtime_error("boom");
                                      }
                                      return 0;
                                  }),
                 std::runtime_error);
}

TEST(SelectBest, LowestFinalErrorsWithTiesByTrialId)
{
    const std::vector<TrialRecord> recs = {record(0, {1.0, 0.5}), record(1, {1.0, 0.1}),
                                           record(2, {1.0, 0.5}), record(3, {1.0, 0.9})};
    const auto kept = select_best(recs, 2);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0], 0u);
    EXPECT_EQ(kept[1], 1u);
}

TEST(SelectBest, EmptyOrNanTrialsRankLast)
{
    std::vector<TrialRecord> recs = {record(0, {}), record(1, {std::nan("")}), record(2, {3.0})};
    const auto kept = select_best(recs, 1);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0], 2u);
}

TEST(Aggregate, SingleTrialIsIdentity)
{
    const TrialRecord r = record(0, {0.5, 0.25, 0.125});
    const auto agg      = aggregate_best({r}, 1);
    ASSERT_EQ(agg.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t)
    {
        EXPECT_EQ(agg[t].mean_matdist_rel, r.rows[t].matdist_rel);
        EXPECT_EQ(agg[t].mean_se, r.rows[t].se);
        EXPECT_EQ(agg[t].mean_elapsed_s, r.rows[t].elapsed_s);
        EXPECT_EQ(agg[t].n_kept, 1);
    }
}

TEST(Aggregate, ShortTrialsContributeTheirLastRow)
{
    const std::vector<TrialRecord> recs = {record(0, {0.4, 0.2}), record(1, {0.6, 0.3, 0.1}),
                                           record(2, {9.0})};
    const auto agg = aggregate_best(recs, 2);
    ASSERT_EQ(agg.size(), 3u);
    EXPECT_DOUBLE_EQ(agg[0].mean_matdist_rel, 0.5);
    EXPECT_DOUBLE_EQ(agg[1].mean_matdist_rel, 0.25);
    EXPECT_DOUBLE_EQ(agg[2].mean_matdist_rel, 0.15);
    EXPECT_EQ(agg[2].n_kept, 2);
}

TEST(Csv, SchemasMatchDocumentedHeaders)
{
    std::ostringstream trials, agg;
    write_trials_csv(trials, {record(3, {0.5})});
    write_aggregate_csv(agg, aggregate_best({record(3, {0.5})}, 1));
    EXPECT_EQ(trials.str().substr(0, trials.str().find('\n')),
              "trial,seed,iter,elapsed_s,se,matdist_rel,status");
    EXPECT_EQ(agg.str().substr(0, agg.str().find('\n')),
              "iter,mean_elapsed_s,mean_se,mean_matdist_rel,n_kept");
}

TEST(Median, OddAndEven)
{
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
    EXPECT_TRUE(std::isnan(median({})));
}

TEST(TimeToTarget, FirstRowAtOrBelowTarget)
{
    const TrialRecord r = record(0, {1e-2, 1e-5, 1e-7, 1e-9});
    EXPECT_DOUBLE_EQ(time_to_target(r.rows, 1e-6), 0.3);
    EXPECT_TRUE(std::isinf(time_to_target(r.rows, 1e-12)));
}

TEST(MatchDetections, DelayAndFalseAlarms)
{
    // Change at 2992 with batches of 250: the batch at 2750 holds post-change
    // columns, the batch at 3000 is eight columns late.
    DetectionSummary s = match_detections({3000}, {2992}, 250);
    EXPECT_EQ(s.detected, 1);
    EXPECT_EQ(s.max_delay, 8);
    s = match_detections({2750}, {2992}, 250);
    EXPECT_EQ(s.detected, 1);
    EXPECT_EQ(s.max_delay, 0);
    s = match_detections({1000, 3000, 3250}, {2992}, 250);
    EXPECT_EQ(s.detected, 1);
    EXPECT_EQ(s.false_alarms, 2);
    s = match_detections({}, {2992}, 250);
    EXPECT_EQ(s.missed, 1);
}

TEST(Experiments, RecoverIsThreadCountIndependent)
{
    ExperimentConfig cfg = tiny_recover();
    cfg.threads          = 1;
    const RecoverReport one = run_recover(cfg);
    cfg.threads             = 3;
    const RecoverReport three = run_recover(cfg);
    EXPECT_EQ(timeless_aggregate(one.aggregate), timeless_aggregate(three.aggregate));
    ASSERT_EQ(one.trials.size(), three.trials.size());
    for (std::size_t i = 0; i < one.trials.size(); ++i)
    {
        EXPECT_EQ(one.trials[i].seed, three.trials[i].seed);
        EXPECT_EQ(one.trials[i].final_error(), three.trials[i].final_error());
    }
    EXPECT_EQ(one.first_xhat, three.first_xhat);
}

TEST(Experiments, LinearRecoveryPasses)
{
    ExperimentConfig cfg = default_config(ExperimentKind::pca_linear);
    cfg.trials           = 3;
    cfg.keep_best        = 3;
    cfg.threads          = 1;
    cfg.altmin.rank.fixed_rank = 2;
    const RecoverReport rep = run_recover(cfg);
    EXPECT_TRUE(rep.passed) << rep.final_error;
}

TEST(Experiments, PerturbedBasisHitsRequestedAccuracy)
{
    const BasisMatrix u = random_basis(50, 2, 3);
    const BasisMatrix p = perturb_basis(u, 1e-3, 4);
    const double se     = subspace_error(u, p);
    EXPECT_LE(se, 1e-3);
    EXPECT_GT(se, 1e-4);
}
