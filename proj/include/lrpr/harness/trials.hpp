///
/// \file trials.hpp
///
/// Seeded trial batteries: worker pool, best-k aggregation and CSV output.
///
#pragma once

#include "../core.hpp"
#include "../random.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace lrpr::harness
{

struct TrialRecord
{
    Index trial        = 0;
    std::uint64_t seed = 0;
    std::vector<IterationRecord> rows;
    RecoveryStatus status = RecoveryStatus::failed;

    /// Final relative error; +inf for trials without rows or a NaN error.
    double final_error() const
    {
        if (rows.empty() || std::isnan(rows.back().matdist_rel))
        {
            return std::numeric_limits<double>::infinity();
        }
        return rows.back().matdist_rel;
    }
};

struct AggregateRow
{
    Index iter              = 0;
    double mean_elapsed_s   = 0.0;
    double mean_se          = 0.0;
    double mean_matdist_rel = 0.0;
    Index n_kept            = 0;
};

/// Seed of trial `t` derived from the experiment seed.
inline std::uint64_t trial_seed(std::uint64_t base, Index t)
{
    return stream_seed(tagged_seed(base, StreamTag::trial), static_cast<std::uint64_t>(t));
}

/// Worker count: explicit value, then `LRPR_THREADS`, then hardware concurrency.
inline Index resolve_threads(Index requested)
{
    if (requested > 0)
    {
        return requested;
    }
    if (const char* env = std::getenv("LRPR_THREADS"))
    {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0)
        {
            return static_cast<Index>(v);
        }
    }
    return std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
}

///
/// Run `fn(i)` for i in [0, count) on `threads` workers. Results are stored
/// by index, so output does not depend on scheduling. The first exception
/// thrown by any task is rethrown after all workers stop.
///
template <typename Result, typename Fn>
std::vector<Result> run_indexed(Index count, Index threads, Fn&& fn)
{
    std::vector<Result> out(static_cast<std::size_t>(count));
    std::atomic<Index> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (Index i = next++; i < count; i = next++)
        {
            try
            {
                out[static_cast<std::size_t>(i)] = fn(i);
            }
            catch (...)
            {
                std::lock_guard lock(failure_mu);
                if (!failure)
                {
                    failure = std::current_exception();
                }
                next = count;
            }
        }
    };
    const Index nthreads = std::min(std::max<Index>(1, threads), std::max<Index>(1, count));
    if (nthreads == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (Index t = 0; t < nthreads; ++t)
        {
            pool.emplace_back(worker);
        }
    }
    if (failure)
    {
        std::rethrow_exception(failure);
    }
    return out;
}

///
/// Indices of the `keep` records with the smallest `score`, ties broken by
/// trial id (the record order).
///
template <typename Record, typename Score>
std::vector<std::size_t> select_best(const std::vector<Record>& records, Index keep, Score&& score)
{
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return score(records[a]) < score(records[b]);
    });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max<Index>(keep, 0))));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::vector<std::size_t> select_best(const std::vector<TrialRecord>& records, Index keep)
{
    return select_best(records, keep, [](const TrialRecord& r) { return r.final_error(); });
}

///
/// Per-iteration means over the best `keep` trials. A kept trial with fewer
/// rows than `t` contributes its last row; trials without rows are skipped.
///
inline std::vector<AggregateRow> aggregate_best(const std::vector<TrialRecord>& records, Index keep)
{
    const auto kept = select_best(records, keep);
    std::size_t len = 0;
    for (auto i : kept)
    {
        len = std::max(len, records[i].rows.size());
    }
    std::vector<AggregateRow> out;
    for (std::size_t t = 0; t < len; ++t)
    {
        AggregateRow row;
        row.iter = static_cast<Index>(t);
        for (auto i : kept)
        {
            const auto& rows = records[i].rows;
            if (rows.empty())
            {
                continue;
            }
            const auto& r = rows[std::min(t, rows.size() - 1)];
            row.mean_elapsed_s += r.elapsed_s;
            row.mean_se += r.se;
            row.mean_matdist_rel += r.matdist_rel;
            ++row.n_kept;
        }
        if (row.n_kept > 0)
        {
            const double inv = 1.0 / static_cast<double>(row.n_kept);
            row.mean_elapsed_s *= inv;
            row.mean_se *= inv;
            row.mean_matdist_rel *= inv;
        }
        out.push_back(row);
    }
    return out;
}

//------------------------------------------------------------------------------
// CSV output
//------------------------------------------------------------------------------

inline std::ostream& full_precision(std::ostream& os)
{
    return os << std::setprecision(std::numeric_limits<double>::max_digits10);
}

inline void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records)
{
    full_precision(os) << "trial,seed,iter,elapsed_s,se,matdist_rel,status\n";
    for (const auto& rec : records)
    {
        if (rec.rows.empty())
        {
            os << rec.trial << ',' << rec.seed << ",,,,," << to_string(rec.status) << '\n';
            continue;
        }
        for (const auto& r : rec.rows)
        {
            os << rec.trial << ',' << rec.seed << ',' << r.iter << ',' << r.elapsed_s << ','
               << r.se << ',' << r.matdist_rel << ',' << to_string(rec.status) << '\n';
        }
    }
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows)
{
    full_precision(os) << "iter,mean_elapsed_s,mean_se,mean_matdist_rel,n_kept\n";
    for (const auto& r : rows)
    {
        os << r.iter << ',' << r.mean_elapsed_s << ',' << r.mean_se << ',' << r.mean_matdist_rel
           << ',' << r.n_kept << '\n';
    }
}

/// Open `dir/name` for writing, creating `dir` if needed.
inline std::ofstream open_output(const std::string& dir, const std::string& name)
{
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream os(path);
    if (!os)
    {
        throw Error("cannot write '" + path.string() + "'");
    }
    return os;
}

template <typename Writer>
void write_file(const std::string& dir, const std::string& name, Writer&& write)
{
    auto os = open_output(dir, name);
    write(os);
    if (!os)
    {
        throw Error("write failed for '" + name + "'");
    }
}

inline double median(std::vector<double> v)
{
    if (v.empty())
    {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace lrpr::harness
