#pragma once

// Two-phase distributed load balancing of robot counts over GVG cells.
//
// Phase one averages the per-cell load x = K / e with the least-loaded
// neighbour until the loads agree, which fixes an ideal (fractional) robot
// count K* per cell. Phase two works on the integer deviations
// c = K - floor(K*) with an offer / accept / pass exchange of single robots.
// Both phases are simulated as synchronous rounds; every random tie-break is
// drawn from a stream keyed by (seed, phase, round, cell), so results do not
// depend on the order in which cells are evaluated.

#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace gvgcov
{
    using CellAdjacency = std::vector<std::vector<std::size_t>>;

    struct CellLoadState
    {
        std::size_t cell_id = 0;
        long K = 0;
        double e = 1.0;
        double x = 0.0;
        double K_star = 0.0;
        long c = 0;
    };

    struct BalanceConfig
    {
        std::size_t t1 = 200;
        std::size_t t2 = 280;
        std::uint64_t seed = 0;
        bool guard_min_robots = true;
        /// Rescale K* so that it sums to the robot total. Averaging conserves
        /// the sum of loads, not of robots, so e_i x_i(t1) alone generally does
        /// not add up to K.
        bool normalize_ideal = true;
    };

    struct RoundMessage
    {
        enum class Kind
        {
            Offer,
            Accept,
            Transfer,
        };
        Kind kind = Kind::Offer;
        std::size_t sender = 0;
        std::size_t receiver = 0;
        /// Offer: the sender's deviation. Transfer: robots moved (always 1).
        long value = 0;
    };

    inline const char *to_string(RoundMessage::Kind k) noexcept
    {
        switch (k)
        {
        case RoundMessage::Kind::Offer: return "offer";
        case RoundMessage::Kind::Accept: return "accept";
        case RoundMessage::Kind::Transfer: return "transfer";
        }
        return "?";
    }

    struct CellRoundRow
    {
        std::size_t cell_id = 0;
        long K = 0;
        double x = 0.0;
        std::optional<long> c;
        std::size_t offers_sent = 0;
        std::size_t transfers = 0;
    };

    struct RoundRecord
    {
        std::size_t round = 0;
        std::vector<CellRoundRow> rows;
        std::vector<RoundMessage> messages;
    };

    struct BalanceTrace
    {
        std::vector<RoundRecord> rounds;
        std::vector<std::string> log;
        std::size_t guard_skips = 0;
    };

    namespace detail
    {
        enum : std::uint64_t
        {
            kAveragingStream = 1,
            kOfferStream = 2,
            kAcceptStream = 3,
        };

        /// Uniform pick among candidates, keyed so any evaluation order agrees.
        inline std::size_t pick(const std::vector<std::size_t> &candidates, std::uint64_t seed, std::uint64_t stream,
                                std::size_t round, std::size_t cell)
        {
            if (candidates.size() == 1)
                return candidates.front();
            Rng rng(derive_seed(seed, {stream, round, cell}));
            return candidates[rng.below(candidates.size())];
        }

        inline void require_connected(const CellAdjacency &adj)
        {
            if (adj.empty())
                return;
            std::vector<bool> seen(adj.size(), false);
            std::vector<std::size_t> stack{0};
            seen[0] = true;
            while (!stack.empty())
            {
                const std::size_t c = stack.back();
                stack.pop_back();
                for (std::size_t n : adj[c])
                {
                    if (n >= adj.size())
                        throw Error(ErrorCode::InvalidInput, "adjacency references unknown cell");
                    if (!seen[n])
                    {
                        seen[n] = true;
                        stack.push_back(n);
                    }
                }
            }
            if (std::find(seen.begin(), seen.end(), false) != seen.end())
                throw Error(ErrorCode::DisconnectedGraph, "cell graph is not connected");
        }

        /// Strictly lighter beyond rounding noise. Without the tolerance, pairs
        /// a few ulps apart keep proposing to each other and, served first by
        /// id, starve the pairs that still carry real imbalance.
        inline bool lighter(double a, double b) { return a < b - 1e-12 * std::max(1.0, std::abs(b)); }

        inline long floor_long(double v) { return static_cast<long>(std::floor(v)); }

        inline CellRoundRow row_of(const CellLoadState &s, bool with_c)
        {
            CellRoundRow r;
            r.cell_id = s.cell_id;
            r.K = s.K;
            r.x = s.x;
            if (with_c)
                r.c = s.c;
            return r;
        }
    }

    /// States with K and e filled in and x = K / e.
    inline std::vector<CellLoadState> make_load_states(const std::vector<long> &counts, const std::vector<double> &masses)
    {
        if (counts.size() != masses.size())
            throw Error(ErrorCode::InvalidInput, "counts and masses differ in length");
        std::vector<CellLoadState> states(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i)
        {
            if (!(masses[i] > 0.0))
                throw Error(ErrorCode::NonpositiveMass, "cell " + std::to_string(i) + " has nonpositive mass");
            states[i].cell_id = i;
            states[i].K = counts[i];
            states[i].e = masses[i];
            states[i].x = static_cast<double>(counts[i]) / masses[i];
        }
        return states;
    }

    /// One synchronous averaging round. Each cell proposes to its least-loaded
    /// neighbour when that neighbour is strictly lighter; every cell joins at
    /// most one pair per round. Proposals are served largest load gap first
    /// (ties by proposer id), so the steepest edge always averages and the
    /// load spread keeps shrinking. Returns the number of pairs that averaged.
    inline std::size_t averaging_round(std::vector<CellLoadState> &states, const CellAdjacency &adj, std::uint64_t seed,
                                       std::size_t round)
    {
        const std::size_t n = states.size();
        struct Proposal
        {
            std::size_t from;
            std::size_t to;
            double gap;
        };
        std::vector<Proposal> proposals;
        for (std::size_t i = 0; i < n; ++i)
        {
            if (adj[i].empty())
                continue;
            double best = std::numeric_limits<double>::infinity();
            std::vector<std::size_t> ties;
            for (std::size_t j : adj[i])
            {
                if (states[j].x < best)
                {
                    best = states[j].x;
                    ties.assign(1, j);
                }
                else if (states[j].x == best)
                    ties.push_back(j);
            }
            const std::size_t j = detail::pick(ties, seed, detail::kAveragingStream, round, i);
            if (detail::lighter(states[j].x, states[i].x))
                proposals.push_back({i, j, states[i].x - states[j].x});
        }
        std::stable_sort(proposals.begin(), proposals.end(),
                         [](const Proposal &a, const Proposal &b) { return a.gap > b.gap; });
        std::vector<bool> matched(n, false);
        std::size_t pairs = 0;
        for (const Proposal &p : proposals)
        {
            if (matched[p.from] || matched[p.to])
                continue;
            matched[p.from] = matched[p.to] = true;
            const double mean = 0.5 * (states[p.from].x + states[p.to].x);
            states[p.from].x = mean;
            states[p.to].x = mean;
            ++pairs;
        }
        return pairs;
    }

    /// Runs t1 averaging rounds and sets K* (and the initial deviation c).
    inline std::vector<CellLoadState> ideal_loads(std::vector<CellLoadState> states, const CellAdjacency &adj,
                                                  const BalanceConfig &cfg, BalanceTrace *trace = nullptr)
    {
        if (adj.size() != states.size())
            throw Error(ErrorCode::InvalidInput, "adjacency size does not match cell count");
        for (const auto &s : states)
            if (!(s.e > 0.0))
                throw Error(ErrorCode::NonpositiveMass, "cell " + std::to_string(s.cell_id) + " has nonpositive mass");
        detail::require_connected(adj);
        for (std::size_t t = 0; t < cfg.t1; ++t)
        {
            if (trace)
            {
                RoundRecord rec;
                rec.round = t;
                for (const auto &s : states)
                    rec.rows.push_back(detail::row_of(s, false));
                trace->rounds.push_back(std::move(rec));
            }
            averaging_round(states, adj, cfg.seed, t);
        }
        double weighted = 0.0;
        long total = 0;
        for (const auto &s : states)
        {
            weighted += s.e * s.x;
            total += s.K;
        }
        const double scale = cfg.normalize_ideal && weighted > 0.0 ? static_cast<double>(total) / weighted : 1.0;
        for (auto &s : states)
        {
            s.K_star = s.e * s.x * scale;
            s.c = s.K - detail::floor_long(s.K_star);
        }
        return states;
    }

    /// One offer / accept / pass round on the deviations c. Messages are
    /// appended to `messages`; guarded transfers are skipped and reported.
    inline void balance_round(std::vector<CellLoadState> &states, const CellAdjacency &adj, std::uint64_t seed,
                              std::size_t round, bool guard_min_robots, std::vector<RoundMessage> &messages,
                              BalanceTrace *trace = nullptr)
    {
        const std::size_t n = states.size();
        std::vector<long> c(n);
        for (std::size_t i = 0; i < n; ++i)
            c[i] = states[i].c;

        // Offering.
        std::vector<std::vector<std::size_t>> offers(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            if (adj[i].empty())
                continue;
            long best = std::numeric_limits<long>::max();
            std::vector<std::size_t> ties;
            for (std::size_t j : adj[i])
            {
                if (c[j] < best)
                {
                    best = c[j];
                    ties.assign(1, j);
                }
                else if (c[j] == best)
                    ties.push_back(j);
            }
            const std::size_t jo = detail::pick(ties, seed, detail::kOfferStream, round, i);
            if (c[jo] < c[i])
            {
                offers[jo].push_back(i);
                messages.push_back({RoundMessage::Kind::Offer, i, jo, c[i]});
            }
        }

        // Accepting.
        std::vector<std::optional<std::size_t>> acceptance(n);
        for (std::size_t j = 0; j < n; ++j)
        {
            if (offers[j].empty())
                continue;
            long best = std::numeric_limits<long>::min();
            std::vector<std::size_t> ties;
            for (std::size_t i : offers[j])
            {
                if (c[i] > best)
                {
                    best = c[i];
                    ties.assign(1, i);
                }
                else if (c[i] == best)
                    ties.push_back(i);
            }
            const std::size_t ja = detail::pick(ties, seed, detail::kAcceptStream, round, j);
            acceptance[ja] = j;
            messages.push_back({RoundMessage::Kind::Accept, j, ja, 0});
        }

        // Passing.
        std::vector<long> K(n);
        for (std::size_t i = 0; i < n; ++i)
            K[i] = states[i].K;
        for (std::size_t i = 0; i < n; ++i)
        {
            if (!acceptance[i])
                continue;
            const std::size_t h = *acceptance[i];
            if (guard_min_robots && K[i] - 1 < 1)
            {
                if (trace)
                {
                    ++trace->guard_skips;
                    trace->log.push_back("round " + std::to_string(round) + ": cell " + std::to_string(i) +
                                         " kept its last robot instead of passing it to cell " + std::to_string(h));
                }
                continue;
            }
            states[i].c -= 1;
            states[i].K -= 1;
            states[h].c += 1;
            states[h].K += 1;
            messages.push_back({RoundMessage::Kind::Transfer, i, h, 1});
        }
    }

    struct BalanceResult
    {
        std::vector<CellLoadState> states;
        BalanceTrace trace;
    };

    /// Rounds t1 .. t2-1 of the integer phase; final K = floor(K*) + c(t2).
    /// Expects states from ideal_loads. Appends to `trace` when given.
    inline BalanceResult run_balance(std::vector<CellLoadState> states, const CellAdjacency &adj,
                                     const BalanceConfig &cfg, BalanceTrace trace = {})
    {
        if (cfg.t2 <= cfg.t1)
            throw Error(ErrorCode::InvalidInput, "t2 must exceed t1");
        if (adj.size() != states.size())
            throw Error(ErrorCode::InvalidInput, "adjacency size does not match cell count");
        for (std::size_t t = cfg.t1; t < cfg.t2; ++t)
        {
            RoundRecord rec;
            rec.round = t;
            for (const auto &s : states)
                rec.rows.push_back(detail::row_of(s, true));
            balance_round(states, adj, cfg.seed, t, cfg.guard_min_robots, rec.messages, &trace);
            for (const RoundMessage &m : rec.messages)
            {
                if (m.kind == RoundMessage::Kind::Offer)
                    ++rec.rows[m.sender].offers_sent;
                else if (m.kind == RoundMessage::Kind::Transfer)
                    ++rec.rows[m.sender].transfers;
            }
            trace.rounds.push_back(std::move(rec));
        }
        RoundRecord last;
        last.round = cfg.t2;
        for (auto &s : states)
        {
            s.K = detail::floor_long(s.K_star) + s.c;
            last.rows.push_back(detail::row_of(s, true));
        }
        trace.rounds.push_back(std::move(last));
        return {std::move(states), std::move(trace)};
    }

    /// Both phases back to back.
    inline BalanceResult balance_cells(const std::vector<long> &counts, const std::vector<double> &masses,
                                       const CellAdjacency &adj, const BalanceConfig &cfg)
    {
        BalanceTrace trace;
        auto states = ideal_loads(make_load_states(counts, masses), adj, cfg, &trace);
        return run_balance(std::move(states), adj, cfg, std::move(trace));
    }

    // ---- terminal-configuration checks --------------------------------------

    struct DeviationSummary
    {
        std::vector<long> c;
        double c_bar = 0.0;
        /// c_bar is expected in [0, 1); false flags an inconsistent K*.
        bool in_range = true;
    };

    inline DeviationSummary deviation_vector(const std::vector<CellLoadState> &states)
    {
        DeviationSummary d;
        long sum = 0;
        for (const auto &s : states)
        {
            const long c = s.K - detail::floor_long(s.K_star);
            d.c.push_back(c);
            sum += c;
        }
        d.c_bar = states.empty() ? 0.0 : static_cast<double>(sum) / static_cast<double>(states.size());
        d.in_range = d.c_bar >= 0.0 && d.c_bar < 1.0;
        return d;
    }

    struct Eq3Check
    {
        bool ok = false;
        std::size_t alpha = 0;
        std::size_t beta = 0;
    };

    /// alpha cells at floor(c_bar), beta at ceil(c_bar), alpha + beta = |E| and
    /// alpha floor + beta ceil = sum c. Integer arithmetic throughout.
    inline Eq3Check check_eq3(const std::vector<long> &c)
    {
        Eq3Check r;
        if (c.empty())
        {
            r.ok = true;
            return r;
        }
        const long n = static_cast<long>(c.size());
        const long sum = std::accumulate(c.begin(), c.end(), 0L);
        // Floor division for possibly negative sums.
        long lo = sum / n;
        if (sum % n != 0 && ((sum < 0) != (n < 0)))
            --lo;
        const long hi = sum % n == 0 ? lo : lo + 1;
        for (long v : c)
        {
            if (v == lo)
                ++r.alpha;
            else if (v == hi)
                ++r.beta;
        }
        if (lo == hi)
        {
            r.beta = 0;
            r.alpha = static_cast<std::size_t>(std::count(c.begin(), c.end(), lo));
        }
        r.ok = static_cast<long>(r.alpha + r.beta) == n &&
               static_cast<long>(r.alpha) * lo + static_cast<long>(r.beta) * hi == sum;
        return r;
    }

    inline Eq3Check check_eq3(const std::vector<CellLoadState> &states) { return check_eq3(deviation_vector(states).c); }

    inline double fractional_part(double v) { return v - std::floor(v); }

    /// The assignment with the smallest fractional parts at floor(c_bar) and the
    /// rest at ceil(c_bar); ties go to the lower cell index.
    inline std::vector<long> ideal_configuration(const std::vector<double> &K_star, long total_robots)
    {
        const std::size_t n = K_star.size();
        if (n == 0)
            return {};
        long floors = 0;
        for (double k : K_star)
            floors += detail::floor_long(k);
        const long sum_c = total_robots - floors;
        const long nn = static_cast<long>(n);
        long lo = sum_c / nn;
        if (sum_c % nn != 0 && sum_c < 0)
            --lo;
        const long beta = sum_c - nn * lo;
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return fractional_part(K_star[a]) < fractional_part(K_star[b]);
        });
        std::vector<long> c(n, lo);
        for (std::size_t r = n - static_cast<std::size_t>(beta); r < n; ++r)
            c[order[r]] = lo + 1;
        return c;
    }

    /// S = sum |K_i - K*_i|.
    inline double balance_objective(const std::vector<long> &K, const std::vector<double> &K_star)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < K.size(); ++i)
            s += std::abs(static_cast<double>(K[i]) - K_star[i]);
        return s;
    }

    inline double balance_objective(const std::vector<CellLoadState> &states)
    {
        double s = 0.0;
        for (const auto &st : states)
            s += std::abs(static_cast<double>(st.K) - st.K_star);
        return s;
    }

    struct Theorem2Check
    {
        bool ok = false;
        double S1 = 0.0;
        double S2 = 0.0;
        double S_p = 0.0;
        double S_f = 0.0;
    };

    /// S_p <= S_f < S_p + S2 with S1 the sum of fractional parts of K* and
    /// S2 = min(|E| - S1, S1). When S2 = 0 every K* is integral and the only
    /// terminal configuration is the ideal one, so equality is accepted.
    inline Theorem2Check verify_theorem2(const std::vector<long> &final_K, const std::vector<double> &K_star)
    {
        if (final_K.size() != K_star.size())
            throw Error(ErrorCode::InvalidInput, "verify_theorem2: size mismatch");
        std::vector<long> c(final_K.size());
        long total = 0;
        for (std::size_t i = 0; i < final_K.size(); ++i)
        {
            c[i] = final_K[i] - detail::floor_long(K_star[i]);
            total += final_K[i];
        }
        if (!check_eq3(c).ok)
            throw Error(ErrorCode::Eq3Violated, "verify_theorem2: final configuration violates the floor/ceil condition");
        Theorem2Check r;
        for (double k : K_star)
            r.S1 += fractional_part(k);
        r.S2 = std::min(static_cast<double>(K_star.size()) - r.S1, r.S1);
        const std::vector<long> ideal_c = ideal_configuration(K_star, total);
        std::vector<long> ideal_K(K_star.size());
        for (std::size_t i = 0; i < K_star.size(); ++i)
            ideal_K[i] = detail::floor_long(K_star[i]) + ideal_c[i];
        r.S_p = balance_objective(ideal_K, K_star);
        r.S_f = balance_objective(final_K, K_star);
        constexpr double tol = 1e-9;
        const bool lower = r.S_p <= r.S_f + tol;
        const bool upper = r.S2 > tol ? r.S_f < r.S_p + r.S2 : std::abs(r.S_f - r.S_p) <= tol;
        r.ok = lower && upper;
        return r;
    }
}
