// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "support.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace gvgcov;
using namespace gvgcov::testing;

namespace
{
    namespace fs = std::filesystem;

    struct Verdict
    {
        bool ok = false;
        std::string detail;
    };

    double seconds_since(std::chrono::steady_clock::time_point t0)
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    Verdict envelope_on_reported_values()
    {
        const auto t0 = std::chrono::steady_clock::now();
        const DeviationSummary dev = deviation_vector(states_from(reported_K(), reported_K_star()));
        const Eq3Check eq = check_eq3(dev.c);
        const double elapsed = seconds_since(t0);
        const bool ok = dev.c == std::vector<long>{1, 0, 0, 0, 0, 1, 1, 1, 0} && std::abs(dev.c_bar - 4.0 / 9.0) < 1e-15 &&
                        eq.alpha == 5 && eq.beta == 4 && eq.ok && elapsed < 1e-3;
        std::string c;
        for (long v : dev.c)
            c += fmt::format("{}{}", c.empty() ? "" : ",", v);
        return {ok, fmt::format("c = ({}), c_bar = {:.6f}, (alpha, beta) = ({}, {}), eq3_ok = {}, {:.1f} us", c,
                                dev.c_bar, eq.alpha, eq.beta, eq.ok, elapsed * 1e6)};
    }

    Verdict bound_on_reported_values()
    {
        const Theorem2Check t = verify_theorem2(reported_K(), reported_K_star());
        auto near = [](double a, double b) { return std::abs(a - b) <= 0.01 + 1e-9; };
        const bool ok = near(t.S1, 3.99) && near(t.S2, 3.99) && near(t.S_p, 2.91) && near(t.S_f, 3.65) && t.ok;
        return {ok, fmt::format("S1 = {:.2f}, S2 = {:.2f}, S_p = {:.2f}, S_f = {:.2f}, {:.2f} <= {:.2f} < {:.2f}: {}",
                                t.S1, t.S2, t.S_p, t.S_f, t.S_p, t.S_f, t.S_p + t.S2, t.ok)};
    }

    Verdict bound_exhaustive()
    {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(37);
        std::size_t ideal_misses = 0;
        std::size_t violating_instances = 0;
        std::size_t lower_misses = 0;
        std::size_t configurations = 0;
        for (int trial = 0; trial < 200; ++trial)
        {
            const SmallInstance inst = random_small_instance(rng);
            const auto configs = feasible_configurations(inst.K_star, inst.total);
            double best = std::numeric_limits<double>::infinity();
            for (const auto &K : configs)
                best = std::min(best, objective_oracle(K, inst.K_star));
            const auto ideal_c = ideal_configuration(inst.K_star, inst.total);
            std::vector<long> ideal_K(inst.K_star.size());
            for (std::size_t i = 0; i < ideal_K.size(); ++i)
                ideal_K[i] = static_cast<long>(std::floor(inst.K_star[i])) + ideal_c[i];
            if (std::abs(objective_oracle(ideal_K, inst.K_star) - best) > 1e-9)
                ++ideal_misses;
            bool violated = false;
            for (const auto &K : configs)
            {
                ++configurations;
                const Theorem2Check t = verify_theorem2(K, inst.K_star);
                const double S = objective_oracle(K, inst.K_star);
                if (S < t.S_p - 1e-9)
                    ++lower_misses;
                violated = violated || !t.ok;
            }
            violating_instances += violated ? 1 : 0;
        }
        const double elapsed = seconds_since(t0);
        const bool ok = ideal_misses == 0 && lower_misses == 0 && violating_instances == 0 && elapsed < 30.0;
        return {ok, fmt::format("{} configurations; ideal not minimal in {} instances; S < S_p in {}; "
                                "S >= S_p + S2 in {} of 200 instances; {:.2f} s",
                                configurations, ideal_misses, lower_misses, violating_instances, elapsed)};
    }

    Verdict averaging_convergence()
    {
        Rng rng(31);
        std::size_t worst_rounds = 0;
        double worst_spread = 0.0;
        double worst_drift = 0.0;
        for (int trial = 0; trial < 50; ++trial)
        {
            const std::size_t n = 2 + rng.below(19);
            const CellAdjacency adj = random_connected_graph(rng, n);
            std::vector<long> counts(n);
            std::vector<double> masses(n);
            for (std::size_t i = 0; i < n; ++i)
            {
                counts[i] = 1 + static_cast<long>(rng.below(10));
                masses[i] = rng.uniform(0.1, 10.0);
            }
            auto st = make_load_states(counts, masses);
            auto sum = [&] {
                double acc = 0.0;
                for (const auto &c : st)
                    acc += c.x;
                return acc;
            };
            auto spread = [&] {
                const auto [lo, hi] = std::minmax_element(st.begin(), st.end(),
                                                          [](const auto &a, const auto &b) { return a.x < b.x; });
                return hi->x - lo->x;
            };
            const double total = sum();
            std::size_t round = 0;
            for (; round < 10000 && spread() >= 1e-6; ++round)
            {
                averaging_round(st, adj, 100 + static_cast<std::uint64_t>(trial), round);
                worst_drift = std::max(worst_drift, std::abs(sum() - total) / std::max(1.0, total));
            }
            worst_rounds = std::max(worst_rounds, round);
            worst_spread = std::max(worst_spread, spread());
        }
        const bool ok = worst_spread < 1e-6 && worst_drift <= 1e-12;
        return {ok, fmt::format("worst final spread {:.2e} (rounds used at most {}), worst relative drift of the load "
                                "sum {:.2e}",
                                worst_spread, worst_rounds, worst_drift)};
    }

    Verdict termination_statistics()
    {
        std::size_t reached = 0;
        std::size_t conserved = 0;
        std::size_t worst_rounds = 0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed)
        {
            ScenarioConfig cfg = reference_config();
            cfg.seed = seed;
            const SimState st0 = initialize(cfg);
            BalanceConfig bc = cfg.balance;
            bc.seed = seed;
            const CellAdjacency adj = detail::adjacency_of(st0.graph);
            auto st = ideal_loads(st0.cells, adj, bc);
            long total = 0;
            for (const auto &c : st)
                total += c.K;
            bool ok_sum = true;
            bool done = false;
            std::size_t rounds = 0;
            for (; rounds <= 500; ++rounds)
            {
                if (check_eq3(st).ok)
                {
                    done = true;
                    break;
                }
                if (rounds == 500)
                    break;
                std::vector<RoundMessage> msgs;
                balance_round(st, adj, seed, bc.t1 + rounds, false, msgs);
                long now = 0;
                for (const auto &c : st)
                    now += c.K;
                ok_sum = ok_sum && now == total;
            }
            reached += done ? 1 : 0;
            conserved += ok_sum ? 1 : 0;
            if (done)
                worst_rounds = std::max(worst_rounds, rounds);
        }
        const bool ok = reached >= 95 && conserved == 100;
        return {ok, fmt::format("{} of 100 seeds terminal within 500 rounds (slowest {} rounds); robot total conserved "
                                "on {} seeds",
                                reached, worst_rounds, conserved)};
    }

    Verdict gradient_fidelity()
    {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(46);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial)
            worst = std::max(worst, gradient_fidelity_error(rng, Quadrature{128, 32}));
        const double elapsed = seconds_since(t0);
        return {worst <= 1e-3 && elapsed < 60.0,
                fmt::format("worst relative error {:.2e} over 100 configurations, {:.2f} s", worst, elapsed)};
    }

    Verdict change_of_variables()
    {
        double straight = 0.0;
        double annulus = 0.0;
        Rng rng(71);
        for (int k = 0; k < 20; ++k)
        {
            straight = std::max(straight, corridor_relative_error(rng.uniform(1, 50), rng.uniform(0.1, 5),
                                                                  rng.uniform(0.1, 5)));
            const double R = rng.uniform(2, 20);
            annulus = std::max(annulus, annulus_relative_error(R, rng.uniform(0.05, 0.9) * R, rng.uniform(0.2, 3.0)));
        }
        return {straight <= 1e-6 && annulus <= 1e-4,
                fmt::format("straight corridor {:.2e}, annular sector {:.2e} (worst relative errors)", straight,
                            annulus)};
    }

    Verdict tube_partition()
    {
        const GvgGraph &g = reference_graph();
        Rng rng(73);
        PartitionStats total;
        for (const GvgCell &c : g.cells)
        {
            const PartitionStats s = check_partition(g.edges[c.edge], 10000, rng);
            total.points += s.points;
            total.ambiguous += s.ambiguous;
            total.unprojected += s.unprojected;
            total.worst_round_trip = std::max(total.worst_round_trip, s.worst_round_trip);
        }
        const bool ok = total.ambiguous == 0 && total.unprojected == 0 && total.worst_round_trip <= 1e-3;
        return {ok, fmt::format("{} points in {} cells: {} ambiguous, {} failed, worst round trip {:.2e}",
                                total.points, g.cells.size(), total.ambiguous, total.unprojected,
                                total.worst_round_trip)};
    }

    Verdict reference_end_to_end()
    {
        const auto t0 = std::chrono::steady_clock::now();
        const ScenarioConfig cfg = reference_config();
        const SimResult r = run(cfg);
        const double elapsed = seconds_since(t0);
        bool envelope = true;
        std::vector<long> K;
        std::vector<double> K_star;
        for (const CellLoadState &c : r.balance.states)
        {
            envelope = envelope && (c.K == static_cast<long>(std::floor(c.K_star)) ||
                                    c.K == static_cast<long>(std::ceil(c.K_star)));
            K.push_back(c.K);
            K_star.push_back(c.K_star);
        }
        const bool eq3 = check_eq3(r.balance.states).ok;
        const bool t2 = eq3 && verify_theorem2(K, K_star).ok;
        // Same slack as the check subcommand: far below the quadrature error of H.
        double worst_rise = 0.0;
        for (std::size_t k = 1; k < r.trace.cost.size(); ++k)
            worst_rise = std::max(worst_rise, r.trace.cost[k].cost - r.trace.cost[k - 1].cost);
        const bool monotone = worst_rise <= CheckTolerances{}.cost_slack;
        const std::size_t cells = r.state.graph.cells.size();
        const bool ok = cells == 9 && envelope && eq3 && t2 && monotone && r.trace.final_max_admissible < 1e-3 &&
                        r.trace.cost_final < r.trace.cost_after_balance && elapsed < 120.0;
        std::string ks;
        for (long k : K)
            ks += fmt::format("{}{}", ks.empty() ? "" : " ", k);
        return {ok, fmt::format("{} cells, K = {}, envelope {}, eq3 {}, theorem2 {}, H {:.4f} -> {:.4f} with largest "
                                "rise {:.1e}, max projected |u| {:.1e} (raw {:.2f}), {:.1f} s",
                                cells, ks, envelope, eq3, t2, r.trace.cost_after_balance, r.trace.cost_final,
                                worst_rise, r.trace.final_max_admissible, r.trace.final_max_u, elapsed)};
    }

    std::map<std::string, std::string> snapshot(const fs::path &dir)
    {
        std::map<std::string, std::string> out;
        for (const auto &entry : fs::directory_iterator(dir))
        {
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            out[entry.path().filename().string()] = ss.str();
        }
        return out;
    }

    Verdict determinism()
    {
        const std::vector<std::pair<std::string, std::string>> jobs{{"reference_layout.json", "run"},
                                                                    {"small_corridors.json", "run"},
                                                                    {"empty_rectangle.json", "gvg"},
                                                                    {"two_cell_toy.json", "balance"}};
        const fs::path root = fs::temp_directory_path() / "gvgcov_acceptance";
        fs::remove_all(root);
        std::size_t files = 0;
        std::vector<std::string> problems;
        for (const auto &[name, sub] : jobs)
        {
            std::array<std::map<std::string, std::string>, 2> out;
            for (int k = 0; k < 2; ++k)
            {
                const fs::path dir = root / fmt::format("{}_{}", name, k);
                const std::string cmd = fmt::format("{} {} --quiet --scenario {} --out-dir {} 2>/dev/null", GVGCOV_CLI,
                                                    sub, scenario_path(name), dir.string());
                if (std::system(cmd.c_str()) != 0)
                {
                    problems.push_back(name + " failed to run");
                    break;
                }
                out[k] = snapshot(dir);
            }
            if (out[0].empty())
                continue;
            files += out[0].size();
            if (out[0] != out[1])
                problems.push_back(name + " differs");
        }
        std::string why;
        for (const auto &p : problems)
            why += "; " + p;
        return {problems.empty(), fmt::format("{} scenarios, {} files compared byte for byte{}", jobs.size(), files, why)};
    }
}

int main()
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"floor/ceil envelope on the reported vectors", envelope_on_reported_values},
        {"load-balancing bound on the reported vectors", bound_on_reported_values},
        {"load-balancing bound, exhaustive small instances", bound_exhaustive},
        {"averaging convergence on random graphs", averaging_convergence},
        {"integer balancing termination, 100 seeds", termination_statistics},
        {"control input vs finite-difference gradient", gradient_fidelity},
        {"tube change of variables", change_of_variables},
        {"unique tube projection", tube_partition},
        {"reference layout end to end", reference_end_to_end},
        {"byte-identical reruns", determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k)
    {
        Verdict v;
        try
        {
            v = criteria[k].second();
        }
        catch (const std::exception &e)
        {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += v.ok ? 0 : 1;
        fmt::print("{} criterion {:2}: {}: {}\n", v.ok ? "PASS" : "FAIL", k + 1, criteria[k].first, v.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria pass\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
