#pragma once

// Scenario files: JSON with a fixed schema. Every validation failure names
// the offending field and the line it sits on.

#include "error.hpp"
#include "sim.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gvgcov
{
    namespace detail
    {
        /// Line of every value in a well-formed JSON text, keyed by dotted path
        /// ("coverage.dt", "world.obstacles[1]"). The text has already passed
        /// the real parser, so the scan only needs to track nesting.
        inline std::map<std::string, std::size_t> value_lines(const std::string &text)
        {
            struct Frame
            {
                std::string path;
                bool array = false;
                std::size_t index = 0;
                std::string key;
            };
            std::map<std::string, std::size_t> lines;
            std::vector<Frame> stack;
            std::size_t line = 1;
            bool expect_key = false;
            auto child_path = [&]() -> std::string {
                if (stack.empty())
                    return "";
                const Frame &f = stack.back();
                if (f.array)
                    return f.path + "[" + std::to_string(f.index) + "]";
                return f.path.empty() ? f.key : f.path + "." + f.key;
            };
            auto mark_value = [&]() {
                const std::string p = child_path();
                if (!lines.count(p))
                    lines[p] = line;
            };
            for (std::size_t i = 0; i < text.size(); ++i)
            {
                const char ch = text[i];
                if (ch == '\n')
                {
                    ++line;
                    continue;
                }
                if (ch == ' ' || ch == '\t' || ch == '\r' || ch == ':')
                    continue;
                if (ch == '"')
                {
                    std::string s;
                    for (++i; i < text.size() && text[i] != '"'; ++i)
                    {
                        if (text[i] == '\\')
                            ++i;
                        s += text[i];
                    }
                    if (expect_key)
                    {
                        stack.back().key = s;
                        expect_key = false;
                    }
                    else
                        mark_value();
                    continue;
                }
                if (ch == '{' || ch == '[')
                {
                    mark_value();
                    stack.push_back({child_path(), ch == '[', 0, ""});
                    expect_key = ch == '{';
                    continue;
                }
                if (ch == '}' || ch == ']')
                {
                    stack.pop_back();
                    expect_key = false;
                    continue;
                }
                if (ch == ',')
                {
                    if (stack.back().array)
                        ++stack.back().index;
                    else
                        expect_key = true;
                    continue;
                }
                mark_value();
                while (i + 1 < text.size() && std::string_view(",]}\n \t\r").find(text[i + 1]) == std::string_view::npos)
                    ++i;
            }
            return lines;
        }

        class ScenarioReader
        {
        public:
            ScenarioReader(std::string name, const std::string &text) : name_(std::move(name))
            {
                try
                {
                    doc_ = nlohmann::json::parse(text);
                }
                catch (const nlohmann::json::parse_error &e)
                {
                    std::size_t line = 1;
                    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
                        line += text[i] == '\n';
                    throw Error(ErrorCode::InvalidInput, name_ + ":" + std::to_string(line) + ": malformed JSON");
                }
                lines_ = value_lines(text);
            }

            [[noreturn]] void fail(const std::string &path, const std::string &what) const
            {
                std::string p = path;
                while (!lines_.count(p) && !p.empty())
                {
                    const auto cut = p.find_last_of(".[");
                    p = cut == std::string::npos ? "" : p.substr(0, cut);
                }
                const std::size_t line = lines_.count(p) ? lines_.at(p) : 1;
                throw Error(ErrorCode::InvalidInput,
                            name_ + ":" + std::to_string(line) + ": " + (path.empty() ? "document" : path) + ": " + what);
            }

            const nlohmann::json &root() const { return doc_; }

            const nlohmann::json &object(const nlohmann::json &j, const std::string &path,
                                         std::initializer_list<const char *> allowed) const
            {
                if (!j.is_object())
                    fail(path, "expected an object");
                std::set<std::string> ok(allowed.begin(), allowed.end());
                for (auto it = j.begin(); it != j.end(); ++it)
                    if (!ok.count(it.key()))
                        fail(join(path, it.key()), "unknown field");
                return j;
            }

            const nlohmann::json *find(const nlohmann::json &obj, const char *key) const
            {
                auto it = obj.find(key);
                return it == obj.end() ? nullptr : &*it;
            }

            const nlohmann::json &need(const nlohmann::json &obj, const std::string &path, const char *key) const
            {
                if (const nlohmann::json *v = find(obj, key))
                    return *v;
                fail(path, std::string("missing required field '") + key + "'");
            }

            double number(const nlohmann::json &j, const std::string &path) const
            {
                if (!j.is_number())
                    fail(path, "expected a number");
                const double v = j.get<double>();
                if (!std::isfinite(v))
                    fail(path, "number is not finite");
                return v;
            }

            double number_or(const nlohmann::json &obj, const std::string &path, const char *key, double fallback) const
            {
                const nlohmann::json *v = find(obj, key);
                return v ? number(*v, join(path, key)) : fallback;
            }

            std::uint64_t count(const nlohmann::json &j, const std::string &path) const
            {
                if (!j.is_number_integer() || j.get<long long>() < 0)
                    fail(path, "expected a non-negative integer");
                return j.get<std::uint64_t>();
            }

            std::uint64_t count_or(const nlohmann::json &obj, const std::string &path, const char *key,
                                   std::uint64_t fallback) const
            {
                const nlohmann::json *v = find(obj, key);
                return v ? count(*v, join(path, key)) : fallback;
            }

            bool flag_or(const nlohmann::json &obj, const std::string &path, const char *key, bool fallback) const
            {
                const nlohmann::json *v = find(obj, key);
                if (!v)
                    return fallback;
                if (!v->is_boolean())
                    fail(join(path, key), "expected true or false");
                return v->get<bool>();
            }

            Point point(const nlohmann::json &j, const std::string &path) const
            {
                if (!j.is_array() || j.size() != 2)
                    fail(path, "expected [x, y]");
                return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
            }

            std::vector<Point> ring(const nlohmann::json &j, const std::string &path) const
            {
                if (!j.is_array() || j.size() < 3)
                    fail(path, "expected a list of at least 3 [x, y] vertices");
                std::vector<Point> out;
                for (std::size_t k = 0; k < j.size(); ++k)
                    out.push_back(point(j[k], path + "[" + std::to_string(k) + "]"));
                return out;
            }

            static std::string join(const std::string &path, const std::string &key)
            {
                return path.empty() ? key : path + "." + key;
            }

        private:
            std::string name_;
            nlohmann::json doc_;
            std::map<std::string, std::size_t> lines_;
        };

        inline DensityField read_density(const ScenarioReader &r, const nlohmann::json &j)
        {
            r.object(j, "density", {"kind", "params"});
            const nlohmann::json &kind = r.need(j, "density", "kind");
            if (!kind.is_string())
                r.fail("density.kind", "expected a string");
            static const nlohmann::json empty = nlohmann::json::object();
            const nlohmann::json *pp = r.find(j, "params");
            const nlohmann::json &p = pp ? *pp : empty;
            const std::string k = kind.get<std::string>();
            DensityField field;
            if (k == "uniform")
            {
                r.object(p, "density.params", {"value"});
                field = UniformDensity{r.number_or(p, "density.params", "value", 1.0)};
            }
            else if (k == "quadratic_radial")
            {
                r.object(p, "density.params", {"center", "scale", "offset"});
                QuadraticRadialDensity d;
                d.center = r.point(r.need(p, "density.params", "center"), "density.params.center");
                d.scale = r.number(r.need(p, "density.params", "scale"), "density.params.scale");
                d.offset = r.number_or(p, "density.params", "offset", 0.0);
                field = d;
            }
            else if (k == "gaussian_mixture")
            {
                r.object(p, "density.params", {"components", "offset"});
                GaussianMixtureDensity d;
                const nlohmann::json &comps = r.need(p, "density.params", "components");
                if (!comps.is_array() || comps.empty())
                    r.fail("density.params.components", "expected a non-empty list");
                for (std::size_t c = 0; c < comps.size(); ++c)
                {
                    const std::string path = "density.params.components[" + std::to_string(c) + "]";
                    r.object(comps[c], path, {"center", "sigma", "weight"});
                    GaussianBump g;
                    g.center = r.point(r.need(comps[c], path, "center"), path + ".center");
                    g.sigma = r.number(r.need(comps[c], path, "sigma"), path + ".sigma");
                    g.weight = r.number_or(comps[c], path, "weight", 1.0);
                    d.components.push_back(g);
                }
                d.offset = r.number_or(p, "density.params", "offset", 0.0);
                field = d;
            }
            else
                r.fail("density.kind", "unknown density kind '" + k + "'");
            try
            {
                validate_density(field);
            }
            catch (const Error &e)
            {
                r.fail("density.params", e.what());
            }
            return field;
        }
    }

    namespace detail
    {
        inline CellGraphSpec read_cell_graph(const ScenarioReader &r, const nlohmann::json &j)
        {
            r.object(j, "cell_graph", {"masses", "counts", "edges"});
            CellGraphSpec g;
            const nlohmann::json &m = r.need(j, "cell_graph", "masses");
            const nlohmann::json &c = r.need(j, "cell_graph", "counts");
            const nlohmann::json &e = r.need(j, "cell_graph", "edges");
            if (!m.is_array() || m.empty())
                r.fail("cell_graph.masses", "expected a non-empty list");
            if (!c.is_array() || c.size() != m.size())
                r.fail("cell_graph.counts", "expected one count per mass");
            if (!e.is_array())
                r.fail("cell_graph.edges", "expected a list of [a, b] pairs");
            for (std::size_t k = 0; k < m.size(); ++k)
            {
                const std::string path = "cell_graph.masses[" + std::to_string(k) + "]";
                const double v = r.number(m[k], path);
                if (!(v > 0.0))
                    r.fail(path, "must be positive");
                g.masses.push_back(v);
                g.counts.push_back(static_cast<long>(r.count(c[k], "cell_graph.counts[" + std::to_string(k) + "]")));
            }
            for (std::size_t k = 0; k < e.size(); ++k)
            {
                const std::string path = "cell_graph.edges[" + std::to_string(k) + "]";
                if (!e[k].is_array() || e[k].size() != 2)
                    r.fail(path, "expected [a, b]");
                const std::size_t a = r.count(e[k][0], path + "[0]");
                const std::size_t b = r.count(e[k][1], path + "[1]");
                if (a >= m.size() || b >= m.size() || a == b)
                    r.fail(path, "endpoints must be distinct cell indices");
                g.edges.emplace_back(a, b);
            }
            return g;
        }
    }

    /// Parses and validates a scenario; `name` prefixes error messages.
    inline ScenarioConfig parse_scenario(const std::string &text, const std::string &name = "scenario")
    {
        const detail::ScenarioReader r(name, text);
        const nlohmann::json &root =
            r.object(r.root(), "", {"world", "density", "robots", "gvg", "balance", "coverage", "cell_graph"});
        ScenarioConfig cfg;

        if (const nlohmann::json *cg = r.find(root, "cell_graph"))
            cfg.cell_graph = detail::read_cell_graph(r, *cg);
        const bool abstract = cfg.cell_graph.has_value();

        static const nlohmann::json no_world = {{"outer", {{0, 0}, {1, 0}, {0, 1}}}};
        static const nlohmann::json no_density = {{"kind", "uniform"}};
        const nlohmann::json *world_j = r.find(root, "world");
        if (!world_j && abstract)
            world_j = &no_world;
        const nlohmann::json &world = r.object(world_j ? *world_j : r.need(root, "", "world"), "world", {"outer", "obstacles"});
        cfg.outer = r.ring(r.need(world, "world", "outer"), "world.outer");
        if (const nlohmann::json *obs = r.find(world, "obstacles"))
        {
            if (!obs->is_array())
                r.fail("world.obstacles", "expected a list of polygons");
            for (std::size_t k = 0; k < obs->size(); ++k)
                cfg.obstacles.push_back(r.ring((*obs)[k], "world.obstacles[" + std::to_string(k) + "]"));
        }

        const nlohmann::json *density_j = r.find(root, "density");
        cfg.density = detail::read_density(r, density_j ? *density_j : abstract ? no_density : r.need(root, "", "density"));

        const nlohmann::json &robots = r.object(r.need(root, "", "robots"), "robots", {"count", "seed"});
        cfg.seed = r.count(r.need(robots, "robots", "seed"), "robots.seed");
        if (abstract)
        {
            long total = 0;
            for (long c : cfg.cell_graph->counts)
                total += c;
            cfg.robot_count = static_cast<std::size_t>(total);
            if (r.find(robots, "count") && r.count(robots.at("count"), "robots.count") != cfg.robot_count)
                r.fail("robots.count", "must equal the sum of cell_graph.counts");
        }
        else
            cfg.robot_count = r.count(r.need(robots, "robots", "count"), "robots.count");
        if (cfg.robot_count == 0)
            r.fail("robots.count", "must be positive");

        static const nlohmann::json empty = nlohmann::json::object();
        auto section = [&](const char *key, std::initializer_list<const char *> allowed) -> const nlohmann::json & {
            const nlohmann::json *v = r.find(root, key);
            return v ? r.object(*v, key, allowed) : empty;
        };

        const nlohmann::json &gvg = section("gvg", {"grid_resolution", "mass_quad_points"});
        cfg.grid_resolution = r.number_or(gvg, "gvg", "grid_resolution", cfg.grid_resolution);
        if (!(cfg.grid_resolution > 0.0))
            r.fail("gvg.grid_resolution", "must be positive");
        cfg.mass_quad_points = r.count_or(gvg, "gvg", "mass_quad_points", cfg.mass_quad_points);
        if (cfg.mass_quad_points == 0)
            r.fail("gvg.mass_quad_points", "must be positive");

        const nlohmann::json &bal = section("balance", {"t1", "t2", "normalize_ideal", "guard_min_robots"});
        cfg.balance.t1 = r.count_or(bal, "balance", "t1", cfg.balance.t1);
        cfg.balance.t2 = r.count_or(bal, "balance", "t2", cfg.balance.t2);
        cfg.balance.normalize_ideal = r.flag_or(bal, "balance", "normalize_ideal", cfg.balance.normalize_ideal);
        cfg.balance.guard_min_robots = r.flag_or(bal, "balance", "guard_min_robots", cfg.balance.guard_min_robots);
        if (cfg.balance.t1 < 1)
            r.fail("balance.t1", "must be at least 1");
        if (cfg.balance.t2 <= cfg.balance.t1)
            r.fail("balance.t2", "must exceed t1");

        const nlohmann::json &cov =
            section("coverage", {"dt", "steps", "k_g", "n_s", "n_r", "report_scale", "record_every"});
        cfg.dt = r.number_or(cov, "coverage", "dt", cfg.dt);
        cfg.steps = r.count_or(cov, "coverage", "steps", cfg.steps);
        cfg.k_g = r.number_or(cov, "coverage", "k_g", cfg.k_g);
        cfg.quad.n_s = r.count_or(cov, "coverage", "n_s", cfg.quad.n_s);
        cfg.quad.n_r = r.count_or(cov, "coverage", "n_r", cfg.quad.n_r);
        cfg.report_scale = r.number_or(cov, "coverage", "report_scale", cfg.report_scale);
        cfg.record_every = r.count_or(cov, "coverage", "record_every", cfg.record_every);
        if (!(cfg.dt > 0.0))
            r.fail("coverage.dt", "must be positive");
        if (!(cfg.k_g > 0.0))
            r.fail("coverage.k_g", "must be positive");
        if (cfg.quad.n_s < 4)
            r.fail("coverage.n_s", "must be at least 4");
        if (cfg.quad.n_r < 4)
            r.fail("coverage.n_r", "must be at least 4");
        if (!(cfg.report_scale > 0.0))
            r.fail("coverage.report_scale", "must be positive");
        if (cfg.record_every == 0)
            r.fail("coverage.record_every", "must be positive");

        try
        {
            World(cfg.outer, cfg.obstacles);
        }
        catch (const Error &e)
        {
            r.fail("world", e.what());
        }
        cfg.validate();
        return cfg;
    }

    inline ScenarioConfig load_scenario(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error(ErrorCode::InvalidInput, path + ": cannot open scenario file");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_scenario(ss.str(), path);
    }
}
