#include "stabsnap/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace stabsnap;

namespace {

Scenario load(const std::string& file, const std::string& builtin)
{
    if (!file.empty() && !builtin.empty())
        throw ConfigError("give either --scenario or --builtin, not both");
    if (!builtin.empty())
        return builtin_scenario(builtin);
    if (file.empty())
        throw ConfigError("no scenario given");
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot open " + file);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(file + ": " + e.what());
    }
    return scenario_from_json(j);
}

void emit(std::ostream& os, const std::vector<Report>& reps, const std::string& format)
{
    if (format == "csv") {
        os << csv_header() << '\n';
        for (const auto& r : reps)
            os << to_csv_row(r) << '\n';
    } else {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : reps)
            arr.push_back(to_json(r));
        os << (reps.size() == 1 ? arr[0] : arr).dump(2) << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"self-stabilizing snapshot simulator"};
    app.require_subcommand(1);

    std::string scenario_file, builtin, out, format = "json", trace_file, axis, history_file;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> values;
    bool exhaustive = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", scenario_file, "scenario JSON file");
        sub->add_option("--builtin", builtin, "built-in scenario name");
        sub->add_option("--seed", seed, "override the seed");
        sub->add_option("--out", out, "write the report here instead of stdout");
        sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    };

    auto* run = app.add_subcommand("run", "run one scenario");
    add_common(run);
    run->add_option("--trace", trace_file, "write the full trace as JSON lines");

    auto* sw = app.add_subcommand("sweep", "run a scenario over several n, delta or seed values");
    add_common(sw);
    sw->add_option("--axis", axis, "n, delta or seed")->required();
    sw->add_option("--values", values, "values of the axis")->required();

    auto* audit = app.add_subcommand("audit", "run with a transient fault and report convergence");
    add_common(audit);

    auto* check = app.add_subcommand("check", "check a recorded history for linearizability");
    check->add_option("history", history_file, "history or trace in JSON lines")->required();
    check->add_flag("--exhaustive", exhaustive, "also run the exhaustive search");

    auto* list = app.add_subcommand("list", "list built-in scenarios");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const auto& n : builtin_names())
                std::cout << n << '\n';
            return 0;
        }
        if (check->parsed()) {
            std::ifstream in(history_file);
            if (!in)
                throw ConfigError("cannot open " + history_file);
            History h = History::read_jsonl(in);
            auto v = check_polynomial(h);
            nlohmann::json j{{"linearizable", v.ok}, {"method", v.method}, {"ops", v.ops}};
            if (!v.ok)
                j["certificate"] = v.certificate;
            int rc = v.ok ? 0 : 1;
            if (exhaustive && v.ops > 24) {
                j["exhaustive"] = "skipped: too many operations";
            } else if (exhaustive) {
                auto e = check_exhaustive(h);
                j["exhaustive"] = e.ok;
                if (e.ok != v.ok)
                    rc = 2;
            }
            std::cout << j.dump(2) << '\n';
            return rc;
        }

        Scenario s = load(scenario_file, builtin);
        if (seed) {
            s.sim.seed = *seed;
            if (s.transient)
                s.transient->seed = *seed;
        }
        if (audit->parsed()) {
            if (!s.transient) {
                s.transient = TransientRecipe{};
                s.transient->random = RandomCorruption{};
                s.transient->seed = s.sim.seed;
            }
            s.audit = true;
            s.workload.after_stabilization = true;
        }
        if (run->parsed() && !trace_file.empty())
            s.keep_trace = true;

        std::vector<Report> reps;
        if (sw->parsed())
            reps = sweep(s, axis, values);
        else
            reps.push_back(run_scenario(s));

        if (!trace_file.empty()) {
            std::ofstream t(trace_file);
            for (const auto& r : reps.front().trace)
                t << to_json(r).dump() << '\n';
        }
        if (out.empty()) {
            emit(std::cout, reps, format);
        } else {
            std::ofstream o(out);
            if (!o)
                throw ConfigError("cannot write " + out);
            emit(o, reps, format);
        }
        bool ok = std::all_of(reps.begin(), reps.end(), [](const Report& r) { return r.passed(); });
        return ok ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
