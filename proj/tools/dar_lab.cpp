// dar_lab: command-line front end for the experiment harness.
//
//   dar_lab lln --n 50,100,200 --lambda 1 --cap 3 --d 2 --t0 1 --replicas 20 --out runs/lln
//   dar_lab ode --cap 1 --d 1 --lambda 1 --t0 5
//   dar_lab phi --config phi.cfg --out runs/phi
//
// Values from --config are read first; flags given on the command line override them.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dar/experiments.hpp"

namespace {

struct Flags {
    std::string config;
    std::vector<int> n;
    std::optional<double> lambda;
    std::optional<int> cap;
    std::optional<int> d;
    std::optional<double> t0;
    std::optional<std::string> policy;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<int> replicas;
    std::optional<double> c0;
    std::optional<std::string> initial;
    std::optional<std::string> initial_path;
    std::optional<bool> redraw;
    std::optional<std::string> out;
    std::optional<int> grid;
    std::optional<unsigned> threads;
    std::optional<int> steps;
    std::optional<int> offset;
    std::optional<int> states;
    bool trajectories = false;
};

void add_flags(CLI::App& app, Flags& f) {
    app.add_option("--config", f.config, "key = value spec file");
    app.add_option("--n", f.n, "network size(s), comma separated")->delimiter(',');
    app.add_option("--lambda", f.lambda, "arrival rate per link");
    app.add_option("--cap", f.cap, "link capacity C");
    app.add_option("--d", f.d, "number of sampled intermediate nodes");
    app.add_option("--t0", f.t0, "time horizon (jump mode: number of steps)");
    app.add_option("--policy", f.policy, "bdar | fdar | nodirect");
    app.add_option("--mode", f.mode, "ctmc | jump");
    app.add_option("--seed", f.seed, "master seed");
    app.add_option("--replicas", f.replicas, "number of replicas");
    app.add_option("--c0", f.c0, "random allocation constant (implies --initial random)");
    app.add_option("--initial", f.initial, "empty | random | file");
    app.add_option("--initial-path", f.initial_path, "snapshot file for --initial file");
    app.add_flag("--redraw-initial{true}", f.redraw, "fresh random allocation per replica");
    app.add_option("--out", f.out, "output directory");
    app.add_option("--grid", f.grid, "number of equispaced snapshot times");
    app.add_option("--threads", f.threads, "worker threads (0 = hardware)");
    app.add_option("--steps", f.steps, "coupling steps");
    app.add_option("--offset", f.offset, "coupling: calls removed from x0 to form y0");
    app.add_option("--states", f.states, "generator check: number of states");
    app.add_flag("--trajectories", f.trajectories, "write per-replica trajectory CSVs");
}

dar::ExperimentSpec resolve(dar::ExperimentKind kind, const Flags& f) {
    dar::KeyValueConfig c;
    if (!f.config.empty()) c = dar::KeyValueConfig::load(f.config);
    c.set("kind", std::string(dar::to_string(kind)));
    auto put = [&](const char* key, const auto& value) {
        if (value) {
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(*value)>>) {
                c.set(key, dar::format_double(*value));
            } else if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, std::string>) {
                c.set(key, *value);
            } else if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, bool>) {
                c.set(key, *value ? "true" : "false");
            } else {
                c.set(key, std::to_string(*value));
            }
        }
    };
    if (!f.n.empty()) c.set("n_grid", dar::join(f.n));
    put("params.lambda", f.lambda);
    put("params.capacity", f.cap);
    put("params.choices", f.d);
    put("t0", f.t0);
    put("policy", f.policy);
    put("mode", f.mode);
    put("seed", f.seed);
    put("replicas", f.replicas);
    put("c0", f.c0);
    if (f.c0 && !f.initial) c.set("initial", "random");
    put("initial", f.initial);
    put("initial_path", f.initial_path);
    if (f.redraw) c.set("shared_initial", *f.redraw ? "false" : "true");
    put("output_dir", f.out);
    put("grid_points", f.grid);
    put("threads", f.threads);
    put("coupling_steps", f.steps);
    put("coupling_offset", f.offset);
    put("gencheck_states", f.states);
    if (f.trajectories) c.set("write_trajectories", "true");
    // The phi experiment runs the jump chain unless told otherwise.
    if (kind == dar::ExperimentKind::PhiDrift && !c.has("mode")) c.set("mode", "jump");
    return dar::ExperimentSpec::from_config(c);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic alternative routing experiments"};
    app.require_subcommand(1);
    Flags flags;
    const std::vector<std::pair<const char*, const char*>> commands = {
        {"lln", "law of large numbers: sup error against the ODE over n"},
        {"conc", "concentration of f_{v,k} across replicas"},
        {"phi", "phi statistics along jump-chain paths and per-step increments"},
        {"couple", "coupled chains: distance growth"},
        {"gencheck", "fast generator against brute-force enumeration"},
        {"ode", "mean-field ODE trajectory, fixed point and constants"},
    };
    for (const auto& [name, help] : commands) add_flags(*app.add_subcommand(name, help), flags);
    CLI11_PARSE(app, argc, argv);

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        const dar::ExperimentSpec spec = resolve(dar::parse_experiment(name), flags);
        dar::run_experiment(spec, std::cout);
        if (!spec.output_dir.empty()) std::cout << "wrote " << spec.output_dir << "/manifest.txt\n";
    } catch (const std::exception& e) {
        std::cerr << "dar_lab: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
