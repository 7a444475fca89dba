#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dar/experiments.hpp"

using namespace dar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dar_experiments_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

ExperimentSpec small_lln() {
    ExperimentSpec s;
    s.kind = ExperimentKind::Lln;
    s.sim.params = {10, 2, 2, 1.0};
    s.n_grid = {10, 14};
    s.replicas = 3;
    s.sim.t0 = 0.5;
    s.grid_points = 6;
    s.sim.seed = 11;
    return s;
}

}  // namespace

TEST_CASE("config round trip") {
    ExperimentSpec s = small_lln();
    s.kind = ExperimentKind::PhiDrift;
    s.sim.policy = PolicyKind::NoDirectBdar;
    s.sim.mode = SimMode::JumpChain;
    s.initial.kind = InitialKind::RandomAllocation;
    s.initial.c0 = 0.25;
    s.initial.shared = false;
    s.phi_samples = 7;
    s.coupling_offset = 3;
    s.ode_step = 0.005;
    s.sim.snapshot_times = {0.0, 0.125, 0.5};
    std::stringstream text;
    s.to_config().write(text);
    const ExperimentSpec back = ExperimentSpec::from_config(KeyValueConfig::parse(text));
    CHECK(back.to_config().entries() == s.to_config().entries());
    CHECK(back.hash() == s.hash());
}

TEST_CASE("bare parameter keys") {
    std::stringstream text("kind = lln\nn = 30\ncapacity = 4\nchoices = 3\nlambda = 0.5\n");
    const ExperimentSpec s = ExperimentSpec::from_config(KeyValueConfig::parse(text));
    CHECK(s.n_grid == std::vector<int>{30});
    CHECK(s.sim.params == ModelParams{30, 4, 3, 0.5});
}

TEST_CASE("hash ignores output location and thread count") {
    ExperimentSpec a = small_lln();
    ExperimentSpec b = a;
    b.output_dir = "/somewhere/else";
    b.threads = 7;
    CHECK(a.hash() == b.hash());
    b.sim.seed = 12;
    CHECK(a.hash() != b.hash());
    CHECK(a.hash().size() == 16);
}

TEST_CASE("validation") {
    ExperimentSpec s = small_lln();
    s.n_grid.clear();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_lln();
    s.kind = ExperimentKind::Concentration;
    s.replicas = 49;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_lln();
    s.kind = ExperimentKind::CouplingGrowth;
    s.replicas = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_lln();
    s.sim.snapshot_times = {0.0, 0.7};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_lln();
    s.initial.kind = InitialKind::FromFile;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_lln();
    s.sim.params.lambda = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    CHECK_NOTHROW(small_lln().validate());
}

TEST_CASE("outside S1 is refused") {
    ExperimentSpec s = small_lln();
    // Enough capacity that 5N offered calls mostly fit.
    s.sim.params.capacity = 10;
    s.initial.kind = InitialKind::RandomAllocation;
    s.initial.c0 = 5.0;
    CHECK_THROWS_AS((void)run_lln(s), std::invalid_argument);
}

TEST_CASE("reruns write identical files") {
    ExperimentSpec s = small_lln();
    s.write_trajectories = true;
    const fs::path a = scratch("rerun_a");
    const fs::path b = scratch("rerun_b");
    std::ostringstream log;
    s.output_dir = a.string();
    s.threads = 1;
    run_experiment(s, log);
    s.output_dir = b.string();
    s.threads = 3;
    run_experiment(s, log);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        if (entry.path().filename() == "manifest.txt") continue;  // records output_dir and threads
        CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string());
        ++compared;
    }
    CHECK(compared >= 4);
    const std::string header = first_line(a / "lln_replicas.csv");
    CHECK(header.find("seed") != std::string::npos);
    CHECK(header.find("replica") != std::string::npos);
    CHECK(header.find("spec_hash") != std::string::npos);
    CHECK(slurp(a / "manifest.txt").find(s.hash()) != std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("LLN errors shrink with a shared random start") {
    ExperimentSpec s = small_lln();
    s.initial.kind = InitialKind::RandomAllocation;
    s.initial.c0 = 0.5;
    s.n_grid = {20, 80};
    s.replicas = 5;
    const LlnReport r = run_lln(s);
    REQUIRE(r.points.size() == 2);
    for (const LlnPoint& p : r.points) {
        CHECK(p.errors.size() == 5);
        CHECK(p.median_error <= p.max_error);
        CHECK(p.ode.size() == 6);
    }
    CHECK(r.points[1].median_error < r.points[0].median_error);
}

TEST_CASE("ODE only runs") {
    ExperimentSpec s = small_lln();
    s.replicas = 0;
    const LlnReport r = run_lln(s);
    REQUIRE(r.points.size() == 2);
    CHECK(r.points[0].errors.empty());
    CHECK(r.points[0].ode.size() == 6);

    s.kind = ExperimentKind::OdeOnly;
    s.sim.params = {10, 1, 1, 1.0};
    s.sim.t0 = 40.0;
    const OdeReport o = run_ode(s);
    REQUIRE(o.fixed_point.size() == 2);
    CHECK(std::abs(o.trajectory.back()[1] - o.fixed_point[1]) <= 1e-6);
    CHECK(o.constants.log_gamma == theorem_constants(1.0, 1, 1, 40.0).log_gamma);
}

TEST_CASE("generator check on small networks") {
    ExperimentSpec s;
    s.kind = ExperimentKind::GeneratorCheck;
    s.sim.params = {4, 2, 1, 1.0};
    s.n_grid = {4};
    s.gencheck_states = 100;
    s.gencheck_prefix = 30;
    for (auto policy : {PolicyKind::Bdar, PolicyKind::Fdar, PolicyKind::NoDirectBdar}) {
        s.sim.policy = policy;
        const GeneratorCheckReport r = run_generator_check(s);
        CHECK(r.per_state.size() == 100);
        CHECK(r.max_relative_error <= 1e-12);
    }
}

TEST_CASE("coupling from equal states") {
    ExperimentSpec s;
    s.kind = ExperimentKind::CouplingGrowth;
    s.sim.params = {12, 3, 2, 1.0};
    s.n_grid = {12};
    s.initial.kind = InitialKind::RandomAllocation;
    s.initial.c0 = 1.0;
    s.replicas = 20;
    s.coupling_steps = 300;
    s.coupling_offset = 0;
    const CouplingRun run = run_coupling(s);
    CHECK(run.initial_l1 == 0);
    for (const GrowthStep& g : run.growth.steps) CHECK(g.mean_l1 == 0.0);

    s.coupling_offset = 4;
    const CouplingRun moved = run_coupling(s);
    CHECK(moved.initial_l1 == 4);
    CHECK(moved.growth.steps.front().mean_l1 == 4.0);
}

TEST_CASE("concentration with almost no traffic") {
    ExperimentSpec s;
    s.kind = ExperimentKind::Concentration;
    s.sim.params = {8, 2, 1, 1e-9};
    s.n_grid = {8};
    s.replicas = 50;
    s.sim.t0 = 1.0;
    s.grid_points = 3;
    const ConcentrationReport r = run_concentration(s);
    REQUIRE(r.points.size() == 1);
    for (const ConcentrationRow& row : r.points[0].rows) {
        CHECK(row.sd == 0.0);
        CHECK(row.max_dev == 0.0);
        CHECK(row.mean == (row.k == 0 ? 7.0 : 0.0));
    }
}

TEST_CASE("phi drift bookkeeping") {
    ExperimentSpec s;
    s.kind = ExperimentKind::PhiDrift;
    s.sim.params = {12, 2, 1, 1.0};
    s.n_grid = {12};
    s.sim.mode = SimMode::JumpChain;
    s.sim.t0 = 4000;
    s.replicas = 1;
    s.phi_samples = 6;
    const PhiDriftReport r = run_phi_drift(s);
    CHECK(r.total_steps == 4000);
    REQUIRE(r.tuples.size() == 6);
    for (const PhiTupleStats& t : r.tuples) {
        CHECK(t.tuple.u != t.tuple.v);
        CHECK(t.mean_abs_increment >= 0.0);
        CHECK(t.se >= 0.0);
        CHECK(t.bound > 0.0);
    }
    CHECK(r.c1 == doctest::Approx(26.0 * 2 * 3));
    CHECK(r.phi_bar >= 0.0);
    CHECK(r.phi_bar <= 1.0);
}

TEST_CASE("initial phi threshold") {
    ExperimentSpec s;
    s.sim.params = {40, 3, 2, 1.0};
    s.n_grid = {40};
    s.initial.kind = InitialKind::RandomAllocation;
    s.initial.c0 = 0.5;
    s.initial.shared = false;
    s.replicas = 10;
    const InitialPhiReport r = run_initial_phi(s);
    CHECK(r.threshold == doctest::Approx(3 * std::log(40.0) / std::sqrt(40.0)));
    CHECK(r.phi.size() == 10);
    CHECK(r.within <= 10);
}
