#include <catch_amalgamated.hpp>

#include "kawasaki/gibbs.hpp"
#include "kawasaki/kmc.hpp"

#include <cmath>
#include <filesystem>
#include <map>

using namespace kawasaki;

namespace {

Configuration with(int L, std::initializer_list<Site> sites) {
    Configuration c(L);
    for (Site s : sites) c.add_particle(s);
    return c;
}

}  // namespace

TEST_CASE("event list examples") {
    const EventList one = build_event_list(with(8, {{3, 3}}));
    CHECK(one.size() == 4);
    CHECK(one.count(0) == 4);

    const EventList sq = build_event_list(with(8, {{3, 3}, {4, 3}, {3, 4}, {4, 4}}));
    CHECK(sq.size() == 8);
    CHECK(sq.count(2) == 8);

    Configuration full(3);
    for (int i = 0; i < 9; ++i) full.add_particle(full.site(i));
    CHECK(build_event_list(full).size() == 0);
    Simulator sim(full, 1.0, 1.0);
    Rng rng(1);
    CHECK_THROWS_AS(sim.step(rng), FrozenError);
}

TEST_CASE("every valid ordered move is in the bucket of its energy change") {
    Rng rng(4);
    for (int rep = 0; rep < 200; ++rep) {
        const int L = 3 + static_cast<int>(rng() % 6);
        Configuration c(L);
        for (int i = 0; i < L * L; ++i)
            if (uniform01(rng) < 0.4) c.add_particle(c.site(i));
        const EventList ev = build_event_list(c);
        int valid = 0;
        for (int s = 0; s < c.sites(); ++s)
            for (int d = 0; d < 4; ++d) {
                const int to = c.neighbours(s)[d];
                const int m = move_code(s, d);
                if (!c.occupied(s) || c.occupied(to)) {
                    REQUIRE(ev.bucket_of(m) == -1);
                    continue;
                }
                ++valid;
                REQUIRE(ev.bucket_of(m) == std::max(0, delta_energy_units(c, s, to)));
            }
        REQUIRE(ev.size() == valid);
    }
}

TEST_CASE("incremental rebucketing matches a rebuild") {
    Rng rng(8);
    for (int L : {2, 3, 5, 12}) {
        Configuration c(L);
        for (int i = 0; i < L * L; ++i)
            if (uniform01(rng) < 0.35) c.add_particle(c.site(i));
        Simulator sim(c, 1.0, 1.3);
        for (int k = 0; k < 10000; ++k) {
            if (!(sim.total_rate() > 0)) break;
            const Event e = sim.step(rng);
            REQUIRE(std::abs(e.dH) <= 3);
        }
        CHECK(sim.events() == build_event_list(sim.config()));
        CHECK(sim.config().bonds() == count_bonds(sim.config()));
        CHECK(sim.config().N() == c.N());
    }
}

TEST_CASE("single free particle jumps at rate 1 per direction") {
    Simulator sim(with(50, {{25, 25}}), 1.0, 2.0);
    Rng rng(12);
    std::array<int, 4> hits{};
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
        const Event e = sim.step(rng);
        const Site a = sim.config().site(e.from), b = sim.config().site(e.to);
        const int dx = min_image(a.x, b.x, 50), dy = min_image(a.y, b.y, 50);
        hits[dx == 1 ? 0 : dy == 1 ? 1 : dx == -1 ? 2 : 3]++;
    }
    const double T = sim.config().time();
    for (int d = 0; d < 4; ++d) {
        const double rate = hits[d] / T;
        const double sigma = std::sqrt(static_cast<double>(hits[d])) / T;
        CHECK(std::abs(rate - 1.0) < 3 * sigma);
    }
}

TEST_CASE("dimer detachment rate") {
    // Six moves break the bond, each at rate e^{-beta U}; nothing else can happen.
    const double beta = 2.0;
    Rng rng(13);
    double total = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        Simulator sim(with(20, {{5, 5}, {6, 5}}), 1.0, beta);
        REQUIRE(sim.events().count(1) == 6);
        REQUIRE(sim.events().size() == 6);
        const Event e = sim.step(rng);
        CHECK(e.dH == 1);
        total += e.dt;
    }
    const double rate = n / total;
    const double expect = 6 * std::exp(-beta);
    CHECK(std::abs(rate - expect) < 3 * expect / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("reversibility on the 4x4 torus with three particles") {
    GibbsParams gp;
    gp.U = 1;
    gp.beta = 1;
    gp.N = 3;
    const ExactMeasure mu = enumerate_measure(4, MeasureMode::Canonical, gp);
    int pairs = 0;
    double worst = 0;
    for (const auto& [code, w] : mu.weights) {
        const Configuration c = config_from_code(4, code);
        for (int s = 0; s < 16; ++s) {
            if (!c.occupied(s)) continue;
            for (int to : c.neighbours(s)) {
                if (c.occupied(to)) continue;
                Configuration d = c;
                d.apply_exchange(s, to);
                const double lhs = mu.probability(code) * exchange_rate(c, s, to, 1, 1);
                const double rhs = mu.probability(code_of(d)) * exchange_rate(d, to, s, 1, 1);
                worst = std::max(worst, std::abs(lhs - rhs) / lhs);
                ++pairs;
            }
        }
    }
    CHECK(pairs > 0);
    CHECK(worst <= 1e-12);
}

TEST_CASE("time-weighted occupation converges to the canonical measure") {
    GibbsParams gp;
    gp.U = 1;
    gp.beta = 1;
    gp.N = 3;
    const ExactMeasure mu = enumerate_measure(4, MeasureMode::Canonical, gp);
    Simulator sim(with(4, {{0, 0}, {1, 0}, {2, 2}}), 1.0, 1.0);
    Rng rng(2024);
    std::map<std::uint32_t, double> occupation;
    double last = 0;
    for (int k = 0; k < 1000000; ++k) {
        const std::uint32_t code = code_of(sim.config());
        const Event e = sim.step(rng);
        occupation[code] += e.time - last;
        last = e.time;
    }
    double tv = 0;
    for (const auto& [code, w] : mu.weights) tv += std::abs(occupation[code] / last - w / mu.Z);
    CHECK(tv / 2 < 0.02);
}

TEST_CASE("run_until stop rules") {
    Rng rng(6);
    Simulator a(with(10, {{1, 1}, {5, 5}}), 1.0, 1.0);
    const TrajectoryLog zero = run_until(a, StopRule::until(0), rng);
    CHECK(zero.records.empty());
    CHECK(zero.reason == StopReason::Horizon);

    Simulator b(with(10, {{1, 1}, {5, 5}}), 1.0, 1.0);
    const TrajectoryLog h = run_until(b, StopRule::until(50), rng);
    CHECK(h.end_time == 50);
    CHECK(b.config().time() == 50);
    for (std::size_t i = 1; i < h.records.size(); ++i) CHECK(h.records[i].t > h.records[i - 1].t);

    Simulator c(with(10, {{1, 1}, {5, 5}}), 1.0, 1.0);
    StopRule cap = StopRule::until(1e9);
    cap.event_cap = 100;
    const TrajectoryLog capped = run_until(c, cap, rng);
    CHECK(capped.truncated);
    CHECK(capped.reason == StopReason::EventCap);
    CHECK(capped.records.size() == 100);

    Simulator d(with(6, {{0, 0}, {2, 0}, {4, 3}}), 1.0, 0.5);
    const TrajectoryLog cl = run_until(d, StopRule{1e9, 2, std::nullopt}, rng);
    CHECK(cl.reason == StopReason::ClusterVolume);
    CHECK(max_component_volume(d.config()) >= 2);
    CHECK(max_component_volume(replay(cl, [](const Configuration&, const LogRecord&) {})) >= 2);
}

TEST_CASE("sampler sees pre-move states at fixed times and the particle count is conserved") {
    Rng rng(31);
    Configuration c(8);
    for (int i = 0; i < 64; i += 5) c.add_particle(c.site(i));
    Simulator sim(c, 1.0, 1.0);
    Observers obs;
    obs.sample_period = 0.5;
    std::vector<double> times;
    bool conserved = true;
    obs.on_sample = [&](const Simulator& s, double t) {
        times.push_back(t);
        conserved = conserved && s.config().N() == c.N();
        CHECK(s.config().time() <= t);
    };
    run_until(sim, StopRule::until(20), rng, obs);
    CHECK(conserved);
    REQUIRE(times.size() == 41);
    CHECK(times.back() == 20);
}

TEST_CASE("identical seeds give identical trajectories") {
    auto run = [](std::uint64_t seed) {
        Rng rng = make_rng(seed);
        Configuration c(12);
        for (int i = 0; i < 144; i += 7) c.add_particle(c.site(i));
        Simulator sim(c, 1.0, 1.5);
        return write_log(run_until(sim, StopRule::until(30), rng));
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
    CHECK(stream_seed(1, replica_stream(0, 1)) != stream_seed(1, replica_stream(1, 0)));
}

TEST_CASE("trajectory log files round trip, plain and gzip") {
    Rng rng(77);
    Configuration c(9);
    for (int i = 0; i < 81; i += 4) c.add_particle(c.site(i));
    Simulator sim(c, 1.0, 1.0);
    TrajectoryLog log = run_until(sim, StopRule::until(10), rng);
    log.header["beta"] = "1";
    const auto dir = std::filesystem::temp_directory_path() / "kawasaki_kmc_test";
    std::filesystem::create_directories(dir);
    for (const char* name : {"t.log", "t.log.gz"}) {
        const std::string path = (dir / name).string();
        save_log(log, path);
        const TrajectoryLog back = load_log(path);
        CHECK(back.records == log.records);
        CHECK(back.initial == log.initial);
        CHECK(back.reason == log.reason);
        CHECK(back.end_time == log.end_time);
        CHECK(back.header.at("beta") == "1");
        Configuration end = replay(back, [](const Configuration&, const LogRecord&) {});
        end.set_time(sim.config().time());
        CHECK(end == sim.config());
    }
    CHECK_THROWS_AS(read_log("1 0 0 1 0 0 0\n"), ParseError);
}
