#include <catch_amalgamated.hpp>

#include "kawasaki/geometry.hpp"
#include "kawasaki/kmc.hpp"
#include "support.hpp"

#include <algorithm>
#include <set>

using namespace kawasaki;
using support::Fixture;
using support::load_fixture;
using support::pairwise_merge;

namespace {

Configuration with(int L, const std::vector<Site>& sites) {
    Configuration c(L);
    for (Site s : sites) c.add_particle(s);
    return c;
}

Configuration random_config(int L, double density, Rng& rng) {
    Configuration c(L);
    for (int i = 0; i < L * L; ++i)
        if (uniform01(rng) < density) c.add_particle(c.site(i));
    return c;
}

// Plain recursive-free flood fill over (x, y) pairs.
std::vector<std::set<int>> flood_components(const Configuration& c) {
    const int L = c.L();
    std::vector<int> label(L * L, -1);
    std::vector<std::set<int>> comps;
    for (int y = 0; y < L; ++y)
        for (int x = 0; x < L; ++x) {
            const int i = y * L + x;
            if (!c.occupied(i) || label[i] >= 0) continue;
            std::set<int> comp;
            std::vector<std::pair<int, int>> stack{{x, y}};
            label[i] = static_cast<int>(comps.size());
            while (!stack.empty()) {
                auto [px, py] = stack.back();
                stack.pop_back();
                comp.insert(py * L + px);
                const int nb[4][2] = {{px + 1, py}, {px - 1, py}, {px, py + 1}, {px, py - 1}};
                for (auto& n : nb) {
                    const int qx = (n[0] + L) % L, qy = (n[1] + L) % L;
                    const int q = qy * L + qx;
                    if (c.occupied(q) && label[q] < 0) {
                        label[q] = label[i];
                        stack.push_back({qx, qy});
                    }
                }
            }
            comps.push_back(comp);
        }
    return comps;
}

}  // namespace

TEST_CASE("clusterise examples") {
    auto diag = clusterise(with(10, {{2, 2}, {3, 3}}));
    CHECK(diag.clusters.empty());
    CHECK(diag.singles.size() == 2);

    auto rect = clusterise(with(10, {{2, 2}, {3, 2}, {4, 2}, {2, 3}, {3, 3}, {4, 3}}));
    REQUIRE(rect.clusters.size() == 1);
    REQUIRE(rect.clusters[0].quasi_square.has_value());
    CHECK(rect.clusters[0].quasi_square->l1 == 2);
    CHECK(rect.clusters[0].quasi_square->l2 == 3);

    auto ell = clusterise(with(10, {{2, 2}, {3, 2}, {4, 2}, {2, 3}, {2, 4}}));
    REQUIRE(ell.clusters.size() == 1);
    CHECK(ell.clusters[0].volume == 5);
    CHECK_FALSE(ell.clusters[0].quasi_square.has_value());
    CHECK(ell.clusters[0].rc == Rectangle{2, 2, 4, 4});

    auto ell2 = clusterise(with(10, {{2, 2}, {3, 2}, {4, 2}, {2, 3}, {3, 3}}));
    CHECK(ell2.clusters[0].rc->width() == 3);
    CHECK(ell2.clusters[0].rc->height() == 2);
    CHECK_FALSE(ell2.clusters[0].quasi_square.has_value());

    auto bar = clusterise(with(10, {{2, 2}, {3, 2}, {4, 2}}));
    CHECK_FALSE(bar.clusters[0].quasi_square.has_value());
}

TEST_CASE("clusterise partitions occupied sites like a flood fill") {
    Rng rng(17);
    for (int rep = 0; rep < 10000; ++rep) {
        const int L = 3 + static_cast<int>(rng() % 10);
        const Configuration c = random_config(L, 0.1 + 0.5 * uniform01(rng), rng);
        const Clusterisation cl = clusterise(c);
        std::set<std::set<int>> want, got;
        std::set<int> singles;
        for (const auto& comp : flood_components(c)) {
            if (comp.size() == 1) {
                singles.insert(*comp.begin());
            } else {
                want.insert(comp);
            }
        }
        for (const auto& k : cl.clusters) {
            REQUIRE(k.volume == static_cast<int>(k.sites.size()));
            got.insert(std::set<int>(k.sites.begin(), k.sites.end()));
        }
        REQUIRE(got == want);
        REQUIRE(std::set<int>(cl.singles.begin(), cl.singles.end()) == singles);
        REQUIRE(cl.max_volume() == max_component_volume(c));
    }
}

TEST_CASE("circumscribed rectangle") {
    CHECK(circumscribed_rectangle({{4, 5}}) == Rectangle{4, 5, 4, 5});
    CHECK(circumscribed_rectangle({{0, 0}, {2, 1}}) == Rectangle{0, 0, 2, 1});
    CHECK(circumscribed_rectangle({{0, 0}, {2, 1}}, 10) == Rectangle{0, 0, 2, 1});
    // Across the seam: anchored at x = 9, extending to 11 in unwrapped coordinates.
    CHECK(circumscribed_rectangle({{9, 0}, {0, 0}, {1, 1}}, 10) == Rectangle{9, 0, 11, 1});
    CHECK(circumscribed_rectangle({{3, 9}, {3, 0}}, 10) == Rectangle{3, 9, 3, 10});
    CHECK_THROWS_AS(circumscribed_rectangle({{0, 0}, {5, 0}}, 10), WrapAmbiguity);
    CHECK_NOTHROW(circumscribed_rectangle({{0, 0}, {4, 0}}, 10));
    CHECK_THROWS_AS(circumscribed_rectangle(std::vector<Site>{}), std::invalid_argument);

    const auto seam = clusterise(with(10, {{9, 4}, {0, 4}, {9, 5}, {0, 5}}));
    REQUIRE(seam.clusters.size() == 1);
    CHECK(seam.clusters[0].rc == Rectangle{9, 4, 10, 5});
    CHECK(seam.clusters[0].quasi_square.has_value());
    CHECK(seam.clusters[0].cx == 9.5);

    // Small sets translated anywhere on the torus match the plane result shifted back.
    Rng rng(3);
    for (int rep = 0; rep < 2000; ++rep) {
        const int L = 12;
        std::vector<Site> plane;
        for (int k = 0; k < 1 + static_cast<int>(rng() % 6); ++k)
            plane.push_back({static_cast<int>(rng() % 5), static_cast<int>(rng() % 5)});
        const int sx = static_cast<int>(rng() % L), sy = static_cast<int>(rng() % L);
        std::vector<Site> moved;
        for (Site s : plane) moved.push_back({wrap(s.x + sx, L), wrap(s.y + sy, L)});
        const Rectangle a = circumscribed_rectangle(plane);
        const Rectangle b = circumscribed_rectangle(moved, L);
        REQUIRE(b.width() == a.width());
        REQUIRE(b.height() == a.height());
        REQUIRE(b.x0 == wrap(a.x0 + sx, L));
        REQUIRE(b.y0 == wrap(a.y0 + sy, L));
    }
}

TEST_CASE("single particle on an empty torus is free") {
    const auto r = free_particles(with(30, {{4, 4}}));
    CHECK(r.is_free(0));
    CHECK(verify_escapes(with(30, {{4, 4}}), r));
    CHECK_THROWS_AS(free_particles(with(30, {{4, 4}}), 1), std::invalid_argument);
}

TEST_CASE("free particles in the Fig. 3 configuration") {
    const Fixture f = load_fixture("fig3.fixture");
    const FreenessReport r = free_particles(f.config, 10);
    REQUIRE(f.expect.size() == static_cast<std::size_t>(f.config.N()));
    for (const auto& [id, st] : f.expect) {
        INFO("particle " << id);
        CHECK(to_string(r.of(id)) == st);
    }
    CHECK(verify_escapes(f.config, r));
    // Particle 5 only gets out once its four diagonal neighbours have left.
    const auto it = std::find_if(r.order.begin(), r.order.end(), [](const Escape& e) { return e.id == 5; });
    REQUIRE(it != r.order.end());
    CHECK(it->round == 1);
}

TEST_CASE("particle sealed in a hollow ring is trapped") {
    std::vector<Site> ring;
    for (int x = 5; x <= 11; ++x) {
        ring.push_back({x, 5});
        ring.push_back({x, 11});
    }
    for (int y = 6; y <= 10; ++y) {
        ring.push_back({5, y});
        ring.push_back({11, y});
    }
    ring.push_back({8, 8});
    const Configuration c = with(30, ring);
    const FreenessReport r = free_particles(c);
    const int inside = c.id_at(Site{8, 8});
    CHECK(r.of(inside) == Freeness::Trapped);
    CHECK(r.trapped_reach.at(inside) > 1);
    for (auto [id, s] : c.particles())
        if (id != inside) CHECK(r.of(id) == Freeness::Clusterised);
}

TEST_CASE("escape certificates replay on random configurations") {
    Rng rng(23);
    for (int rep = 0; rep < 300; ++rep) {
        const int L = 12 + static_cast<int>(rng() % 20);
        const Configuration c = random_config(L, 0.05 + 0.2 * uniform01(rng), rng);
        const int w = 2 + static_cast<int>(rng() % 6);
        const FreenessReport r = free_particles(c, w);
        REQUIRE(verify_escapes(c, r));
        const Clusterisation cl = clusterise(c);
        for (auto [id, s] : c.particles()) REQUIRE((r.of(id) == Freeness::Clusterised) == (cl.cluster_of[s] >= 0));
    }
}

TEST_CASE("event-local freeness matches a full sweep") {
    Rng rng(41);
    Configuration c = random_config(24, 0.12, rng);
    Simulator sim(c, 1.0, 1.0);
    FreenessTracker tracker(4);
    tracker.sweep(sim.config());
    for (int k = 0; k < 3000; ++k) {
        const Event e = sim.step(rng);
        tracker.after_move(sim.config(), e.from, e.to);
        if (k % 100 == 99) {
            const FreenessReport full = free_particles(sim.config(), 4);
            REQUIRE(tracker.statuses() == full.status);
        }
    }
    FreenessTracker again(4);
    const auto changes = again.sweep(sim.config());
    CHECK(changes.size() == static_cast<std::size_t>(sim.config().N()));
    CHECK(again.sweep(sim.config()).empty());
}

TEST_CASE("sleep timeline") {
    const double eD = 5.0;
    SleepState s(eD);
    s.add(1, 0.0);
    CHECK(s.active(1, 0.0));

    // Freed at t0 = 2, clusterised from t = 3 on: sleeping first at t0 + e^{D beta}.
    s.observe(1, true, 2.0);
    s.observe(1, false, 3.0);
    CHECK(s.active(1, 6.999));
    CHECK(s.sleeping(1, 7.0));
    CHECK(s.last_free_time(1) == 2.0);

    // Continuously clusterised since insertion.
    s.add(2, 3.0);
    s.observe(2, false, 3.0);
    CHECK(s.active(2, 7.9));
    CHECK(s.sleeping(2, 8.0));

    // Free now: never sleeping, however long ago it was inserted.
    s.add(3, 3.0);
    s.observe(3, true, 4.0);
    CHECK(s.active(3, 100.0));

    CHECK_THROWS_AS(s.observe(99, true, 5.0), std::out_of_range);
    CHECK_THROWS_AS(s.observe(1, true, 1.0), std::invalid_argument);

    FreenessReport rep;
    rep.status[1] = Freeness::Free;
    rep.status[2] = Freeness::Clusterised;
    const SleepState n = update_sleep(s, rep, 9.0);
    CHECK(n.last_free_time(1) == 9.0);
    CHECK(n.active(1, 9.0));
    CHECK(n.sleeping(2, 9.0));
    rep.status[7] = Freeness::Free;
    CHECK_THROWS_AS(update_sleep(s, rep, 9.0), std::out_of_range);
}

TEST_CASE("membership in R and R'") {
    ModelParams p;
    p.beta = 3;
    DerivedParams dp = derive(p);
    REQUIRE(dp.max_subcritical_volume == 8);
    CHECK(in_R(Configuration(12), dp));
    CHECK(in_Rprime(Configuration(12), dp));

    std::vector<Site> nine;
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) nine.push_back({x + 1, y + 1});
    std::vector<Site> eight(nine.begin(), nine.end() - 1);
    CHECK(in_R(with(20, eight), dp));
    CHECK_FALSE(in_R(with(20, nine), dp));

    std::vector<Site> mix = nine;
    for (Site s : {Site{10, 10}, Site{11, 10}, Site{15, 3}}) mix.push_back(s);
    dp.lambda_beta = 80;  // lambda / 8 = 10 > 9
    CHECK(in_Rprime(with(20, mix), dp));
    CHECK_FALSE(in_R(with(20, mix), dp));
    dp.lambda_beta = 72;  // lambda / 8 = 9: no longer strictly above the volume
    CHECK_FALSE(in_Rprime(with(20, mix), dp));
    dp.lambda_beta = 800;
    std::vector<Site> two = nine;
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) two.push_back({x + 10, y + 10});
    CHECK_FALSE(in_Rprime(with(20, two), dp));
}

TEST_CASE("thickening") {
    const int L = 40;
    Configuration c(L);
    const int a = c.index({10, 10}), b = c.index({30, 30});
    const double beta = 2.0;
    const double s = 2 * std::log(3.5) / beta;  // radius 3.5 -> 3
    const Thickened one = thicken({a}, s, beta, L);
    CHECK(one.radius == 3);
    CHECK(one.sites.size() == 49);
    CHECK(thicken({a}, 0, 7.0, L).sites.size() == 9);
    CHECK(thicken({a, b}, s, beta, L).sites.size() == 98);
    CHECK_THROWS_AS(thicken({a}, -1, beta, L), std::invalid_argument);
    const Thickened all = thicken({a}, 2 * std::log(25.0) / beta, beta, L);
    CHECK(all.whole_torus);
    CHECK(all.sites.size() == static_cast<std::size_t>(L * L));

    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<int> A;
        for (int k = 0; k < 3; ++k) A.push_back(static_cast<int>(rng() % (L * L)));
        std::vector<int> B = A;
        B.push_back(static_cast<int>(rng() % (L * L)));
        const double s1 = uniform01(rng) * 2, s2 = s1 + uniform01(rng);
        const auto tA = thicken(A, s1, 1.5, L).sites, tB = thicken(B, s1, 1.5, L).sites;
        const auto tA2 = thicken(A, s2, 1.5, L).sites;
        REQUIRE(std::includes(tB.begin(), tB.end(), tA.begin(), tA.end()));
        REQUIRE(std::includes(tA2.begin(), tA2.end(), tA.begin(), tA.end()));
    }
}

TEST_CASE("cloud aggregation examples") {
    const std::vector<Rectangle> apart{{0, 0, 1, 1}, {5, 0, 6, 1}};
    CHECK(aggregate_clouds(apart, 4).rectangles == apart);
    CHECK(aggregate_clouds(apart, 4).iterations == 1);

    CHECK(aggregate_clouds({{0, 0, 3, 3}, {2, 2, 5, 4}}, 1).rectangles == std::vector<Rectangle>{{0, 0, 5, 4}});

    // The first two merge; only their hull is close enough to the third.
    const std::vector<Rectangle> chain{{0, 0, 0, 4}, {2, 0, 2, 0}, {4, 4, 4, 4}};
    const CloudSet cs = aggregate_clouds(chain, 3);
    CHECK(cs.rectangles == std::vector<Rectangle>{{0, 0, 4, 4}});
    CHECK(cs.iterations == 3);  // two merging rounds and one confirming round

    // Across the seam of a torus of side 20.
    CHECK(aggregate_clouds({{19, 0, 19, 0}, {0, 0, 0, 0}}, 2, 20).rectangles ==
          std::vector<Rectangle>{{19, 0, 20, 0}});
    CHECK_THROWS_AS(aggregate_clouds({{0, 0, 4, 0}, {6, 0, 9, 0}}, 3, 16), WrapAmbiguity);
    CHECK_THROWS_AS(aggregate_clouds(apart, 0), std::invalid_argument);
}

TEST_CASE("cloud aggregation laws and merge-order independence") {
    Rng rng(99);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<Rectangle> in;
        const int n = 1 + static_cast<int>(rng() % 6);
        for (int k = 0; k < n; ++k) {
            const int x = static_cast<int>(rng() % 30), y = static_cast<int>(rng() % 30);
            in.push_back({x, y, x + static_cast<int>(rng() % 5), y + static_cast<int>(rng() % 5)});
        }
        const double sigma = 1 + uniform01(rng) * 6;
        const CloudSet out = aggregate_clouds(in, sigma);
        for (std::size_t i = 0; i < out.rectangles.size(); ++i)
            for (std::size_t j = i + 1; j < out.rectangles.size(); ++j)
                REQUIRE(rect_dist(out.rectangles[i], out.rectangles[j]) >= sigma);
        for (const auto& r : in)
            REQUIRE(std::any_of(out.rectangles.begin(), out.rectangles.end(),
                                [&](const Rectangle& o) { return o.contains(r); }));
        REQUIRE(aggregate_clouds(out.rectangles, sigma).rectangles == out.rectangles);
        for (int order = 0; order < 3; ++order) REQUIRE(pairwise_merge(in, sigma, rng) == out.rectangles);
    }
}

TEST_CASE("cloud radius schedule") {
    CHECK_THAT(cloud_schedule(0, 2.0, 0.1, 3), Catch::Matchers::WithinRel(std::exp(2.85), 1e-12));
    CHECK_THAT(cloud_schedule(1, 2.0, 0.1, 3), Catch::Matchers::WithinRel(std::exp(2.85 - 0.075), 1e-12));
    for (int j = 1; j < 30; ++j) CHECK(cloud_schedule(j, 2.0, 0.1, 3) < cloud_schedule(j - 1, 2.0, 0.1, 3));
    CHECK_THAT(cloud_schedule(60, 2.0, 0.1, 3), Catch::Matchers::WithinRel(std::exp((2.0 - 0.2) * 3 / 2), 1e-9));
    CHECK_THROWS_AS(cloud_schedule(-1, 2.0, 0.1, 3), std::invalid_argument);
}

TEST_CASE("active box diagnostic") {
    const double S = 2 * std::log(4.5);  // beta = 1: tiles of side 5 on L = 20
    SleepState sleep(1.0);
    Configuration spread = with(20, {{1, 1}, {7, 1}, {13, 13}});
    for (auto [id, s] : spread.particles()) sleep.add(id, 0.0);
    CHECK(active_box_diagnostic(spread, sleep, S, 1.0, 0.5) == 1);
    for (auto [id, s] : spread.particles()) sleep.observe(id, false, 0.5);
    CHECK(active_box_diagnostic(spread, sleep, S, 1.0, 3.0) == 0);

    SleepState awake(1.0);
    Configuration crowd = with(20, {{0, 0}, {2, 0}, {4, 4}, {0, 4}, {10, 10}});
    for (auto [id, s] : crowd.particles()) awake.add(id, 0.0);
    CHECK(active_box_diagnostic(crowd, awake, S, 1.0, 0.0) == 4);
}
