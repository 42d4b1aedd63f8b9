#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "kawa_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string write(const std::string& name, const std::string& text) {
    const fs::path p = scratch() / name;
    std::ofstream(p) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string out;
};

Run kawa(const std::string& args) {
    const fs::path out = scratch() / "stdout.txt";
    const std::string cmd = std::string(KAWA_BINARY) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    return r;
}

const std::string kParams = "U = 1\nDelta = 1.6\nTheta = 2.4\nbeta = 2\n";

}  // namespace

TEST_CASE("params show") {
    const std::string cfg = write("p.conf", kParams);
    const Run r = kawa("params show --config " + cfg);
    CHECK(r.code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("ell_c            3"));
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("Gamma            4.8"));

    const std::string bad = write("bad.conf", "U = 1\nDelta = 2.5\nbeta = 2\n");
    CHECK(kawa("params show --config " + bad).code == 2);
    CHECK(kawa("params show").code == 2);
    CHECK(kawa("no-such-command").code == 2);
    const std::string junk = write("junk.conf", "U = one\n");
    CHECK(kawa("params show --config " + junk).code == 2);
}

TEST_CASE("enumerate") {
    const Run r = kawa("enumerate --L 2 --mode grand-canonical --beta 1");
    CHECK(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 17);
    CHECK(kawa("enumerate --L 5 --beta 1").code == 3);
    CHECK(kawa("enumerate --L 3 --mode sideways --beta 1").code == 2);
}

TEST_CASE("simulate and analyze a trajectory") {
    const std::string cfg = write("p.conf", kParams);
    const std::string log = (scratch() / "run.log.gz").string();
    const Run sim = kawa("simulate --config " + cfg + " --seed 4 --log " + log);
    REQUIRE(sim.code == 0);
    CHECK_THAT(sim.out, Catch::Matchers::ContainsSubstring("stop cluster "));
    REQUIRE(fs::exists(log));

    const Run tube = kawa("analyze tube --log " + log);
    CHECK(tube.code == 0);
    CHECK_THAT(tube.out, Catch::Matchers::ContainsSubstring("\"exited\": true"));
    const Run clouds = kawa("analyze clouds --log " + log + " --epoch 1 --radius 3");
    CHECK(clouds.code == 0);
    CHECK_THAT(clouds.out, Catch::Matchers::ContainsSubstring("\"histories\""));

    CHECK(kawa("simulate --config " + cfg + " --stop horizon --horizon 1e9 --event-cap 10").code == 3);
    CHECK(kawa("simulate --config " + cfg + " --stop sideways").code == 2);
    const std::string broken = write("broken.log", "not a log\n");
    CHECK(kawa("analyze tube --log " + broken).code == 2);
}

TEST_CASE("sample") {
    const std::string cfg = write("p.conf", kParams);
    const fs::path out = scratch() / "draws";
    CHECK(kawa("sample --config " + cfg + " --count 3 --L 8 --out " + out.string()).code == 0);
    CHECK(fs::exists(out / "sample_00002.snap"));
    CHECK(kawa("sample --config " + cfg + " --count 3 --L 4 --out " + out.string()).code == 2);
}

TEST_CASE("toy model") {
    const std::string cfg = write("p.conf", kParams);
    const Run solve = kawa("toy solve --config " + cfg + " --beta 10");
    CHECK(solve.code == 0);
    CHECK_THAT(solve.out, Catch::Matchers::ContainsSubstring("2x2,"));
    CHECK_THAT(solve.out, Catch::Matchers::ContainsSubstring("0.0158"));
    CHECK(kawa("toy simulate --config " + cfg + " --beta 10 --reps 5 --seed 2").code == 0);
    CHECK(kawa("toy simulate --config " + cfg + " --beta 10 --reps 5 --max-steps 10").code == 3);
    CHECK(kawa("toy solve --config " + cfg + " --beta 0.01").code == 2);
}

TEST_CASE("nucleation run and analyze") {
    const fs::path out = scratch() / "study";
    const std::string plan = write("plan.conf", kParams + "betas = 2.0, 2.2\nreplicas = 3\nseed = 5\nthreads = 2\nout = " +
                                                    out.string() + "\n");
    const Run run = kawa("nucleation run --plan " + plan);
    CHECK(run.code == 0);
    REQUIRE(fs::exists(out / "records.csv"));
    CHECK(fs::exists(out / "summary.json"));
    CHECK_THAT(run.out, Catch::Matchers::ContainsSubstring("fit omitted"));
    CHECK(kawa("nucleation analyze --records " + out.string()).code == 0);

    const std::string stuck =
        write("stuck.conf", kParams + "betas = 2.0\nreplicas = 2\nhorizon = 0\nout = " + (scratch() / "stuck").string() + "\n");
    CHECK(kawa("nucleation run --plan " + stuck).code == 3);
    const std::string empty = write("empty.conf", kParams + "replicas = 2\nout = " + out.string() + "\n");
    CHECK(kawa("nucleation run --plan " + empty).code == 2);
}
