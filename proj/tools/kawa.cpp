// kawa: command-line front end for the lattice-gas toolkit.

#include "kawasaki/kawasaki.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace kawasaki;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitTruncated = 3;

ModelParams load_params(const std::string& path, std::optional<double> beta = std::nullopt) {
    ModelParams p = model_params_from(KeyValueFile::load(path));
    if (beta) p.beta = *beta;
    return p;
}

json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

void print_params(const ModelParams& p) {
    const DerivedParams dp = derive(p);
    std::cout << std::setprecision(12);
    std::cout << "U                " << p.U << "\n"
              << "Delta            " << p.Delta << "\n"
              << "beta             " << p.beta << "\n"
              << "Theta            " << p.Theta << "\n"
              << "alpha            " << dp.alpha << "\n"
              << "d                " << dp.d << "\n"
              << "kappa            " << dp.kappa << "\n"
              << "delta            " << dp.delta << "\n"
              << "eps              " << dp.eps << "\n"
              << "ell_c            " << dp.ell_c << "\n"
              << "Gamma            " << dp.Gamma << "\n"
              << "gamma            " << dp.gamma << "\n"
              << "theta            " << dp.theta << "\n"
              << "D                " << dp.D << "\n"
              << "Delta_plus       " << dp.Delta_plus << "\n"
              << "S                " << dp.S << "\n"
              << "r00              " << dp.r00 << "\n"
              << "a_beta           " << dp.a_beta << "\n"
              << "lambda_beta      " << dp.lambda_beta << "\n"
              << "C_star           " << dp.C_star << "\n"
              << "max_subcritical  " << dp.max_subcritical_volume << "\n"
              << "Theta_window     (" << dp.theta_window.first << ", " << dp.theta_window.second << ")\n";
    try {
        const LatticeSide side = lattice_side(p.Theta, p.beta, 2 * dp.ell_c);
        std::cout << "L                " << side.L << "\n"
                  << "Theta_eff        " << side.Theta_eff << "\n";
    } catch (const CapacityError& e) {
        std::cout << "L                (" << e.what() << ")\n";
    }
    for (const auto& [q, r] : dp.r_table) std::cout << "r(" << q.l1 << "," << q.l2 << ")" << std::string(11 - to_string(q).size(), ' ') << r << "\n";
}

int cmd_simulate(const std::string& config, std::uint64_t seed, const std::string& stop_spec, double horizon,
                 std::int64_t event_cap, const std::string& init, const std::string& log_path) {
    ModelParams p = load_params(config);
    validate(p);
    const DerivedParams dp = derive(p);
    Rng rng = make_rng(seed);
    Configuration x0;
    if (!init.empty()) {
        x0 = snapshot_read(read_text_file(init));
    } else {
        validate(p, true);
        const LatticeSide side = lattice_side(p.Theta, p.beta, 2 * dp.ell_c);
        x0 = sample_muR(p, side.L, rng);
    }
    StopRule stop = StopRule::until(horizon);
    if (stop_spec == "exitR") {
        stop = StopRule::exit_from_R(dp.max_subcritical_volume, horizon);
    } else if (stop_spec.rfind("cluster=", 0) == 0) {
        stop.cluster_volume = std::stoi(stop_spec.substr(8));
    } else if (stop_spec != "horizon") {
        throw ParamError("unknown stop rule '" + stop_spec + "' (horizon|exitR|cluster=V)");
    }
    if (stop_spec == "horizon" && !std::isfinite(horizon)) throw ParamError("--stop horizon needs --horizon T");
    if (event_cap > 0) stop.event_cap = event_cap;
    Simulator sim(x0, p.U, p.beta);
    TrajectoryLog log;
    if (sim.total_rate() > 0) {
        log = run_until(sim, stop, rng);
    } else {
        log.initial = x0;
        log.reason = StopReason::Frozen;
        log.end_time = x0.time();
    }
    put_params(log.header, p);
    log.header["seed"] = std::to_string(seed);
    if (!log_path.empty()) save_log(log, log_path);
    std::cout << "N " << x0.N() << " L " << x0.L() << " events " << log.records.size() << " stop "
              << to_string(log.reason) << " end " << format_double(log.end_time) << "\n";
    return log.truncated ? kExitTruncated : 0;
}

int cmd_sample(const std::string& config, int count, std::uint64_t seed, const std::string& out, int L,
               std::uint64_t burn_in, std::uint64_t thinning) {
    ModelParams p = load_params(config);
    validate(p);
    const DerivedParams dp = derive(p);
    if (L <= 0) L = lattice_side(p.Theta, p.beta, 2 * dp.ell_c).L;
    Rng rng = make_rng(seed);
    const auto draws = sample_muR(p, L, rng, count, SamplerSchedule{burn_in, thinning});
    fs::create_directories(out);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%05d.snap", i);
        write_text_file((fs::path(out) / name).string(), snapshot_write(draws[i]));
    }
    std::cout << "wrote " << count << " snapshots (L=" << L << ") to " << out << "\n";
    return 0;
}

int cmd_enumerate(int L, const std::string& mode, const std::string& config, int N, std::optional<double> beta) {
    GibbsParams gp;
    if (!config.empty()) gp = GibbsParams::from(load_params(config, beta));
    if (beta) gp.beta = *beta;
    gp.N = N;
    const ExactMeasure m = enumerate_measure(L, measure_mode_from(mode), gp);
    std::cout << "code,weight\n" << std::setprecision(17);
    for (const auto& [code, w] : m.weights) std::cout << code << ',' << w << '\n';
    return 0;
}

int cmd_toy_solve(const std::string& config, double beta) {
    ModelParams p = load_params(config, beta);
    const ChainSpec s = build_xi(p, ChainMode::History);
    std::cout << "state,up,down,h,mean_steps\n" << std::setprecision(12);
    for (int i = 0; i < s.size(); ++i)
        std::cout << to_string(s.states[i]) << ',' << s.up[i] << ',' << s.down[i] << ',' << absorption_prob(s, i) << ','
                  << mean_absorption_time(s, i) << '\n';
    return 0;
}

int cmd_toy_simulate(const std::string& config, double beta, int reps, std::uint64_t seed, std::int64_t max_steps) {
    ModelParams p = load_params(config, beta);
    const DerivedParams dp = derive(p);
    const ChainSpec s = build_xi(p, ChainMode::History);
    std::cout << "replica,steps,success,arrivals,failed\n";
    int truncated = 0;
    for (int r = 0; r < reps; ++r) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
        const ZetaResult z = simulate_zeta(s, dp.a_beta, rng, max_steps);
        truncated += z.truncated;
        std::cout << r << ',' << z.steps << ',' << (z.success ? 1 : 0) << ',' << z.arrivals << ',' << z.failed << '\n';
    }
    return 2 * truncated > reps ? kExitTruncated : 0;
}

json summary_json(const ScalingReport& rep, const std::vector<NucleationRecord>& recs) {
    json j;
    j["delta"] = rep.delta;
    j["records"] = recs.size();
    j["fitted"] = rep.fitted;
    if (rep.fitted) {
        j["slope"] = rep.slope;
        j["intercept"] = rep.intercept;
        j["target_slope"] = rep.target;
    } else {
        j["note"] = rep.note;
    }
    j["medians_increase"] = rep.medians_increase;
    j["coalescence_nonincreasing"] = rep.coalescence_nonincreasing;
    j["subcritical_pass_nondecreasing"] = rep.subcritical_pass_nondecreasing;
    for (const auto& s : rep.per_beta) {
        json b;
        b["beta"] = s.beta;
        b["total"] = s.total;
        b["exits"] = s.exits;
        b["growth"] = s.growth;
        b["coalescence"] = s.coalescence;
        b["truncated"] = s.truncated;
        b["median_tau"] = number(s.median);
        b["q25_tau"] = number(s.q25);
        b["q75_tau"] = number(s.q75);
        b["mean_Theta_eff"] = s.mean_Theta_eff;
        b["coalescence_fraction"] = number(s.coalescence_fraction);
        b["subcritical_pass_rate"] = number(s.subcritical_pass_rate);
        b["tube_pass_rate"] = number(s.tube_pass_rate);
        b["volume_anomalies"] = s.volume_anomalies;
        j["per_beta"].push_back(b);
    }
    return j;
}

int report_and_code(const std::vector<NucleationRecord>& recs, const ScalingReport& rep, const std::string& dir) {
    const json j = summary_json(rep, recs);
    if (!dir.empty()) write_text_file((fs::path(dir) / "summary.json").string(), j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    const auto truncated = std::count_if(recs.begin(), recs.end(),
                                         [](const NucleationRecord& r) { return r.mode == ExitMode::Truncated; });
    return 2 * truncated > static_cast<long>(recs.size()) ? kExitTruncated : 0;
}

int ell_c_of(const ExperimentPlan& plan) {
    ModelParams p = plan.params;
    p.beta = plan.betas.front();
    return derive(p).ell_c;
}

int cmd_nucleation_run(const std::string& plan_path, const std::string& out_override, int threads) {
    ExperimentPlan plan = plan_from(KeyValueFile::load(plan_path));
    if (!out_override.empty()) plan.out_dir = out_override;
    if (threads > 0) plan.threads = threads;
    if (plan.out_dir.empty()) throw ParamError("plan needs an output directory (key 'out' or --out)");
    validate_plan(plan);
    fs::create_directories(plan.out_dir);
    std::function<void(const NucleationRecord&, const TrajectoryLog&)> on_log;
    if (plan.save_logs) {
        fs::create_directories(fs::path(plan.out_dir) / "logs");
        on_log = [&](const NucleationRecord& r, const TrajectoryLog& log) {
            char name[64];
            std::snprintf(name, sizeof name, "b%02d_r%05d.log.gz", r.beta_index, r.replica);
            save_log(log, (fs::path(plan.out_dir) / "logs" / name).string());
        };
    }
    const auto recs = run_nucleation(plan, on_log);
    write_text_file((fs::path(plan.out_dir) / "records.csv").string(), write_records_csv(recs));
    ModelParams p = plan.params;
    p.beta = plan.betas.front();
    const double delta = plan.deltas.empty() ? derive(p).delta : plan.deltas.front();
    return report_and_code(recs, scaling_fit(recs, ell_c_of(plan), delta), plan.out_dir);
}

int cmd_nucleation_analyze(const std::string& dir, std::optional<double> delta) {
    const auto recs = read_records_csv(read_text_file((fs::path(dir) / "records.csv").string()));
    if (recs.empty()) throw ParseError("no records in " + dir, 0);
    double d = 0.05;
    if (delta) {
        d = *delta;
    } else {
        for (const auto& r : recs)
            if (!r.t_delta.empty()) {
                d = r.t_delta.front().first;
                break;
            }
    }
    return report_and_code(recs, scaling_fit(recs, recs.front().ell_c, d), "");
}

ModelParams log_params(const TrajectoryLog& log, const std::string& config) {
    return config.empty() ? params_from_header(log.header) : load_params(config);
}

int cmd_analyze_tube(const std::string& path, const std::string& config, std::vector<double> deltas, int target_side,
                     int centre_volume) {
    const TrajectoryLog log = load_log(path);
    const ModelParams p = log_params(log, config);
    TubeOptions opt{std::move(deltas), target_side, centre_volume};
    const TubeReport t = detect_tube(log, p, opt);
    json j;
    j["exited"] = t.exited;
    j["aborted"] = t.aborted;
    if (!t.note.empty()) j["note"] = t.note;
    if (t.exited) {
        j["tau_exit"] = t.tau_exit;
        j["exit_mode"] = to_string(t.exit.mode);
        j["exit_volume"] = t.exit.volume;
        j["centre"] = {t.centre.x, t.centre.y};
        j["box_side"] = t.box_side;
        for (const auto& s : t.subcritical) j["tau_last"][to_string(s.dims)] = number(s.time);
        for (const auto& s : t.supercritical) j["tau_first"][to_string(s.dims)] = number(s.time);
        for (std::size_t k = 0; k < t.t_delta.size(); ++k) {
            json e;
            e["delta"] = t.t_delta[k].first;
            e["pass"] = t.t_delta[k].second;
            e["subcritical_pass"] = t.subcritical_pass[k].second;
            if (!t.missing[k].second.empty()) e["missing"] = t.missing[k].second;
            j["T_delta"].push_back(e);
        }
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_analyze_clouds(const std::string& path, const std::string& config, std::optional<double> epoch,
                       std::optional<double> radius, int window) {
    const TrajectoryLog log = load_log(path);
    const ModelParams p = log_params(log, config);
    HistoryOptions opt;
    opt.epoch_period = epoch;
    opt.radius = radius;
    opt.window = window;
    const HistoryDecomposition h = history_decomposition(log, p, opt);
    json j;
    j["epochs"] = h.epochs.size();
    j["skipped_epochs"] = h.skipped_epochs;
    j["histories"] = h.histories.size();
    j["success"] = h.count(HistoryOutcome::Success);
    j["died"] = h.count(HistoryOutcome::Died);
    j["merged"] = h.count(HistoryOutcome::Merged);
    j["alive"] = h.count(HistoryOutcome::Alive);
    for (const auto& c : h.histories) {
        json e;
        e["id"] = c.id;
        e["birth_time"] = c.birth_time;
        e["end_time"] = number(c.end_time);
        e["outcome"] = to_string(c.outcome);
        std::string path_str;
        for (const auto& q : c.path) path_str += (path_str.empty() ? "" : " ") + to_string(q);
        e["path"] = path_str;
        j["census"].push_back(e);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kawasaki lattice-gas nucleation toolkit"};
    app.require_subcommand(1);

    auto* params = app.add_subcommand("params", "parameter tables");
    auto* params_show = params->add_subcommand("show", "print the derived parameters");
    std::string config;
    params_show->add_option("--config", config, "parameter file")->required();
    params->require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "run the dynamics from a mu_R draw or a snapshot");
    std::uint64_t seed = 1;
    std::string stop = "exitR", log_path, init;
    double horizon = kInf;
    std::int64_t event_cap = 0;
    sim->add_option("--config", config, "parameter file")->required();
    sim->add_option("--seed", seed, "master seed");
    sim->add_option("--stop", stop, "horizon | exitR | cluster=V");
    sim->add_option("--horizon", horizon, "time horizon");
    sim->add_option("--event-cap", event_cap, "maximum number of events");
    sim->add_option("--init", init, "initial snapshot instead of a mu_R draw");
    sim->add_option("--log", log_path, "trajectory log path (.gz compresses)");

    auto* sample = app.add_subcommand("sample", "draw snapshots from mu_R");
    int count = 1, L = 0;
    std::string out;
    std::uint64_t burn_in = 0, thinning = 0;
    sample->add_option("--config", config, "parameter file")->required();
    sample->add_option("--count", count, "number of draws")->check(CLI::PositiveNumber);
    sample->add_option("--seed", seed, "master seed");
    sample->add_option("--out", out, "output directory")->required();
    sample->add_option("--L", L, "lattice side (default from Theta and beta)");
    sample->add_option("--burn-in", burn_in, "burn-in proposals (default 10 L^2)");
    sample->add_option("--thinning", thinning, "proposals between draws (default L^2)");

    auto* en = app.add_subcommand("enumerate", "exact measure on a tiny torus as CSV");
    std::string mode = "restricted";
    int N = 0;
    std::optional<double> beta_opt;
    en->add_option("--L", L, "lattice side")->required();
    en->add_option("--mode", mode, "canonical | grand-canonical | restricted");
    en->add_option("--config", config, "parameter file (U, Delta, beta)");
    en->add_option("--N", N, "particle number (canonical)");
    en->add_option("--beta", beta_opt, "inverse temperature");

    auto* toy = app.add_subcommand("toy", "birth-death caricature");
    toy->require_subcommand(1);
    double beta = 0;
    int reps = 1000;
    std::int64_t max_steps = 1'000'000'000;
    auto* toy_solve = toy->add_subcommand("solve", "absorption probabilities and mean times");
    toy_solve->add_option("--config", config, "parameter file")->required();
    toy_solve->add_option("--beta", beta, "inverse temperature")->required();
    auto* toy_sim = toy->add_subcommand("simulate", "steps to first success of the arrival chain");
    toy_sim->add_option("--config", config, "parameter file")->required();
    toy_sim->add_option("--beta", beta, "inverse temperature")->required();
    toy_sim->add_option("--reps", reps, "replicas")->check(CLI::PositiveNumber);
    toy_sim->add_option("--seed", seed, "master seed");
    toy_sim->add_option("--max-steps", max_steps, "truncation per replica");

    auto* nuc = app.add_subcommand("nucleation", "nucleation-time studies");
    nuc->require_subcommand(1);
    std::string plan_path, records;
    int threads = 0;
    std::optional<double> delta;
    auto* nuc_run = nuc->add_subcommand("run", "run a plan and write records.csv and summary.json");
    nuc_run->add_option("--plan", plan_path, "plan file")->required();
    nuc_run->add_option("--out", out, "output directory (overrides the plan)");
    nuc_run->add_option("--threads", threads, "worker threads");
    auto* nuc_an = nuc->add_subcommand("analyze", "scaling report from stored records");
    nuc_an->add_option("--records", records, "directory holding records.csv")->required();
    nuc_an->add_option("--delta", delta, "tube window exponent");

    auto* an = app.add_subcommand("analyze", "offline trajectory analysis");
    an->require_subcommand(1);
    std::string log_in;
    std::vector<double> deltas;
    int target_side = 0, centre_volume = 0, window = 10;
    std::optional<double> epoch, radius;
    auto* an_tube = an->add_subcommand("tube", "exit time, exit mode and tube of a trajectory");
    an_tube->add_option("--log", log_in, "trajectory log")->required();
    an_tube->add_option("--config", config, "parameter file (default: log header)");
    an_tube->add_option("--delta", deltas, "window exponents");
    an_tube->add_option("--target-side", target_side, "largest supercritical square side");
    an_tube->add_option("--centre-volume", centre_volume, "volume of the cluster that centres the box");
    auto* an_clouds = an->add_subcommand("clouds", "cloud and history decomposition");
    an_clouds->add_option("--log", log_in, "trajectory log")->required();
    an_clouds->add_option("--config", config, "parameter file (default: log header)");
    an_clouds->add_option("--epoch", epoch, "analysis epoch length");
    an_clouds->add_option("--radius", radius, "cloud radius override");
    an_clouds->add_option("--window", window, "freeness window");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*params_show) {
            print_params(load_params(config));
            return 0;
        }
        if (*sim) return cmd_simulate(config, seed, stop, horizon, event_cap, init, log_path);
        if (*sample) return cmd_sample(config, count, seed, out, L, burn_in, thinning);
        if (*en) return cmd_enumerate(L, mode, config, N, beta_opt);
        if (*toy_solve) return cmd_toy_solve(config, beta);
        if (*toy_sim) return cmd_toy_simulate(config, beta, reps, seed, max_steps);
        if (*nuc_run) return cmd_nucleation_run(plan_path, out, threads);
        if (*nuc_an) return cmd_nucleation_analyze(records, delta);
        if (*an_tube) return cmd_analyze_tube(log_in, config, deltas, target_side, centre_volume);
        if (*an_clouds) return cmd_analyze_clouds(log_in, config, epoch, radius, window);
    } catch (const ParamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTruncated;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
