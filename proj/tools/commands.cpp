#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctsat/ct_sim.hpp"
#include "ctsat/dataset.hpp"
#include "ctsat/error.hpp"
#include "ctsat/fcn.hpp"
#include "ctsat/io.hpp"
#include "ctsat/lm.hpp"
#include "ctsat/metrics.hpp"
#include "ctsat/pipeline.hpp"
#include "ctsat/protection.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;

namespace ctsat::cli {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void say(bool quiet, const std::string& line) {
    if (!quiet) std::fprintf(stderr, "%s\n", line.c_str());
}

std::string waveform_text(const SampledWaveform& w) {
    std::ostringstream ss;
    write_waveform_csv(ss, w);
    return ss.str();
}

std::string mask_text(const SaturationMask& m, const SampledWaveform& w,
                      const std::optional<std::vector<double>>& prob = std::nullopt) {
    std::ostringstream ss;
    write_mask_csv(ss, m, w.sample_rate, w.start_time, prob);
    return ss.str();
}

SampledWaveform load_waveform(const fs::path& p) {
    std::istringstream ss(io::read_file(p));
    try {
        return read_waveform_csv(ss);
    } catch (const InputError& e) {
        throw InputError(p.string() + ": " + e.what());
    }
}

SaturationMask load_mask(const fs::path& p) {
    std::istringstream ss(io::read_file(p));
    try {
        return read_mask_csv(ss);
    } catch (const InputError& e) {
        throw InputError(p.string() + ": " + e.what());
    }
}

FcnModel load_model(const fs::path& p) {
    try {
        return FcnModel::from_json(io::read_json(p));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(p.string() + ": " + e.what());
    }
}

void emit(RunManifest& m, const fs::path& p, const std::string& text) {
    io::write_file_atomic(p, text);
    m.add_output(p);
}

/// Ids of every "<id><suffix>" file in dir, sorted.
std::vector<std::string> ids_with_suffix(const fs::path& dir, const std::string& suffix) {
    if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<double> parse_list(const std::string& csv, const char* what) {
    std::vector<double> v;
    for (const auto& tok : io::split_csv_line(csv)) v.push_back(io::parse_double(tok, what));
    if (v.empty()) throw InputError(std::string(what) + " is empty");
    return v;
}

void write_record(RunManifest& m, const fs::path& dir, const std::string& id, const SimulationResult& r) {
    emit(m, dir / (id + ".primary.csv"), waveform_text(r.primary));
    emit(m, dir / (id + ".secondary.csv"), waveform_text(r.secondary));
    emit(m, dir / (id + ".label.csv"), mask_text(r.mask, r.secondary));
    const nlohmann::json info = {{"id", id},
                                 {"scenario", to_json(r.scenario)},
                                 {"ct", to_json(r.ct)},
                                 {"samples", r.mask.size()},
                                 {"saturated_points", r.mask.count()}};
    emit(m, dir / (id + ".scenario.json"), io::dump_json(info));
}

}  // namespace

int run_simulate(const SimulateOptions& o, bool quiet) {
    RunManifest m("simulate");
    m.set_config({{"id", o.id},
                  {"grid", o.grid},
                  {"severity", o.severity},
                  {"amplitude", o.amplitude},
                  {"theta_deg", o.theta_deg},
                  {"t1", o.t1},
                  {"t2", o.t2},
                  {"remanence", o.remanence},
                  {"sample_rate", o.sample_rate},
                  {"duration", o.duration}});
    const fs::path dir = output_path(o.out, "simulation");
    fs::create_directories(dir);
    if (o.grid.empty()) {
        const double amp = o.amplitude > 0.0 ? o.amplitude : o.severity * kRatedPrimaryPeak;
        const auto scenario = FaultScenario::make(amp, o.theta_deg * kDeg, o.t1);
        auto ct = CtParameters{}.with_time_constant(o.t2);
        ct.remanence_fraction = o.remanence;
        const auto r = simulate(scenario, ct, o.sample_rate, o.duration);
        m.mark("simulate_s");
        write_record(m, dir, o.id, r);
        say(quiet, o.id + ": " + std::to_string(r.mask.count()) + " of " + std::to_string(r.mask.size()) +
                       " samples saturated");
    } else {
        const auto grid = TraversalGrid::by_name(o.grid);
        DatabaseConfig cfg;
        cfg.sample_rate = o.sample_rate;
        cfg.duration = o.duration;
        std::vector<SimulationResult> results(grid.size());
        const long long n = static_cast<long long>(grid.size());
#pragma omp parallel for schedule(dynamic, 16)
        for (long long i = 0; i < n; ++i) {
            const auto p = grid.point(static_cast<std::size_t>(i));
            results[static_cast<std::size_t>(i)] =
                simulate(scenario_for(p, cfg), ct_for(p, CtParameters{}), cfg.sample_rate, cfg.duration);
        }
        m.mark("simulate_s");
        std::size_t saturated = 0;
        for (std::size_t i = 0; i < results.size(); ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "g%06zu", i);
            write_record(m, dir, id, results[i]);
            saturated += results[i].mask.any();
        }
        m.add_note("records", results.size());
        m.add_note("saturated_records", saturated);
        say(quiet, std::to_string(results.size()) + " records, " + std::to_string(saturated) + " saturated");
    }
    m.mark("write_s");
    m.write(dir / "simulate.manifest.json");
    return 0;
}

int run_build_dataset(const BuildDatasetOptions& o, bool quiet) {
    RunManifest m("build-dataset");
    m.set_config({{"grid", o.grid},
                  {"augment", o.augment},
                  {"train_fraction", o.train_fraction},
                  {"balance", !o.no_balance}});
    m.add_seed("seed", o.seed);
    const auto grid = TraversalGrid::by_name(o.grid);
    AugmentConfig acfg;
    acfg.kinds = parse_augment_kinds(o.augment);
    DatabaseConfig cfg;
    cfg.seed = o.seed;
    cfg.balance = !o.no_balance;
    const fs::path dir = output_path(o.out, "dataset");

    say(quiet, "simulating " + std::to_string(grid.size()) + " grid points");
    const auto db = build_database(grid, CtParameters{}, cfg);
    m.mark("simulate_s");
    // split the simulations first so no augmented copy of a test record lands in training
    auto [train, test] = split(db.samples, o.train_fraction, mix_seed(o.seed, 1));
    const auto train_aug = acfg.kinds.empty() ? train : augment_all(train, acfg, mix_seed(o.seed, 2));
    m.mark("augment_s");

    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : acfg.kinds) kinds.push_back(to_string(k));
    const nlohmann::json extra = {{"grid_name", o.grid},
                                  {"grid", to_json(grid)},
                                  {"seed", o.seed},
                                  {"augment", kinds},
                                  {"raw_count", db.raw_count},
                                  {"saturated_count", db.saturated_count},
                                  {"unsaturated_count", db.unsaturated_count},
                                  {"skipped", db.skipped.size()},
                                  {"train_simulations", train.size()},
                                  {"test_simulations", test.size()}};
    const auto manifest = write_dataset(dir, train_aug, test, extra);
    m.mark("write_s");
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.ends_with(".jsonl") || name == "manifest.json") m.add_output(e.path());
    }
    m.add_note("train_samples", train_aug.size());
    m.add_note("test_samples", test.size());
    m.write(dir / "build-dataset.manifest.json");
    say(quiet, std::to_string(train_aug.size()) + " training samples, " + std::to_string(test.size()) +
                   " test samples in " + dir.string());
    return 0;
}

int run_train(const TrainOptions& o, bool quiet) {
    RunManifest m("train");
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.seed = o.seed;
    cfg.batch_size = o.batch_size;
    cfg.lr_initial = o.learning_rate;
    cfg.validate();
    m.set_config({{"data", o.data}, {"train", cfg.to_json()}});
    m.add_seed("seed", o.seed);
    const fs::path data = o.data;
    m.add_input(data / "manifest.json");
    const auto ds = read_dataset(data);
    if (ds.train.empty()) throw InputError(data.string() + ": dataset has no training samples");
    m.mark("load_s");

    auto model = FcnModel::build(fcn::ArchitectureSpec{}, o.seed);
    const auto result = train(model, ds.train, cfg, [&](int epoch, double loss) {
        char line[96];
        std::snprintf(line, sizeof line, "epoch %3d  loss %.6f", epoch + 1, loss);
        say(quiet, line);
    });
    m.mark("train_s");
    const auto scores = score_pointwise(model, ds.test);
    m.mark("score_s");
    model.training_state = {{"config", cfg.to_json()},
                            {"dataset_manifest_sha256", io::sha256_file(data / "manifest.json")},
                            {"train_samples", ds.train.size()},
                            {"steps", result.steps},
                            {"loss_history", result.loss_history},
                            {"test_pointwise",
                             {{"precision", scores.precision()},
                              {"recall", scores.recall()},
                              {"f1", scores.f1()},
                              {"accuracy", scores.accuracy()}}}};
    const fs::path out = output_path(o.out, "model.json");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    emit(m, out, io::dump_json(model.to_json()));
    m.add_note("test_f1", scores.f1());
    m.write(out.string() + ".manifest.json");
    char line[96];
    std::snprintf(line, sizeof line, "held-out pointwise F1 %.4f", scores.f1());
    say(quiet, line);
    return 0;
}

int run_detect(const DetectOptions& o, bool quiet) {
    RunManifest m("detect");
    m.set_config({{"model", o.model}, {"in", o.in}, {"threshold", o.threshold}});
    m.add_input(o.model);
    const auto model = load_model(o.model);
    auto one = [&](const fs::path& in, const fs::path& out) {
        m.add_input(in);
        const auto w = load_waveform(in);
        const auto d = detect(model, w, o.threshold);
        emit(m, out, mask_text(d.mask, w, d.probability));
        return d.mask.count();
    };
    if (fs::is_directory(o.in)) {
        const fs::path dir = output_path(o.out, "masks");
        fs::create_directories(dir);
        std::size_t flagged = 0;
        const auto ids = ids_with_suffix(o.in, ".secondary.csv");
        for (const auto& id : ids) flagged += one(fs::path(o.in) / (id + ".secondary.csv"), dir / (id + ".mask.csv")) > 0;
        m.mark("detect_s");
        m.write(dir / "detect.manifest.json");
        say(quiet, std::to_string(flagged) + " of " + std::to_string(ids.size()) + " records flagged");
    } else {
        const fs::path out = output_path(o.out, "mask.csv");
        const auto n = one(o.in, out);
        m.mark("detect_s");
        m.write(out.string() + ".manifest.json");
        say(quiet, std::to_string(n) + " samples flagged");
    }
    return 0;
}

int run_compensate(const CompensateOptions& o, bool quiet) {
    RunManifest m("compensate");
    m.set_config({{"in", o.in}, {"mask", o.mask}});
    if (fs::is_directory(o.in)) {
        const fs::path mask_dir = o.mask.empty() ? fs::path(o.in) : fs::path(o.mask);
        const fs::path dir = output_path(o.out, "compensated");
        fs::create_directories(dir);
        std::size_t failed = 0, unconverged = 0;
        const auto ids = ids_with_suffix(o.in, ".secondary.csv");
        for (const auto& id : ids) {
            const auto in = fs::path(o.in) / (id + ".secondary.csv");
            const auto mp = mask_dir / (id + ".mask.csv");
            m.add_input(in);
            m.add_input(mp);
            const auto w = load_waveform(in);
            const auto mask = load_mask(mp);
            nlohmann::json fit;
            SampledWaveform outw = w;
            try {
                const auto c = compensate(w, mask);
                outw = c.waveform;
                fit = to_json(c.fit);
                unconverged += !c.fit.converged;
            } catch (const InputError& e) {
                // flagged, not fabricated: the measured record is passed through
                fit = {{"error", e.what()}, {"converged", false}};
                ++failed;
            }
            emit(m, dir / (id + ".compensated.csv"), waveform_text(outw));
            emit(m, dir / (id + ".fit.json"), io::dump_json(fit));
        }
        m.mark("compensate_s");
        m.add_note("records", ids.size());
        m.add_note("failed", failed);
        m.add_note("unconverged", unconverged);
        m.write(dir / "compensate.manifest.json");
        say(quiet, std::to_string(ids.size()) + " records, " + std::to_string(failed) + " without enough clean data, " +
                       std::to_string(unconverged) + " fits not converged");
    } else {
        if (o.mask.empty()) throw InputError("--mask is required");
        m.add_input(o.in);
        m.add_input(o.mask);
        const auto w = load_waveform(o.in);
        const auto mask = load_mask(o.mask);
        const auto c = compensate(w, mask);
        m.mark("compensate_s");
        const fs::path out = output_path(o.out, "compensated.csv");
        emit(m, out, waveform_text(c.waveform));
        const fs::path fit = o.fit.empty() ? fs::path(out.string() + ".fit.json") : fs::path(o.fit);
        emit(m, fit, io::dump_json(to_json(c.fit)));
        m.write(out.string() + ".manifest.json");
        say(quiet, std::string("fit ") + (c.fit.converged ? "converged" : "did not converge") + " after " +
                       std::to_string(c.fit.iterations) + " iterations (" + c.fit.stop_reason + ")");
    }
    return 0;
}

int run_evaluate(const EvaluateOptions& o, bool quiet) {
    RunManifest m("evaluate");
    m.set_config({{"pairs", o.pairs}, {"arm", o.arm}, {"post_fault_only", o.post_fault_only}, {"onset_time", o.onset_time}});
    const auto ids = ids_with_suffix(o.pairs, ".primary.csv");
    if (ids.empty()) throw InputError(o.pairs + ": no <id>.primary.csv files");
    std::vector<WaveformPair> pairs;
    for (const auto& id : ids) {
        const auto pp = fs::path(o.pairs) / (id + ".primary.csv");
        const auto sp = fs::path(o.pairs) / (id + "." + o.arm + ".csv");
        m.add_input(pp);
        m.add_input(sp);
        const auto p = load_waveform(pp);
        const auto s = load_waveform(sp);
        WaveformPair wp{id, p.values, s.values, 0};
        while (wp.onset_index < p.size() && p.time_at(wp.onset_index) < o.onset_time - 1e-12) ++wp.onset_index;
        pairs.push_back(std::move(wp));
    }
    const auto rep = performance_indexes(pairs, o.post_fault_only);
    m.mark("evaluate_s");
    auto j = to_json(rep);
    j["arm"] = o.arm;
    j["post_fault_only"] = o.post_fault_only;
    const fs::path out = output_path(o.out, "report.json");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    emit(m, out, io::dump_json(j));
    m.write(out.string() + ".manifest.json");
    char line[160];
    std::snprintf(line, sizeof line, "%zu pairs (%s): e1 %.4f  e2 %.4f  e3 %.4f  e4 %.4f", rep.n_samples, o.arm.c_str(),
                  rep.e1, rep.e2, rep.e3, rep.e4);
    say(quiet, line);
    return 0;
}

int run_protect_sim(const ProtectSimOptions& o, bool quiet) {
    RunManifest m("protect-sim");
    m.set_config({{"scenarios", o.scenarios}, {"preset", o.preset}, {"model", o.model}, {"tau3", o.tau3}});
    std::vector<StudyScenario> scenarios;
    if (!o.scenarios.empty()) {
        m.add_input(o.scenarios);
        const auto j = io::read_json(o.scenarios);
        const auto& list = j.is_array() ? j : j.at("scenarios");
        for (std::size_t i = 0; i < list.size(); ++i) {
            try {
                scenarios.push_back(study_scenario_from_json(list[i]));
            } catch (const std::exception& e) {
                throw InputError(o.scenarios + ": scenario " + std::to_string(i) + ": " + e.what());
            }
        }
    } else if (o.preset == "heavy") {
        scenarios = heavy_study_set();
    } else {
        throw InputError("give --scenarios FILE or --preset heavy");
    }
    m.add_input(o.model);
    const auto model = load_model(o.model);
    StudyConfig cfg;
    cfg.tau3 = o.tau3;
    const auto rep = malfunction_study(scenarios, [&](const SampledWaveform& w) { return detect(model, w).mask; }, cfg);
    m.mark("study_s");

    const fs::path dir = output_path(o.out, "study");
    fs::create_directories(dir);
    for (const auto& out : rep.outcomes) {
        nlohmann::json j = {{"id", out.id},
                            {"internal", out.internal},
                            {"detected_points", out.detected_points},
                            {"compensation_converged", out.compensation_converged},
                            {"compensation_note", out.compensation_note},
                            {"raw", to_json(out.raw)},
                            {"compensated", to_json(out.compensated)}};
        emit(m, dir / (out.id + ".json"), io::dump_json(j));
        emit(m, dir / (out.id + ".trace.csv"), trace_csv(out));
    }
    TimingModel timing;
    timing.tau3_method = o.tau3;
    auto summary = summary_json(rep);
    summary["timing"] = to_json(timing_report(timing, 0.0));
    emit(m, dir / "summary.json", io::dump_json(summary));
    emit(m, dir / "summary.csv", summary_csv(rep));
    m.write(dir / "protect-sim.manifest.json");
    say(quiet, "external malfunctions: raw " + std::to_string(rep.raw_malfunctions) + "/" +
                   std::to_string(rep.external_count) + ", compensated " + std::to_string(rep.compensated_malfunctions) +
                   "/" + std::to_string(rep.external_count) + "; internal trips: raw " +
                   std::to_string(rep.raw_internal_trips) + "/" + std::to_string(rep.internal_count) + ", compensated " +
                   std::to_string(rep.compensated_internal_trips) + "/" + std::to_string(rep.internal_count));
    return 0;
}

int run_bench(const BenchOptions& o, bool quiet) {
    RunManifest m("bench");
    m.set_config({{"model", o.model},
                  {"windows", o.windows},
                  {"repeats", o.repeats},
                  {"severity", o.severity},
                  {"theta_deg", o.theta_deg},
                  {"t1", o.t1},
                  {"t2", o.t2},
                  {"remanence", o.remanence}});
    m.add_input(o.model);
    const auto model = load_model(o.model);
    const auto windows = parse_list(o.windows, "--windows");
    auto ct = CtParameters{}.with_time_constant(o.t2);
    ct.remanence_fraction = o.remanence;
    const double longest = *std::max_element(windows.begin(), windows.end());
    const double duration = std::max(0.04, longest * 1e-3);
    const auto sim = simulate(FaultScenario::make(o.severity * kRatedPrimaryPeak, o.theta_deg * kDeg, o.t1), ct,
                              kDefaultSampleRate, duration);
    const auto p = profile_runtime(model, sim.secondary, windows, o.repeats);
    m.mark("bench_s");
    for (std::size_t i = 0; i < p.window_ms.size(); ++i) {
        char line[96];
        std::snprintf(line, sizeof line, "%6.1f ms  %4zu samples  %9.3f ms", p.window_ms[i], p.samples[i],
                      p.seconds[i] * 1e3);
        say(quiet, line);
    }
    char line[96];
    std::snprintf(line, sizeof line, "linear fit R^2 = %.4f", p.fit.r2);
    say(quiet, line);
    const fs::path out = output_path(o.out, "bench.json");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_file_atomic(out, io::dump_json(to_json(p)));
    m.write(out.string() + ".manifest.json");
    return 0;
}

}  // namespace ctsat::cli
