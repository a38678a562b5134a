#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "commands.hpp"
#include "ctsat/error.hpp"
#include "ctsat/io.hpp"

using namespace ctsat;
using namespace ctsat::cli;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitComputation = 3;

bool given(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Turns the keys of `--config file.json` into command-line tokens for the
/// chosen subcommand. Flags given explicitly win over the file. Every bad key
/// is reported, not only the first.
void apply_config(CLI::App& app, std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return;
    const auto sub_it = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.front() != '-'; });
    if (sub_it == args.end()) throw InputError("--config needs a subcommand");
    CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
    if (!sub) return;  // CLI11 reports the unknown subcommand

    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw InputError(path + ": top level must be an object");

    std::vector<std::string> errors, extra;
    for (const auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        const CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw(flag);
        if (!opt) {
            errors.push_back("field '" + key + "': not an option of '" + sub->get_name() + "'");
            continue;
        }
        if (given(args, flag)) continue;
        if (opt->get_type_size() == 0) {
            if (!value.is_boolean()) errors.push_back("field '" + key + "': expected true or false");
            else if (value.get<bool>()) extra.push_back(flag);
            continue;
        }
        std::string text;
        const std::string type = opt->get_type_name();
        const bool numeric = type == "FLOAT" || type == "INT" || type == "UINT";
        if (value.is_string()) {
            if (numeric) {
                errors.push_back("field '" + key + "': expected a number, got \"" + value.get<std::string>() + "\"");
                continue;
            }
            text = value.get<std::string>();
        } else if (value.is_number()) {
            text = value.dump();
        } else if (value.is_array()) {
            for (const auto& v : value) {
                if (!v.is_primitive() || v.is_null()) {
                    errors.push_back("field '" + key + "': list items must be numbers or strings");
                    break;
                }
                if (!text.empty()) text += ",";
                text += v.is_string() ? v.get<std::string>() : v.dump();
            }
        } else {
            errors.push_back("field '" + key + "': expected a number, string or list");
            continue;
        }
        extra.push_back(flag);
        extra.push_back(text);
    }
    if (!errors.empty()) {
        std::string msg = path + ": invalid configuration";
        for (const auto& e : errors) msg += "\n  " + e;
        throw InputError(msg);
    }
    args.insert(args.end(), extra.begin(), extra.end());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CT saturation simulation, detection, compensation and relay study"};
    app.require_subcommand(1);
    bool quiet = false;
    std::string config_path;
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    auto with_config = [&](CLI::App* s) {
        s->add_option("--config", config_path, "JSON file with option values (flags on the command line win)");
        s->fallthrough();
        return s;
    };
    const auto grids = CLI::IsMember({"table2", "desk", "small"});

    SimulateOptions sim;
    auto* c_sim = with_config(app.add_subcommand("simulate", "Simulate one fault or a whole grid through the CT"));
    c_sim->add_option("--out", sim.out, "Output directory");
    c_sim->add_option("--id", sim.id, "Record id used in file names");
    c_sim->add_option("--grid", sim.grid, "Simulate every point of a named grid instead")->check(grids);
    c_sim->add_option("--severity", sim.severity, "Fault current as a multiple of the rated primary peak");
    c_sim->add_option("--amplitude", sim.amplitude, "Fault current peak in amperes (overrides --severity)");
    c_sim->add_option("--theta-deg", sim.theta_deg, "Fault inception angle in degrees");
    c_sim->add_option("--t1", sim.t1, "Primary time constant in seconds");
    c_sim->add_option("--t2", sim.t2, "Secondary-loop time constant in seconds");
    c_sim->add_option("--remanence", sim.remanence, "Remanent flux as a fraction of saturation flux");
    c_sim->add_option("--fs", sim.sample_rate, "Sample rate in Hz");
    c_sim->add_option("--duration", sim.duration, "Record length in seconds");

    BuildDatasetOptions bd;
    auto* c_bd = with_config(app.add_subcommand("build-dataset", "Simulate, label, balance, split and augment a grid"));
    c_bd->add_option("--out", bd.out, "Output directory");
    c_bd->add_option("--grid", bd.grid, "Traversal grid")->check(grids);
    c_bd->add_option("--seed", bd.seed, "Seed for balancing, splitting and augmentation");
    c_bd->add_option("--augment", bd.augment, "Comma-separated augmentations (polarity,noise,window or none)");
    c_bd->add_option("--train-fraction", bd.train_fraction, "Share of simulations in the training split");
    c_bd->add_flag("--no-balance", bd.no_balance, "Keep every unsaturated sample");

    TrainOptions tr;
    auto* c_tr = with_config(app.add_subcommand("train", "Train the saturation detector"));
    c_tr->add_option("--data", tr.data, "Dataset directory")->required();
    c_tr->add_option("--out", tr.out, "Model file");
    c_tr->add_option("--epochs", tr.epochs, "Training epochs");
    c_tr->add_option("--seed", tr.seed, "Seed for initialization and shuffling");
    c_tr->add_option("--batch-size", tr.batch_size, "Sequences per batch");
    c_tr->add_option("--lr", tr.learning_rate, "Initial learning rate");

    DetectOptions de;
    auto* c_de = with_config(app.add_subcommand("detect", "Flag saturated samples of a secondary current"));
    c_de->add_option("--model", de.model, "Model file")->required();
    c_de->add_option("--in", de.in, "Waveform CSV, or a directory of <id>.secondary.csv")->required();
    c_de->add_option("--out", de.out, "Mask CSV, or output directory");
    c_de->add_option("--threshold", de.threshold, "Probability threshold");

    CompensateOptions co;
    auto* c_co = with_config(app.add_subcommand("compensate", "Replace saturated samples with the fitted fault current"));
    c_co->add_option("--in", co.in, "Waveform CSV, or a directory of <id>.secondary.csv")->required();
    c_co->add_option("--mask", co.mask, "Mask CSV, or a directory of <id>.mask.csv");
    c_co->add_option("--out", co.out, "Compensated CSV, or output directory");
    c_co->add_option("--fit", co.fit, "Fit report JSON (single-file mode)");

    EvaluateOptions ev;
    auto* c_ev = with_config(app.add_subcommand("evaluate", "Performance indexes over <id>.primary.csv pairs"));
    c_ev->add_option("--pairs", ev.pairs, "Directory holding <id>.primary.csv and <id>.<arm>.csv")->required();
    c_ev->add_option("--out", ev.out, "Report JSON");
    c_ev->add_option("--arm", ev.arm, "Which waveform to compare with the primary (secondary, compensated)");
    c_ev->add_flag("--post-fault-only", ev.post_fault_only, "Skip samples before --onset-time");
    c_ev->add_option("--onset-time", ev.onset_time, "Fault onset in record time, seconds");

    ProtectSimOptions ps;
    auto* c_ps = with_config(app.add_subcommand("protect-sim", "Differential relay study, raw vs compensated"));
    c_ps->add_option("--scenarios", ps.scenarios, "Scenario list JSON");
    c_ps->add_option("--preset", ps.preset, "Built-in scenario set")->check(CLI::IsMember({"heavy"}));
    c_ps->add_option("--model", ps.model, "Model file")->required();
    c_ps->add_option("--out", ps.out, "Output directory");
    c_ps->add_option("--tau3", ps.tau3, "Detection and compensation latency added to trip times, seconds");

    BenchOptions be;
    auto* c_be = with_config(app.add_subcommand("bench", "Detect + compensate wall time against window length"));
    c_be->add_option("--model", be.model, "Model file")->required();
    c_be->add_option("--windows", be.windows, "Comma-separated window lengths in ms");
    c_be->add_option("--repeats", be.repeats, "Timed runs per window (median reported)");
    c_be->add_option("--out", be.out, "Report JSON");
    c_be->add_option("--severity", be.severity, "Fault current as a multiple of rated");
    c_be->add_option("--theta-deg", be.theta_deg, "Fault inception angle in degrees");
    c_be->add_option("--t1", be.t1, "Primary time constant in seconds");
    c_be->add_option("--t2", be.t2, "Secondary-loop time constant in seconds");
    c_be->add_option("--remanence", be.remanence, "Remanent flux fraction");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        apply_config(app, args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }

    try {
        if (*c_sim) return run_simulate(sim, quiet);
        if (*c_bd) return run_build_dataset(bd, quiet);
        if (*c_tr) return run_train(tr, quiet);
        if (*c_de) return run_detect(de, quiet);
        if (*c_co) return run_compensate(co, quiet);
        if (*c_ev) return run_evaluate(ev, quiet);
        if (*c_ps) return run_protect_sim(ps, quiet);
        if (*c_be) return run_bench(be, quiet);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const ComputationError& e) {
        std::fprintf(stderr, "computation failed: %s\n", e.what());
        return kExitComputation;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: malformed JSON input: %s\n", e.what());
        return kExitInput;
    }
    return kExitInput;
}
