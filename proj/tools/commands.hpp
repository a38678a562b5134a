#pragma once

#include <cstdint>
#include <string>

namespace ctsat::cli {

struct SimulateOptions {
    std::string out;
    std::string id = "sim";
    std::string grid;  ///< when set, one record per grid point instead of a single scenario
    double severity = 8.0;
    double amplitude = 0.0;  ///< primary peak in amperes; overrides severity when > 0
    double theta_deg = 165.0;
    double t1 = 0.17;
    double t2 = 1.25;
    double remanence = 0.0;
    double sample_rate = 4000.0;
    double duration = 0.06;
};

struct BuildDatasetOptions {
    std::string out;
    std::string grid = "small";
    std::uint64_t seed = 0;
    std::string augment = "polarity,noise,window";
    double train_fraction = 0.9;
    bool no_balance = false;
};

struct TrainOptions {
    std::string data;
    std::string out;
    int epochs = 40;
    std::uint64_t seed = 0;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
};

struct DetectOptions {
    std::string model;
    std::string in;
    std::string out;
    double threshold = 0.5;
};

struct CompensateOptions {
    std::string in;
    std::string mask;
    std::string out;
    std::string fit;
};

struct EvaluateOptions {
    std::string pairs;
    std::string out;
    std::string arm = "compensated";
    bool post_fault_only = false;
    double onset_time = 0.0;
};

struct ProtectSimOptions {
    std::string scenarios;
    std::string preset;
    std::string model;
    std::string out;
    double tau3 = 0.0;
};

struct BenchOptions {
    std::string model;
    std::string windows = "10,20,40,60";
    std::string out;
    int repeats = 50;
    double severity = 20.0;
    double theta_deg = 0.0;
    double t1 = 0.3;
    double t2 = 1.0;
    double remanence = 0.4;
};

int run_simulate(const SimulateOptions& o, bool quiet);
int run_build_dataset(const BuildDatasetOptions& o, bool quiet);
int run_train(const TrainOptions& o, bool quiet);
int run_detect(const DetectOptions& o, bool quiet);
int run_compensate(const CompensateOptions& o, bool quiet);
int run_evaluate(const EvaluateOptions& o, bool quiet);
int run_protect_sim(const ProtectSimOptions& o, bool quiet);
int run_bench(const BenchOptions& o, bool quiet);

}  // namespace ctsat::cli
