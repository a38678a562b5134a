#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctsat/ct_sim.hpp"
#include "ctsat/dataset.hpp"
#include "ctsat/waveform.hpp"

namespace ctsat {

enum class Activation { Identity, Tanh, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

namespace fcn {

struct InputNode {};

struct ConvNode {
    int source = 0;
    std::size_t kernel = 1;
    std::size_t in_ch = 1;
    std::size_t out_ch = 1;
    Activation activation = Activation::Identity;
    std::size_t offset = 0;  ///< first weight in the flat parameter vector; biases follow the kernel

    std::size_t weight_count() const { return out_ch * in_ch * kernel; }
    std::size_t param_count() const { return weight_count() + out_ch; }
};

struct ConcatNode {
    std::vector<int> sources;
};

using Node = std::variant<InputNode, ConvNode, ConcatNode>;

/// Sizes of the stem / inception-block / head detector.
struct ArchitectureSpec {
    std::size_t stem_kernel = 5;
    std::size_t stem_channels = 8;
    std::vector<std::size_t> branch_kernels{1, 5, 9};
    std::size_t branch_channels = 8;
    std::size_t block_channels = 16;
    std::size_t blocks = 2;

    nlohmann::json to_json() const;
    static ArchitectureSpec from_json(const nlohmann::json& j);
};

/// Per-node activations for one equal-length batch, layout [batch][channels][length].
struct ForwardCache {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<std::vector<double>> outputs;
};

}  // namespace fcn

/**
 * @brief Convolution-only detector: a DAG of same-padded 1-D convolutions and
 * channel concatenations over a single input channel.
 *
 * The last node is the output and must be a one-channel sigmoid convolution.
 * Parameters live in one flat vector so the optimizer can treat them uniformly.
 */
class FcnModel {
public:
    FcnModel();

    static FcnModel build(const fcn::ArchitectureSpec& spec, std::uint64_t seed);

    int add_conv(int source, std::size_t kernel, std::size_t out_ch, Activation activation);
    int add_concat(std::vector<int> sources);

    /// Uniform in +-sqrt(1 / (in_ch * kernel)), biases zero.
    void init_weights(std::uint64_t seed);

    const std::vector<fcn::Node>& nodes() const { return nodes_; }
    std::size_t channels(int node) const;
    std::size_t receptive_field() const;
    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::uint64_t seed() const { return seed_; }

    /// Throws InputError unless the graph ends in a one-channel sigmoid.
    void validate() const;

    /// Probabilities for one sequence. Throws LengthError below the receptive field.
    std::vector<double> forward(std::span<const double> input) const;

    /// x is [batch][length] with one input channel.
    void forward_batch(const double* x, std::size_t batch, std::size_t length, fcn::ForwardCache& cache) const;

    /// Gradient of the loss w.r.t. every parameter given dL/d(output) (layout [batch][length]).
    /// grad is resized and overwritten.
    void backward_batch(const fcn::ForwardCache& cache, const double* d_output, std::vector<double>& grad) const;

    /// MSE over all points and its parameter gradient for one equal-length batch.
    double loss_and_gradient(const double* x, const double* target, std::size_t batch, std::size_t length,
                             std::vector<double>& grad, fcn::ForwardCache& cache) const;

    nlohmann::json to_json() const;
    static FcnModel from_json(const nlohmann::json& j);

    nlohmann::json architecture;    ///< descriptor recorded for provenance
    nlohmann::json training_state;  ///< manifest of the run that produced the weights

private:
    std::vector<fcn::Node> nodes_;
    std::vector<double> params_;
    std::uint64_t seed_ = 0;

    void check_length(std::size_t length) const;
};

struct TrainConfig {
    double lr_initial = 1e-3;
    int lr_halving_period = 25;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-7;
    int epochs = 40;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;

    /// lr_initial * 0.5^floor(epoch / lr_halving_period), epoch counted from 0.
    double learning_rate(int epoch) const;
    void validate() const;
    nlohmann::json to_json() const;
};

struct TrainResult {
    std::vector<double> loss_history;  ///< per-epoch mean training loss
    std::size_t steps = 0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Adam on mean-squared error with equal-length batches. Deterministic for a
/// fixed seed. Throws TrainingDiverged when a batch loss is not finite.
TrainResult train(FcnModel& model, const std::vector<LabeledSample>& samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct Detection {
    SaturationMask mask;
    std::vector<double> probability;
};

/// Normalizes by max|x|, runs the network, thresholds the probabilities.
Detection detect(const FcnModel& model, const SampledWaveform& secondary, double threshold = 0.5);
Detection detect(const FcnModel& model, std::span<const double> secondary, double threshold = 0.5);

struct PointwiseScores {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision() const;
    double recall() const;
    double f1() const;
    double accuracy() const;
};

PointwiseScores score_pointwise(const FcnModel& model, const std::vector<LabeledSample>& samples,
                                double threshold = 0.5);

}  // namespace ctsat
