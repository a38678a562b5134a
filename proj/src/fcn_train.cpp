#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "ctsat/error.hpp"
#include "ctsat/fcn.hpp"

namespace ctsat {

double TrainConfig::learning_rate(int epoch) const {
    return lr_initial * std::pow(0.5, static_cast<double>(epoch / lr_halving_period));
}

void TrainConfig::validate() const {
    if (!(lr_initial > 0.0)) throw InputError("lr_initial must be > 0");
    if (lr_halving_period < 1) throw InputError("lr_halving_period must be >= 1");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw InputError("adam_beta1 must lie in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw InputError("adam_beta2 must lie in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw InputError("adam_epsilon must be > 0");
    if (epochs < 0) throw InputError("epochs must be >= 0");
    if (batch_size == 0) throw InputError("batch_size must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr_initial", lr_initial},   {"lr_halving_period", lr_halving_period},
            {"adam_beta1", adam_beta1},   {"adam_beta2", adam_beta2},
            {"adam_epsilon", adam_epsilon}, {"epochs", epochs},
            {"batch_size", batch_size},   {"seed", seed},
            {"loss", "mse"}};
}

TrainResult train(FcnModel& model, const std::vector<LabeledSample>& samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    model.validate();
    if (samples.empty()) throw InputError("training set is empty");

    std::map<std::size_t, std::vector<std::size_t>> buckets;
    const std::size_t rf = model.receptive_field();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.input.size() != s.target.size())
            throw InputError("sample " + std::to_string(i) + ": input and target lengths differ");
        if (s.input.size() < rf) throw LengthError(s.input.size(), rf);
        buckets[s.input.size()].push_back(i);
    }

    const std::size_t P = model.parameter_count();
    std::vector<double> m(P, 0.0), v(P, 0.0), grad, x, tgt;
    fcn::ForwardCache cache;
    TrainResult result;
    auto params = model.parameters();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate(epoch);
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::vector<std::vector<std::size_t>> batches;
        for (const auto& [len, idx] : buckets) {
            auto order = idx;
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const auto end = std::min(order.size(), start + cfg.batch_size);
                batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
            }
        }
        std::shuffle(batches.begin(), batches.end(), rng);

        double total = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch = batches[bi];
            const std::size_t L = samples[batch.front()].input.size();
            x.resize(batch.size() * L);
            tgt.resize(batch.size() * L);
            for (std::size_t n = 0; n < batch.size(); ++n) {
                const auto& s = samples[batch[n]];
                std::copy(s.input.begin(), s.input.end(), x.begin() + static_cast<std::ptrdiff_t>(n * L));
                std::copy(s.target.begin(), s.target.end(), tgt.begin() + static_cast<std::ptrdiff_t>(n * L));
            }
            const double loss = model.loss_and_gradient(x.data(), tgt.data(), batch.size(), L, grad, cache);
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch, bi);

            ++result.steps;
            const double t = static_cast<double>(result.steps);
            const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
            const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
            for (std::size_t p = 0; p < P; ++p) {
                const double g = grad[p];
                m[p] = cfg.adam_beta1 * m[p] + (1.0 - cfg.adam_beta1) * g;
                v[p] = cfg.adam_beta2 * v[p] + (1.0 - cfg.adam_beta2) * g * g;
                params[p] -= lr * (m[p] / c1) / (std::sqrt(v[p] / c2) + cfg.adam_epsilon);
            }
            total += loss * static_cast<double>(batch.size());
        }
        const double epoch_loss = total / static_cast<double>(samples.size());
        result.loss_history.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }

    model.training_state = {{"config", cfg.to_json()},
                            {"samples", samples.size()},
                            {"steps", result.steps},
                            {"loss_history", result.loss_history}};
    return result;
}

Detection detect(const FcnModel& model, std::span<const double> secondary, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must lie in (0, 1)");
    const auto x = normalize(secondary);
    Detection d;
    d.probability = model.forward(x);
    d.mask.flags.resize(d.probability.size());
    for (std::size_t k = 0; k < d.probability.size(); ++k) d.mask.flags[k] = d.probability[k] >= threshold ? 1 : 0;
    return d;
}

Detection detect(const FcnModel& model, const SampledWaveform& secondary, double threshold) {
    secondary.validate();
    return detect(model, std::span<const double>(secondary.values), threshold);
}

double PointwiseScores::precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0; }
double PointwiseScores::recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0; }
double PointwiseScores::f1() const {
    const auto denom = 2 * tp + fp + fn;
    return denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
}
double PointwiseScores::accuracy() const {
    const auto n = tp + fp + fn + tn;
    return n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 1.0;
}

PointwiseScores score_pointwise(const FcnModel& model, const std::vector<LabeledSample>& samples, double threshold) {
    std::map<std::size_t, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < samples.size(); ++i) buckets[samples[i].input.size()].push_back(i);
    PointwiseScores sc;
    fcn::ForwardCache cache;
    std::vector<double> x;
    constexpr std::size_t kChunk = 256;
    for (const auto& [L, idx] : buckets) {
        for (std::size_t start = 0; start < idx.size(); start += kChunk) {
            const std::size_t end = std::min(idx.size(), start + kChunk);
            x.resize((end - start) * L);
            for (std::size_t n = start; n < end; ++n)
                std::copy(samples[idx[n]].input.begin(), samples[idx[n]].input.end(),
                          x.begin() + static_cast<std::ptrdiff_t>((n - start) * L));
            model.forward_batch(x.data(), end - start, L, cache);
            const auto& y = cache.outputs.back();
            for (std::size_t n = start; n < end; ++n) {
                const auto& t = samples[idx[n]].target;
                for (std::size_t k = 0; k < L; ++k) {
                    const bool p = y[(n - start) * L + k] >= threshold;
                    const bool truth = t[k] > 0.5;
                    if (p && truth) ++sc.tp;
                    else if (p) ++sc.fp;
                    else if (truth) ++sc.fn;
                    else ++sc.tn;
                }
            }
        }
    }
    return sc;
}

}  // namespace ctsat
