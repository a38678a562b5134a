#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctsat/ct_sim.hpp"
#include "ctsat/waveform.hpp"

namespace ctsat {

/// Rated primary current of the reference 2000:5 CT, as a peak value.
inline constexpr double kRatedPrimaryPeak = 2000.0 * std::numbers::sqrt2;

struct GridPoint {
    double t1 = 0.1;
    double theta = 0.0;
    double severity = 1.0;  ///< multiple of the rated primary peak
    double t2 = 1.0;
    double remanence = 0.0;
};

struct TraversalGrid {
    std::vector<double> t1_values;
    std::vector<double> theta_values;
    std::vector<double> severity_values;
    std::vector<double> t2_values;
    std::vector<double> remanence_values;

    /// T1 50..300 ms step 10, theta 0..330 deg step 15, 5 severities,
    /// T2 0.5..2 s step 0.25, remanence {0, +-20, +-40, +-80}%.
    static TraversalGrid table2();
    /// 4,320 points: the full circle of fault angles in 15 deg steps, coarser
    /// elsewhere; sized for training on one core.
    static TraversalGrid desk();
    /// Tiny grid for smoke runs and pipeline checks.
    static TraversalGrid small();
    static TraversalGrid by_name(const std::string& name);

    std::size_t size() const;
    /// Row-major decode with remanence varying fastest.
    GridPoint point(std::size_t index) const;
    void validate() const;
};

struct SampleMeta {
    FaultScenario scenario;
    CtParameters ct;
    double window_ms = 0.0;
    std::vector<std::string> augmentations;
    std::size_t grid_index = 0;
};

/**
 * @brief Normalized secondary current with its per-point saturation target.
 *
 * Clean samples have max|input| == 1. Noise-augmented samples may exceed 1
 * slightly and stay within [-1.2, 1.2].
 */
struct LabeledSample {
    std::vector<double> input;
    std::vector<double> target;
    SampleMeta meta;

    bool saturated() const;
};

struct DatabaseConfig {
    double sample_rate = kDefaultSampleRate;
    double duration = 0.06;
    double rated_peak = kRatedPrimaryPeak;
    double zeta = kDefaultZeta;
    bool balance = true;
    /// unsaturated samples kept per saturated sample
    double balance_ratio = 1.0;
    std::uint64_t seed = 0;
};

struct SkippedPoint {
    std::size_t grid_index = 0;
    std::string reason;
};

struct Database {
    std::vector<LabeledSample> samples;
    std::vector<SkippedPoint> skipped;
    std::size_t raw_count = 0;
    std::size_t saturated_count = 0;
    std::size_t unsaturated_count = 0;
};

FaultScenario scenario_for(const GridPoint& p, const DatabaseConfig& cfg);
CtParameters ct_for(const GridPoint& p, const CtParameters& base);

/// One simulation per grid point, normalized and labeled, then balanced.
/// Output order follows the grid index regardless of thread scheduling.
Database build_database(const TraversalGrid& grid, const CtParameters& ct_base,
                        const DatabaseConfig& cfg);

/// Keeps every saturated sample and a seeded random subset of unsaturated ones
/// so that unsaturated / saturated <= ratio. Relative order is preserved.
std::vector<LabeledSample> balance(std::vector<LabeledSample> samples, double ratio,
                                   std::uint64_t seed);

/// Divides by max|x|. Throws UndefinedNormalizer on an all-zero input.
std::vector<double> normalize(std::span<const double> values);
std::vector<double> normalize(const SampledWaveform& secondary);

enum class AugmentKind { Polarity, Noise, Window };

struct AugmentConfig {
    std::vector<AugmentKind> kinds{AugmentKind::Polarity, AugmentKind::Noise, AugmentKind::Window};
    std::vector<double> snr_db{40.0, 35.0};
    std::vector<double> window_ms{10.0, 20.0, 40.0, 60.0};
    /// Also add noise on top of the polarity and window copies.
    bool stack_noise = true;
    double sample_rate = kDefaultSampleRate;
};

std::vector<AugmentKind> parse_augment_kinds(const std::string& csv);
std::string to_string(AugmentKind kind);

/// x + white gaussian noise scaled so that 10 log10(P_signal / P_noise) = snr_db.
std::vector<double> add_noise(std::span<const double> x, double snr_db, std::mt19937_64& rng);

/// Original first, then one copy per configured kind.
std::vector<LabeledSample> augment(const LabeledSample& sample, const AugmentConfig& cfg,
                                   std::mt19937_64& rng);

/// Augments each sample with an independent stream derived from (seed, position).
std::vector<LabeledSample> augment_all(const std::vector<LabeledSample>& samples,
                                       const AugmentConfig& cfg, std::uint64_t seed);

/// Seeded shuffle, then the first round(ratio * n) samples form the training split.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(
    std::vector<LabeledSample> samples, double ratio, std::uint64_t seed);

/// Stateless 64-bit mixer for deriving independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

nlohmann::json to_json(const TraversalGrid& grid);
TraversalGrid grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LabeledSample& s);
LabeledSample sample_from_json(const nlohmann::json& j);

struct DatasetFiles {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> test;
    nlohmann::json manifest;
};

/// Writes train-NNNN.jsonl / test-NNNN.jsonl shards and manifest.json into `dir`.
/// `extra` is merged into the manifest.
nlohmann::json write_dataset(const std::filesystem::path& dir, const std::vector<LabeledSample>& train,
                             const std::vector<LabeledSample>& test, const nlohmann::json& extra,
                             std::size_t shard_size = 2000);

/// Reads a dataset directory and verifies every shard checksum.
DatasetFiles read_dataset(const std::filesystem::path& dir);

}  // namespace ctsat
