#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsat/waveform.hpp"

namespace ctsat {

struct WaveformPair {
    std::string id;
    std::vector<double> primary;
    std::vector<double> secondary;
    /// first post-fault sample; only used with post_fault_only
    std::size_t onset_index = 0;
};

struct PairRatios {
    std::string id;
    double inf_ratio = 0.0;  ///< ||i1 - i2||_inf / ||i1||_inf
    double l2_ratio = 0.0;   ///< ||i1 - i2||_2 / ||i1||_2
};

struct IndexReport {
    double e1 = 0.0, e2 = 0.0, e3 = 0.0, e4 = 0.0;
    std::size_t n_samples = 0;
    std::string worst_case_id;     ///< argmax of the infinity-norm ratio
    std::string worst_case_l2_id;  ///< argmax of the 2-norm ratio
    std::vector<PairRatios> pairs;
};

/**
 * e1 / e2: max / mean of the infinity-norm error ratio; e3 / e4: max / mean of
 * the 2-norm ratio. Throws InputError naming the pair on length mismatch or a
 * zero-norm primary.
 */
IndexReport performance_indexes(const std::vector<WaveformPair>& pairs, bool post_fault_only = false);

nlohmann::json to_json(const IndexReport& r);

}  // namespace ctsat
