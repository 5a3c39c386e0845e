#ifndef TRDQ_TIME_BANK_HPP
#define TRDQ_TIME_BANK_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "trdq/quantizer.hpp"
#include "trdq/rotation.hpp"

namespace trdq {

struct TimestepTrace {
    uint32_t layer_id = 0;
    int timestep = 0;        // 1-based, within the schedule
    Matrix activations;      // tokens x C_in
};

struct Grouping {
    enum class Kind { PerStep, Buckets };
    Kind kind = Kind::PerStep;
    int bucket_count = 0;   // meaningful only for Kind::Buckets

    static Grouping per_step() { return {Kind::PerStep, 0}; }
    static Grouping buckets(int n) { return {Kind::Buckets, n}; }

    int group_count(int schedule_len) const {
        return kind == Kind::PerStep ? schedule_len : bucket_count;
    }
    // Maps timestep t in [1, schedule_len] to its group, 1-based.
    int group_of(int t, int schedule_len) const;
};

// Family of balancing parameters indexed by (layer, timestep group).
struct TimeParamBank {
    std::map<std::pair<uint32_t, int>, BalancingParams> entries;
    Grouping grouping;
    int schedule_len = 0;
    double alpha = 0.5;
    RotationBuildConfig build_config;
    BalancingToggles toggles;
};

TimeParamBank calibrate_bank(const std::vector<TimestepTrace>& traces,
                             const std::map<uint32_t, Matrix>& weights,
                             double alpha, const RotationBuildConfig& cfg,
                             const Grouping& grouping, int schedule_len,
                             const BalancingToggles& toggles = {});

const BalancingParams& lookup(const TimeParamBank& bank, uint32_t layer_id, int t);

// Per-token quantization from the tensor's own min/max only; no calibration
// statistics are consulted.
QuantizedTensor dynamic_activation_quant(const Matrix& x_transformed, int bits);

bool operator==(const PermutationVector& a, const PermutationVector& b);
bool operator==(const SmoothingDiag& a, const SmoothingDiag& b);
bool operator==(const BlockRotation& a, const BlockRotation& b);
bool operator==(const BalancingParams& a, const BalancingParams& b);
bool operator==(const TimeParamBank& a, const TimeParamBank& b);

}  // namespace trdq

#endif
