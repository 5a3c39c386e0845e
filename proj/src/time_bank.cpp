#include "trdq/time_bank.hpp"

#include <sstream>

namespace trdq {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    uint64_t h = seed + 0xd6e8feb86659fd93ULL * (a + 1) + 0xa0761d6478bd642fULL * (b + 1);
    h ^= h >> 32;
    h *= 0xd6e8feb86659fd93ULL;
    h ^= h >> 32;
    return h;
}

}  // namespace

int Grouping::group_of(int t, int schedule_len) const {
    if (t < 1 || t > schedule_len)
        throw DomainError("timestep " + std::to_string(t) + " outside schedule [1, " +
                          std::to_string(schedule_len) + "]");
    if (kind == Kind::PerStep) return t;
    // ceil(t * buckets / schedule_len)
    return static_cast<int>((static_cast<int64_t>(t) * bucket_count + schedule_len - 1) /
                            schedule_len);
}

TimeParamBank calibrate_bank(const std::vector<TimestepTrace>& traces,
                             const std::map<uint32_t, Matrix>& weights,
                             double alpha, const RotationBuildConfig& cfg,
                             const Grouping& grouping, int schedule_len,
                             const BalancingToggles& toggles) {
    TimeParamBank bank;
    bank.grouping = grouping;
    bank.schedule_len = schedule_len;
    bank.alpha = alpha;
    bank.build_config = cfg;
    bank.toggles = toggles;

    // Bucket the traces by (layer, group).
    std::map<std::pair<uint32_t, int>, std::vector<const TimestepTrace*>> grouped;
    for (const auto& tr : traces) {
        if (weights.find(tr.layer_id) == weights.end()) continue;
        grouped[{tr.layer_id, grouping.group_of(tr.timestep, schedule_len)}].push_back(&tr);
    }

    std::ostringstream missing;
    for (const auto& [layer, w] : weights) {
        (void)w;
        for (int g = 1; g <= grouping.group_count(schedule_len); ++g)
            if (grouped.find({layer, g}) == grouped.end())
                missing << " (layer " << layer << ", group " << g << ")";
    }
    if (!missing.str().empty())
        throw CoverageError("calibrate_bank: missing calibration traces for:" + missing.str());

    for (const auto& [key, group_traces] : grouped) {
        Index rows = 0;
        const Index cols = group_traces.front()->activations.cols();
        for (const auto* tr : group_traces) {
            if (tr->activations.cols() != cols)
                throw ShapeError("calibrate_bank: inconsistent channel count in traces");
            rows += tr->activations.rows();
        }
        Matrix x(rows, cols);
        Index r = 0;
        for (const auto* tr : group_traces) {
            x.middleRows(r, tr->activations.rows()) = tr->activations;
            r += tr->activations.rows();
        }
        RotationBuildConfig local = cfg;
        local.rng_seed = mix_seed(cfg.rng_seed, key.first, static_cast<uint64_t>(key.second));
        bank.entries.emplace(key, assemble_balancing(x, weights.at(key.first), alpha, local, toggles));
    }
    return bank;
}

const BalancingParams& lookup(const TimeParamBank& bank, uint32_t layer_id, int t) {
    const int g = bank.grouping.group_of(t, bank.schedule_len);
    const auto it = bank.entries.find({layer_id, g});
    if (it == bank.entries.end())
        throw CoverageError("lookup: no entry for layer " + std::to_string(layer_id) +
                            ", group " + std::to_string(g));
    return it->second;
}

QuantizedTensor dynamic_activation_quant(const Matrix& x_transformed, int bits) {
    QuantConfig cfg;
    cfg.bits = bits;
    cfg.granularity = Granularity::PerToken;
    cfg.dynamic = true;
    return quantize(x_transformed, cfg);
}

bool operator==(const PermutationVector& a, const PermutationVector& b) {
    return a.entries == b.entries;
}

bool operator==(const SmoothingDiag& a, const SmoothingDiag& b) {
    return a.alpha == b.alpha && a.delta.size() == b.delta.size() && a.delta == b.delta;
}

bool operator==(const BlockRotation& a, const BlockRotation& b) {
    if (a.channel_count != b.channel_count || a.blocks.size() != b.blocks.size()) return false;
    for (size_t i = 0; i < a.blocks.size(); ++i)
        if (a.blocks[i].matrix.rows() != b.blocks[i].matrix.rows() ||
            a.blocks[i].matrix != b.blocks[i].matrix)
            return false;
    return true;
}

bool operator==(const BalancingParams& a, const BalancingParams& b) {
    return a.delta == b.delta && a.r1 == b.r1 && a.p == b.p && a.r2 == b.r2;
}

bool operator==(const TimeParamBank& a, const TimeParamBank& b) {
    return a.grouping.kind == b.grouping.kind &&
           a.grouping.bucket_count == b.grouping.bucket_count &&
           a.schedule_len == b.schedule_len && a.alpha == b.alpha &&
           a.entries == b.entries;
}

}  // namespace trdq
