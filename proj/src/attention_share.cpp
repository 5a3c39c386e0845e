#include "trdq/attention_share.hpp"

#include <cmath>

namespace trdq {

double cosine_similarity(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("cosine_similarity: shape mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw DomainError("cosine_similarity: zero tensor");
    const double dot = (a.array() * b.array()).sum();
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

SimilarityMatrix build_similarity_matrix(const std::vector<AttentionRecord>& records) {
    std::map<std::pair<int, int>, const AttentionRecord*> cond, uncond;
    for (const auto& r : records) {
        auto& side = r.branch == Branch::Conditional ? cond : uncond;
        side[{r.block_id, r.timestep}] = &r;
    }
    SimilarityMatrix sim;
    for (const auto& [key, rc] : cond) {
        const auto it = uncond.find(key);
        if (it == uncond.end())
            throw CoverageError("build_similarity_matrix: unconditional branch missing for block " +
                                std::to_string(key.first) + ", t " + std::to_string(key.second));
        sim.values[key] = cosine_similarity(rc->attn, it->second->attn);
    }
    for (const auto& [key, ru] : uncond) {
        (void)ru;
        if (cond.find(key) == cond.end())
            throw CoverageError("build_similarity_matrix: conditional branch missing for block " +
                                std::to_string(key.first) + ", t " + std::to_string(key.second));
    }
    return sim;
}

SharingPlan derive_sharing_plan(const SimilarityMatrix& sim, double threshold) {
    if (threshold <= 0.0 || threshold > 1.0)
        throw DomainError("derive_sharing_plan: threshold must be in (0, 1]");
    SharingPlan plan;
    plan.threshold = threshold;
    std::map<int, bool> all_above;
    for (const auto& [key, v] : sim.values) {
        auto [it, inserted] = all_above.emplace(key.first, true);
        (void)inserted;
        if (v < threshold) it->second = false;
    }
    for (const auto& [block, ok] : all_above)
        if (ok) plan.shared_blocks.insert(block);
    return plan;
}

SharingResult apply_sharing(const SharingPlan& plan, int block_id, int t,
                            const Matrix& cond_attn,
                            const std::function<Matrix()>& uncond_attn_fn) {
    (void)t;
    if (plan.is_shared(block_id)) return {cond_attn, false};
    return {uncond_attn_fn(), true};
}

}  // namespace trdq
