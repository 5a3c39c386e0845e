#ifndef TRDQ_ATTENTION_SHARE_HPP
#define TRDQ_ATTENTION_SHARE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "trdq/tensor.hpp"

namespace trdq {

enum class Branch : uint8_t { Conditional = 1, Unconditional = 2 };

struct AttentionRecord {
    int block_id = 0;
    int timestep = 0;
    Branch branch = Branch::Conditional;
    Matrix attn;   // flattened multi-head attention values
};

// (block, timestep) -> cosine similarity between the two CFG branches.
struct SimilarityMatrix {
    std::map<std::pair<int, int>, double> values;
};

struct SharingPlan {
    std::set<int> shared_blocks;
    double threshold = 0.95;

    bool is_shared(int block_id) const { return shared_blocks.count(block_id) > 0; }
};

double cosine_similarity(const Matrix& a, const Matrix& b);

SimilarityMatrix build_similarity_matrix(const std::vector<AttentionRecord>& records);

// A block is shared iff its similarity clears the threshold at every
// timestep in the matrix.
SharingPlan derive_sharing_plan(const SimilarityMatrix& sim, double threshold);

struct SharingResult {
    Matrix attn_for_uncond;
    bool computed = false;   // true when the deferred branch actually ran
};

SharingResult apply_sharing(const SharingPlan& plan, int block_id, int t,
                            const Matrix& cond_attn,
                            const std::function<Matrix()>& uncond_attn_fn);

}  // namespace trdq

#endif
