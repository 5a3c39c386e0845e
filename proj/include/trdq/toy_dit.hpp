#ifndef TRDQ_TOY_DIT_HPP
#define TRDQ_TOY_DIT_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "trdq/attention_share.hpp"
#include "trdq/time_bank.hpp"

namespace trdq {

struct ToyDiTConfig {
    Index dim = 64;
    int heads = 4;
    int blocks = 4;
    Index tokens = 16;
    int steps = 20;
    double cfg_scale = 4.5;
    uint64_t seed = 0;              // seeds the model weights
    Index rotation_block_size = 16; // must divide dim
};

// Per-layer execution mode. All linear layers share one mode.
struct LayerMode {
    bool reference = true;
    bool quantize = true;   // false: apply balancing transforms only
    int weight_bits = 8;
    int act_bits = 8;
    bool use_smoothing = true;
    bool use_r1 = true;
    bool use_p = true;
    bool use_r2 = true;
    bool use_time_rotation = true;

    static LayerMode reference_mode() { return {}; }
    static LayerMode fake_quant(int wbits, int abits) {
        LayerMode m;
        m.reference = false;
        m.weight_bits = wbits;
        m.act_bits = abits;
        return m;
    }
    bool uses_balancing() const {
        return !reference && (use_smoothing || use_r1 || use_p || use_r2);
    }
    BalancingToggles toggles() const {
        return {use_smoothing, use_r1, use_p, use_r2};
    }
};

struct DenoiseStats {
    long attention_computed = 0;
    long attention_skipped = 0;
    // Conditional-branch activation quantization error per (layer, timestep).
    std::map<std::pair<uint32_t, int>, QuantErrorMetrics> act_quant;
};

struct EvalMetrics {
    double mse = 0.0;
    double sqnr_db = 0.0;
    double max_abs_err = 0.0;
    double cosine = 0.0;
};

EvalMetrics evaluate(const Matrix& reference_out, const Matrix& quant_out);

// Desk-scale pre-norm diffusion transformer with CFG denoising. Weights are
// a pure function of the config seed; three channels per norm get a x20 gain
// to plant massive-outlier structure, and the gains are modulated by the
// timestep so activation statistics drift across the schedule.
class ToyDiT {
  public:
    explicit ToyDiT(const ToyDiTConfig& cfg);

    const ToyDiTConfig& config() const { return cfg_; }
    uint32_t layer_count() const;
    const Matrix& layer_weight(uint32_t id) const;
    std::map<uint32_t, Matrix> layer_weights() const;

    // Deterministic condition vector for a given run seed.
    Vector make_condition(uint64_t run_seed) const;

    Matrix denoise(const LayerMode& mode, const TimeParamBank* bank,
                   const SharingPlan* plan, const Vector& condition,
                   DenoiseStats* stats = nullptr) const;

    // Reference-mode run recording every linear layer's input per timestep
    // and both branches' attention values per block per timestep.
    void capture_traces(const std::vector<Vector>& conditions,
                        std::vector<TimestepTrace>& traces,
                        std::vector<AttentionRecord>& attn_records) const;

  private:
    struct Block {
        Vector gain_attn, gain_mlp;        // base per-channel norm gains
        Vector mod_freq_attn, mod_phase_attn;
        Vector mod_freq_mlp, mod_phase_mlp;
        Matrix wq, wk, wv, wo, w1, w2;
    };

    struct RunContext;

    Matrix run(const LayerMode& mode, const TimeParamBank* bank,
               const SharingPlan* plan, const Vector& condition,
               DenoiseStats* stats, std::vector<TimestepTrace>* traces,
               std::vector<AttentionRecord>* attn_records) const;
    Vector modulated_gain(const Vector& base, const Vector& freq,
                          const Vector& phase, int t) const;
    Matrix modulated_norm(const Matrix& h, const Block& blk, bool mlp_side, int t) const;
    Matrix linear(const Matrix& x, uint32_t layer_id, int t, RunContext& ctx) const;
    Matrix forward(const Matrix& z, int t, const Vector* condition, RunContext& ctx) const;
    Vector timestep_embedding(int t) const;

    ToyDiTConfig cfg_;
    std::vector<Block> blocks_;
    Matrix head_;
    std::vector<const Matrix*> layer_index_;
};

}  // namespace trdq

#endif
