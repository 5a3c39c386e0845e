#include "trdq/toy_dit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

namespace trdq {

namespace {

constexpr double kOutlierGain = 20.0;
constexpr int kOutlierChannelsPerNorm = 6;
constexpr double kBaseModAmplitude = 0.05;
constexpr double kTimestepEmbedScale = 0.5;
constexpr double kHeadScale = 0.05;
constexpr double kNormEps = 1e-6;
constexpr double kTwoPi = 6.283185307179586;

Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols, double std) {
    std::normal_distribution<double> g(0.0, std);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = g(rng);
    return m;
}

Matrix gelu(const Matrix& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        Eigen::RowVectorXd row = logits.row(i);
        row.array() -= row.maxCoeff();
        Eigen::RowVectorXd e = row.array().exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

uint64_t hash_condition(uint64_t seed, const Vector& condition) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (Index i = 0; i < condition.size(); ++i) {
        uint64_t bits;
        const double v = condition(i);
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h = (h ^ bits) * 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

EvalMetrics evaluate(const Matrix& reference_out, const Matrix& quant_out) {
    if (reference_out.rows() != quant_out.rows() || reference_out.cols() != quant_out.cols())
        throw ShapeError("evaluate: shape mismatch");
    const Matrix err = reference_out - quant_out;
    EvalMetrics m;
    m.mse = err.squaredNorm() / static_cast<double>(err.size());
    m.max_abs_err = err.size() ? err.cwiseAbs().maxCoeff() : 0.0;
    const double noise = err.squaredNorm();
    m.sqnr_db = noise > 0.0 ? 10.0 * std::log10(reference_out.squaredNorm() / noise)
                            : std::numeric_limits<double>::infinity();
    const double denom = reference_out.norm() * quant_out.norm();
    m.cosine = denom > 0.0
                   ? (reference_out.array() * quant_out.array()).sum() / denom
                   : 1.0;
    return m;
}

ToyDiT::ToyDiT(const ToyDiTConfig& cfg) : cfg_(cfg) {
    if (cfg.dim % cfg.heads != 0)
        throw ConfigError("ToyDiT: dim must be divisible by heads");
    if (cfg.dim % cfg.rotation_block_size != 0)
        throw ConfigError("ToyDiT: dim must be divisible by rotation block size");

    std::mt19937_64 rng(cfg.seed ^ 0x7f4a7c15ULL);
    std::uniform_real_distribution<double> freq(0.2, 1.2);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);

    const Index mlp_dim = 2 * cfg.dim;
    const double ws = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    // Sharper attention logits so the two CFG branches of unrelated models
    // produce distinguishable attention patterns.
    const double qk_ws = 2.0 / std::sqrt(static_cast<double>(cfg.dim));

    // Each norm carries a rotating cast of outlier channels: every outlier
    // channel's gain sweeps 1..kOutlierGain once over the schedule, with
    // peaks staggered so a different subset is hot at each timestep.
    auto make_gain = [&](Vector& gain, Vector& f, Vector& ph) {
        gain = Vector::Ones(cfg.dim);
        f.resize(cfg.dim);
        ph.resize(cfg.dim);
        for (Index c = 0; c < cfg.dim; ++c) {
            f(c) = freq(rng);
            ph(c) = phase(rng);
        }
        // Outlier channels sit in one contiguous run, so without a channel
        // permutation they crowd into the same rotation block.
        const int n = std::min<int>(kOutlierChannelsPerNorm, static_cast<int>(cfg.dim));
        std::uniform_int_distribution<Index> start_dist(0, cfg.dim - n);
        const Index start = start_dist(rng);
        std::uniform_real_distribution<double> peak(0.5 * kOutlierGain, 1.5 * kOutlierGain);
        for (int i = 0; i < n; ++i) {
            const Index c = start + i;
            gain(c) = peak(rng);
            f(c) = 2.0 * kTwoPi / std::max(cfg.steps, 1);
            ph(c) = kTwoPi * i / n + jitter(rng);
        }
    };

    for (int b = 0; b < cfg.blocks; ++b) {
        Block blk;
        make_gain(blk.gain_attn, blk.mod_freq_attn, blk.mod_phase_attn);
        make_gain(blk.gain_mlp, blk.mod_freq_mlp, blk.mod_phase_mlp);
        blk.wq = gaussian_matrix(rng, cfg.dim, cfg.dim, qk_ws);
        blk.wk = gaussian_matrix(rng, cfg.dim, cfg.dim, qk_ws);
        blk.wv = gaussian_matrix(rng, cfg.dim, cfg.dim, ws);
        blk.wo = gaussian_matrix(rng, cfg.dim, cfg.dim, ws);
        blk.w1 = gaussian_matrix(rng, cfg.dim, mlp_dim, ws);
        blk.w2 = gaussian_matrix(rng, mlp_dim, cfg.dim, 1.0 / std::sqrt(static_cast<double>(mlp_dim)));
        blocks_.push_back(std::move(blk));
    }
    // Small head keeps the denoising recurrence well-conditioned, so output
    // error reflects accumulated per-layer quantization noise instead of
    // chaotic trajectory divergence.
    head_ = gaussian_matrix(rng, cfg.dim, cfg.dim, ws * kHeadScale);

    for (const auto& blk : blocks_) {
        layer_index_.push_back(&blk.wq);
        layer_index_.push_back(&blk.wk);
        layer_index_.push_back(&blk.wv);
        layer_index_.push_back(&blk.wo);
        layer_index_.push_back(&blk.w1);
        layer_index_.push_back(&blk.w2);
    }
    layer_index_.push_back(&head_);
}

uint32_t ToyDiT::layer_count() const {
    return static_cast<uint32_t>(layer_index_.size());
}

const Matrix& ToyDiT::layer_weight(uint32_t id) const {
    if (id >= layer_index_.size())
        throw DomainError("ToyDiT: layer id " + std::to_string(id) + " out of range");
    return *layer_index_[id];
}

std::map<uint32_t, Matrix> ToyDiT::layer_weights() const {
    std::map<uint32_t, Matrix> out;
    for (uint32_t id = 0; id < layer_index_.size(); ++id) out[id] = *layer_index_[id];
    return out;
}

Vector ToyDiT::make_condition(uint64_t run_seed) const {
    std::mt19937_64 rng(run_seed * 0x9e3779b97f4a7c15ULL + 1);
    std::normal_distribution<double> g(0.0, 1.0);
    Vector c(cfg_.dim);
    for (Index i = 0; i < cfg_.dim; ++i) c(i) = g(rng);
    return c;
}

Vector ToyDiT::timestep_embedding(int t) const {
    Vector e(cfg_.dim);
    const Index half = cfg_.dim / 2;
    for (Index i = 0; i < half; ++i) {
        const double w = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        e(2 * i) = std::sin(t * w);
        e(2 * i + 1) = std::cos(t * w);
    }
    return e * kTimestepEmbedScale;
}

Vector ToyDiT::modulated_gain(const Vector& base, const Vector& freq,
                              const Vector& phase, int t) const {
    Vector g(base.size());
    for (Index c = 0; c < base.size(); ++c) {
        if (base(c) > 1.0) {
            // Geometric sweep between 1 and the peak gain across the schedule.
            const double u = 0.5 * (1.0 + std::sin(freq(c) * t + phase(c)));
            g(c) = std::exp(std::log(base(c)) * u);
        } else {
            g(c) = base(c) * (1.0 + kBaseModAmplitude * std::sin(freq(c) * t + phase(c)));
        }
    }
    return g;
}

Matrix ToyDiT::modulated_norm(const Matrix& h, const Block& blk, bool mlp_side, int t) const {
    const Vector gain = mlp_side
                            ? modulated_gain(blk.gain_mlp, blk.mod_freq_mlp, blk.mod_phase_mlp, t)
                            : modulated_gain(blk.gain_attn, blk.mod_freq_attn, blk.mod_phase_attn, t);
    Matrix out(h.rows(), h.cols());
    for (Index i = 0; i < h.rows(); ++i) {
        const double mean = h.row(i).mean();
        const double var = (h.row(i).array() - mean).square().mean();
        out.row(i) = ((h.row(i).array() - mean) / std::sqrt(var + kNormEps)) * gain.transpose().array();
    }
    return out;
}

struct ToyDiT::RunContext {
    const LayerMode* mode = nullptr;
    const TimeParamBank* bank = nullptr;
    const SharingPlan* plan = nullptr;
    DenoiseStats* stats = nullptr;
    Branch branch = Branch::Conditional;

    // Conditional-branch attention per block for the current step, consumed
    // by the unconditional branch when sharing applies.
    std::vector<Matrix> cond_attn;

    bool record = false;
    std::vector<TimestepTrace>* traces = nullptr;
    std::vector<AttentionRecord>* attn_records = nullptr;

    std::map<std::pair<uint32_t, int>, Matrix> weight_cache;
};

Matrix ToyDiT::linear(const Matrix& x, uint32_t layer_id, int t, RunContext& ctx) const {
    if (ctx.record && ctx.branch == Branch::Conditional && ctx.traces)
        ctx.traces->push_back({layer_id, t, x});

    const Matrix& w = layer_weight(layer_id);
    if (ctx.mode->reference) return x * w;

    const BalancingParams* bp = nullptr;
    int group = 0;
    if (ctx.mode->uses_balancing()) {
        if (!ctx.bank)
            throw CoverageError("denoise: balancing enabled but no parameter bank provided");
        const int tl = ctx.mode->use_time_rotation ? t : (ctx.bank->schedule_len + 1) / 2;
        bp = &lookup(*ctx.bank, layer_id, tl);
        group = ctx.bank->grouping.group_of(tl, ctx.bank->schedule_len);
    }

    const auto cache_key = std::make_pair(layer_id, group);
    auto it = ctx.weight_cache.find(cache_key);
    if (it == ctx.weight_cache.end()) {
        Matrix wt = bp ? transform_weights(w, *bp) : w;
        if (ctx.mode->quantize) {
            QuantConfig wcfg;
            wcfg.bits = ctx.mode->weight_bits;
            wcfg.granularity = Granularity::PerChannel;
            wcfg.dynamic = false;
            wt = fake_quantize(wt, wcfg);
        }
        it = ctx.weight_cache.emplace(cache_key, std::move(wt)).first;
    }

    const Matrix xt = bp ? transform_activations(x, *bp) : x;
    if (!ctx.mode->quantize) return xt * it->second;
    const Matrix xq = dequantize(dynamic_activation_quant(xt, ctx.mode->act_bits));

    if (ctx.stats && ctx.branch == Branch::Conditional) {
        const Matrix err = xt - xq;
        QuantErrorMetrics m;
        m.mse = err.squaredNorm() / static_cast<double>(err.size());
        m.max_abs_err = err.cwiseAbs().maxCoeff();
        const double noise = err.squaredNorm();
        m.sqnr_db = noise > 0.0 ? 10.0 * std::log10(xt.squaredNorm() / noise)
                                : std::numeric_limits<double>::infinity();
        ctx.stats->act_quant[{layer_id, t}] = m;
    }
    return xq * it->second;
}

Matrix ToyDiT::forward(const Matrix& z, int t, const Vector* condition, RunContext& ctx) const {
    const Vector temb = timestep_embedding(t);
    Matrix h = z;
    h.rowwise() += temb.transpose();
    if (condition) h.rowwise() += condition->transpose();

    const Index dh = cfg_.dim / cfg_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int b = 0; b < cfg_.blocks; ++b) {
        const Block& blk = blocks_[static_cast<size_t>(b)];
        const uint32_t base = static_cast<uint32_t>(b) * 6;
        const Matrix a_in = modulated_norm(h, blk, false, t);

        const bool shared = ctx.branch == Branch::Unconditional && ctx.plan &&
                            ctx.plan->is_shared(b);
        Matrix attn(cfg_.tokens, cfg_.heads * cfg_.tokens);
        if (shared) {
            attn = ctx.cond_attn[static_cast<size_t>(b)];
            if (ctx.stats) ++ctx.stats->attention_skipped;
        } else {
            const Matrix q = linear(a_in, base + 0, t, ctx);
            const Matrix k = linear(a_in, base + 1, t, ctx);
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                const Matrix qh = q.middleCols(hd * dh, dh);
                const Matrix kh = k.middleCols(hd * dh, dh);
                attn.middleCols(hd * cfg_.tokens, cfg_.tokens) =
                    softmax_rows(qh * kh.transpose() * scale);
            }
            if (ctx.stats) ++ctx.stats->attention_computed;
        }
        if (ctx.branch == Branch::Conditional)
            ctx.cond_attn[static_cast<size_t>(b)] = attn;
        if (ctx.record && ctx.attn_records)
            ctx.attn_records->push_back({b, t, ctx.branch, attn});

        const Matrix v = linear(a_in, base + 2, t, ctx);
        Matrix attn_out(cfg_.tokens, cfg_.dim);
        for (int hd = 0; hd < cfg_.heads; ++hd)
            attn_out.middleCols(hd * dh, dh) =
                attn.middleCols(hd * cfg_.tokens, cfg_.tokens) * v.middleCols(hd * dh, dh);
        h += linear(attn_out, base + 3, t, ctx);

        const Matrix m_in = modulated_norm(h, blk, true, t);
        h += linear(gelu(linear(m_in, base + 4, t, ctx)), base + 5, t, ctx);
    }
    return linear(h, layer_count() - 1, t, ctx);
}

Matrix ToyDiT::run(const LayerMode& mode, const TimeParamBank* bank,
                   const SharingPlan* plan, const Vector& condition,
                   DenoiseStats* stats, std::vector<TimestepTrace>* traces,
                   std::vector<AttentionRecord>* attn_records) const {
    if (condition.size() != cfg_.dim)
        throw ShapeError("denoise: condition length must equal dim");

    // Deterministic initial latent from (model seed, condition).
    std::mt19937_64 rng(hash_condition(cfg_.seed, condition));
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix z(cfg_.tokens, cfg_.dim);
    for (Index i = 0; i < cfg_.tokens; ++i)
        for (Index j = 0; j < cfg_.dim; ++j) z(i, j) = g(rng);

    // Linear beta schedule; abar[t] = prod_{i<=t} (1 - beta_i), abar[0] = 1.
    const int n = cfg_.steps;
    std::vector<double> abar(static_cast<size_t>(n) + 1, 1.0);
    for (int t = 1; t <= n; ++t) {
        const double beta = n > 1 ? 1e-4 + (0.02 - 1e-4) * (t - 1) / (n - 1) : 1e-2;
        abar[static_cast<size_t>(t)] = abar[static_cast<size_t>(t) - 1] * (1.0 - beta);
    }

    RunContext ctx;
    ctx.mode = &mode;
    ctx.bank = bank;
    ctx.plan = plan;
    ctx.stats = stats;
    ctx.cond_attn.resize(static_cast<size_t>(cfg_.blocks));
    ctx.record = traces != nullptr || attn_records != nullptr;
    ctx.traces = traces;
    ctx.attn_records = attn_records;

    for (int t = n; t >= 1; --t) {
        ctx.branch = Branch::Conditional;
        const Matrix eps_cond = forward(z, t, &condition, ctx);
        ctx.branch = Branch::Unconditional;
        const Matrix eps_uncond = forward(z, t, nullptr, ctx);
        const Matrix eps = eps_uncond + cfg_.cfg_scale * (eps_cond - eps_uncond);

        const double at = abar[static_cast<size_t>(t)];
        const double ap = abar[static_cast<size_t>(t) - 1];
        const Matrix x0 = (z - std::sqrt(1.0 - at) * eps) / std::sqrt(at);
        z = std::sqrt(ap) * x0 + std::sqrt(1.0 - ap) * eps;
    }
    return z;
}

Matrix ToyDiT::denoise(const LayerMode& mode, const TimeParamBank* bank,
                       const SharingPlan* plan, const Vector& condition,
                       DenoiseStats* stats) const {
    return run(mode, bank, plan, condition, stats, nullptr, nullptr);
}

void ToyDiT::capture_traces(const std::vector<Vector>& conditions,
                            std::vector<TimestepTrace>& traces,
                            std::vector<AttentionRecord>& attn_records) const {
    const LayerMode ref = LayerMode::reference_mode();
    for (const auto& condition : conditions)
        run(ref, nullptr, nullptr, condition, nullptr, &traces, &attn_records);
}

}  // namespace trdq
