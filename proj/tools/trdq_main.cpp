#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <set>
#include <sstream>

#include "trdq/serialization.hpp"
#include "trdq/toy_dit.hpp"

using json = nlohmann::ordered_json;
using namespace trdq;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitCoverage = 3;
constexpr int kExitConfig = 4;

struct ModelFlags {
    int dim = 64;
    int heads = 4;
    int blocks = 4;
    int tokens = 16;
    int steps = 20;
    double cfg_scale = 4.5;
    uint64_t seed = 0;
    int block_size = 16;

    void add_to(CLI::App& app) {
        app.add_option("--dim", dim, "embedding width");
        app.add_option("--heads", heads, "attention heads");
        app.add_option("--blocks", blocks, "transformer blocks");
        app.add_option("--tokens", tokens, "sequence length");
        app.add_option("--steps", steps, "denoising steps");
        app.add_option("--cfg-scale", cfg_scale, "classifier-free guidance scale");
        app.add_option("--model-seed", seed, "model weight seed");
        app.add_option("--block-size", block_size, "rotation block size");
    }

    ToyDiTConfig to_config() const {
        ToyDiTConfig cfg;
        cfg.dim = dim;
        cfg.heads = heads;
        cfg.blocks = blocks;
        cfg.tokens = tokens;
        cfg.steps = steps;
        cfg.cfg_scale = cfg_scale;
        cfg.seed = seed;
        cfg.rotation_block_size = block_size;
        return cfg;
    }
};

Grouping parse_grouping(const std::string& s) {
    if (s == "per-step") return Grouping::per_step();
    if (s.rfind("buckets:", 0) == 0) {
        const int n = std::stoi(s.substr(8));
        if (n < 1) throw CLI::ValidationError("--grouping", "bucket count must be >= 1");
        return Grouping::buckets(n);
    }
    throw CLI::ValidationError("--grouping", "expected 'per-step' or 'buckets:<n>'");
}

// Replaces ablated components of every bank entry with identity factors.
TimeParamBank ablate_bank(const TimeParamBank& bank, const BalancingToggles& keep) {
    TimeParamBank out = bank;
    for (auto& [key, bp] : out.entries) {
        (void)key;
        const Index c = bp.channel_count();
        const Index bs = bp.r1.block_size() > 0 ? bp.r1.block_size() : c;
        if (!keep.smooth) bp.delta.delta = Vector::Ones(c);
        if (!keep.r1) bp.r1 = BlockRotation::identity(c, bs);
        if (!keep.p) bp.p = PermutationVector::identity(c);
        if (!keep.r2) bp.r2 = BlockRotation::identity(c, bs);
    }
    return out;
}

void check_bank_compat(const TimeParamBank& bank, const ToyDiT& model) {
    if (bank.schedule_len != model.config().steps)
        throw ConfigError("bank schedule length " + std::to_string(bank.schedule_len) +
                          " does not match model steps " + std::to_string(model.config().steps));
    for (const auto& [key, bp] : bank.entries) {
        if (key.first >= model.layer_count())
            throw ConfigError("bank references layer " + std::to_string(key.first) +
                              " beyond model layer count");
        if (bp.channel_count() != model.layer_weight(key.first).rows())
            throw ConfigError("bank channel count mismatch for layer " + std::to_string(key.first));
    }
}

std::vector<Vector> make_conditions(const ToyDiT& model, int runs, uint64_t base_seed) {
    std::vector<Vector> out;
    for (int i = 0; i < runs; ++i)
        out.push_back(model.make_condition(base_seed + static_cast<uint64_t>(i)));
    return out;
}

int cmd_trace(const ModelFlags& mf, int runs, uint64_t run_seed, const std::string& out_path) {
    const ToyDiT model(mf.to_config());
    std::vector<TimestepTrace> traces;
    std::vector<AttentionRecord> attn;
    model.capture_traces(make_conditions(model, runs, run_seed), traces, attn);
    write_trace_file(out_path, traces, attn);
    std::cout << "wrote " << traces.size() << " activation traces and " << attn.size()
              << " attention records to " << out_path << "\n";
    return 0;
}

int cmd_calibrate(const ModelFlags& mf, const std::string& traces_path, double alpha,
                  const std::string& grouping_str, uint64_t seed, int greedy_steps,
                  const std::string& out_path) {
    const ToyDiT model(mf.to_config());
    std::vector<TimestepTrace> traces;
    std::vector<AttentionRecord> attn;
    read_trace_file(traces_path, traces, attn);

    RotationBuildConfig rcfg;
    rcfg.block_size = mf.block_size;
    rcfg.rng_seed = seed;
    rcfg.max_greedy_steps = greedy_steps;

    const TimeParamBank bank = calibrate_bank(traces, model.layer_weights(), alpha, rcfg,
                                              parse_grouping(grouping_str), mf.steps);
    write_bank_file(out_path, bank);
    std::cout << "wrote bank with " << bank.entries.size() << " entries to " << out_path << "\n";
    return 0;
}

int cmd_attn_sim(const std::string& traces_path, const std::string& out_path) {
    std::vector<TimestepTrace> traces;
    std::vector<AttentionRecord> attn;
    read_trace_file(traces_path, traces, attn);
    if (attn.empty())
        throw CoverageError("trace file contains no attention records");
    const SimilarityMatrix sim = build_similarity_matrix(attn);
    write_similarity_csv(out_path, sim);
    std::cout << "wrote " << sim.values.size() << " similarity entries to " << out_path << "\n";
    return 0;
}

int cmd_eval(const ModelFlags& mf, const std::string& bank_path, int wbits, int abits,
             const std::vector<std::string>& ablate, double share_threshold, int seeds,
             const std::string& out_path) {
    const std::set<std::string> ab(ablate.begin(), ablate.end());
    for (const auto& a : ab)
        if (a != "smooth" && a != "r1" && a != "p" && a != "r2" && a != "tr")
            throw CLI::ValidationError("--ablate", "unknown component '" + a + "'");

    LayerMode mode = LayerMode::fake_quant(wbits, abits);
    mode.use_smoothing = ab.count("smooth") == 0;
    mode.use_r1 = ab.count("r1") == 0;
    mode.use_p = ab.count("p") == 0;
    mode.use_r2 = ab.count("r2") == 0;
    mode.use_time_rotation = ab.count("tr") == 0;

    if (bank_path.empty() && mode.uses_balancing())
        throw CLI::ValidationError("--bank", "required unless smooth, r1, p and r2 are all ablated");

    const ToyDiT model(mf.to_config());
    TimeParamBank bank;
    if (!bank_path.empty()) {
        bank = read_bank_file(bank_path);
        check_bank_compat(bank, model);
        bank = ablate_bank(bank, mode.toggles());
    }

    // Sharing plan from a reference trace of the first eval condition.
    std::vector<TimestepTrace> dummy;
    std::vector<AttentionRecord> attn;
    model.capture_traces({model.make_condition(1)}, dummy, attn);
    const SimilarityMatrix sim = build_similarity_matrix(attn);
    SharingPlan plan;
    plan.threshold = share_threshold;
    if (share_threshold <= 1.0) plan = derive_sharing_plan(sim, share_threshold);

    const LayerMode ref = LayerMode::reference_mode();
    json per_seed = json::array();
    double mean_sqnr = 0.0, mean_mse = 0.0, mean_cos = 0.0;
    std::map<std::pair<uint32_t, int>, QuantErrorMetrics> layer_acc;

    for (int s = 1; s <= seeds; ++s) {
        const Vector condition = model.make_condition(static_cast<uint64_t>(s));
        const Matrix ref_out = model.denoise(ref, nullptr, nullptr, condition);
        DenoiseStats stats;
        const Matrix q_out = model.denoise(mode, bank.entries.empty() ? nullptr : &bank,
                                           &plan, condition, &stats);
        const EvalMetrics m = evaluate(ref_out, q_out);
        mean_sqnr += m.sqnr_db / seeds;
        mean_mse += m.mse / seeds;
        mean_cos += m.cosine / seeds;
        per_seed.push_back({{"seed", s},
                            {"mse", m.mse},
                            {"sqnr_db", m.sqnr_db},
                            {"max_abs_err", m.max_abs_err},
                            {"cosine", m.cosine},
                            {"attention_computed", stats.attention_computed},
                            {"attention_skipped", stats.attention_skipped}});
        for (const auto& [key, qm] : stats.act_quant) {
            auto& acc = layer_acc[key];
            acc.mse += qm.mse / seeds;
            acc.sqnr_db += qm.sqnr_db / seeds;
            acc.max_abs_err = std::max(acc.max_abs_err, qm.max_abs_err);
        }
    }

    json layers = json::array();
    for (const auto& [key, qm] : layer_acc)
        layers.push_back({{"layer", key.first},
                          {"timestep", key.second},
                          {"act_mse", qm.mse},
                          {"act_sqnr_db", qm.sqnr_db},
                          {"act_max_abs_err", qm.max_abs_err}});

    json simgrid = json::array();
    for (const auto& [key, v] : sim.values)
        simgrid.push_back({{"block", key.first}, {"timestep", key.second}, {"cosine", v}});

    json report;
    report["schema_version"] = 1;
    report["config"] = {{"dim", mf.dim},       {"heads", mf.heads},
                        {"blocks", mf.blocks}, {"tokens", mf.tokens},
                        {"steps", mf.steps},   {"cfg_scale", mf.cfg_scale},
                        {"model_seed", mf.seed}, {"block_size", mf.block_size},
                        {"wbits", wbits},      {"abits", abits},
                        {"ablate", std::vector<std::string>(ab.begin(), ab.end())},
                        {"share_threshold", share_threshold},
                        {"seeds", seeds},
                        {"bank", bank_path}};
    report["end_to_end"] = {{"mean_mse", mean_mse},
                            {"mean_sqnr_db", mean_sqnr},
                            {"mean_cosine", mean_cos},
                            {"per_seed", per_seed}};
    report["per_layer_timestep"] = layers;
    report["similarity_grid"] = simgrid;
    report["sharing_plan"] = {{"threshold", share_threshold},
                              {"shared_blocks", std::vector<int>(plan.shared_blocks.begin(),
                                                                 plan.shared_blocks.end())}};
    atomic_write(out_path, report.dump(2) + "\n");
    std::cout << "mean sqnr_db " << mean_sqnr << ", report written to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TR-DQ quantization pipeline"};
    app.require_subcommand(1);

    ModelFlags mf_trace, mf_cal, mf_eval;
    std::string out_trace = "trace.trdq";
    int runs = 1;
    uint64_t run_seed = 1;
    auto* trace = app.add_subcommand("trace", "capture calibration traces from the toy model");
    mf_trace.add_to(*trace);
    trace->add_option("--runs", runs, "number of calibration runs");
    trace->add_option("--run-seed", run_seed, "base seed for run conditions");
    trace->add_option("--out", out_trace, "output trace file")->required();

    std::string in_traces, out_bank = "bank.trdq", grouping = "per-step";
    double alpha = 0.5;
    uint64_t cal_seed = 0;
    int greedy_steps = 8;
    auto* cal = app.add_subcommand("calibrate", "build a per-timestep parameter bank");
    mf_cal.add_to(*cal);
    cal->add_option("--traces", in_traces, "input trace file")->required();
    cal->add_option("--alpha", alpha, "migration strength");
    cal->add_option("--grouping", grouping, "per-step or buckets:<n>");
    cal->add_option("--seed", cal_seed, "rotation construction seed");
    cal->add_option("--greedy-steps", greedy_steps, "greedy chain cap");
    cal->add_option("--out", out_bank, "output bank file")->required();

    std::string bank_path, out_report = "report.json";
    int wbits = 8, abits = 8, seeds = 8;
    double share_threshold = 0.95;
    std::vector<std::string> ablate;
    auto* ev = app.add_subcommand("eval", "run reference vs quantized denoising and report");
    mf_eval.add_to(*ev);
    ev->add_option("--bank", bank_path, "parameter bank file");
    ev->add_option("--wbits", wbits, "weight bits")->check(CLI::IsMember({4, 6, 8}));
    ev->add_option("--abits", abits, "activation bits")->check(CLI::IsMember({4, 6, 8}));
    ev->add_option("--ablate", ablate, "components to disable: smooth,r1,p,r2,tr")->delimiter(',');
    ev->add_option("--share-threshold", share_threshold, "attention-sharing cosine threshold");
    ev->add_option("--seeds", seeds, "number of evaluation seeds");
    ev->add_option("--out", out_report, "output report file")->required();

    std::string sim_traces, out_csv = "simgrid.csv";
    auto* sim = app.add_subcommand("attn-sim", "export the CFG attention similarity grid");
    sim->add_option("--traces", sim_traces, "input trace file")->required();
    sim->add_option("--out", out_csv, "output CSV file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (trace->parsed()) return cmd_trace(mf_trace, runs, run_seed, out_trace);
        if (cal->parsed())
            return cmd_calibrate(mf_cal, in_traces, alpha, grouping, cal_seed, greedy_steps, out_bank);
        if (ev->parsed())
            return cmd_eval(mf_eval, bank_path, wbits, abits, ablate, share_threshold, seeds, out_report);
        if (sim->parsed()) return cmd_attn_sim(sim_traces, out_csv);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitCoverage;
    } catch (const CoverageError& e) {
        std::cerr << "coverage error: " << e.what() << "\n";
        return kExitCoverage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
