#include "trdq/serialization.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace trdq {

namespace {

constexpr char kTraceMagic[4] = {'T', 'R', 'D', 'Q'};
constexpr char kBankMagic[4] = {'T', 'R', 'D', 'B'};

class Writer {
  public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) { raw(&v, sizeof(v)); }
    void u64(uint64_t v) { raw(&v, sizeof(v)); }
    void f64(double v) { raw(&v, sizeof(v)); }
    void magic(const char m[4]) { buf_.append(m, 4); }
    void matrix(const Matrix& m) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
    const std::string& bytes() const { return buf_; }

  private:
    void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

class Reader {
  public:
    Reader(std::string bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint32_t u32() {
        uint32_t v;
        std::memcpy(&v, take(sizeof(v)), sizeof(v));
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        std::memcpy(&v, take(sizeof(v)), sizeof(v));
        return v;
    }
    double f64() {
        double v;
        std::memcpy(&v, take(sizeof(v)), sizeof(v));
        return v;
    }
    void expect_magic(const char m[4]) {
        const char* p = take(4);
        if (std::memcmp(p, m, 4) != 0)
            throw FormatError(what_ + ": bad magic");
    }
    Matrix matrix(Index rows, Index cols) {
        Matrix out(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) out(i, j) = f64();
        return out;
    }
    void expect_end() {
        if (pos_ != buf_.size())
            throw FormatError(what_ + ": trailing bytes");
    }

  private:
    const char* take(size_t n) {
        if (pos_ + n > buf_.size())
            throw FormatError(what_ + ": truncated payload");
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::string buf_;
    std::string what_;
    size_t pos_ = 0;
};

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

}  // namespace

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("rename failed for " + path);
}

void write_trace_file(const std::string& path,
                      const std::vector<TimestepTrace>& traces,
                      const std::vector<AttentionRecord>& attn_records) {
    Writer w;
    w.magic(kTraceMagic);
    w.u32(kTraceFormatVersion);
    w.u32(static_cast<uint32_t>(traces.size() + attn_records.size()));
    for (const auto& tr : traces) {
        w.u32(tr.layer_id);
        w.u32(static_cast<uint32_t>(tr.timestep));
        w.u8(0);
        w.u32(static_cast<uint32_t>(tr.activations.rows()));
        w.u32(static_cast<uint32_t>(tr.activations.cols()));
        w.matrix(tr.activations);
    }
    for (const auto& ar : attn_records) {
        w.u32(static_cast<uint32_t>(ar.block_id));
        w.u32(static_cast<uint32_t>(ar.timestep));
        w.u8(static_cast<uint8_t>(ar.branch));
        w.u32(static_cast<uint32_t>(ar.attn.rows()));
        w.u32(static_cast<uint32_t>(ar.attn.cols()));
        w.matrix(ar.attn);
    }
    atomic_write(path, w.bytes());
}

void read_trace_file(const std::string& path,
                     std::vector<TimestepTrace>& traces,
                     std::vector<AttentionRecord>& attn_records) {
    Reader r(read_all(path), "trace file " + path);
    r.expect_magic(kTraceMagic);
    const uint32_t version = r.u32();
    if (version != kTraceFormatVersion)
        throw FormatError("trace file " + path + ": unsupported version " + std::to_string(version));
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t layer = r.u32();
        const uint32_t timestep = r.u32();
        const uint8_t branch = r.u8();
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        Matrix payload = r.matrix(static_cast<Index>(rows), static_cast<Index>(cols));
        if (branch == 0) {
            traces.push_back({layer, static_cast<int>(timestep), std::move(payload)});
        } else if (branch == 1 || branch == 2) {
            attn_records.push_back({static_cast<int>(layer), static_cast<int>(timestep),
                                    static_cast<Branch>(branch), std::move(payload)});
        } else {
            throw FormatError("trace file " + path + ": unknown branch tag " + std::to_string(branch));
        }
    }
    r.expect_end();
}

void write_bank_file(const std::string& path, const TimeParamBank& bank) {
    Writer w;
    w.magic(kBankMagic);
    w.u32(kBankFormatVersion);
    w.u32(static_cast<uint32_t>(bank.build_config.block_size));
    w.u32(bank.grouping.kind == Grouping::Kind::PerStep ? 0u : 1u);
    w.u32(static_cast<uint32_t>(bank.grouping.bucket_count));
    w.u32(static_cast<uint32_t>(bank.schedule_len));
    w.u64(bank.build_config.rng_seed);
    w.u32(static_cast<uint32_t>(bank.build_config.max_greedy_steps));
    w.f64(bank.build_config.stop_tol);
    w.f64(bank.alpha);
    w.u8(bank.toggles.smooth);
    w.u8(bank.toggles.r1);
    w.u8(bank.toggles.p);
    w.u8(bank.toggles.r2);
    w.u32(static_cast<uint32_t>(bank.entries.size()));
    for (const auto& [key, bp] : bank.entries) {
        const Index c = bp.channel_count();
        w.u32(key.first);
        w.u32(static_cast<uint32_t>(key.second));
        w.u32(static_cast<uint32_t>(c));
        for (Index j = 0; j < c; ++j) w.f64(bp.delta.delta(j));
        w.f64(bp.delta.alpha);
        w.u32(static_cast<uint32_t>(bp.r1.blocks.size()));
        for (const auto& blk : bp.r1.blocks) w.matrix(blk.matrix);
        for (Index j = 0; j < c; ++j) w.u32(static_cast<uint32_t>(bp.p.entries[static_cast<size_t>(j)]));
        w.u32(static_cast<uint32_t>(bp.r2.blocks.size()));
        for (const auto& blk : bp.r2.blocks) w.matrix(blk.matrix);
    }
    atomic_write(path, w.bytes());
}

TimeParamBank read_bank_file(const std::string& path) {
    Reader r(read_all(path), "bank file " + path);
    r.expect_magic(kBankMagic);
    const uint32_t version = r.u32();
    if (version != kBankFormatVersion)
        throw FormatError("bank file " + path + ": unsupported version " + std::to_string(version));

    TimeParamBank bank;
    bank.build_config.block_size = static_cast<Index>(r.u32());
    bank.grouping.kind = r.u32() == 0 ? Grouping::Kind::PerStep : Grouping::Kind::Buckets;
    bank.grouping.bucket_count = static_cast<int>(r.u32());
    bank.schedule_len = static_cast<int>(r.u32());
    bank.build_config.rng_seed = r.u64();
    bank.build_config.max_greedy_steps = static_cast<int>(r.u32());
    bank.build_config.stop_tol = r.f64();
    bank.alpha = r.f64();
    bank.toggles.smooth = r.u8() != 0;
    bank.toggles.r1 = r.u8() != 0;
    bank.toggles.p = r.u8() != 0;
    bank.toggles.r2 = r.u8() != 0;

    const uint32_t count = r.u32();
    const Index bs = bank.build_config.block_size;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t layer = r.u32();
        const int group = static_cast<int>(r.u32());
        const Index c = static_cast<Index>(r.u32());
        if (bs <= 0 || c % bs != 0)
            throw FormatError("bank file " + path + ": channel count not divisible by block size");

        BalancingParams bp;
        bp.delta.delta.resize(c);
        for (Index j = 0; j < c; ++j) bp.delta.delta(j) = r.f64();
        bp.delta.alpha = r.f64();

        auto read_rotation = [&](BlockRotation& rot) {
            const uint32_t nblocks = r.u32();
            if (static_cast<Index>(nblocks) * bs != c)
                throw FormatError("bank file " + path + ": inconsistent block count");
            rot.channel_count = c;
            for (uint32_t b = 0; b < nblocks; ++b)
                rot.blocks.push_back({r.matrix(bs, bs)});
        };
        read_rotation(bp.r1);
        bp.p.entries.resize(static_cast<size_t>(c));
        for (Index j = 0; j < c; ++j) bp.p.entries[static_cast<size_t>(j)] = static_cast<Index>(r.u32());
        if (!bp.p.is_valid())
            throw FormatError("bank file " + path + ": invalid permutation");
        read_rotation(bp.r2);
        bank.entries.emplace(std::make_pair(layer, group), std::move(bp));
    }
    r.expect_end();
    return bank;
}

void write_similarity_csv(const std::string& path, const SimilarityMatrix& sim) {
    std::ostringstream out;
    out << "block,timestep,cosine\n";
    out.precision(17);
    for (const auto& [key, v] : sim.values)
        out << key.first << "," << key.second << "," << v << "\n";
    atomic_write(path, std::move(out).str());
}

}  // namespace trdq
