#ifndef TRDQ_SERIALIZATION_HPP
#define TRDQ_SERIALIZATION_HPP

#include <string>
#include <vector>

#include "trdq/attention_share.hpp"
#include "trdq/time_bank.hpp"

namespace trdq {

// Trace container: magic "TRDQ", version u32, record count u32, then
// records of {layer_id u32, timestep u32, branch u8, rows u32, cols u32,
// row-major little-endian f64 payload}. Branch 0 marks a linear-layer
// activation trace (layer_id is the layer); branches 1/2 are the
// conditional/unconditional attention values (layer_id is the block).
inline constexpr uint32_t kTraceFormatVersion = 1;
inline constexpr uint32_t kBankFormatVersion = 1;

void write_trace_file(const std::string& path,
                      const std::vector<TimestepTrace>& traces,
                      const std::vector<AttentionRecord>& attn_records);

void read_trace_file(const std::string& path,
                     std::vector<TimestepTrace>& traces,
                     std::vector<AttentionRecord>& attn_records);

void write_bank_file(const std::string& path, const TimeParamBank& bank);
TimeParamBank read_bank_file(const std::string& path);

// "block,timestep,cosine" rows, blocks then timesteps ascending.
void write_similarity_csv(const std::string& path, const SimilarityMatrix& sim);

// Temp-file + rename, so partially written artifacts are never observed.
void atomic_write(const std::string& path, const std::string& bytes);

}  // namespace trdq

#endif
