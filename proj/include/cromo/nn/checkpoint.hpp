#pragma once

#include "cromo/nn/trinet.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cromo::nn {

// Versioned binary container: named double arrays plus string metadata and
// the hash of the producing configuration.
//
//   "CROMOCKP" | u32 version | str config_hash
//   | u32 n_meta  { str key, str value }
//   | u32 n_tensor { str name, u64 rows, u64 cols, f64[rows*cols] row-major }
//
// Integers and doubles are little-endian; str is u32 length + bytes.
struct Container {
    static constexpr std::uint32_t kVersion = 1;
    std::uint32_t version = kVersion;
    std::string config_hash;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Mat>> tensors;

    [[nodiscard]] const Mat& tensor(const std::string& name) const;
    [[nodiscard]] bool has_tensor(const std::string& name) const;
};

// Writes atomically (temporary file + rename).
void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

// Adds every parameter and running statistic of `net` under `prefix`.
void append_network(Container& c, TriNet& net, const std::string& prefix = "");
// Loads tensors into `net`; names and shapes must match exactly.
void load_network(const Container& c, TriNet& net, const std::string& prefix = "");
void append_tensors(Container& c, const std::vector<Parameter*>& params, const std::vector<StateTensor>& state,
                    const std::string& prefix);
void load_tensors(const Container& c, const std::vector<Parameter*>& params, const std::vector<StateTensor>& state,
                  const std::string& prefix);

// Embedding dump:
//   "CROMOEMB" | u64 N | u64 D | u8 dtype (1 = float32)
//   | f32[N*D] row-major | i32[N] labels | i32[N] task ids
void write_embedding_dump(const std::filesystem::path& path, const Mat& features, const std::vector<int>& labels,
                          const std::vector<int>& task_ids);
struct EmbeddingDump {
    Mat features;
    std::vector<int> labels, task_ids;
};
EmbeddingDump read_embedding_dump(const std::filesystem::path& path);

}  // namespace cromo::nn
