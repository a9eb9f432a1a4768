#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "flowforge/flow_model.hpp"

namespace flowforge::cache {

using model::CondEmbedding;
using model::Condition;
using model::ModelParams;

inline constexpr std::uint16_t kCacheVersion = 1;

struct CacheIndex {
  std::uint16_t version = kCacheVersion;
  std::uint32_t embed_dim = 0;
  std::vector<std::uint32_t> cond_ids;  // sorted
  std::uint64_t checksum = 0;

  bool covers(const std::vector<Condition>& conditions) const;
};

std::filesystem::path entry_path(const std::filesystem::path& cache_dir, Condition cond);
std::filesystem::path index_path(const std::filesystem::path& cache_dir);

// Encodes every condition and writes one entry file each, then the index.
// The index is written last and marks the cache complete.
CacheIndex preprocess(const ModelParams& params, const std::vector<Condition>& conditions,
                      const std::filesystem::path& cache_dir);

// Throws MissingEntryError when the index is absent (incomplete cache).
CacheIndex read_index(const std::filesystem::path& cache_dir);

// Throws MissingEntryError for unknown ids, ChecksumError on corruption.
CondEmbedding load_cached(const std::filesystem::path& cache_dir, Condition cond);

// Releases the encoder table after verifying that the cache covers every
// condition the model knows about.
void offload_encoder(ModelParams& params, const std::filesystem::path& cache_dir);

// All cached embeddings for `conditions`, read once.
std::map<std::uint32_t, CondEmbedding> load_all(const std::filesystem::path& cache_dir,
                                               const std::vector<Condition>& conditions);

}  // namespace flowforge::cache
