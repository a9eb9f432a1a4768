#include "flowforge/cache.hpp"

#include <algorithm>
#include <string>

#include "flowforge/binary_io.hpp"
#include "flowforge/errors.hpp"

namespace flowforge::cache {

namespace {

void append_checksum(io::ByteWriter& w) { w.u64(io::fnv1a64(w.bytes())); }

// Verifies the trailing FNV-1a checksum over all preceding bytes.
void verify_checksum(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  if (bytes.size() < 8) throw FormatError(context + ": truncated");
  const std::span<const std::uint8_t> payload(bytes.data(), bytes.size() - 8);
  io::ByteReader tail(std::span<const std::uint8_t>(bytes).subspan(bytes.size() - 8), context);
  if (tail.u64() != io::fnv1a64(payload)) throw ChecksumError(context + ": checksum mismatch");
}

}  // namespace

bool CacheIndex::covers(const std::vector<Condition>& conditions) const {
  return std::all_of(conditions.begin(), conditions.end(), [&](Condition c) {
    return std::binary_search(cond_ids.begin(), cond_ids.end(), c.id);
  });
}

std::filesystem::path entry_path(const std::filesystem::path& cache_dir, Condition cond) {
  return cache_dir / ("cond_" + std::to_string(cond.id) + ".ffe");
}

std::filesystem::path index_path(const std::filesystem::path& cache_dir) {
  return cache_dir / "index.ffi";
}

CacheIndex preprocess(const ModelParams& params, const std::vector<Condition>& conditions,
                      const std::filesystem::path& cache_dir) {
  CacheIndex index;
  index.embed_dim = static_cast<std::uint32_t>(params.embed_dim());
  for (Condition cond : conditions) {
    const CondEmbedding emb = model::encode_condition(params, cond);
    io::ByteWriter w;
    w.magic("FFE1");
    w.u16(kCacheVersion);
    w.u32(cond.id);
    w.u32(index.embed_dim);
    w.f64s(emb.values.span());
    append_checksum(w);
    io::write_file(entry_path(cache_dir, cond), w.bytes());
    index.cond_ids.push_back(cond.id);
  }
  std::sort(index.cond_ids.begin(), index.cond_ids.end());
  index.cond_ids.erase(std::unique(index.cond_ids.begin(), index.cond_ids.end()),
                       index.cond_ids.end());

  io::ByteWriter w;
  w.magic("FFI1");
  w.u16(kCacheVersion);
  w.u32(index.embed_dim);
  w.u32(static_cast<std::uint32_t>(index.cond_ids.size()));
  for (std::uint32_t id : index.cond_ids) w.u32(id);
  index.checksum = io::fnv1a64(w.bytes());
  w.u64(index.checksum);
  io::write_file(index_path(cache_dir), w.bytes());
  return index;
}

CacheIndex read_index(const std::filesystem::path& cache_dir) {
  const auto path = index_path(cache_dir);
  if (!std::filesystem::exists(path)) {
    throw MissingEntryError("cache at " + cache_dir.string() + " is incomplete: no index");
  }
  const auto bytes = io::read_file(path);
  const std::string ctx = "cache index " + path.string();
  verify_checksum(bytes, ctx);
  io::ByteReader r(bytes, ctx);
  r.expect_magic("FFI1");
  CacheIndex index;
  index.version = r.u16();
  if (index.version != kCacheVersion) throw VersionError(ctx + ": unsupported version");
  index.embed_dim = r.u32();
  const std::uint32_t count = r.u32();
  if (static_cast<std::size_t>(count) * 4 + 8 != r.remaining()) {
    throw FormatError(ctx + ": entry count does not match file size");
  }
  for (std::uint32_t i = 0; i < count; ++i) index.cond_ids.push_back(r.u32());
  if (!std::is_sorted(index.cond_ids.begin(), index.cond_ids.end())) {
    throw FormatError(ctx + ": cond ids not sorted");
  }
  index.checksum = r.u64();
  return index;
}

CondEmbedding load_cached(const std::filesystem::path& cache_dir, Condition cond) {
  const auto path = entry_path(cache_dir, cond);
  if (!std::filesystem::exists(path)) {
    throw MissingEntryError("no cached embedding for condition " + std::to_string(cond.id));
  }
  const auto bytes = io::read_file(path);
  const std::string ctx = "cache entry " + path.string();
  verify_checksum(bytes, ctx);
  io::ByteReader r(std::span<const std::uint8_t>(bytes).first(bytes.size() - 8), ctx);
  r.expect_magic("FFE1");
  if (r.u16() != kCacheVersion) throw VersionError(ctx + ": unsupported version");
  if (r.u32() != cond.id) throw FormatError(ctx + ": condition id mismatch");
  const std::uint32_t dim = r.u32();
  CondEmbedding emb{numkit::Vec64(r.f64s(dim))};
  r.expect_end();
  return emb;
}

void offload_encoder(ModelParams& params, const std::filesystem::path& cache_dir) {
  CacheIndex index;
  try {
    index = read_index(cache_dir);
  } catch (const MissingEntryError& e) {
    throw MissingEntryError(std::string("refusing to offload encoder: ") + e.what());
  }
  if (index.embed_dim != params.embed_dim()) {
    throw FormatError("refusing to offload encoder: cache embedding size differs from model");
  }
  std::vector<Condition> all;
  for (std::uint32_t c = 0; c < params.num_conditions(); ++c) all.push_back(Condition{c});
  if (!index.covers(all)) {
    throw MissingEntryError("refusing to offload encoder: cache does not cover every condition");
  }
  params.release_encoder();
}

std::map<std::uint32_t, CondEmbedding> load_all(const std::filesystem::path& cache_dir,
                                               const std::vector<Condition>& conditions) {
  const CacheIndex index = read_index(cache_dir);
  if (!index.covers(conditions)) {
    throw MissingEntryError("cache at " + cache_dir.string() + " does not cover the run");
  }
  std::map<std::uint32_t, CondEmbedding> out;
  for (Condition c : conditions) out.emplace(c.id, load_cached(cache_dir, c));
  return out;
}

}  // namespace flowforge::cache
