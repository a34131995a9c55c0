#include <algorithm>
#include <numeric>

#include "common/binary_io.hpp"
#include "nnd/data.hpp"
#include "nnd/error.hpp"
#include "nnd/hash.hpp"
#include "nnd/rng.hpp"

namespace nnd {

namespace {

std::string fingerprint_of(const Shape& element_shape, std::int64_t count, std::span<const float> values) {
  Sha256 h;
  h.update("NNDS-fingerprint");
  h.update_u64(element_shape.size());
  for (auto d : element_shape) h.update_u64(static_cast<std::uint64_t>(d));
  h.update_u64(static_cast<std::uint64_t>(count));
  h.update_floats(values);
  return h.hex_digest();
}

constexpr std::uint64_t kSubsetStream = 0x5B5E7;

}  // namespace

SampleSet::SampleSet(Shape element_shape, std::vector<float> values, std::string provenance) {
  auto impl = std::make_shared<Impl>();
  impl->element_numel = shape_numel(element_shape);
  if (impl->element_numel == 0) {
    throw DataError("sample elements must be non-empty, got shape " + shape_string(element_shape));
  }
  if (values.empty()) throw DataError("a sample set needs at least one element");
  if (values.size() % static_cast<std::size_t>(impl->element_numel) != 0) {
    throw DataError(std::to_string(values.size()) + " values do not divide into elements of shape " +
                    shape_string(element_shape));
  }
  impl->count = static_cast<std::int64_t>(values.size()) / impl->element_numel;
  impl->element_shape = std::move(element_shape);
  impl->values = std::move(values);
  impl->provenance = std::move(provenance);
  impl->fingerprint = fingerprint_of(impl->element_shape, impl->count, impl->values);
  impl_ = std::move(impl);
}

std::span<const float> SampleSet::element(std::int64_t i) const {
  if (i < 0 || i >= size()) throw UsageError("sample index " + std::to_string(i) + " out of range");
  return std::span<const float>(impl_->values)
      .subspan(static_cast<std::size_t>(i * impl_->element_numel), static_cast<std::size_t>(impl_->element_numel));
}

Shape SampleSet::batch_shape(std::int64_t n) const {
  Shape s{n};
  s.insert(s.end(), impl_->element_shape.begin(), impl_->element_shape.end());
  return s;
}

Tensor SampleSet::gather(std::span<const std::int64_t> indices) const {
  std::vector<float> out(indices.size() * static_cast<std::size_t>(impl_->element_numel));
  auto dst = out.begin();
  for (auto i : indices) {
    auto e = element(i);
    dst = std::copy(e.begin(), e.end(), dst);
  }
  return Tensor(batch_shape(static_cast<std::int64_t>(indices.size())), std::move(out));
}

Tensor SampleSet::slice(std::int64_t start, std::int64_t count) const {
  if (start < 0 || count < 0 || start + count > size()) {
    throw UsageError("slice [" + std::to_string(start) + ", " + std::to_string(start + count) + ") out of range");
  }
  auto first = impl_->values.begin() + start * impl_->element_numel;
  std::vector<float> out(first, first + count * impl_->element_numel);
  return Tensor(batch_shape(count), std::move(out));
}

SampleSet SampleSet::with_provenance(std::string provenance) const {
  SampleSet copy = *this;
  auto impl = std::make_shared<Impl>(*impl_);
  impl->provenance = std::move(provenance);
  copy.impl_ = std::move(impl);
  return copy;
}

SampleSet concat(std::span<const SampleSet> parts, std::string provenance) {
  if (parts.empty()) throw DataError("concat of zero sample sets");
  std::vector<float> values;
  for (const auto& p : parts) {
    if (p.element_shape() != parts[0].element_shape()) {
      throw ShapeError("concat: element shapes " + shape_string(p.element_shape()) + " and " +
                       shape_string(parts[0].element_shape()) + " differ");
    }
    values.insert(values.end(), p.values().begin(), p.values().end());
  }
  return SampleSet(parts[0].element_shape(), std::move(values), std::move(provenance));
}

SampleSet subset(const SampleSet& set, std::int64_t n, std::uint64_t seed) {
  if (n < 1 || n > set.size()) {
    throw ConfigError("subset size " + std::to_string(n) + " outside [1, " + std::to_string(set.size()) + "]");
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(set.size()));
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, kSubsetStream);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(set.size() - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  order.resize(static_cast<std::size_t>(n));
  auto t = set.gather(order);
  auto v = t.values();
  return SampleSet(set.element_shape(), {v.begin(), v.end()},
                   "subset(n=" + std::to_string(n) + ", seed=" + std::to_string(seed) + ") of " + set.provenance());
}

// ---------------------------------------------------------------------------
// NNDS

void write_nnds(const std::filesystem::path& path, const Shape& full_shape, std::span<const float> values) {
  if (full_shape.empty() || full_shape[0] < 1) {
    throw DataError("refusing to save an empty sample set to " + path.string());
  }
  if (static_cast<std::size_t>(shape_numel(full_shape)) != values.size()) {
    throw ShapeError("NNDS shape " + shape_string(full_shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  io::ByteWriter w;
  w.bytes("NNDS");
  w.u32_le(kNndsVersion);
  w.u32_le(static_cast<std::uint32_t>(full_shape.size()));
  for (auto d : full_shape) w.u32_le(static_cast<std::uint32_t>(d));
  w.floats_le(values);
  w.save(path);
}

void save_nnds(const std::filesystem::path& path, const SampleSet& set) {
  write_nnds(path, set.batch_shape(set.size()), set.values());
}

SampleSet load_nnds(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  if (r.fixed_string(4, "magic") != "NNDS") r.fail("bad magic, expected \"NNDS\"", 0);
  const auto version_at = r.offset();
  const auto version = r.u32_le("version");
  if (version != kNndsVersion) r.fail("unsupported NNDS version " + std::to_string(version), version_at);
  const auto rank_at = r.offset();
  const auto rank = r.u32_le("rank");
  if (rank < 1 || rank > 16) r.fail("invalid rank " + std::to_string(rank), rank_at);
  Shape full(rank);
  for (auto& d : full) d = r.u32_le("dimension");
  if (full[0] < 1) r.fail("sample count must be at least 1", r.offset() - 4U * rank);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(full)));
  r.floats_le(values, "payload");
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after payload", r.offset());
  Shape element(full.begin() + 1, full.end());
  return SampleSet(std::move(element), std::move(values), "nnds:" + path.string());
}

// ---------------------------------------------------------------------------
// IDX

IdxData load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  io::ByteReader r(io::read_file(images), images.string());
  const auto magic = r.u32_be("magic");
  if (magic != 0x00000803U) r.fail("expected IDX u8 rank-3 magic 0x00000803", 0);
  const auto n = r.u32_be("image count");
  const auto rows = r.u32_be("rows");
  const auto cols = r.u32_be("cols");
  if (n == 0 || rows == 0 || cols == 0) r.fail("IDX image dimensions must be positive", 4);
  const std::uint64_t total = std::uint64_t{n} * rows * cols;
  auto pixels = r.raw(total, "pixel payload");
  std::vector<float> values(pixels.size());
  std::transform(pixels.begin(), pixels.end(), values.begin(),
                 [](unsigned char b) { return static_cast<float>(b) / 127.5F - 1.0F; });
  IdxData out{SampleSet({rows, cols, 1}, std::move(values), "idx:" + images.string()), std::nullopt};
  if (labels) {
    io::ByteReader lr(io::read_file(*labels), labels->string());
    if (lr.u32_be("magic") != 0x00000801U) lr.fail("expected IDX u8 rank-1 magic 0x00000801", 0);
    const auto count = lr.u32_be("label count");
    if (count != n) {
      throw DataError("label count " + std::to_string(count) + " does not match image count " + std::to_string(n));
    }
    auto raw = lr.raw(count, "labels");
    out.labels = std::vector<std::uint8_t>(raw.begin(), raw.end());
  }
  return out;
}

}  // namespace nnd
