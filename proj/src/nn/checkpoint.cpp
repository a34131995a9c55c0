#include "common/binary_io.hpp"
#include "nnd/error.hpp"
#include "nnd/nn.hpp"

namespace nnd {

void save_nndw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  io::ByteWriter w;
  w.bytes("NNDW");
  w.u32_le(kNndwVersion);
  w.u32_le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.u32_le(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32_le(static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.u32_le(static_cast<std::uint32_t>(d));
    w.floats_le(t.value.values());
  }
  w.save(path);
}

std::vector<NamedTensor> load_nndw(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  if (r.fixed_string(4, "magic") != "NNDW") r.fail("bad magic, expected \"NNDW\"", 0);
  const auto version = r.u32_le("version");
  if (version != kNndwVersion) r.fail("unsupported NNDW version " + std::to_string(version), 4);
  const auto count = r.u32_le("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32_le("name length");
    auto name = r.fixed_string(len, "tensor name");
    const auto rank_at = r.offset();
    const auto rank = r.u32_le("rank");
    if (rank > 16) r.fail("invalid rank " + std::to_string(rank) + " for " + name, rank_at);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32_le("dimension");
    std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
    r.floats_le(values, "payload of " + name);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes", r.offset());
  return out;
}

}  // namespace nnd
