#include "kdmos/nnet/checkpoint.hpp"

#include <cmath>
#include <string>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"

namespace kdmos::nn {

std::vector<std::byte> encode_checkpoint(const Network& net) {
  io::ByteWriter out;
  out.bytes("KDCK");
  out.u32(kCheckpointVersion);
  const std::string desc = net.arch().to_string();
  out.u32(static_cast<std::uint32_t>(desc.size()));
  out.bytes(desc);
  const auto params = net.params();
  out.u32(static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    out.u32(static_cast<std::uint32_t>(p->name.size()));
    out.bytes(p->name);
    out.u32(static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) out.u32(static_cast<std::uint32_t>(d));
    for (double v : p->value) out.f32(static_cast<float>(v));
  }
  return out.take();
}

Network decode_checkpoint(std::span<const std::byte> bytes) {
  io::ByteReader in(bytes);
  if (in.str(4) != "KDCK") throw FormatError("bad checkpoint magic");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto desc_len = in.u32();
  if (desc_len > in.remaining()) throw FormatError("descriptor length exceeds file");
  const std::string desc = in.str(desc_len);
  ArchSpec arch;
  try {
    arch = ArchSpec::parse(desc);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad architecture descriptor: ") + e.what());
  }
  Network net(arch);
  auto params = net.params();
  const auto count = in.u32();
  if (count != params.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " parameters, architecture needs " +
                      std::to_string(params.size()));
  }
  for (Param* p : params) {
    const auto name_len = in.u32();
    if (name_len > in.remaining()) throw FormatError("parameter name length exceeds file");
    const std::string name = in.str(name_len);
    if (name != p->name) throw FormatError("expected parameter " + p->name + ", found " + name);
    const auto rank = in.u32();
    if (rank != p->shape.size()) throw FormatError("rank mismatch for " + name);
    for (int d : p->shape) {
      if (in.u32() != static_cast<std::uint32_t>(d)) throw FormatError("shape mismatch for " + name);
    }
    for (double& v : p->value) {
      const float f = in.f32();
      if (!std::isfinite(f)) throw FormatError("non-finite value in " + name);
      v = f;
    }
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  io::write_file(path, encode_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace kdmos::nn
