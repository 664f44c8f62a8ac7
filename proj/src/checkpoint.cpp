#include <array>
#include <fstream>

#include "binary_io.hpp"
#include "dpot/errors.hpp"
#include "dpot/nn.hpp"

namespace dpot {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'P', 'O', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
// arch, d_in, d_out, width, depth, block_layers (u32/i32), two slopes (f64),
// parameter count (u64).
constexpr std::uint32_t kHeaderBytes = 6 * 4 + 2 * 8 + 8;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MapNetwork& net) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  using detail::write_le;
  const NetworkSpec& s = net.spec();
  os.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, kHeaderBytes);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.arch));
  write_le<std::int32_t>(os, s.d_in);
  write_le<std::int32_t>(os, s.d_out);
  write_le<std::int32_t>(os, s.width);
  write_le<std::int32_t>(os, s.depth);
  write_le<std::int32_t>(os, s.block_layers);
  write_le<double>(os, s.relu_slope);
  write_le<double>(os, s.prelu_slope);
  write_le<std::uint64_t>(os, net.size());
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) write_le<double>(os, net.parameters()[i]);
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

MapNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  using detail::read_le;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw IoError("not a checkpoint file: " + path.string());
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  if (read_le<std::uint32_t>(is) != kHeaderBytes) throw IoError("corrupt checkpoint header");

  NetworkSpec s;
  const auto arch = read_le<std::uint32_t>(is);
  if (arch > static_cast<std::uint32_t>(Architecture::resnet)) throw IoError("unknown architecture tag");
  s.arch = static_cast<Architecture>(arch);
  s.d_in = read_le<std::int32_t>(is);
  s.d_out = read_le<std::int32_t>(is);
  s.width = read_le<std::int32_t>(is);
  s.depth = read_le<std::int32_t>(is);
  s.block_layers = read_le<std::int32_t>(is);
  s.relu_slope = read_le<double>(is);
  s.prelu_slope = read_le<double>(is);
  const auto count = read_le<std::uint64_t>(is);

  MapNetwork net(s);
  if (count != net.size()) throw IoError("checkpoint parameter count does not match architecture");
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()[i] = read_le<double>(is);
  return net;
}

}  // namespace dpot
