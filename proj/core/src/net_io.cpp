#include <array>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "hloc/error.hpp"
#include "hloc/net.hpp"

// .stnet layout (all little-endian):
//   8 bytes   magic "HLSTNET\0"
//   u32       format version
//   i32 x 7   seq_len, in_dim, d_model, n_heads, d_ff, n_encoder_layers, embed_dim
//   u64       seed
//   u32       tensor count (learnable tensors + running mean + running variance)
//   per tensor, in for_each_tensor order then running_mean, running_var:
//     u32 rows, u32 cols, rows*cols f64 row-major

namespace hloc::net {
namespace {

constexpr std::array<char, 8> kMagic = {'H', 'L', 'S', 'T', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_tensor(std::ostream& out, const T& t) {
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) binio::write_le<double>(out, t(r, c));
  }
}

template <class T>
void read_tensor(std::istream& in, const std::string& name, T& t) {
  const auto rows = binio::read_le<std::uint32_t>(in, "tensor shape");
  const auto cols = binio::read_le<std::uint32_t>(in, "tensor shape");
  if (rows != t.rows() || cols != t.cols()) {
    throw InvariantError("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", config implies " +
                         std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
  }
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = binio::read_le<double>(in, name.c_str());
  }
}

std::string describe(const NetConfig& c) {
  return "seq_len=" + std::to_string(c.seq_len) + " in_dim=" + std::to_string(c.in_dim) +
         " d_model=" + std::to_string(c.d_model) + " n_heads=" + std::to_string(c.n_heads) +
         " d_ff=" + std::to_string(c.d_ff) +
         " layers=" + std::to_string(c.n_encoder_layers) +
         " embed_dim=" + std::to_string(c.embed_dim);
}

bool same_shape(const NetConfig& a, const NetConfig& b) {
  return a.seq_len == b.seq_len && a.in_dim == b.in_dim && a.d_model == b.d_model &&
         a.n_heads == b.n_heads && a.d_ff == b.d_ff &&
         a.n_encoder_layers == b.n_encoder_layers && a.embed_dim == b.embed_dim;
}

}  // namespace

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const NetConfig& c = params.config;
  out.write(kMagic.data(), kMagic.size());
  binio::write_le<std::uint32_t>(out, kVersion);
  for (int v : {c.seq_len, c.in_dim, c.d_model, c.n_heads, c.d_ff, c.n_encoder_layers,
                c.embed_dim}) {
    binio::write_le<std::int32_t>(out, v);
  }
  binio::write_le<std::uint64_t>(out, c.seed);

  std::uint32_t count = 2;
  for_each_tensor(params, [&](const std::string&, const auto&, TensorRole) { ++count; });
  binio::write_le<std::uint32_t>(out, count);
  for_each_tensor(params, [&](const std::string&, const auto& t, TensorRole) {
    write_tensor(out, t);
  });
  write_tensor(out, params.running_mean);
  write_tensor(out, params.running_var);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

NetworkParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open parameter file " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw ParseError(path.string() + " is not a .stnet parameter file");
  }
  const auto version = binio::read_le<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw ParseError("unsupported .stnet version " + std::to_string(version));
  }
  NetConfig c;
  c.seq_len = binio::read_le<std::int32_t>(in, "config");
  c.in_dim = binio::read_le<std::int32_t>(in, "config");
  c.d_model = binio::read_le<std::int32_t>(in, "config");
  c.n_heads = binio::read_le<std::int32_t>(in, "config");
  c.d_ff = binio::read_le<std::int32_t>(in, "config");
  c.n_encoder_layers = binio::read_le<std::int32_t>(in, "config");
  c.embed_dim = binio::read_le<std::int32_t>(in, "config");
  c.seed = binio::read_le<std::uint64_t>(in, "config");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  NetworkParams p = init_params(c);
  std::uint32_t expected = 2;
  for_each_tensor(p, [&](const std::string&, const auto&, TensorRole) { ++expected; });
  const auto count = binio::read_le<std::uint32_t>(in, "tensor count");
  if (count != expected) {
    throw InvariantError("tensor count " + std::to_string(count) + " does not match config (" +
                         std::to_string(expected) + ")");
  }
  for_each_tensor(p, [&](const std::string& name, auto& t, TensorRole) {
    read_tensor(in, name, t);
  });
  read_tensor(in, "running_mean", p.running_mean);
  read_tensor(in, "running_var", p.running_var);
  if (!(p.running_var.array() > 0.0).all()) {
    throw InvariantError("running variance must be strictly positive");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(path.string() + ": trailing bytes after last tensor");
  }
  return p;
}

NetworkParams load_params(const std::filesystem::path& path, const NetConfig& expected) {
  NetworkParams p = load_params(path);
  if (!same_shape(p.config, expected)) {
    throw ConfigError("config mismatch: file has {" + describe(p.config) +
                      "}, expected {" + describe(expected) + "}");
  }
  return p;
}

}  // namespace hloc::net
