#include "iat/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace iat {

namespace {

constexpr char kMagic[8] = {'I', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr char kBankTag[5] = {'U', 'B', 'A', 'N', 'K'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float f) {
  const std::uint32_t v = std::bit_cast<std::uint32_t>(f);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put_u64(os, t.rank());
  for (std::size_t d : t.shape()) put_u64(os, d);
  for (std::size_t i = 0; i < t.numel(); ++i) put_f32(os, t[i]);
}

struct Reader {
  std::ifstream in;
  std::string path;

  void read(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw IoError(IoError::Kind::kTruncated, path + ": truncated checkpoint");
    }
  }

  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  float f32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return std::bit_cast<float>(v);
  }

  Tensor tensor() {
    const std::uint64_t rank = u64();
    if (rank > 8) {
      throw IoError(IoError::Kind::kShapeMismatch, path + ": implausible tensor rank");
    }
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(u64());
    const std::size_t n = shape_numel(shape);
    if (n > (1u << 28)) {
      throw IoError(IoError::Kind::kShapeMismatch, path + ": implausible tensor size");
    }
    std::vector<float> data(n);
    for (auto& v : data) v = f32();
    try {
      return Tensor::from_data(std::move(shape), std::move(data));
    } catch (const ValueError& e) {
      throw IoError(IoError::Kind::kShapeMismatch, path + ": " + e.what());
    }
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const NetworkState& state,
                     const UniversalBank* bank) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::string desc =
      state.spec.descriptor() + ";seed=" + std::to_string(state.init_seed);
  put_u64(out, desc.size());
  out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  for (const Tensor& p : state.params) put_tensor(out, p);
  if (bank) {
    out.write(kBankTag, sizeof(kBankTag));
    put_u64(out, bank->classes());
    put_u64(out, bank->init_seed());
    put_f32(out, bank->epsilon());
    for (std::size_t c = 0; c < bank->classes(); ++c) put_tensor(out, bank->z(c));
  }
  out.flush();
  if (!out) throw IoError(IoError::Kind::kUnreadable, path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r;
  r.path = path;
  r.in.open(path, std::ios::binary);
  if (!r.in) throw IoError(IoError::Kind::kUnreadable, path + ": cannot open");

  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(IoError::Kind::kBadMagic, path + ": not a checkpoint file");
  }

  const std::uint64_t desc_len = r.u64();
  if (desc_len > 65536) {
    throw IoError(IoError::Kind::kBadDescriptor, path + ": implausible descriptor");
  }
  std::string desc(desc_len, '\0');
  r.read(desc.data(), desc_len);

  Checkpoint ck;
  std::uint64_t seed = 0;
  ck.state.spec = NetworkSpec::parse_descriptor(desc, &seed);
  ck.state.init_seed = seed;

  const auto shapes = ck.state.spec.param_shapes();
  ck.state.params.reserve(shapes.size());
  for (const auto& expect : shapes) {
    Tensor t = r.tensor();
    if (t.shape() != expect) {
      throw IoError(IoError::Kind::kShapeMismatch,
                    path + ": parameter shape " + t.shape_str() +
                        " does not match the embedded spec");
    }
    ck.state.params.push_back(std::move(t));
  }

  // Optional bank section.
  char tag[5];
  r.in.read(tag, sizeof(tag));
  const std::size_t got = static_cast<std::size_t>(r.in.gcount());
  if (got == 0 && r.in.eof()) return ck;
  if (got != sizeof(tag) || std::memcmp(tag, kBankTag, sizeof(kBankTag)) != 0) {
    throw IoError(IoError::Kind::kTruncated, path + ": trailing bytes after parameters");
  }
  const std::uint64_t classes = r.u64();
  if (classes != ck.state.spec.classes) {
    throw IoError(IoError::Kind::kShapeMismatch,
                  path + ": bank classes do not match the network");
  }
  const std::uint64_t bank_seed = r.u64();
  const float eps = r.f32();
  std::vector<Tensor> zs;
  zs.reserve(classes);
  for (std::uint64_t c = 0; c < classes; ++c) {
    Tensor z = r.tensor();
    if (z.shape() != ck.state.spec.input_shape) {
      throw IoError(IoError::Kind::kShapeMismatch,
                    path + ": bank shape " + z.shape_str() + " does not match input");
    }
    zs.push_back(std::move(z));
  }
  try {
    ck.bank.emplace(std::move(zs), eps, bank_seed);
  } catch (const ValueError& e) {
    throw IoError(IoError::Kind::kShapeMismatch, path + ": " + e.what());
  }
  return ck;
}

}  // namespace iat
