#include "bvllm/bvtk.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bvllm/error.hpp"

namespace bvllm::bvtk {

namespace {

constexpr std::uint8_t kMagic[5] = {0x42, 0x56, 0x54, 0x4B, 0x31};
constexpr std::size_t kMaxRank = 8;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& tensor, DType dtype) {
  const std::size_t elem = dtype == DType::f32 ? 4 : 8;
  if (tensor.rank() == 0 || tensor.rank() > kMaxRank) {
    throw FormatError("cannot encode a tensor of rank " + std::to_string(tensor.rank()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(7 + 8 * tensor.rank() + elem * tensor.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_le(out, static_cast<std::uint64_t>(d));
  for (double v : tensor.data()) {
    if (dtype == DType::f32) {
      put_le(out, static_cast<float>(v));
    } else {
      put_le(out, v);
    }
  }
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 7 || std::memcmp(bytes.data(), kMagic, 5) != 0) {
    throw FormatError(source + ": not a BVTK1 file (bad magic)");
  }
  const std::uint8_t dtype = bytes[5];
  if (dtype > 1) throw FormatError(source + ": unknown dtype code " + std::to_string(dtype));
  const std::size_t ndim = bytes[6];
  if (ndim == 0 || ndim > kMaxRank) {
    throw FormatError(source + ": unsupported rank " + std::to_string(ndim));
  }
  const std::size_t header = 7 + 8 * ndim;
  if (bytes.size() < header) throw FormatError(source + ": truncated header");
  Shape shape(ndim);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint64_t dim = get_le<std::uint64_t>(bytes.data() + 7 + 8 * i);
    if (dim != 0 && count > (std::uint64_t{1} << 40) / dim) {
      throw FormatError(source + ": dims too large");
    }
    count *= dim;
    shape[i] = static_cast<std::size_t>(dim);
  }
  const std::size_t elem = dtype == 0 ? 4 : 8;
  const std::uint64_t expected = header + count * elem;
  if (bytes.size() != expected) {
    throw FormatError(source + ": payload length " + std::to_string(bytes.size() - header) +
                      " does not match dims " + shape_string(shape) + " (expected " +
                      std::to_string(count * elem) + " bytes)");
  }
  std::vector<double> data(count);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i, p += elem) {
    const double v = dtype == 0 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)))
                                : std::bit_cast<double>(get_le<std::uint64_t>(p));
    if (!std::isfinite(v)) {
      throw FormatError(source + ": non-finite value at element " + std::to_string(i));
    }
    data[i] = v;
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return decode(bytes, path.string());
}

void save(const std::filesystem::path& path, const Tensor& tensor, DType dtype) {
  const auto bytes = encode(tensor, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace bvllm::bvtk
