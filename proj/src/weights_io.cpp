#include "ulk/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "ulk/error.hpp"

namespace ulk {
namespace {

static_assert(std::endian::native == std::endian::little, "ULKW I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, take(sizeof(T), what), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(FormatError::Kind::kTruncated,
                        std::string("truncated file: need ") + std::to_string(n) + " bytes for " + what + " at offset " +
                            std::to_string(pos_) + ", " + std::to_string(bytes_.size() - pos_) + " left");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const std::vector<NamedTensor>& tensors) {
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max())
    throw FormatError(FormatError::Kind::kMalformed, "too many tensors");
  Writer w;
  w.put_bytes(kWeightsMagic, 4);
  w.put<std::uint32_t>(kWeightsVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError(FormatError::Kind::kMalformed, "tensor name too long: " + t.name.substr(0, 32) + "...");
    if (t.shape.rank() == 0 || t.shape.rank() > 255)
      throw FormatError(FormatError::Kind::kMalformed, "tensor '" + t.name + "' has unsupported rank");
    if (static_cast<Index>(t.values.size()) != t.shape.numel())
      throw FormatError(FormatError::Kind::kShapeMismatch, "tensor '" + t.name + "' value count does not match its shape");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.rank()));
    for (Index d : t.shape.dims()) {
      if (d > std::numeric_limits<std::uint32_t>::max())
        throw FormatError(FormatError::Kind::kMalformed, "tensor '" + t.name + "' extent exceeds u32");
      w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    if (t.dtype == Dtype::kF32) {
      for (double v : t.values) w.put<float>(static_cast<float>(v));
    } else {
      for (double v : t.values) w.put<double>(v);
    }
  }
  return w.take();
}

std::vector<NamedTensor> decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0)
    throw FormatError(FormatError::Kind::kBadMagic, "bad magic: not a ULKW weight file");
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kWeightsVersion)
    throw FormatError(FormatError::Kind::kUnsupportedVersion, "unsupported ULKW version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");

  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>("name length");
    const std::uint8_t* name = r.take(name_len, "name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    if (!seen.insert(t.name).second) throw FormatError(FormatError::Kind::kMalformed, "duplicate tensor '" + t.name + "'");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError(FormatError::Kind::kMalformed, "tensor '" + t.name + "' has unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<Dtype>(dtype);
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0) throw FormatError(FormatError::Kind::kMalformed, "tensor '" + t.name + "' has rank 0");
    std::vector<Index> dims;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto extent = r.get<std::uint32_t>("dims");
      if (extent == 0) throw FormatError(FormatError::Kind::kMalformed, "tensor '" + t.name + "' has a zero extent");
      dims.push_back(extent);
    }
    t.shape = Shape(std::move(dims));
    const std::size_t elem = t.dtype == Dtype::kF32 ? 4 : 8;
    const auto n = static_cast<std::size_t>(t.shape.numel());
    if (n > bytes.size() / elem)
      throw FormatError(FormatError::Kind::kTruncated, "truncated file: payload of tensor '" + t.name + "' exceeds file size");
    const std::uint8_t* payload = r.take(n * elem, "payload");
    t.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (t.dtype == Dtype::kF32) {
        float v;
        std::memcpy(&v, payload + j * 4, 4);
        t.values[j] = v;
      } else {
        std::memcpy(&t.values[j], payload + j * 8, 8);
      }
    }
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(FormatError::Kind::kMalformed, "trailing bytes after last tensor");
  return out;
}

void write_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const std::vector<std::uint8_t> bytes = encode_weights(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatError::Kind::kIo, "failed writing " + path.string());
}

std::vector<NamedTensor> read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

}  // namespace ulk
