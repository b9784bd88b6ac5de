#include "rpil/nn/model_io.hpp"

#include <vector>

#include "rpil/binary_io.hpp"

namespace rpil::nn {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'N', 'N'};

template <typename Dense>
void put_array(io::ByteWriter& w, const Dense& a) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.cols()));
  w.put_span<float>({a.data(), static_cast<std::size_t>(a.size())});
}

template <typename Dense>
void get_array(io::ByteReader& r, Dense& a, const std::string& name) {
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  if (rows != a.rows() || cols != a.cols())
    throw ModelError(ModelError::Kind::kShape, "model: array " + name + " has shape " + std::to_string(rows) + "x" +
                                                   std::to_string(cols) + ", expected " + std::to_string(a.rows()) +
                                                   "x" + std::to_string(a.cols()));
  r.get_span<float>({a.data(), static_cast<std::size_t>(a.size())});
}

}  // namespace

std::string serialize_model(const Model& m) {
  io::ByteWriter w;
  w.put_bytes({kMagic, 4});
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.spec.variant));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.spec.input_width));
  std::uint32_t count = 2;
  m.params.for_each_trainable([&](const std::string&, const auto&) { ++count; });
  w.put<std::uint32_t>(count);
  put_array(w, m.params.mean);
  put_array(w, m.params.std);
  m.params.for_each_trainable([&](const std::string&, const auto& a) { put_array(w, a); });
  w.put<std::uint32_t>(io::crc32(w.bytes()));
  return w.take();
}

Model deserialize_model(std::string_view bytes) {
  using Kind = ModelError::Kind;
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4))
    throw ModelError(Kind::kBadHeader, "model: bad header (magic bytes are not RPNN)");
  try {
    io::ByteReader r(bytes);
    r.get_bytes(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion)
      throw ModelError(Kind::kVersion, "model: unsupported format version " + std::to_string(version));
    const auto tag = r.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(Variant::kTask2))
      throw ModelError(Kind::kBadHeader, "model: unknown variant tag " + std::to_string(tag));
    const auto width = r.get<std::uint32_t>();
    if (width == 0 || width > (1u << 20)) throw ModelError(Kind::kBadHeader, "model: bad input width");

    Model m;
    try {
      m.spec = NetworkSpec::make(static_cast<Variant>(tag), static_cast<int>(width));
    } catch (const ShapeError& e) {
      throw ModelError(Kind::kShape, std::string("model: ") + e.what());
    }
    std::mt19937_64 unused(0);
    m.params = init_params<float>(m.spec, NormStats{}, unused);

    const auto count = r.get<std::uint32_t>();
    std::uint32_t expected = 2;
    m.params.for_each_trainable([&](const std::string&, const auto&) { ++expected; });
    if (count != expected)
      throw ModelError(Kind::kShape, "model: " + std::to_string(count) + " arrays, expected " + std::to_string(expected));
    get_array(r, m.params.mean, "mean");
    get_array(r, m.params.std, "std");
    m.params.for_each_trainable([&](const std::string& name, auto& a) { get_array(r, a, name); });

    const std::size_t payload_end = r.position();
    const auto stored = r.get<std::uint32_t>();
    if (r.remaining() != 0) throw ModelError(Kind::kBadHeader, "model: trailing bytes after checksum");
    if (stored != io::crc32(bytes.substr(0, payload_end))) throw ModelError(Kind::kChecksum, "model: checksum mismatch");
    return m;
  } catch (const io::TruncatedInput& e) {
    throw ModelError(Kind::kTruncated, std::string("model: truncated file (") + e.what() + ")");
  }
}

void save_model(const Model& model, const std::string& path) {
  try {
    io::write_file(path, serialize_model(model));
  } catch (const std::runtime_error& e) {
    throw ModelError(ModelError::Kind::kIo, e.what());
  }
}

Model load_model(const std::string& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw ModelError(ModelError::Kind::kIo, e.what());
  }
  return deserialize_model(bytes);
}

}  // namespace rpil::nn
