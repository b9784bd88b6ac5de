#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rpil/nn/network.hpp"

namespace rpil::nn {

inline constexpr std::uint32_t kModelVersion = 1;

class ModelError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadHeader, kVersion, kTruncated, kChecksum, kShape };
  ModelError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Model {
  NetworkSpec spec;
  NetworkParams<float> params;
};

/// Layout: "RPNN", u32 version, u8 variant, u32 input width, u32 array count,
/// then per array u32 rows, u32 cols and column-major f32 data (mean, std,
/// alpha, beta, conv weight/bias..., fc weight/bias...), then CRC32 of all
/// preceding bytes.
std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view bytes);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace rpil::nn
