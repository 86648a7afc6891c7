#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvac/nn/layers.hpp"

namespace hvac::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors plus string metadata. Layout is documented in docs/formats.md.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
  void add(const ParamList& params);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  /// Copies stored values into matching parameters; names and shapes must agree.
  void load_into(const ParamList& params) const;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hvac::nn
