#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgrl/autodiff.hpp"

namespace sgrl::ckpt {

// Named tensors in a stable order plus free-form string metadata.
struct Bundle {
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
  std::map<std::string, std::string> meta;

  const ad::Tensor* find(const std::string& name) const;
};

// Versioned text format. Values are printed with %.17g so doubles round-trip
// exactly; a load immediately followed by a save reproduces the file byte for
// byte.
void save(const std::filesystem::path& path, const Bundle& bundle);
Bundle load(const std::filesystem::path& path);

}  // namespace sgrl::ckpt
