#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "meta4/core/tensor.hpp"

namespace meta4 {

// Binary tensor format, little-endian throughout:
//   "M4TS" | u32 rank | u64 dims[rank] | f64 payload (row-major)
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

// Named container:
//   "M4NT" | u32 version (1) | u64 count | count * (u32 len | name | tensor)
void write_named_tensors(
    std::ostream& os,
    const std::vector<std::pair<std::string, Tensor>>& items);
std::vector<std::pair<std::string, Tensor>> read_named_tensors(
    std::istream& is);

void save_named_tensors(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& items);
std::vector<std::pair<std::string, Tensor>> load_named_tensors(
    const std::string& path);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace meta4
