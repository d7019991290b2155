#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qvl/tensor.hpp"

namespace qvl {

// Named, insertion-ordered collection of tensors. Shapes are frozen at add()
// time; set() swaps values and bumps the version counter so stale snapshots
// are detectable. Iteration order is the insertion order, which also fixes
// the serialization layout.
class ParameterSet {
  public:
    void add(std::string name, Tensor value);
    void set(const std::string& name, Tensor value);

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    std::int64_t version() const { return version_; }

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::int64_t version_ = 0;
};

// Binary layout "QVL1": 4 magic bytes, then for each entry
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values
// all little-endian, entries back to back until end of stream. The runtime
// version counter is bookkeeping and is not part of the format.
std::vector<std::uint8_t> serialize_params(const ParameterSet& ps);
ParameterSet deserialize_params(const std::uint8_t* bytes, std::size_t len);

void save_params(const ParameterSet& ps, const std::string& path);
ParameterSet load_params(const std::string& path);

}  // namespace qvl
