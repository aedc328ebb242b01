#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tlora/matrix.hpp"

namespace tlora {

struct NamedTensor {
    std::string name;
    Matrix value;
};

// Binary tensor container. Layout (all integers little-endian):
//   magic "TLRA"
//   u32 format version (currently 1)
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u64 rows, u64 cols,
//               rows*cols IEEE-754 binary64 values, row-major
//   u32 metadata length, UTF-8 JSON metadata
// Save/load round-trips are bit-exact.
struct Checkpoint {
    std::vector<NamedTensor> tensors;
    std::string metadata_json = "{}";

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    std::string serialize() const;
    static Checkpoint deserialize(std::string_view bytes);

    const Matrix* find(std::string_view name) const;
    const Matrix& require(std::string_view name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace tlora
