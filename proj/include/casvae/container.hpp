#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casvae/errors.hpp"

namespace casvae {

/// CVT1 on-disk container: a little-endian, versioned list of named tensor
/// sections. Layout:
///   magic "CVT1" | version u32 (=1) | section_count u32 |
///   per section: name_len u32 | name bytes | ndim u32 | dims u32×ndim |
///                dtype u8 (0 = IEEE-754 f32, 1 = u8) | payload bytes
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeU8 = 1;
inline constexpr std::uint32_t kContainerVersion = 1;

struct Section {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::uint8_t dtype = kDtypeF32;
  std::vector<std::uint8_t> payload;  // raw little-endian bytes

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// Serialized byte size of a section list, including the file header.
std::size_t container_byte_size(const std::vector<Section>& sections);

void save_container(const std::filesystem::path& path,
                    const std::vector<Section>& sections);

/// Loads and validates; throws IoError with a distinct message for bad
/// magic, version mismatch, and truncation. Never returns a partial read.
std::vector<Section> load_container(const std::filesystem::path& path);

/// Convenience lookup; throws DataError when the section is absent.
const Section& find_section(const std::vector<Section>& sections,
                            const std::string& name);

bool has_section(const std::vector<Section>& sections, const std::string& name);

}  // namespace casvae
