#include "casvae/container.hpp"

#include <cstring>
#include <fstream>

namespace casvae {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > size_) throw IoError("truncated container (unexpected end of file)");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }

  std::uint8_t u8() { return *take(1); }

  bool exhausted() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(std::uint8_t dtype) {
  switch (dtype) {
    case kDtypeF32: return 4;
    case kDtypeU8: return 1;
    default: throw IoError("unknown dtype code " + std::to_string(int(dtype)));
  }
}

}  // namespace

std::size_t container_byte_size(const std::vector<Section>& sections) {
  std::size_t n = 4 + 4 + 4;  // magic, version, count
  for (const Section& s : sections)
    n += 4 + s.name.size() + 4 + 4 * s.dims.size() + 1 + s.payload.size();
  return n;
}

void save_container(const std::filesystem::path& path,
                    const std::vector<Section>& sections) {
  std::vector<std::uint8_t> buf;
  buf.reserve(container_byte_size(sections));
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kContainerVersion);
  put_u32(buf, static_cast<std::uint32_t>(sections.size()));
  for (const Section& s : sections) {
    if (s.payload.size() != s.element_count() * dtype_size(s.dtype))
      throw DimensionError("section '" + s.name + "' payload size does not match dims");
    put_u32(buf, static_cast<std::uint32_t>(s.name.size()));
    buf.insert(buf.end(), s.name.begin(), s.name.end());
    put_u32(buf, static_cast<std::uint32_t>(s.dims.size()));
    for (std::uint32_t d : s.dims) put_u32(buf, d);
    buf.push_back(s.dtype);
    buf.insert(buf.end(), s.payload.begin(), s.payload.end());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

std::vector<Section> load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("failed reading '" + path.string() + "'");

  Reader r(buf.data(), buf.size());
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic in '" + path.string() + "' (not a CVT1 container)");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion)
    throw IoError("unsupported container version " + std::to_string(version) +
                  " (expected " + std::to_string(kContainerVersion) + ")");
  const std::uint32_t count = r.u32();
  std::vector<Section> sections;
  sections.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Section s;
    const std::uint32_t name_len = r.u32();
    const std::uint8_t* name = r.take(name_len);
    s.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::uint32_t ndim = r.u32();
    s.dims.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) s.dims[d] = r.u32();
    s.dtype = r.u8();
    const std::size_t bytes = s.element_count() * dtype_size(s.dtype);
    const std::uint8_t* payload = r.take(bytes);
    s.payload.assign(payload, payload + bytes);
    sections.push_back(std::move(s));
  }
  if (!r.exhausted())
    throw IoError("trailing bytes after last section in '" + path.string() + "'");
  return sections;
}

const Section& find_section(const std::vector<Section>& sections,
                            const std::string& name) {
  for (const Section& s : sections)
    if (s.name == name) return s;
  throw DataError("container has no section named '" + name + "'");
}

bool has_section(const std::vector<Section>& sections, const std::string& name) {
  for (const Section& s : sections)
    if (s.name == name) return true;
  return false;
}

}  // namespace casvae
