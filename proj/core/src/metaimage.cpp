#include "dentatlas/metaimage.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dentatlas {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Vec3 parse_triple(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  Vec3 v;
  if (!(in >> v.x() >> v.y() >> v.z())) throw Error(ErrorKind::kIo, "MetaImage key " + key + " needs 3 values");
  return v;
}

bool parse_bool(const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return v == "true" || v == "1";
}

template <typename T>
void byteswap_inplace(std::vector<T>& values) {
  for (auto& v : values) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
  }
}

struct ParsedHeader {
  MetaImageHeader header;
  std::streamoff payload_offset = 0;  // for LOCAL
  bool big_endian = false;
};

ParsedHeader parse_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  ParsedHeader parsed;
  auto& h = parsed.header;
  bool have_dims = false, have_type = false, have_data = false;
  int ndims = 3;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "NDims") {
      ndims = std::stoi(value);
    } else if (key == "DimSize") {
      const Vec3 d = parse_triple(key, value);
      h.geometry.dims = {static_cast<int>(d.x()), static_cast<int>(d.y()), static_cast<int>(d.z())};
      have_dims = true;
    } else if (key == "ElementSpacing") {
      h.geometry.spacing = parse_triple(key, value);
    } else if (key == "Offset" || key == "Origin" || key == "Position") {
      h.geometry.origin = parse_triple(key, value);
    } else if (key == "ElementNumberOfChannels") {
      h.channels = std::stoi(value);
    } else if (key == "ElementType") {
      if (value == "MET_FLOAT") {
        h.element_type = ElementType::kFloat;
      } else if (value == "MET_USHORT") {
        h.element_type = ElementType::kUShort;
      } else {
        throw Error(ErrorKind::kIo, "unsupported MetaImage ElementType " + value);
      }
      have_type = true;
    } else if (key == "ElementByteOrderMSB" || key == "BinaryDataByteOrderMSB") {
      parsed.big_endian = parse_bool(value);
    } else if (key == "CompressedData") {
      if (parse_bool(value)) throw Error(ErrorKind::kIo, "compressed MetaImage payloads are not supported");
    } else if (key == "ElementDataFile") {
      if (value == "LOCAL") {
        parsed.payload_offset = in.tellg();
      } else {
        h.data_file = path.parent_path() / value;
      }
      have_data = true;
      break;  // ElementDataFile is always the last header key
    }
  }
  if (ndims != 3) throw Error(ErrorKind::kIo, "only 3D MetaImages are supported: " + path.string());
  if (!have_dims || !have_type || !have_data) {
    throw Error(ErrorKind::kIo, "incomplete MetaImage header: " + path.string());
  }
  validate_geometry(h.geometry);
  return parsed;
}

template <typename T>
std::vector<T> read_payload(const fs::path& path, const ParsedHeader& parsed, std::size_t count) {
  std::vector<T> values(count);
  const fs::path& file = parsed.header.data_file.empty() ? path : parsed.header.data_file;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open MetaImage payload " + file.string());
  if (parsed.header.data_file.empty()) in.seekg(parsed.payload_offset);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(T))) {
    throw Error(ErrorKind::kIo, "truncated MetaImage payload " + file.string());
  }
  const bool host_big = std::endian::native == std::endian::big;
  if (parsed.big_endian != host_big) byteswap_inplace(values);
  return values;
}

std::string format_triple(const Vec3& v) {
  std::ostringstream out;
  out << std::setprecision(17) << v.x() << ' ' << v.y() << ' ' << v.z();
  return out.str();
}

template <typename T>
void write_image(const fs::path& path, const GridGeometry& g, int channels, ElementType type,
                 const std::vector<T>& values) {
  if (values.size() != g.voxel_count() * static_cast<std::size_t>(channels)) {
    throw Error(ErrorKind::kInvalidArgument, "MetaImage payload size mismatch");
  }
  const bool local = path.extension() == ".mha";
  const fs::path raw = fs::path(path).replace_extension(".raw");
  std::ostringstream header;
  header << "ObjectType = Image\n"
         << "NDims = 3\n"
         << "DimSize = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n'
         << "ElementSpacing = " << format_triple(g.spacing) << '\n'
         << "Offset = " << format_triple(g.origin) << '\n';
  if (channels > 1) header << "ElementNumberOfChannels = " << channels << '\n';
  header << "ElementType = " << (type == ElementType::kFloat ? "MET_FLOAT" : "MET_USHORT") << '\n'
         << "ElementByteOrderMSB = False\n"
         << "ElementDataFile = " << (local ? std::string("LOCAL") : raw.filename().string()) << '\n';

  std::vector<T> le = values;
  if constexpr (std::endian::native == std::endian::big) byteswap_inplace(le);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::string text = header.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (local) {
    out.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size() * sizeof(T)));
  } else {
    std::ofstream payload(raw, std::ios::binary | std::ios::trunc);
    if (!payload) throw Error(ErrorKind::kIo, "cannot write " + raw.string());
    payload.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size() * sizeof(T)));
  }
}

}  // namespace

MetaImageHeader read_metaimage_header(const fs::path& path) { return parse_header(path).header; }

VolumeGrid read_volume(const fs::path& path) {
  const ParsedHeader parsed = parse_header(path);
  const auto& h = parsed.header;
  if (h.channels != 1) throw Error(ErrorKind::kIo, "expected a scalar image: " + path.string());
  const std::size_t n = h.geometry.voxel_count();
  if (h.element_type == ElementType::kFloat) return VolumeGrid(h.geometry, read_payload<float>(path, parsed, n));
  const auto raw = read_payload<std::uint16_t>(path, parsed, n);
  return VolumeGrid(h.geometry, std::vector<float>(raw.begin(), raw.end()));
}

LabelGrid read_labels(const fs::path& path) {
  const ParsedHeader parsed = parse_header(path);
  const auto& h = parsed.header;
  if (h.channels != 1 || h.element_type != ElementType::kUShort) {
    throw Error(ErrorKind::kIo, "expected a scalar MET_USHORT label image: " + path.string());
  }
  return LabelGrid(h.geometry, read_payload<std::uint16_t>(path, parsed, h.geometry.voxel_count()));
}

void write_volume(const fs::path& path, const VolumeGrid& v) {
  write_image(path, v.geometry(), 1, ElementType::kFloat, v.values());
}

void write_labels(const fs::path& path, const LabelGrid& l) {
  write_image(path, l.geometry(), 1, ElementType::kUShort, l.values());
}

std::vector<float> read_float_channels(const fs::path& path, int channels, GridGeometry& geometry) {
  const ParsedHeader parsed = parse_header(path);
  const auto& h = parsed.header;
  if (h.channels != channels || h.element_type != ElementType::kFloat) {
    throw Error(ErrorKind::kIo, "expected a " + std::to_string(channels) + "-channel MET_FLOAT image: " +
                                    path.string());
  }
  geometry = h.geometry;
  return read_payload<float>(path, parsed, h.geometry.voxel_count() * static_cast<std::size_t>(channels));
}

void write_float_channels(const fs::path& path, const GridGeometry& geometry, int channels,
                          const std::vector<float>& values) {
  write_image(path, geometry, channels, ElementType::kFloat, values);
}

}  // namespace dentatlas
