#pragma once

// cereal bindings for the snapshot files. Every snapshot is
//   magic (8 bytes) | format version (u32) | portable-binary cereal payload.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/array.hpp>
#include <cereal/types/map.hpp>
#include <cereal/types/optional.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/utility.hpp>
#include <cereal/types/variant.hpp>
#include <cereal/types/vector.hpp>

#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "bikesite/hexgrid.hpp"

namespace bikesite {

template <class Archive>
void serialize(Archive& ar, LatLng& p) {
  ar(p.lat, p.lon);
}

template <class Archive>
void serialize(Archive& ar, Polygon& p) {
  ar(p.outer, p.holes);
}

template <class Archive>
void serialize(Archive& ar, CellId& c) {
  std::uint64_t v = c.value();
  ar(v);
  if constexpr (Archive::is_loading::value) c = CellId(v);
}

template <class Archive>
void serialize(Archive& ar, CategorizedFeature& f) {
  ar(f.element_id, f.kind, f.category, f.shape_class, f.geometry);
}

template <class Archive>
void serialize(Archive& ar, StationRecord& s) {
  ar(s.station_id, s.location, s.system_name, s.source);
}

template <class Archive>
void serialize(Archive& ar, CityExtract& e) {
  ar(e.city_name, e.boundary, e.features, e.stations, e.snapshot_id, e.osm_snapshot_id);
}

namespace detail {

inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace detail

template <class T>
std::string encode_snapshot(std::string_view magic, std::uint32_t version, const T& value) {
  std::ostringstream os(std::ios::binary);
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  {
    cereal::PortableBinaryOutputArchive ar(os);
    ar(version, value);
  }
  return os.str();
}

template <class T>
T decode_snapshot(std::string_view bytes, std::string_view magic, std::uint32_t version,
                  const std::string& what) {
  if (bytes.substr(0, magic.size()) != magic) {
    throw ParseError(what + ": not a " + std::string(magic) + " snapshot", 0);
  }
  std::istringstream is(std::string(bytes.substr(magic.size())), std::ios::binary);
  cereal::PortableBinaryInputArchive ar(is);
  std::uint32_t found = 0;
  T value{};
  try {
    ar(found);
    if (found != version) {
      throw ParseError(what + ": snapshot format version " + std::to_string(found) +
                           " (expected " + std::to_string(version) + ")",
                       magic.size());
    }
    ar(value);
  } catch (const cereal::Exception& e) {
    throw ParseError(what + ": truncated or corrupt snapshot (" + e.what() + ")",
                     static_cast<std::size_t>(is.tellg()));
  }
  return value;
}

template <class T>
void write_snapshot(const std::filesystem::path& path, std::string_view magic,
                    std::uint32_t version, const T& value) {
  detail::write_file_atomic(path, encode_snapshot(magic, version, value));
}

template <class T>
T read_snapshot(const std::filesystem::path& path, std::string_view magic, std::uint32_t version) {
  return decode_snapshot<T>(detail::read_file_bytes(path), magic, version, path.string());
}

}  // namespace bikesite
