#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lwdepth/datamodel.hpp"
#include "lwdepth/error.hpp"

namespace lwdepth {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

// Header tokenizer for the netpbm family. Skips whitespace and '#' comments.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

  std::string token(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(std::string("missing ") + what, start);
    return b_.substr(start, pos_ - start);
  }

  long integer(const char* what) {
    const std::size_t at = peek_offset();
    const std::string t = token(what);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0) throw ParseError(std::string("invalid ") + what + " '" + t + "'", at);
    return v;
  }

  double real(const char* what) {
    const std::size_t at = peek_offset();
    const std::string t = token(what);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (*end != '\0' || v == 0.0 || !std::isfinite(v)) {
      throw ParseError(std::string("invalid ") + what + " '" + t + "'", at);
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_offset() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw ParseError("header not terminated by whitespace", pos_);
    }
    return pos_ + 1;
  }

  std::size_t peek_offset() {
    skip_space();
    return pos_;
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

void save_pfm(const Image& depth, const fs::path& path) {
  if (depth.channels != 1 && depth.channels != 3) {
    throw DimensionError("PFM holds 1 or 3 channels");
  }
  if (depth.empty()) throw DimensionError("cannot save an empty PFM");
  for (float v : depth.pixels) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw ContractError("refusing to save negative or non-finite depth to '" +
                          path.string() + "'");
    }
  }
  std::ostringstream os;
  os << (depth.channels == 1 ? "Pf" : "PF") << '\n'
     << depth.width << ' ' << depth.height << '\n'
     << "-1.0\n";
  std::string bytes = os.str();
  const std::size_t row = static_cast<std::size_t>(depth.width) * depth.channels;
  bytes.reserve(bytes.size() + depth.pixels.size() * 4);
  // PFM stores rows bottom to top.
  for (int y = depth.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t u = std::bit_cast<std::uint32_t>(depth.pixels[y * row + i]);
      if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
      char le[4];
      std::memcpy(le, &u, 4);
      bytes.append(le, 4);
    }
  }
  write_file(path, bytes);
}

Image load_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  HeaderReader hr(bytes);
  const std::string magic = hr.token("PFM magic");
  int channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw ParseError("bad PFM magic '" + magic + "' in '" + path.string() + "'", 0);
  }
  const long w = hr.integer("width");
  const long h = hr.integer("height");
  const double scale = hr.real("scale");
  const std::size_t off = hr.payload_offset();
  const std::size_t need = static_cast<std::size_t>(w) * h * channels * 4;
  if (bytes.size() < off + need) {
    throw ParseError("truncated PFM payload in '" + path.string() + "': need " +
                         std::to_string(need) + " bytes",
                     bytes.size());
  }
  const bool little = scale < 0.0;
  Image img(static_cast<int>(h), static_cast<int>(w), channels);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  std::size_t p = off;
  for (long y = h - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i, p += 4) {
      std::uint32_t u;
      std::memcpy(&u, bytes.data() + p, 4);
      if (little != (std::endian::native == std::endian::little)) u = byteswap32(u);
      img.pixels[static_cast<std::size_t>(y) * row + i] = std::bit_cast<float>(u);
    }
  }
  return img;
}

void save_ppm(const Image& rgb, const fs::path& path) {
  if (rgb.channels != 3) throw DimensionError("PPM requires 3 channels");
  if (rgb.empty()) throw DimensionError("cannot save an empty PPM");
  std::ostringstream os;
  os << "P6\n" << rgb.width << ' ' << rgb.height << "\n255\n";
  std::string bytes = os.str();
  bytes.reserve(bytes.size() + rgb.pixels.size());
  for (float v : rgb.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ContractError("rgb value outside [0, 1] while saving '" + path.string() + "'");
    }
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
  }
  write_file(path, bytes);
}

Image load_ppm(const fs::path& path) {
  const std::string bytes = read_file(path);
  HeaderReader hr(bytes);
  const std::string magic = hr.token("PPM magic");
  if (magic != "P6") {
    throw ParseError("bad PPM magic '" + magic + "' in '" + path.string() + "'", 0);
  }
  const long w = hr.integer("width");
  const long h = hr.integer("height");
  const std::size_t maxval_at = hr.peek_offset();
  const long maxval = hr.integer("maxval");
  if (maxval != 255) throw ParseError("only 8-bit PPM (maxval 255) is supported", maxval_at);
  const std::size_t off = hr.payload_offset();
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < off + need) {
    throw ParseError("truncated PPM payload in '" + path.string() + "': need " +
                         std::to_string(need) + " bytes",
                     bytes.size());
  }
  Image img(static_cast<int>(h), static_cast<int>(w), 3);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[off + i])) / 255.0f;
  }
  return img;
}

fs::path save_dataset(const DatasetHandle& ds, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06zu", i);
    const std::string rgb_name = std::string("rgb_") + stem + ".ppm";
    save_ppm(ds.rgb(i), dir / rgb_name);
    nlohmann::json entry{{"rgb_path", rgb_name}, {"depth_path", nullptr},
                         {"domain_tag", ds.domain_tag()}};
    if (ds.labeled()) {
      Image d = ds.depth(i);
      const Mask& m = ds.valid_mask(i);
      for (std::size_t k = 0; k < d.pixels.size(); ++k) {
        if (!m.valid[k]) d.pixels[k] = 0.0f;
      }
      const std::string depth_name = std::string("depth_") + stem + ".pfm";
      save_pfm(d, dir / depth_name);
      entry["depth_path"] = depth_name;
    }
    samples.push_back(std::move(entry));
  }
  nlohmann::json manifest{{"schema", 1},
                          {"domain_tag", ds.domain_tag()},
                          {"labeled", ds.labeled()},
                          {"seed", ds.seed()},
                          {"samples", std::move(samples)}};
  const fs::path path = dir / "manifest.json";
  write_file(path, manifest.dump(2) + "\n");
  return path;
}

DatasetHandle load_dataset(const fs::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("invalid manifest '" + manifest_path.string() + "': " + e.what(),
                     e.byte);
  }
  const fs::path base = manifest_path.parent_path();
  try {
    std::vector<DepthSample> samples;
    bool labeled = m.value("labeled", true);
    for (const auto& e : m.at("samples")) {
      DepthSample s;
      s.domain_tag = e.value("domain_tag", m.value("domain_tag", std::string{}));
      s.rgb = load_ppm(base / e.at("rgb_path").get<std::string>());
      if (e.at("depth_path").is_null()) {
        labeled = false;
      } else {
        s.depth = load_pfm(base / e.at("depth_path").get<std::string>());
        s.valid_mask = Mask(s.depth.height, s.depth.width, false);
        for (std::size_t k = 0; k < s.depth.pixels.size(); ++k) {
          s.valid_mask.valid[k] = s.depth.pixels[k] > 0.0f;
        }
      }
      samples.push_back(std::move(s));
    }
    return DatasetHandle(std::move(samples), labeled,
                         m.value("domain_tag", std::string{}),
                         m.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest '" + manifest_path.string() + "': " + e.what(), 0);
  }
}

}  // namespace lwdepth
