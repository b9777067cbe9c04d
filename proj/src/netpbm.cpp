#include "lp/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lp {

namespace {

struct Reader {
  std::string data;
  std::size_t pos = 0;
  std::string path;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(path + ": " + what);
  }

  void skip_header_space() {
    while (pos < data.size()) {
      const char c = data[pos];
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::string token() {
    skip_header_space();
    if (pos >= data.size()) fail("truncated header");
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])) &&
           data[pos] != '#')
      ++pos;
    return data.substr(start, pos - start);
  }

  long number(const std::string& what) {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const long v = std::stol(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail("bad " + what + " '" + t + "'");
    }
  }
};

int samples_bytes(int maxval) { return maxval > 255 ? 2 : 1; }

}  // namespace

NetpbmImage read_netpbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();

  Reader r;
  r.data = buf.str();
  r.path = path;

  const std::string magic = r.token();
  bool ascii;
  int channels;
  if (magic == "P2") { ascii = true; channels = 1; }
  else if (magic == "P5") { ascii = false; channels = 1; }
  else if (magic == "P3") { ascii = true; channels = 3; }
  else if (magic == "P6") { ascii = false; channels = 3; }
  else r.fail("unsupported magic '" + magic + "'");

  NetpbmImage img;
  img.channels = channels;
  img.width = static_cast<int>(r.number("width"));
  img.height = static_cast<int>(r.number("height"));
  img.maxval = static_cast<int>(r.number("maxval"));
  if (img.width < 1 || img.height < 1) r.fail("non-positive dimensions");
  if (img.maxval < 1 || img.maxval > 65535) r.fail("maxval out of range [1, 65535]");

  const long count = static_cast<long>(img.width) * img.height * channels;
  img.pixels.resize(static_cast<std::size_t>(count));

  if (ascii) {
    for (long i = 0; i < count; ++i) {
      const long v = r.number("sample");
      if (v < 0 || v > img.maxval) r.fail("sample out of range");
      img.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(v);
    }
    return img;
  }

  // Binary raster starts after exactly one whitespace byte past the maxval.
  if (r.pos >= r.data.size() || !std::isspace(static_cast<unsigned char>(r.data[r.pos])))
    r.fail("missing raster separator");
  ++r.pos;
  const int bytes = samples_bytes(img.maxval);
  if (r.data.size() - r.pos < static_cast<std::size_t>(count) * bytes) r.fail("truncated raster");
  for (long i = 0; i < count; ++i) {
    const unsigned char hi = static_cast<unsigned char>(r.data[r.pos++]);
    long v = hi;
    if (bytes == 2) {
      const unsigned char lo = static_cast<unsigned char>(r.data[r.pos++]);
      v = (v << 8) | lo;
    }
    if (v > img.maxval) r.fail("sample out of range");
    img.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(v);
  }
  return img;
}

namespace {

void write_netpbm(const std::string& path, const NetpbmImage& img, int channels, bool binary) {
  if (img.channels != channels)
    throw std::invalid_argument("image channel count does not match requested format");
  if (img.width < 1 || img.height < 1) throw std::invalid_argument("empty image");
  if (img.maxval < 1 || img.maxval > 65535) throw std::invalid_argument("maxval out of range");
  const long count = static_cast<long>(img.width) * img.height * channels;
  if (static_cast<long>(img.pixels.size()) != count)
    throw std::invalid_argument("pixel count does not match dimensions");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open image for writing: " + path);
  const char* magic = binary ? (channels == 1 ? "P5" : "P6") : (channels == 1 ? "P2" : "P3");
  out << magic << '\n' << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  if (binary) {
    const int bytes = samples_bytes(img.maxval);
    for (long i = 0; i < count; ++i) {
      const std::uint16_t v = img.pixels[static_cast<std::size_t>(i)];
      if (bytes == 2) out.put(static_cast<char>((v >> 8) & 0xFF));
      out.put(static_cast<char>(v & 0xFF));
    }
  } else {
    for (long i = 0; i < count; ++i) {
      out << img.pixels[static_cast<std::size_t>(i)];
      out << ((i + 1) % (img.width * channels) == 0 ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("failed writing image: " + path);
}

}  // namespace

void write_pgm(const std::string& path, const NetpbmImage& img, bool binary) {
  write_netpbm(path, img, 1, binary);
}

void write_ppm(const std::string& path, const NetpbmImage& img, bool binary) {
  write_netpbm(path, img, 3, binary);
}

}  // namespace lp
