#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lp {

// In-memory netpbm raster. Pixels are row-major from the top-left corner,
// channels interleaved (1 = grayscale, 3 = RGB), values in [0, maxval].
struct NetpbmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  int channels = 1;
  std::vector<std::uint16_t> pixels;
};

// Reads P2/P5 (grayscale) and P3/P6 (RGB), maxval up to 65535.
NetpbmImage read_netpbm(const std::string& path);

void write_pgm(const std::string& path, const NetpbmImage& img, bool binary = true);
void write_ppm(const std::string& path, const NetpbmImage& img, bool binary = true);

}  // namespace lp
