#include "dueb/raster.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace dueb {

void write_pnm(const Raster& r, const std::filesystem::path& path) {
  if (r.channels != 1 && r.channels != 3)
    throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pnm: cannot open " + path.string());
  out << (r.channels == 1 ? "P5" : "P6") << '\n'
      << r.width << ' ' << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.pixels.data()),
            static_cast<std::streamsize>(r.pixels.size()));
  if (!out) throw std::runtime_error("write_pnm: write failed " + path.string());
}

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pnm: cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_pnm: unsupported header in " + path.string());
  in.get();  // single whitespace before the pixel block
  Raster r(w, h, magic == "P5" ? 1 : 3);
  in.read(reinterpret_cast<char*>(r.pixels.data()),
          static_cast<std::streamsize>(r.pixels.size()));
  if (!in) throw std::runtime_error("read_pnm: truncated " + path.string());
  return r;
}

}  // namespace dueb
