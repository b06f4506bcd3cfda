#include "advface/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

namespace advface {

namespace fs = std::filesystem;

namespace {

struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<unsigned char> interleaved;  // HWC
  std::optional<double> scale;             // netpbm "# scale" header
};

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw FileNotFoundError("no such file: " + path.string());
}

Raster read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw CorruptDataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.height = static_cast<int>(image.height);
  r.width = static_cast<int>(image.width);
  r.channels = gray ? 1 : 3;
  r.interleaved.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.interleaved.data(), 0, nullptr)) {
    png_image_free(&image);
    throw CorruptDataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return r;
}

void write_png(const Raster& r, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, r.interleaved.data(), 0,
                               nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Reads the next whitespace-delimited header token, collecting '#' comments.
std::string pnm_token(std::istream& in, std::vector<std::string>& comments) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
      comments.push_back(line);
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Raster read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> comments;
  const std::string magic = pnm_token(in, comments);
  if (magic != "P5" && magic != "P6") {
    throw UnsupportedFormatError("unsupported netpbm variant '" + magic + "' in " +
                                 path.string());
  }
  Raster r;
  r.channels = magic == "P5" ? 1 : 3;
  try {
    r.width = std::stoi(pnm_token(in, comments));
    r.height = std::stoi(pnm_token(in, comments));
    const int maxval = std::stoi(pnm_token(in, comments));
    if (maxval != 255) {
      throw UnsupportedFormatError("only 8-bit netpbm is supported: " + path.string());
    }
  } catch (const std::logic_error&) {
    throw CorruptDataError("malformed netpbm header in " + path.string());
  }
  if (r.width <= 0 || r.height <= 0) {
    throw CorruptDataError("invalid netpbm dimensions in " + path.string());
  }
  for (const auto& c : comments) {
    std::istringstream cs(c);
    std::string key;
    double value;
    if (cs >> key >> value && key == "scale") r.scale = value;
  }
  r.interleaved.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  in.read(reinterpret_cast<char*>(r.interleaved.data()),
          static_cast<std::streamsize>(r.interleaved.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.interleaved.size())) {
    throw CorruptDataError("truncated pixel data in " + path.string());
  }
  return r;
}

void write_pnm(const Raster& r, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (r.channels == 1 ? "P5" : "P6") << "\n";
  if (r.scale) out << "# scale " << *r.scale << "\n";
  out << r.width << " " << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.interleaved.data()),
            static_cast<std::streamsize>(r.interleaved.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Raster read_raster(const fs::path& path) {
  require_exists(path);
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw UnsupportedFormatError("unsupported image format '" + ext + "': " +
                               path.string());
}

void write_raster(const Raster& r, const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return write_png(r, path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if (ext == ".pgm" && r.channels != 1) {
      throw UnsupportedFormatError("PGM requires a 1-channel image: " + path.string());
    }
    if (ext == ".ppm" && r.channels != 3) {
      throw UnsupportedFormatError("PPM requires a 3-channel image: " + path.string());
    }
    return write_pnm(r, path);
  }
  throw UnsupportedFormatError("unsupported image format '" + ext + "': " +
                               path.string());
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  const Raster r = read_raster(path);
  ImageTensor img(r.height, r.width, r.channels);
  for (int i = 0; i < r.height; ++i) {
    for (int j = 0; j < r.width; ++j) {
      for (int c = 0; c < r.channels; ++c) {
        const auto v = r.interleaved[(static_cast<std::size_t>(i) * r.width + j) *
                                         r.channels + c];
        img.at(c, i, j) = v / 255.0;
      }
    }
  }
  return img;
}

void save_image(const ImageTensor& img, const fs::path& path) {
  require(!img.empty(), "save_image: empty image");
  Raster r;
  r.height = img.height();
  r.width = img.width();
  r.channels = img.channels();
  r.interleaved.resize(img.size());
  for (int i = 0; i < r.height; ++i) {
    for (int j = 0; j < r.width; ++j) {
      for (int c = 0; c < r.channels; ++c) {
        r.interleaved[(static_cast<std::size_t>(i) * r.width + j) * r.channels + c] =
            quantize(img.at(c, i, j));
      }
    }
  }
  write_raster(r, path);
}

BinaryMask load_mask(const fs::path& path) {
  const Raster r = read_raster(path);
  if (r.channels != 1) {
    throw UnsupportedFormatError("mask must be a 1-channel image: " + path.string());
  }
  std::vector<unsigned char> bits(r.interleaved.size());
  std::transform(r.interleaved.begin(), r.interleaved.end(), bits.begin(),
                 [](unsigned char v) { return static_cast<unsigned char>(v >= 128); });
  return BinaryMask(r.height, r.width, std::move(bits));
}

ImageTensor mask_to_image(const BinaryMask& mask) {
  ImageTensor img(mask.height(), mask.width(), 1);
  for (int i = 0; i < mask.height(); ++i) {
    for (int j = 0; j < mask.width(); ++j) img.at(0, i, j) = mask(i, j) ? 1.0 : 0.0;
  }
  return img;
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  save_image(mask_to_image(mask), path);
}

ThresholdMatrix load_thresholds(const fs::path& path) {
  require_exists(path);
  const std::string ext = lower_ext(path);
  if (ext == ".txt" || ext == ".grid") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    int h = 0;
    int w = 0;
    if (!(in >> h >> w) || h <= 0 || w <= 0) {
      throw CorruptDataError("threshold grid header must be 'H W': " + path.string());
    }
    std::vector<double> values(static_cast<std::size_t>(h) * w);
    for (double& v : values) {
      if (!(in >> v)) {
        throw CorruptDataError("threshold grid has fewer than H*W values: " +
                               path.string());
      }
    }
    try {
      return ThresholdMatrix(h, w, std::move(values));
    } catch (const ContractViolation& e) {
      throw CorruptDataError(std::string(e.what()) + ": " + path.string());
    }
  }
  const Raster r = read_raster(path);
  if (r.channels != 1) {
    throw UnsupportedFormatError("threshold image must be 1-channel: " + path.string());
  }
  if (!r.scale) {
    throw CorruptDataError("threshold image lacks a '# scale' header: " + path.string());
  }
  std::vector<double> values(r.interleaved.size());
  std::transform(r.interleaved.begin(), r.interleaved.end(), values.begin(),
                 [&](unsigned char v) { return *r.scale * v / 255.0; });
  return ThresholdMatrix(r.height, r.width, std::move(values));
}

void save_thresholds_text(const ThresholdMatrix& z, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << z.height() << " " << z.width() << "\n";
  for (int i = 0; i < z.height(); ++i) {
    for (int j = 0; j < z.width(); ++j) out << (j ? " " : "") << z(i, j);
    out << "\n";
  }
}

}  // namespace advface
