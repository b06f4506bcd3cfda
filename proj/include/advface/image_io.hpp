#pragma once

#include <filesystem>

#include "advface/image.hpp"

namespace advface {

// 8-bit raster I/O. Format follows the file extension: .png (gray or RGB) or
// binary netpbm (.pgm/.ppm). Values are mapped v/255 on load and
// round(255*clamp(x,0,1)) on save.
ImageTensor load_image(const std::filesystem::path& path);
void save_image(const ImageTensor& img, const std::filesystem::path& path);

// Masks are stored as 1-channel images; gray >= 128 means 1.
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);
ImageTensor mask_to_image(const BinaryMask& mask);

// Threshold matrices come either as a text grid ("H W" then H*W numbers) or
// as an 8-bit gray image carrying a "# scale <factor>" header comment
// (netpbm) in which case tau = scale * v/255.
ThresholdMatrix load_thresholds(const std::filesystem::path& path);
void save_thresholds_text(const ThresholdMatrix& z,
                          const std::filesystem::path& path);

}  // namespace advface
