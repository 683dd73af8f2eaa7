#pragma once

#include <filesystem>

#include "slidemil/image.hpp"

namespace slidemil {

// PNG and binary PPM (P6), chosen by file extension. Everything is read back
// as 8-bit RGB; gray and RGBA PNG inputs are converted.
ImageU8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageU8& img);

}  // namespace slidemil
