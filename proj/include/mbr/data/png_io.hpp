#pragma once

#include <string>

#include "mbr/data/image.hpp"

namespace mbr::data {

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

}  // namespace mbr::data
