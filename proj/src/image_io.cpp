#include "slidemil/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "slidemil/errors.hpp"

namespace slidemil {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
    std::string e = path.extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

ImageU8 read_png(const std::filesystem::path& path) {
    png_image pimg;
    std::memset(&pimg, 0, sizeof(pimg));
    pimg.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pimg, path.c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + pimg.message);
    pimg.format = PNG_FORMAT_RGB;
    ImageU8 out(pimg.height, pimg.width);
    if (!png_image_finish_read(&pimg, nullptr, out.px.data(), 0, nullptr)) {
        png_image_free(&pimg);
        throw IoError("cannot decode PNG " + path.string() + ": " + pimg.message);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    png_image pimg;
    std::memset(&pimg, 0, sizeof(pimg));
    pimg.version = PNG_IMAGE_VERSION;
    pimg.width = static_cast<png_uint_32>(img.width);
    pimg.height = static_cast<png_uint_32>(img.height);
    pimg.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&pimg, path.c_str(), 0, img.px.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path.string() + ": " + pimg.message);
}

ImageU8 read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw IoError(path.string() + ": truncated PPM header");
    };
    const std::size_t w = std::stoul(next_token());
    const std::size_t h = std::stoul(next_token());
    const std::size_t maxval = std::stoul(next_token());
    if (maxval != 255) throw IoError(path.string() + ": only maxval 255 PPM supported");
    in.get();  // single whitespace after header
    ImageU8 out(h, w);
    in.read(reinterpret_cast<char*>(out.px.data()), static_cast<std::streamsize>(out.px.size()));
    if (static_cast<std::size_t>(in.gcount()) != out.px.size())
        throw IoError(path.string() + ": truncated PPM pixel data");
    return out;
}

void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.px.data()),
              static_cast<std::streamsize>(img.px.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

ImageU8 read_image(const std::filesystem::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm") return read_ppm(path);
    throw IoError("unsupported image extension '" + ext + "' for " + path.string());
}

void write_image(const std::filesystem::path& path, const ImageU8& img) {
    if (img.height == 0 || img.width == 0)
        throw ValidationError("refusing to write empty image " + path.string());
    const std::string ext = lower_ext(path);
    if (ext == ".png") return write_png(path, img);
    if (ext == ".ppm") return write_ppm(path, img);
    throw IoError("unsupported image extension '" + ext + "' for " + path.string());
}

}  // namespace slidemil
