// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/io.hpp>

#include "binio.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace soit {

Image<float> read_png(const fs::path &path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode PNG '" + path.string() + "': " + img.message);
    }
    Image<float> out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
    for (std::size_t i = 0; i < buf.size(); ++i)
        out.data[i] = static_cast<float>(buf[i]) / 255.0f;
    return out;
}

void write_png(const fs::path &path, const Image<float> &image) {
    if (image.channels != 3)
        throw ContractViolation("write_png: expected a 3-channel image");
    std::vector<png_byte> buf(image.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const float v = std::clamp(std::isfinite(image.data[i]) ? image.data[i] : 0.0f, 0.0f, 1.0f);
        buf[i]        = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width   = static_cast<png_uint_32>(image.width);
    img.height  = static_cast<png_uint_32>(image.height);
    img.format  = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
}

Image<float> read_f32(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SOIT", 4) != 0)
        throw IoError("'" + path.string() + "' is not a raw float image (bad magic)");
    binio::Reader r(in, path);
    const std::uint32_t w = r.u32(), h = r.u32(), c = r.u32();
    if (w == 0 || h == 0 || c == 0 || c > 4 || w > 65536 || h > 65536)
        throw IoError("'" + path.string() + "': implausible image header");
    Image<float> img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    for (std::uint32_t ch = 0; ch < c; ++ch)
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x)
                img.at(static_cast<int>(x), static_cast<int>(y), static_cast<int>(ch)) = r.f32();
    return img;
}

void write_f32(const fs::path &path, const Image<float> &image) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot create '" + path.string() + "'");
    out.write("SOIT", 4);
    binio::Writer w(out);
    w.u32(static_cast<std::uint32_t>(image.width));
    w.u32(static_cast<std::uint32_t>(image.height));
    w.u32(static_cast<std::uint32_t>(image.channels));
    for (int ch = 0; ch < image.channels; ++ch)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                w.f32(image.at(x, y, ch));
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

} // namespace soit
