#include "hwmnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <map>

#include <jpeglib.h>
#include <png.h>

#include "hwmnet/errors.hpp"

namespace fs = std::filesystem;

namespace hwmnet {

namespace {

struct FileHandle {
    FILE* fp = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : fp(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (fp) {
            std::fclose(fp);
        }
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

enum class ImageKind { png, jpeg };

ImageKind sniff_format(FILE* fp, const std::string& path) {
    unsigned char magic[8] = {};
    const std::size_t got = std::fread(magic, 1, sizeof(magic), fp);
    std::rewind(fp);
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) {
        return ImageKind::png;
    }
    if (got >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) {
        return ImageKind::jpeg;
    }
    throw UnsupportedFormat("not a PNG or JPEG file: " + path);
}

void png_silent_error(png_structp png, png_const_charp) {
    png_longjmp(png, 1);
}
void png_silent_warning(png_structp, png_const_charp) {}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    PngReader() {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error,
                                     png_silent_warning);
        if (png) {
            info = png_create_info_struct(png);
        }
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    PngWriter() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) {
            info = png_create_info_struct(png);
        }
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

void decode_png(FILE* fp, const std::string& path, std::vector<unsigned char>& pixels, int& h,
                int& w, bool header_only) {
    PngReader reader;
    if (!reader.png || !reader.info) {
        throw IoError("libpng initialization failed for " + path);
    }
    if (setjmp(png_jmpbuf(reader.png))) {
        throw IoError("corrupt PNG file: " + path);
    }
    png_init_io(reader.png, fp);
    png_read_info(reader.png, reader.info);

    const png_uint_32 width = png_get_image_width(reader.png, reader.info);
    const png_uint_32 height = png_get_image_height(reader.png, reader.info);
    const int bit_depth = png_get_bit_depth(reader.png, reader.info);
    const int color_type = png_get_color_type(reader.png, reader.info);
    if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_RGB) {
        throw UnsupportedFormat("expected 8-bit RGB PNG: " + path);
    }
    h = static_cast<int>(height);
    w = static_cast<int>(width);
    if (header_only) {
        return;
    }

    png_read_update_info(reader.png, reader.info);
    pixels.assign(static_cast<std::size_t>(h) * w * 3, 0);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
    }
    png_read_image(reader.png, rows.data());
    png_read_end(reader.png, nullptr);
}

struct JpegErrorTrap {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
    longjmp(trap->jump, 1);
}

void decode_jpeg(FILE* fp, const std::string& path, std::vector<unsigned char>& pixels, int& h,
                 int& w, bool header_only) {
    jpeg_decompress_struct cinfo;
    JpegErrorTrap trap;
    cinfo.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit;
    if (setjmp(trap.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("corrupt JPEG file: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    h = static_cast<int>(cinfo.image_height);
    w = static_cast<int>(cinfo.image_width);
    if (header_only) {
        jpeg_destroy_decompress(&cinfo);
        return;
    }
    jpeg_start_decompress(&cinfo);
    if (cinfo.output_components != 3) {
        jpeg_destroy_decompress(&cinfo);
        throw UnsupportedFormat("expected RGB JPEG: " + path);
    }
    pixels.assign(static_cast<std::size_t>(h) * w * 3, 0);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
}

void decode_image(const std::string& path, std::vector<unsigned char>& pixels, int& h, int& w,
                  bool header_only) {
    FileHandle file(path, "rb");
    if (!file.fp) {
        throw IoError("cannot open image: " + path);
    }
    switch (sniff_format(file.fp, path)) {
        case ImageKind::png:
            decode_png(file.fp, path, pixels, h, w, header_only);
            break;
        case ImageKind::jpeg:
            decode_jpeg(file.fp, path, pixels, h, w, header_only);
            break;
    }
}

std::map<std::string, std::string> list_images(const std::string& dir) {
    if (!fs::exists(dir) || !fs::is_directory(dir)) {
        throw InvalidDataset("not a directory: " + dir);
    }
    std::map<std::string, std::string> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
            found.emplace(entry.path().filename().string(), entry.path().string());
        }
    }
    return found;
}

Tensor<float> crop_image(const Tensor<float>& t, int oy, int ox, int size) {
    const Shape s = t.shape();
    auto out = Tensor<float>::zeros({s.n, s.c, size, size});
    auto od = out.mutable_data();
    auto td = t.data();
    for (int in = 0; in < s.n; ++in) {
        for (int ic = 0; ic < s.c; ++ic) {
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    od[out.index(in, ic, y, x)] = td[t.index(in, ic, oy + y, ox + x)];
                }
            }
        }
    }
    return out;
}

}  // namespace

Tensor<float> load_image(const std::string& path) {
    std::vector<unsigned char> pixels;
    int h = 0, w = 0;
    decode_image(path, pixels, h, w, false);

    auto out = Tensor<float>::zeros({1, 3, h, w});
    auto od = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < plane; ++i) {
        od[i] = static_cast<float>(pixels[static_cast<std::size_t>(i) * 3]) / 255.0f;
        od[plane + i] = static_cast<float>(pixels[static_cast<std::size_t>(i) * 3 + 1]) / 255.0f;
        od[2 * plane + i] = static_cast<float>(pixels[static_cast<std::size_t>(i) * 3 + 2]) / 255.0f;
    }
    return out;
}

void save_image(const Tensor<float>& image, const std::string& path) {
    require(image.defined(), "save_image: undefined tensor");
    const Shape s = image.shape();
    require(s.n == 1 && s.c == 3, "save_image: expected (1,3,h,w), got " + s.str());

    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(plane) * 3);
    auto data = image.data();
    for (std::int64_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            const float v = std::min(1.0f, std::max(0.0f, data[ch * plane + i]));
            pixels[static_cast<std::size_t>(i) * 3 + ch] =
                static_cast<unsigned char>(std::lround(v * 255.0f));
        }
    }

    FileHandle file(path, "wb");
    if (!file.fp) {
        throw IoError("cannot open for writing: " + path);
    }
    PngWriter writer;
    if (!writer.png || !writer.info) {
        throw IoError("libpng initialization failed for " + path);
    }
    if (setjmp(png_jmpbuf(writer.png))) {
        throw IoError("failed to write PNG: " + path);
    }
    png_init_io(writer.png, file.fp);
    png_set_compression_level(writer.png, 6);
    png_set_IHDR(writer.png, writer.info, static_cast<png_uint_32>(s.w),
                 static_cast<png_uint_32>(s.h), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(writer.png, writer.info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(s.h));
    for (int y = 0; y < s.h; ++y) {
        rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * s.w * 3;
    }
    png_write_image(writer.png, rows.data());
    png_write_end(writer.png, nullptr);
}

std::pair<int, int> read_image_size(const std::string& path) {
    std::vector<unsigned char> unused;
    int h = 0, w = 0;
    decode_image(path, unused, h, w, true);
    return {h, w};
}

DatasetIndex index_dataset(const std::string& low_dir, const std::string& gt_dir) {
    const auto low = list_images(low_dir);
    const auto gt = list_images(gt_dir);

    DatasetIndex index;
    for (const auto& [name, path] : low) {
        auto it = gt.find(name);
        if (it == gt.end()) {
            index.unpaired_low.push_back(name);
            continue;
        }
        const auto [lh, lw] = read_image_size(path);
        const auto [gh, gw] = read_image_size(it->second);
        if (lh != gh || lw != gw) {
            throw InvalidDataset("dimension mismatch for '" + name + "': low " +
                                 std::to_string(lw) + "x" + std::to_string(lh) + ", gt " +
                                 std::to_string(gw) + "x" + std::to_string(gh));
        }
        index.records.push_back({name, path, it->second, lh, lw});
    }
    for (const auto& [name, path] : gt) {
        if (low.find(name) == low.end()) {
            index.unpaired_gt.push_back(name);
        }
    }
    if (index.records.empty()) {
        throw InvalidDataset("no paired images between " + low_dir + " and " + gt_dir);
    }
    return index;
}

PatchPair sample_patch(const ImagePairRecord& record, int size, Rng& rng, bool augment) {
    require(size >= 1, "sample_patch: size must be positive");
    require(record.height >= size && record.width >= size,
            "sample_patch: image " + record.filename + " smaller than patch " +
                std::to_string(size));

    const int oy = static_cast<int>(rng.next_below(record.height - size + 1));
    const int ox = static_cast<int>(rng.next_below(record.width - size + 1));
    const bool fh = augment && rng.next_bool();
    const bool fv = augment && rng.next_bool();

    auto low = crop_image(load_image(record.low_path), oy, ox, size);
    auto gt = crop_image(load_image(record.gt_path), oy, ox, size);
    return augment_flip({std::move(low), std::move(gt)}, fh, fv);
}

Tensor<float> center_crop(const Tensor<float>& t, int size) {
    require(t.defined(), "center_crop: undefined tensor");
    const Shape s = t.shape();
    require(s.h >= size && s.w >= size,
            "center_crop: tensor " + s.str() + " smaller than " + std::to_string(size));
    return crop_image(t, (s.h - size) / 2, (s.w - size) / 2, size);
}

Tensor<float> flip_image(const Tensor<float>& t, bool horizontal, bool vertical) {
    require(t.defined(), "flip_image: undefined tensor");
    if (!horizontal && !vertical) {
        return t;
    }
    const Shape s = t.shape();
    auto out = Tensor<float>::zeros(s);
    auto od = out.mutable_data();
    auto td = t.data();
    for (int in = 0; in < s.n; ++in) {
        for (int ic = 0; ic < s.c; ++ic) {
            for (int y = 0; y < s.h; ++y) {
                const int sy = vertical ? s.h - 1 - y : y;
                for (int x = 0; x < s.w; ++x) {
                    const int sx = horizontal ? s.w - 1 - x : x;
                    od[out.index(in, ic, y, x)] = td[t.index(in, ic, sy, sx)];
                }
            }
        }
    }
    return out;
}

PatchPair augment_flip(const PatchPair& pair, bool horizontal, bool vertical) {
    return {flip_image(pair.low, horizontal, vertical),
            flip_image(pair.gt, horizontal, vertical)};
}

}  // namespace hwmnet
