#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hwmnet/rng.hpp"
#include "hwmnet/tensor.hpp"

namespace hwmnet {

/// One low/ground-truth pair; dimensions are validated equal at indexing.
struct ImagePairRecord {
    std::string filename;
    std::string low_path;
    std::string gt_path;
    int height = 0;
    int width = 0;
};

/// Records ordered lexicographically by filename. Files present on only one
/// side are reported, never silently dropped.
struct DatasetIndex {
    std::vector<ImagePairRecord> records;
    std::vector<std::string> unpaired_low;
    std::vector<std::string> unpaired_gt;
};

/// Decodes an 8-bit RGB PNG (or 8-bit RGB JPEG) into (1,3,h,w); byte k maps
/// to exactly k/255. Missing or corrupt files raise IoError, other encodings
/// UnsupportedFormat.
Tensor<float> load_image(const std::string& path);

/// Clamps to [0,1], rounds x*255 to the nearest byte and writes an 8-bit RGB
/// PNG. save(load(p)) reproduces p's pixels exactly for 8-bit sources.
void save_image(const Tensor<float>& image, const std::string& path);

/// Header-only probe; returns (height, width).
std::pair<int, int> read_image_size(const std::string& path);

/// Pairs images by identical filename in the two directories.
DatasetIndex index_dataset(const std::string& low_dir, const std::string& gt_dir);

struct PatchPair {
    Tensor<float> low;
    Tensor<float> gt;
};

/// Random crop plus optional flips, applied identically to both images. The
/// rng draw order is fixed: origin y, origin x, horizontal flip, vertical
/// flip (flip draws are consumed only when augment is on).
PatchPair sample_patch(const ImagePairRecord& record, int size, Rng& rng, bool augment = true);

Tensor<float> center_crop(const Tensor<float>& t, int size);

Tensor<float> flip_image(const Tensor<float>& t, bool horizontal, bool vertical);
PatchPair augment_flip(const PatchPair& pair, bool horizontal, bool vertical);

}  // namespace hwmnet
