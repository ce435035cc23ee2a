#pragma once

#include <string>
#include <vector>

#include "hwmnet/tensor.hpp"

namespace hwmnet {

/// Peak signal-to-noise ratio in dB over all elements and channels jointly,
/// computed on [0,1] float images with peak 1.0 by default. Identical inputs
/// (zero MSE) return the cap of 100.
double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1.0, evaluated on fully valid windows, per channel and then
/// averaged. Symmetric in its arguments; ssim(x, x) == 1.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

struct ImageScore {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

/// Per-image scores plus their arithmetic means.
struct MetricReport {
    std::vector<ImageScore> images;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    void add(std::string name, double psnr_db, double ssim_value);
    void finalize();
};

}  // namespace hwmnet
