// Command-line front end: train / infer / eval / flops / gradcheck / selfcheck.
// Exit codes: 0 success, 1 validation failure, 2 io or format error.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "hwmnet/dataset.hpp"
#include "hwmnet/errors.hpp"
#include "hwmnet/metrics.hpp"
#include "hwmnet/network.hpp"
#include "hwmnet/resample.hpp"
#include "hwmnet/train.hpp"

namespace fs = std::filesystem;
using namespace hwmnet;

namespace {

int worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) {
        n = 1;
    }
    if (const char* env = std::getenv("HWMNET_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1 && static_cast<unsigned>(cap) < n) {
                n = static_cast<unsigned>(cap);
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("HWMNET_THREADS must be a positive integer");
        }
    }
    return static_cast<int>(n);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NetworkConfig resolve_net_config(const std::string& config_path, int width, int levels) {
    NetworkConfig cfg;
    if (!config_path.empty()) {
        cfg = NetworkConfig::from_text(read_text_file(config_path));
    }
    if (levels > 0) {
        cfg.levels = levels;
        cfg.width_schedule.clear();
    }
    if (width > 0) {
        cfg.base_width = width;
        cfg.width_schedule.clear();
    }
    cfg.validate();
    return cfg;
}

HwmnetModelF model_from_checkpoint(const std::string& weights) {
    auto ckpt = load_checkpoint(weights);
    auto model = HwmnetModelF::build(ckpt.net_config, 0);
    apply_checkpoint(ckpt, model, nullptr);
    return model;
}

std::vector<fs::path> collect_images(const std::string& input) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (!entry.is_regular_file()) {
                continue;
            }
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            throw InvalidDataset("no images found in " + input);
        }
    } else if (fs::exists(input)) {
        files.emplace_back(input);
    } else {
        throw IoError("input not found: " + input);
    }
    return files;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;
    std::int64_t iters = -1;
    int batch = -1;
    int patch = -1;
    std::uint64_t seed = 0;
    int width = -1;
    int levels = -1;
    std::string loss = "mean";
    double lr_start = -1.0;
    double lr_end = -1.0;
    bool desk = false;
    bool no_augment = false;
};

int run_train(const TrainArgs& args) {
    NetworkConfig net = resolve_net_config(args.config, args.width, args.levels);
    TrainConfig cfg = args.desk ? TrainConfig::desk() : TrainConfig{};
    if (args.iters > 0) {
        cfg.iterations = args.iters;
    }
    if (args.batch > 0) {
        cfg.batch = args.batch;
    }
    if (args.patch > 0) {
        cfg.patch = args.patch;
    }
    if (args.lr_start > 0) {
        cfg.lr_start = args.lr_start;
    }
    if (args.lr_end > 0) {
        cfg.lr_end = args.lr_end;
    }
    cfg.seed = args.seed;
    cfg.loss_mode = args.loss == "global" ? LossMode::global_norm : LossMode::elementwise_mean;
    cfg.augment = !args.no_augment;
    cfg.validate(net.pad_multiple());

    const auto low_dir = (fs::path(args.data) / "low").string();
    const auto gt_dir = (fs::path(args.data) / "high").string();
    auto index = index_dataset(low_dir, gt_dir);
    std::cout << "indexed " << index.records.size() << " pairs";
    if (!index.unpaired_low.empty() || !index.unpaired_gt.empty()) {
        std::cout << " (" << index.unpaired_low.size() << " unpaired low, "
                  << index.unpaired_gt.size() << " unpaired gt)";
    }
    std::cout << "\n";
    for (const auto& orphan : index.unpaired_low) {
        std::cout << "  unpaired low: " << orphan << "\n";
    }
    for (const auto& orphan : index.unpaired_gt) {
        std::cout << "  unpaired gt: " << orphan << "\n";
    }

    fs::create_directories(args.out);
    auto model = HwmnetModelF::build(net, cfg.seed);
    AdamState adam(model.params());
    std::cout << "model: " << model.params().total_params() << " parameters, "
              << cfg.iterations << " iterations\n";

    std::ofstream csv(fs::path(args.out) / "loss.csv", std::ios::trunc);
    if (!csv) {
        throw IoError("cannot write loss curve in " + args.out);
    }
    csv << "iteration,lr,loss\n";

    TrainHooks hooks;
    hooks.on_loss = [&](const LossSample& s) {
        char line[96];
        std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g\n",
                      static_cast<long long>(s.iteration), s.lr, s.loss);
        csv << line;
        if ((s.iteration + 1) % 100 == 0 || s.iteration == 0) {
            std::cout << "iter " << (s.iteration + 1) << "/" << cfg.iterations << "  lr "
                      << s.lr << "  loss " << s.loss << "\n";
        }
    };
    hooks.on_checkpoint = [&](std::int64_t iteration) {
        char name[48];
        std::snprintf(name, sizeof(name), "ckpt_%06lld.hwmn",
                      static_cast<long long>(iteration));
        save_checkpoint((fs::path(args.out) / name).string(),
                        make_checkpoint(model, &adam, cfg, iteration));
    };

    train(model, adam, index, cfg, 0, cfg.iterations, hooks);
    save_checkpoint((fs::path(args.out) / "final.hwmn").string(),
                    make_checkpoint(model, &adam, cfg, cfg.iterations));
    std::cout << "wrote " << (fs::path(args.out) / "final.hwmn").string() << "\n";
    return 0;
}

// ---- infer -------------------------------------------------------------------

int run_infer(const std::string& weights, const std::string& input, const std::string& output) {
    auto model = model_from_checkpoint(weights);
    auto files = collect_images(input);
    fs::create_directories(output);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    const auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= files.size() || failed.load()) {
                return;
            }
            try {
                auto image = load_image(files[i].string());
                auto enhanced = model.forward(nullptr, image);
                const auto out_path = fs::path(output) / (files[i].stem().string() + ".png");
                save_image(enhanced, out_path.string());
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                failed.store(true);
                try {
                    throw;
                } catch (const std::exception& e) {
                    error_message = e.what();
                }
            }
        }
    };

    const int threads = std::min<int>(worker_count(), static_cast<int>(files.size()));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) {
            pool.emplace_back(work);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failed.load()) {
        throw IoError("inference failed: " + error_message);
    }
    std::cout << "enhanced " << files.size() << " image(s) into " << output << "\n";
    return 0;
}

// ---- eval --------------------------------------------------------------------

int run_eval(const std::string& weights, const std::string& low_dir, const std::string& gt_dir,
             int crop, const std::string& csv_path) {
    auto index = index_dataset(low_dir, gt_dir);
    HwmnetModelF model;
    const bool use_model = !weights.empty();
    if (use_model) {
        model = model_from_checkpoint(weights);
    }

    // metrics are defined on [0,1] images, so the raw network output is
    // clamped exactly the way image export clamps it
    const auto clamp01 = [](TensorF t) {
        for (auto& v : t.mutable_data()) {
            v = std::min(1.0f, std::max(0.0f, v));
        }
        return t;
    };

    MetricReport report;
    for (const auto& record : index.records) {
        auto low = load_image(record.low_path);
        auto gt = load_image(record.gt_path);
        if (crop > 0) {
            low = center_crop(low, crop);
            gt = center_crop(gt, crop);
        }
        auto output = use_model ? clamp01(model.forward(nullptr, low)) : low;
        report.add(record.filename, psnr(output, gt), ssim(output, gt));
    }
    report.finalize();

    std::printf("%-28s %10s %8s\n", "image", "psnr[dB]", "ssim");
    for (const auto& score : report.images) {
        std::printf("%-28s %10.4f %8.4f\n", score.name.c_str(), score.psnr_db, score.ssim);
    }
    std::printf("%-28s %10.4f %8.4f\n", "mean", report.mean_psnr, report.mean_ssim);

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) {
            throw IoError("cannot write " + csv_path);
        }
        csv << "image,psnr_db,ssim\n";
        char line[160];
        for (const auto& score : report.images) {
            std::snprintf(line, sizeof(line), "%s,%.17g,%.17g\n", score.name.c_str(),
                          score.psnr_db, score.ssim);
            csv << line;
        }
        std::snprintf(line, sizeof(line), "mean,%.17g,%.17g\n", report.mean_psnr,
                      report.mean_ssim);
        csv << line;
    }
    return 0;
}

// ---- flops -------------------------------------------------------------------

int run_flops(int height, int width, const std::string& config_path) {
    NetworkConfig cfg = resolve_net_config(config_path, -1, -1);
    auto report = count_cost(cfg, height, width);

    std::printf("%-28s %14s %18s\n", "layer", "params", "flops");
    for (const auto& layer : report.layers) {
        std::printf("%-28s %14lld %18lld\n", layer.name.c_str(),
                    static_cast<long long>(layer.params), static_cast<long long>(layer.flops));
    }
    std::printf("%-28s %14lld %18lld\n", "total", static_cast<long long>(report.total_params),
                static_cast<long long>(report.total_flops));
    std::printf("input %dx%d (evaluated at %dx%d): %.4f TFLOPs\n", report.input_w,
                report.input_h, report.eval_w, report.eval_h,
                static_cast<double>(report.total_flops) / 1e12);
    if (height == 400 && width == 592) {
        const double reference = 0.92e12;   // published HWMNet figure at this size
        std::printf("published HWMNet reference at 592x400: 0.92 TFLOPs (ratio %.3f)\n",
                    static_cast<double>(report.total_flops) / reference);
    }
    return 0;
}

// ---- gradcheck -----------------------------------------------------------------

struct GradCase {
    std::string name;
    double threshold;
    double error;
};

int run_gradcheck(std::uint64_t seed) {
    std::vector<GradCase> cases;
    Rng seeder(seed);

    const auto random_d = [&](Shape s, double lo, double hi) {
        auto t = TensorD::zeros(s);
        auto d = t.mutable_data();
        for (auto& v : d) {
            v = seeder.uniform(lo, hi);
        }
        return t;
    };
    const auto away_from_zero = [&](Shape s) {
        auto t = TensorD::zeros(s);
        auto d = t.mutable_data();
        for (auto& v : d) {
            const double mag = seeder.uniform(0.2, 1.0);
            v = seeder.next_bool() ? mag : -mag;
        }
        return t;
    };
    // primitives use the reference step 1e-5. Block and network checks sweep
    // the step: large steps straddle activation kinks, small ones amplify
    // rounding cancellation, and a correct gradient agrees at some step in
    // the valid range while a wrong one agrees at none.
    const auto check = [&](const std::string& name, double threshold,
                           const GraphBuilder<double>& f, const TensorD& x) {
        cases.push_back({name, threshold, grad_check<double>(f, x, 1e-5)});
    };
    const auto check_block = [&](const std::string& name, double threshold,
                                 const GraphBuilder<double>& f, const TensorD& x) {
        double best = std::numeric_limits<double>::infinity();
        for (double eps : {1e-4, 1e-5, 3e-6, 1e-6}) {
            best = std::min(best, grad_check<double>(f, x, eps));
        }
        cases.push_back({name, threshold, best});
    };

    // primitives
    {
        auto w = random_d({3, 2, 3, 3}, -0.5, 0.5);
        auto b = random_d({1, 3, 1, 1}, -0.2, 0.2);
        auto proj = random_d({1, 3, 6, 6}, -1, 1);
        check("conv2d", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, conv2d<double>(&g, t, w, b, 1), proj));
              },
              random_d({1, 2, 6, 6}, -1, 1));
        auto alpha = TensorD::full({1, 2, 1, 1}, 0.25);
        check("prelu", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, prelu<double>(&g, t, alpha));
              },
              away_from_zero({1, 2, 5, 5}));
        check("sigmoid+pool", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, global_avg_pool<double>(&g, sigmoid<double>(&g, t)));
              },
              random_d({1, 3, 4, 4}, -2, 2));
        auto sproj = random_d({1, 8, 1, 1}, -1, 1);
        check("softmax_over_branches", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g,
                                         mul<double>(&g, softmax_over_branches<double>(&g, t, 4), sproj));
              },
              random_d({1, 8, 1, 1}, -2, 2));
        auto wproj = random_d({1, 8, 3, 3}, -1, 1);
        check("dwt_haar", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, dwt_haar<double>(&g, t), wproj));
              },
              random_d({1, 2, 6, 6}, -1, 1));
        auto iproj = random_d({1, 2, 6, 6}, -1, 1);
        check("iwt_haar", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, iwt_haar<double>(&g, t), iproj));
              },
              random_d({1, 8, 3, 3}, -1, 1));
        auto rproj = random_d({1, 2, 7, 9}, -1, 1);
        check("bilinear_resize", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g,
                                         mul<double>(&g, bilinear_resize<double>(&g, t, 7, 9), rproj));
              },
              random_d({1, 2, 4, 5}, -1, 1));
        auto pproj = random_d({1, 2, 6, 7}, -1, 1);
        check("pad_reflect", 1e-6,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g,
                                         mul<double>(&g, pad_reflect<double>(&g, t, {3, 2}), pproj));
              },
              random_d({1, 2, 4, 4}, -1, 1));
    }

    // blocks
    const AttentionConfig att;
    Rng block_rng(seed + 1);
    {
        ParamStore<double> store;
        auto ca = ChannelAttention<double>::create(store, "ca", 16, att.ca_reduction, block_rng);
        auto proj = random_d({1, 16, 6, 6}, -1, 1);
        check_block("channel_attention", 1e-5,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, ca.forward(&g, t), proj));
              },
              random_d({1, 16, 6, 6}, -1, 1));
    }
    {
        ParamStore<double> store;
        auto sa = SpatialAttention<double>::create(store, "sa", att.sa_kernel, block_rng);
        auto proj = random_d({1, 8, 6, 6}, -1, 1);
        check_block("spatial_attention", 1e-5,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, sa.forward(&g, t), proj));
              },
              random_d({1, 8, 6, 6}, -1, 1));
    }
    {
        ParamStore<double> store;
        auto dau = DualAttentionUnit<double>::create(store, "dau", 8, att, block_rng);
        auto proj = random_d({1, 8, 8, 8}, -1, 1);
        check_block("dau", 1e-5,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, dau.forward(&g, t), proj));
              },
              away_from_zero({1, 8, 8, 8}));
    }
    {
        ParamStore<double> store;
        auto hwab = HalfWaveletBlock<double>::create(store, "hwab", 8, att, block_rng);
        auto proj = random_d({1, 8, 16, 16}, -1, 1);
        check_block("hwab", 1e-5,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, hwab.forward(&g, t), proj));
              },
              away_from_zero({1, 8, 16, 16}));
    }
    {
        ParamStore<double> store;
        auto skff =
            SelectiveFusion<double>::create(store, "skff", 8, 2, att.skff_reduction, block_rng);
        auto other = random_d({1, 8, 4, 4}, -1, 1);
        auto proj = random_d({1, 8, 4, 4}, -1, 1);
        check_block("skff", 1e-5,
              [&](GraphD& g, const TensorD& t) {
                  return sum_all<double>(&g, mul<double>(&g, skff.forward(&g, {t, other}), proj));
              },
              random_d({1, 8, 4, 4}, -1, 1));
    }
    {
        NetworkConfig small;
        small.levels = 3;
        small.base_width = 8;
        auto model = HwmnetModelD::build(small, seed + 2);
        auto target = random_d({1, 3, 16, 16}, 0, 1);
        check_block("end_to_end", 1e-4,
              [&](GraphD& g, const TensorD& t) {
                  return charbonnier_loss<double>(&g, model.forward(&g, t), target);
              },
              random_d({1, 3, 16, 16}, 0.1, 0.9));
    }

    bool all_ok = true;
    std::printf("%-24s %14s %10s  %s\n", "case", "max rel err", "threshold", "status");
    for (const auto& c : cases) {
        const bool ok = c.error < c.threshold;
        all_ok = all_ok && ok;
        std::printf("%-24s %14.3e %10.0e  %s\n", c.name.c_str(), c.error, c.threshold,
                    ok ? "ok" : "FAIL");
    }
    return all_ok ? 0 : 1;
}

// ---- selfcheck -----------------------------------------------------------------

int run_selfcheck(std::uint64_t seed) {
    int failures = 0;
    const auto verdict = [&](const std::string& what, bool ok) {
        std::printf("%-44s %s\n", what.c_str(), ok ? "ok" : "FAIL");
        if (!ok) {
            ++failures;
        }
    };
    Rng rng(seed);

    {
        auto x = TensorF::zeros({2, 6, 16, 16});
        auto d = x.mutable_data();
        for (auto& v : d) {
            v = static_cast<float>(rng.uniform(-1, 1));
        }
        auto back = iwt_haar<float>(nullptr, dwt_haar<float>(nullptr, x));
        double worst = 0, nx = 0, ny = 0;
        auto bd = back.data();
        auto xd = x.data();
        auto wd = dwt_haar<float>(nullptr, x);
        for (std::size_t i = 0; i < xd.size(); ++i) {
            worst = std::max(worst, std::abs(static_cast<double>(bd[i]) - xd[i]));
            nx += static_cast<double>(xd[i]) * xd[i];
        }
        for (float v : wd.data()) {
            ny += static_cast<double>(v) * v;
        }
        verdict("wavelet perfect reconstruction", worst < 1e-5);
        verdict("wavelet energy preservation",
                std::abs(std::sqrt(ny) - std::sqrt(nx)) / std::sqrt(nx) < 1e-5);

        auto u = pixel_unshuffle<float>(nullptr, x, 2);
        auto rt = pixel_shuffle<float>(nullptr, u, 2);
        bool exact = true;
        auto rd = rt.data();
        for (std::size_t i = 0; i < xd.size(); ++i) {
            exact = exact && rd[i] == xd[i];
        }
        verdict("pixel shuffle round trip", exact);

        auto same = bilinear_resize<float>(nullptr, x, 16, 16);
        bool ident = true;
        auto sd = same.data();
        for (std::size_t i = 0; i < xd.size(); ++i) {
            ident = ident && sd[i] == xd[i];
        }
        verdict("bilinear identity resize", ident);
    }
    {
        NetworkConfig small;
        small.levels = 3;
        small.base_width = 8;
        auto model = HwmnetModelF::build(small, seed);
        model.params().zero_all();
        auto y = TensorF::zeros({1, 3, 20, 28});
        auto d = y.mutable_data();
        for (auto& v : d) {
            v = static_cast<float>(rng.uniform(0, 1));
        }
        auto out = model.forward(nullptr, y);
        bool exact = out.shape() == y.shape();
        auto od = out.data();
        auto yd = y.data();
        for (std::size_t i = 0; exact && i < yd.size(); ++i) {
            exact = od[i] == yd[i];
        }
        verdict("zero-init network identity", exact);

        auto loss = charbonnier_loss<float>(nullptr, y, y);
        verdict("charbonnier identity loss = 1e-3", loss.data()[0] == 1e-3f);
    }
    {
        verdict("cosine schedule endpoints",
                cosine_lr(0, 100000, 1e-4, 1e-6) == 1e-4 &&
                    cosine_lr(100000, 100000, 1e-4, 1e-6) == 1e-6);

        auto a = TensorF::full({1, 3, 12, 12}, 0.75f);
        auto b = TensorF::full({1, 3, 12, 12}, 0.25f);
        verdict("psnr closed form (6.0206 dB)", std::abs(psnr(a, b) - 6.0206) < 1e-3);
        verdict("ssim closed form (0.6000)", std::abs(ssim(a, b) - 0.6000) < 1e-3);
        verdict("ssim self-similarity", ssim(a, a) == 1.0);
    }

    std::printf(failures == 0 ? "selfcheck passed\n" : "selfcheck FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HWMNet low-light image enhancement (from-scratch C++ implementation)"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string config;
    app.add_option("--seed", seed, "global RNG seed");
    app.add_option("--config", config, "network config file (key=value lines)");

    TrainArgs train_args;
    auto* cmd_train = app.add_subcommand("train", "train a model on a paired dataset");
    cmd_train->add_option("--data", train_args.data, "dataset root containing low/ and high/")
        ->required();
    cmd_train->add_option("--out", train_args.out, "output directory")->required();
    cmd_train->add_option("--iters", train_args.iters, "training iterations");
    cmd_train->add_option("--batch", train_args.batch, "batch size");
    cmd_train->add_option("--patch", train_args.patch, "training patch size");
    cmd_train->add_option("--width", train_args.width, "base channel width");
    cmd_train->add_option("--levels", train_args.levels, "hierarchy levels");
    cmd_train->add_option("--loss", train_args.loss, "loss mode: mean or global")
        ->check(CLI::IsMember({"mean", "global"}));
    cmd_train->add_option("--lr-start", train_args.lr_start, "initial learning rate");
    cmd_train->add_option("--lr-end", train_args.lr_end, "final learning rate");
    cmd_train->add_flag("--desk", train_args.desk, "desk-scale preset (2000 iters, 64px)");
    cmd_train->add_flag("--no-augment", train_args.no_augment, "disable flip augmentation");

    std::string infer_weights, infer_input, infer_output;
    auto* cmd_infer = app.add_subcommand("infer", "enhance an image or a directory");
    cmd_infer->add_option("--weights", infer_weights, "checkpoint file")->required();
    cmd_infer->add_option("--input", infer_input, "input image or directory")->required();
    cmd_infer->add_option("--output", infer_output, "output directory")->required();

    std::string eval_weights, eval_low, eval_gt, eval_csv;
    int eval_crop = 0;
    auto* cmd_eval = app.add_subcommand("eval", "PSNR/SSIM against ground truth");
    cmd_eval->add_option("--weights", eval_weights, "checkpoint (omit to score inputs directly)");
    cmd_eval->add_option("--low", eval_low, "low-light image directory")->required();
    cmd_eval->add_option("--gt", eval_gt, "ground-truth image directory")->required();
    cmd_eval->add_option("--center-crop", eval_crop, "evaluate on centered NxN crops");
    cmd_eval->add_option("--csv", eval_csv, "also write scores as CSV");

    int flops_h = 400, flops_w = 592;
    auto* cmd_flops = app.add_subcommand("flops", "per-layer FLOPs and parameter report");
    cmd_flops->add_option("--height", flops_h, "input height (default 400)");
    cmd_flops->add_option("--width", flops_w, "input width (default 592)");

    auto* cmd_gradcheck =
        app.add_subcommand("gradcheck", "double-precision finite-difference suite");
    auto* cmd_selfcheck = app.add_subcommand("selfcheck", "fast functional sanity checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        train_args.config = config;
        train_args.seed = seed;
        if (cmd_train->parsed()) {
            return run_train(train_args);
        }
        if (cmd_infer->parsed()) {
            return run_infer(infer_weights, infer_input, infer_output);
        }
        if (cmd_eval->parsed()) {
            return run_eval(eval_weights, eval_low, eval_gt, eval_crop, eval_csv);
        }
        if (cmd_flops->parsed()) {
            return run_flops(flops_h, flops_w, config);
        }
        if (cmd_gradcheck->parsed()) {
            return run_gradcheck(seed);
        }
        if (cmd_selfcheck->parsed()) {
            return run_selfcheck(seed);
        }
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const UnsupportedFormat& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const UnsupportedCheckpoint& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidDataset& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return 1;
    } catch (const InvalidState& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
