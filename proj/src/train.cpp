#include "hwmnet/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hwmnet/errors.hpp"

namespace hwmnet {

// ---- TrainConfig ---------------------------------------------------------------

TrainConfig TrainConfig::desk() {
    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.patch = 64;
    cfg.eval_every = 500;
    cfg.checkpoint_every = 500;
    return cfg;
}

void TrainConfig::validate(int pad_multiple) const {
    require(iterations >= 1, "TrainConfig: iterations must be positive");
    require(batch >= 1, "TrainConfig: batch must be >= 1");
    require(patch >= 1 && patch % pad_multiple == 0,
            "TrainConfig: patch must divide by the pad multiple " +
                std::to_string(pad_multiple));
    require(lr_end <= lr_start && lr_end > 0.0, "TrainConfig: need 0 < lr_end <= lr_start");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "TrainConfig: betas must lie in [0, 1)");
    require(adam_eps > 0.0, "TrainConfig: adam_eps must be positive");
    require(crops_per_image >= 1, "TrainConfig: crops_per_image must be >= 1");
    require(eval_every >= 1 && checkpoint_every >= 1,
            "TrainConfig: hook cadences must be positive");
    if (clip_grad) {
        require(clip_norm > 0.0, "TrainConfig: clip_norm must be positive");
    }
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out << "iterations=" << iterations << "\n";
    out << "batch=" << batch << "\n";
    out << "patch=" << patch << "\n";
    out << "lr_start=" << format_double(lr_start) << "\n";
    out << "lr_end=" << format_double(lr_end) << "\n";
    out << "beta1=" << format_double(beta1) << "\n";
    out << "beta2=" << format_double(beta2) << "\n";
    out << "adam_eps=" << format_double(adam_eps) << "\n";
    out << "seed=" << seed << "\n";
    out << "eval_every=" << eval_every << "\n";
    out << "checkpoint_every=" << checkpoint_every << "\n";
    out << "loss_mode=" << (loss_mode == LossMode::elementwise_mean ? "mean" : "global") << "\n";
    out << "augment=" << (augment ? 1 : 0) << "\n";
    out << "crops_per_image=" << crops_per_image << "\n";
    out << "clip_grad=" << (clip_grad ? 1 : 0) << "\n";
    out << "clip_norm=" << format_double(clip_norm) << "\n";
    return out.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, "TrainConfig: malformed line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "iterations") {
                cfg.iterations = std::stoll(value);
            } else if (key == "batch") {
                cfg.batch = std::stoi(value);
            } else if (key == "patch") {
                cfg.patch = std::stoi(value);
            } else if (key == "lr_start") {
                cfg.lr_start = std::stod(value);
            } else if (key == "lr_end") {
                cfg.lr_end = std::stod(value);
            } else if (key == "beta1") {
                cfg.beta1 = std::stod(value);
            } else if (key == "beta2") {
                cfg.beta2 = std::stod(value);
            } else if (key == "adam_eps") {
                cfg.adam_eps = std::stod(value);
            } else if (key == "seed") {
                cfg.seed = std::stoull(value);
            } else if (key == "eval_every") {
                cfg.eval_every = std::stoll(value);
            } else if (key == "checkpoint_every") {
                cfg.checkpoint_every = std::stoll(value);
            } else if (key == "loss_mode") {
                require(value == "mean" || value == "global",
                        "TrainConfig: loss_mode must be 'mean' or 'global'");
                cfg.loss_mode =
                    value == "mean" ? LossMode::elementwise_mean : LossMode::global_norm;
            } else if (key == "augment") {
                cfg.augment = std::stoi(value) != 0;
            } else if (key == "crops_per_image") {
                cfg.crops_per_image = std::stoi(value);
            } else if (key == "clip_grad") {
                cfg.clip_grad = std::stoi(value) != 0;
            } else if (key == "clip_norm") {
                cfg.clip_norm = std::stod(value);
            } else {
                throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("TrainConfig: bad value in line '" + line + "'");
        }
    }
    return cfg;
}

// ---- schedule --------------------------------------------------------------------

double cosine_lr(std::int64_t t, std::int64_t total, double lr_start, double lr_end) {
    require(total >= 1, "cosine_lr: total iterations must be >= 1");
    require(t >= 0, "cosine_lr: negative iteration");
    if (t == 0) {
        return lr_start;
    }
    if (t >= total) {
        return lr_end;
    }
    const double phase = M_PI * static_cast<double>(t) / static_cast<double>(total);
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(phase));
}

// ---- Adam -------------------------------------------------------------------------

AdamState::AdamState(const ParamStore<float>& params) {
    m.resize(params.size());
    v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0f);
        v[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0f);
    }
}

void adam_step(ParamStore<float>& params, AdamState& state, double lr, const TrainConfig& cfg) {
    require(state.m.size() == params.size(), "adam_step: state does not match parameter store");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw InvalidState("adam_step: missing gradient for parameter '" + params.name(i) +
                               "'");
        }
    }
    state.step += 1;
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    const float bc1 = static_cast<float>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
    const float bc2 = static_cast<float>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
    const float eps = static_cast<float>(cfg.adam_eps);
    const float rate = static_cast<float>(lr);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].mutable_data();
        auto grad = params[i].grad();
        auto& mi = state.m[i];
        auto& vi = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const float g = grad[j];
            mi[j] = b1 * mi[j] + (1.0f - b1) * g;
            vi[j] = b2 * vi[j] + (1.0f - b2) * g * g;
            const float m_hat = mi[j] / bc1;
            const float v_hat = vi[j] / bc2;
            theta[j] -= rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

// ---- batch schedule ------------------------------------------------------------------

namespace {

constexpr std::uint64_t kStreamOrder = 0x4F524452;   // epoch shuffling
constexpr std::uint64_t kStreamPatch = 0x50415443;   // per-sample crops/flips

// epoch-major schedule: every record appears crops_per_image times per epoch
// in an order keyed by (seed, epoch); fully determined by the global sample
// index so resuming needs no extra state
class BatchSchedule {
public:
    BatchSchedule(const DatasetIndex& data, const TrainConfig& cfg)
        : data_(data), cfg_(cfg),
          epoch_size_(static_cast<std::int64_t>(data.records.size()) * cfg.crops_per_image) {}

    PatchPair draw(std::int64_t global_sample, std::string* record_name) {
        const std::int64_t epoch = global_sample / epoch_size_;
        const std::int64_t slot = global_sample % epoch_size_;
        if (epoch != cached_epoch_) {
            rebuild_order(epoch);
        }
        const std::int64_t record_idx = order_[static_cast<std::size_t>(slot)] / cfg_.crops_per_image;
        const auto& record = data_.records[static_cast<std::size_t>(record_idx)];
        if (record_name != nullptr) {
            *record_name = record.filename;
        }
        Rng stream = Rng::keyed(cfg_.seed, kStreamPatch, static_cast<std::uint64_t>(record_idx),
                                static_cast<std::uint64_t>(global_sample));
        return sample_patch(record, cfg_.patch, stream, cfg_.augment);
    }

private:
    void rebuild_order(std::int64_t epoch) {
        order_.resize(static_cast<std::size_t>(epoch_size_));
        std::iota(order_.begin(), order_.end(), 0);
        Rng shuffle = Rng::keyed(cfg_.seed, kStreamOrder, static_cast<std::uint64_t>(epoch));
        for (std::int64_t i = epoch_size_ - 1; i > 0; --i) {
            const std::int64_t j = shuffle.next_below(i + 1);
            std::swap(order_[static_cast<std::size_t>(i)], order_[static_cast<std::size_t>(j)]);
        }
        cached_epoch_ = epoch;
    }

    const DatasetIndex& data_;
    const TrainConfig& cfg_;
    std::int64_t epoch_size_;
    std::int64_t cached_epoch_ = -1;
    std::vector<std::int64_t> order_;
};

void clip_gradients(ParamStore<float>& params, double max_norm) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (float g : params[i].grad()) {
            sq += static_cast<double>(g) * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) {
        return;
    }
    const float factor = static_cast<float>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto gref = params[i].ensure_grad();
        for (auto& g : gref) {
            g *= factor;
        }
    }
}

}  // namespace

std::vector<LossSample> train(HwmnetModel<float>& model, AdamState& adam,
                              const DatasetIndex& data, const TrainConfig& cfg,
                              std::int64_t start_iteration, std::int64_t stop_iteration,
                              const TrainHooks& hooks) {
    cfg.validate(model.config().pad_multiple());
    require(!data.records.empty(), "train: dataset is empty");
    require(start_iteration >= 0 && start_iteration <= stop_iteration &&
                stop_iteration <= cfg.iterations,
            "train: need 0 <= start <= stop <= iterations");
    for (const auto& record : data.records) {
        require(record.height >= cfg.patch && record.width >= cfg.patch,
                "train: image " + record.filename + " smaller than the patch size");
    }

    BatchSchedule schedule(data, cfg);
    std::vector<LossSample> curve;
    curve.reserve(static_cast<std::size_t>(stop_iteration - start_iteration));

    for (std::int64_t t = start_iteration; t < stop_iteration; ++t) {
        auto low_batch = Tensor<float>::zeros({cfg.batch, 3, cfg.patch, cfg.patch});
        auto gt_batch = Tensor<float>::zeros({cfg.batch, 3, cfg.patch, cfg.patch});
        auto ld = low_batch.mutable_data();
        auto gd = gt_batch.mutable_data();
        const std::int64_t item = static_cast<std::int64_t>(3) * cfg.patch * cfg.patch;
        std::vector<std::string> batch_names(static_cast<std::size_t>(cfg.batch));
        for (int b = 0; b < cfg.batch; ++b) {
            auto pair = schedule.draw(t * cfg.batch + b, &batch_names[static_cast<std::size_t>(b)]);
            std::memcpy(ld.data() + b * item, pair.low.data().data(),
                        static_cast<std::size_t>(item) * sizeof(float));
            std::memcpy(gd.data() + b * item, pair.gt.data().data(),
                        static_cast<std::size_t>(item) * sizeof(float));
        }

        Graph<float> graph;
        auto prediction = model.forward(&graph, low_batch);
        auto loss = charbonnier_loss<float>(&graph, prediction, gt_batch, 1e-3, cfg.loss_mode);
        const double value = static_cast<double>(loss.data()[0]);
        const double lr = cosine_lr(t, cfg.iterations, cfg.lr_start, cfg.lr_end);
        if (!std::isfinite(value)) {
            std::string names;
            for (const auto& n : batch_names) {
                names += (names.empty() ? "" : ", ") + n;
            }
            throw InvalidState("train: non-finite loss at iteration " + std::to_string(t) +
                               " (lr " + format_double(lr) + ", batch [" + names + "])");
        }

        model.params().zero_grads();
        graph.backward(loss);
        if (cfg.clip_grad) {
            clip_gradients(model.params(), cfg.clip_norm);
        }
        adam_step(model.params(), adam, lr, cfg);

        const LossSample sample{t, lr, value};
        curve.push_back(sample);
        if (hooks.on_loss) {
            hooks.on_loss(sample);
        }
        if (hooks.on_checkpoint && (t + 1) % cfg.checkpoint_every == 0) {
            hooks.on_checkpoint(t + 1);
        }
        if (hooks.on_eval && (t + 1) % cfg.eval_every == 0) {
            hooks.on_eval(t + 1);
        }
    }
    return curve;
}

// ---- checkpoint serialization -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'W', 'M', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) {
            throw IoError("truncated checkpoint: " + path);
        }
    }
    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
        }
        pos += 8;
        return v;
    }
    float get_f32() { return std::bit_cast<float>(get_u32()); }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

Checkpoint make_checkpoint(const HwmnetModel<float>& model, const AdamState* adam,
                           const TrainConfig& cfg, std::int64_t iteration) {
    Checkpoint ckpt;
    ckpt.net_config = model.config();
    ckpt.train_config = cfg;
    ckpt.iteration = iteration;
    ckpt.rng_seed = cfg.seed;
    const auto& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.param_names.push_back(params.name(i));
        ckpt.param_values.push_back(params[i].clone());
    }
    if (adam != nullptr) {
        ckpt.has_optimizer = true;
        ckpt.adam_step_count = adam->step;
        ckpt.adam_m = adam->m;
        ckpt.adam_v = adam->v;
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, static_cast<std::uint64_t>(ckpt.iteration));
    put_u64(out, ckpt.rng_seed);
    put_u64(out, static_cast<std::uint64_t>(ckpt.adam_step_count));
    put_u32(out, ckpt.has_optimizer ? 1 : 0);

    const std::string net_text = ckpt.net_config.to_text();
    put_u64(out, net_text.size());
    out += net_text;
    const std::string train_text = ckpt.train_config.to_text();
    put_u64(out, train_text.size());
    out += train_text;

    put_u64(out, ckpt.param_names.size());
    for (std::size_t i = 0; i < ckpt.param_names.size(); ++i) {
        const auto& name = ckpt.param_names[i];
        const auto& tensor = ckpt.param_values[i];
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        const Shape s = tensor.shape();
        put_u32(out, static_cast<std::uint32_t>(s.n));
        put_u32(out, static_cast<std::uint32_t>(s.c));
        put_u32(out, static_cast<std::uint32_t>(s.h));
        put_u32(out, static_cast<std::uint32_t>(s.w));
        for (float v : tensor.data()) {
            put_f32(out, v);
        }
    }
    if (ckpt.has_optimizer) {
        for (std::size_t i = 0; i < ckpt.param_names.size(); ++i) {
            for (float v : ckpt.adam_m[i]) {
                put_f32(out, v);
            }
            for (float v : ckpt.adam_v[i]) {
                put_f32(out, v);
            }
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open checkpoint for writing: " + path);
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw IoError("failed to write checkpoint: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open checkpoint: " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    ByteReader reader{bytes, 0, path};

    const std::string magic = reader.get_string(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw UnsupportedCheckpoint("bad magic in " + path);
    }
    const std::uint32_t version = reader.get_u32();
    if (version != kVersion) {
        throw UnsupportedCheckpoint("unsupported checkpoint version " + std::to_string(version) +
                                    " in " + path);
    }

    Checkpoint ckpt;
    ckpt.iteration = static_cast<std::int64_t>(reader.get_u64());
    ckpt.rng_seed = reader.get_u64();
    ckpt.adam_step_count = static_cast<std::int64_t>(reader.get_u64());
    ckpt.has_optimizer = reader.get_u32() != 0;
    const std::size_t net_len = reader.get_u64();
    ckpt.net_config = NetworkConfig::from_text(reader.get_string(net_len));
    const std::size_t train_len = reader.get_u64();
    ckpt.train_config = TrainConfig::from_text(reader.get_string(train_len));

    const std::size_t count = reader.get_u64();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t name_len = reader.get_u32();
        std::string name = reader.get_string(name_len);
        Shape s;
        s.n = static_cast<int>(reader.get_u32());
        s.c = static_cast<int>(reader.get_u32());
        s.h = static_cast<int>(reader.get_u32());
        s.w = static_cast<int>(reader.get_u32());
        std::vector<float> values(static_cast<std::size_t>(s.numel()));
        for (auto& v : values) {
            v = reader.get_f32();
        }
        ckpt.param_names.push_back(std::move(name));
        ckpt.param_values.push_back(Tensor<float>::from_data(s, std::move(values)));
    }
    if (ckpt.has_optimizer) {
        ckpt.adam_m.resize(count);
        ckpt.adam_v.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t n = static_cast<std::size_t>(ckpt.param_values[i].numel());
            ckpt.adam_m[i].resize(n);
            for (auto& v : ckpt.adam_m[i]) {
                v = reader.get_f32();
            }
            ckpt.adam_v[i].resize(n);
            for (auto& v : ckpt.adam_v[i]) {
                v = reader.get_f32();
            }
        }
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, HwmnetModel<float>& model, AdamState* adam) {
    auto& params = model.params();
    if (ckpt.param_names.size() != params.size()) {
        throw UnsupportedCheckpoint("checkpoint has " + std::to_string(ckpt.param_names.size()) +
                                    " parameters, model expects " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (ckpt.param_names[i] != params.name(i) ||
            !(ckpt.param_values[i].shape() == params[i].shape())) {
            throw UnsupportedCheckpoint("checkpoint parameter '" + ckpt.param_names[i] +
                                        "' does not match model parameter '" + params.name(i) +
                                        "'");
        }
        auto dst = params[i].mutable_data();
        auto src = ckpt.param_values[i].data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    if (adam != nullptr) {
        if (!ckpt.has_optimizer) {
            throw UnsupportedCheckpoint("checkpoint carries no optimizer state");
        }
        adam->step = ckpt.adam_step_count;
        adam->m = ckpt.adam_m;
        adam->v = ckpt.adam_v;
    }
}

}  // namespace hwmnet
