#include "dadl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dadl/checkpoint.hpp"
#include "dadl/rng.hpp"

namespace dadl {

void Dataset::validate() const {
    if (!images.defined() || images.rank() != 4) throw ContractError("dataset images must be [n,h,w,c]");
    if (static_cast<int>(labels.size()) != images.dim(0)) throw ContractError("dataset label count mismatch");
    if (num_classes < 1) throw ContractError("dataset num_classes must be positive");
    for (std::int64_t i = 0; i < images.size(); ++i) {
        const double v = images[i];
        if (!(v >= 0.0 && v <= 1.0)) throw NumericError("pixel value outside [0,1] in dataset " + name);
    }
    for (int l : labels) {
        if (l < 0 || l >= num_classes) throw IndexError("label out of range in dataset " + name);
    }
}

const char* corruption_kind_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::gaussian_noise: return "gaussian_noise";
        case CorruptionKind::gaussian_blur: return "gaussian_blur";
        case CorruptionKind::contrast: return "contrast";
        case CorruptionKind::pixelate: return "pixelate";
        case CorruptionKind::occlusion: return "occlusion";
    }
    return "?";
}

CorruptionKind corruption_kind_from_name(const std::string& name) {
    if (name == "gaussian_noise") return CorruptionKind::gaussian_noise;
    if (name == "gaussian_blur") return CorruptionKind::gaussian_blur;
    if (name == "contrast") return CorruptionKind::contrast;
    if (name == "pixelate") return CorruptionKind::pixelate;
    if (name == "occlusion") return CorruptionKind::occlusion;
    throw ConfigError("unknown corruption kind: " + name);
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(std::string("IDX: missing ") + what);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    const std::uint32_t magic = read_be_u32(img, "image magic");
    if (magic != kIdxImagesMagic) throw FormatError("bad IDX image magic in " + images_path);
    const std::uint32_t n = read_be_u32(img, "count");
    const std::uint32_t h = read_be_u32(img, "height");
    const std::uint32_t w = read_be_u32(img, "width");
    const std::int64_t pixel_count = static_cast<std::int64_t>(n) * h * w;
    std::vector<unsigned char> bytes(static_cast<std::size_t>(pixel_count));
    img.read(reinterpret_cast<char*>(bytes.data()), pixel_count);
    if (img.gcount() != pixel_count) throw IoError("truncated IDX image file " + images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path);
    const std::uint32_t lmagic = read_be_u32(lab, "label magic");
    if (lmagic != kIdxLabelsMagic) throw FormatError("bad IDX label magic in " + labels_path);
    const std::uint32_t ln = read_be_u32(lab, "label count");
    if (ln != n) throw FormatError("IDX image/label count mismatch");
    std::vector<unsigned char> lbytes(ln);
    lab.read(reinterpret_cast<char*>(lbytes.data()), ln);
    if (lab.gcount() != static_cast<std::streamsize>(ln)) throw IoError("truncated IDX label file " + labels_path);

    Dataset ds;
    ds.images = Tensor(Shape{static_cast<int>(n), static_cast<int>(h), static_cast<int>(w), 1});
    for (std::int64_t i = 0; i < pixel_count; ++i) {
        ds.images[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]) / 255.0;
    }
    ds.labels.reserve(ln);
    int max_label = 0;
    for (unsigned char b : lbytes) {
        ds.labels.push_back(static_cast<int>(b));
        max_label = std::max(max_label, static_cast<int>(b));
    }
    ds.num_classes = std::max(10, max_label + 1);
    ds.name = "idx";
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.channels() != 1) throw ContractError("write_idx supports single-channel images only");
    {
        std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
        if (!img) throw IoError("cannot open " + images_path + " for writing");
        write_be_u32(img, kIdxImagesMagic);
        write_be_u32(img, static_cast<std::uint32_t>(ds.size()));
        write_be_u32(img, static_cast<std::uint32_t>(ds.height()));
        write_be_u32(img, static_cast<std::uint32_t>(ds.width()));
        std::vector<unsigned char> bytes(static_cast<std::size_t>(ds.images.size()));
        for (std::int64_t i = 0; i < ds.images.size(); ++i) {
            bytes[static_cast<std::size_t>(i)] =
                static_cast<unsigned char>(std::lround(std::clamp(ds.images[i], 0.0, 1.0) * 255.0));
        }
        img.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
    if (!lab) throw IoError("cannot open " + labels_path + " for writing");
    write_be_u32(lab, kIdxLabelsMagic);
    write_be_u32(lab, static_cast<std::uint32_t>(ds.labels.size()));
    for (int l : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

Dataset load_cifar_binary(const std::string& dir, CifarVariant variant) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .bin batch files in " + dir);

    const int label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
    const std::int64_t record = label_bytes + 3072;
    std::vector<unsigned char> raw;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw IoError("cannot open " + f);
        std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (buf.empty() || static_cast<std::int64_t>(buf.size()) % record != 0) {
            throw FormatError("CIFAR batch " + f + " is not a multiple of the record length");
        }
        raw.insert(raw.end(), buf.begin(), buf.end());
    }
    const std::int64_t n = static_cast<std::int64_t>(raw.size()) / record;
    Dataset ds;
    ds.images = Tensor(Shape{static_cast<int>(n), 32, 32, 3});
    ds.labels.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const unsigned char* rec = raw.data() + i * record;
        // CIFAR-100 records carry coarse then fine label; the fine one is used.
        ds.labels.push_back(static_cast<int>(rec[label_bytes - 1]));
        const unsigned char* planes = rec + label_bytes;
        double* img = ds.images.data() + i * 32 * 32 * 3;
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                for (int c = 0; c < 3; ++c) {
                    img[(y * 32 + x) * 3 + c] = static_cast<double>(planes[c * 1024 + y * 32 + x]) / 255.0;
                }
            }
        }
    }
    ds.num_classes = variant == CifarVariant::cifar10 ? 10 : 100;
    ds.name = variant == CifarVariant::cifar10 ? "cifar10" : "cifar100";
    return ds;
}

Dataset synth_shapes(int n, int image_size, int num_classes, std::uint64_t seed) {
    if (n < 1 || image_size < 2 || num_classes < 1) throw ConfigError("synth_shapes: arguments must be positive");
    Dataset ds;
    ds.images = Tensor(Shape{n, image_size, image_size, 1});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.num_classes = num_classes;
    ds.name = "synth_shapes";
    const double freq = 2.5;
    for (int i = 0; i < n; ++i) {
        const int k = i % num_classes;
        ds.labels[static_cast<std::size_t>(i)] = k;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const double theta = M_PI * static_cast<double>(k) / static_cast<double>(num_classes);
        const double cx = std::cos(theta), sx = std::sin(theta);
        const double amp = uniform(rng, 0.28, 0.38);
        double* img = ds.images.data() + static_cast<std::int64_t>(i) * image_size * image_size;
        for (int y = 0; y < image_size; ++y) {
            for (int x = 0; x < image_size; ++x) {
                const double u = static_cast<double>(x) / image_size;
                const double v = static_cast<double>(y) / image_size;
                double val = 0.5 + amp * std::sin(2.0 * M_PI * freq * (cx * u + sx * v));
                val += normal(rng, 0.0, 0.08);
                img[y * image_size + x] = std::clamp(val, 0.0, 1.0);
            }
        }
    }
    return ds;
}

namespace {

// 5x7 glyph atlas for digits 0..9, one bit per texel.
constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigitGlyphs = {{
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
}};

double glyph_texel(int digit, int gx, int gy) {
    if (gx < 0 || gx >= 5 || gy < 0 || gy >= 7) return 0.0;
    return (kDigitGlyphs[static_cast<std::size_t>(digit)][static_cast<std::size_t>(gy)] >> (4 - gx)) & 1u ? 1.0 : 0.0;
}

// Bilinear sample of the glyph treated as a continuous field on [0,5)x[0,7).
double glyph_sample(int digit, double u, double v) {
    const double fu = u - 0.5, fv = v - 0.5;
    const int x0 = static_cast<int>(std::floor(fu));
    const int y0 = static_cast<int>(std::floor(fv));
    const double ax = fu - x0, ay = fv - y0;
    const double t00 = glyph_texel(digit, x0, y0);
    const double t10 = glyph_texel(digit, x0 + 1, y0);
    const double t01 = glyph_texel(digit, x0, y0 + 1);
    const double t11 = glyph_texel(digit, x0 + 1, y0 + 1);
    return (1 - ax) * (1 - ay) * t00 + ax * (1 - ay) * t10 + (1 - ax) * ay * t01 + ax * ay * t11;
}

}  // namespace

Dataset synth_digits(int n, std::uint64_t seed, const SynthDigitsOptions& opt) {
    if (n < 1 || opt.image_size < 8) throw ConfigError("synth_digits: n must be positive, image_size >= 8");
    const int s = opt.image_size;
    Dataset ds;
    ds.images = Tensor(Shape{n, s, s, 1});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.num_classes = 10;
    ds.name = "synth_digits";
    for (int i = 0; i < n; ++i) {
        const int digit = i % 10;
        ds.labels[static_cast<std::size_t>(i)] = digit;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const double angle = normal(rng, 0.0, 0.10) * opt.jitter;
        const double zoom = 1.0 + normal(rng, 0.0, 0.07) * opt.jitter;
        const double shift_x = normal(rng, 0.0, 0.05 * s) * opt.jitter;
        const double shift_y = normal(rng, 0.0, 0.05 * s) * opt.jitter;
        const double gamma = std::exp(normal(rng, 0.0, 0.25) * opt.jitter);  // stroke weight
        const double ca = std::cos(angle), sa = std::sin(angle);
        // glyph box occupies ~72% of the image height
        const double cell = 0.72 * s / 7.0 * zoom;
        double* img = ds.images.data() + static_cast<std::int64_t>(i) * s * s;
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const double px = (x + 0.5) - s / 2.0 - shift_x;
                const double py = (y + 0.5) - s / 2.0 - shift_y;
                const double rx = (ca * px + sa * py) / cell;
                const double ry = (-sa * px + ca * py) / cell;
                const double u = rx + 2.5;
                const double v = ry + 3.5;
                double coverage = glyph_sample(digit, u, v);
                if (coverage > 0.0) coverage = std::pow(coverage, gamma);
                double val = opt.background + opt.contrast * coverage + normal(rng, 0.0, opt.noise_sigma);
                img[y * s + x] = std::clamp(val, 0.0, 1.0);
            }
        }
    }
    return ds;
}

namespace {

// One separable blur pass in difference form: exact on constant signals.
void blur_pass(const std::vector<double>& weights, int radius, const double* src, double* dst, int len, int stride) {
    for (int i = 0; i < len; ++i) {
        const double center = src[i * stride];
        double acc = center;
        for (int j = -radius; j <= radius; ++j) {
            const int k = std::clamp(i + j, 0, len - 1);
            acc += weights[static_cast<std::size_t>(j + radius)] * (src[k * stride] - center);
        }
        dst[i * stride] = acc;
    }
}

}  // namespace

Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec, const CorruptionLadders& ladders) {
    if (spec.severity < 1 || spec.severity > 5) throw ConfigError("corruption severity must be in 1..5");
    const int sev = spec.severity - 1;
    Dataset out;
    out.images = ds.images.clone();
    out.labels = ds.labels;
    out.num_classes = ds.num_classes;
    out.name = ds.name + "/" + corruption_kind_name(spec.kind) + "@" + std::to_string(spec.severity);
    const int n = ds.size(), h = ds.height(), w = ds.width(), c = ds.channels();
    const std::int64_t per_image = static_cast<std::int64_t>(h) * w * c;

    switch (spec.kind) {
        case CorruptionKind::gaussian_noise: {
            const double sigma = ladders.noise_sigma[sev];
            for (int i = 0; i < n; ++i) {
                Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
                double* img = out.images.data() + i * per_image;
                for (std::int64_t j = 0; j < per_image; ++j) {
                    img[j] = std::clamp(img[j] + normal(rng, 0.0, sigma), 0.0, 1.0);
                }
            }
            break;
        }
        case CorruptionKind::gaussian_blur: {
            const double sigma = ladders.blur_sigma[sev];
            const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
            std::vector<double> weights(static_cast<std::size_t>(2 * radius + 1));
            double sum = 0.0;
            for (int j = -radius; j <= radius; ++j) {
                weights[static_cast<std::size_t>(j + radius)] = std::exp(-0.5 * (j * j) / (sigma * sigma));
                sum += weights[static_cast<std::size_t>(j + radius)];
            }
            for (auto& wv : weights) wv /= sum;
            std::vector<double> tmp(static_cast<std::size_t>(per_image));
            for (int i = 0; i < n; ++i) {
                double* img = out.images.data() + i * per_image;
                // horizontal then vertical, per channel
                for (int y = 0; y < h; ++y) {
                    for (int ch = 0; ch < c; ++ch) {
                        blur_pass(weights, radius, img + (static_cast<std::int64_t>(y) * w) * c + ch,
                                  tmp.data() + (static_cast<std::int64_t>(y) * w) * c + ch, w, c);
                    }
                }
                for (int x = 0; x < w; ++x) {
                    for (int ch = 0; ch < c; ++ch) {
                        blur_pass(weights, radius, tmp.data() + static_cast<std::int64_t>(x) * c + ch,
                                  img + static_cast<std::int64_t>(x) * c + ch, h, w * c);
                    }
                }
                for (std::int64_t j = 0; j < per_image; ++j) img[j] = std::clamp(img[j], 0.0, 1.0);
            }
            break;
        }
        case CorruptionKind::contrast: {
            const double f = ladders.contrast_factor[sev];
            for (int i = 0; i < n; ++i) {
                double* img = out.images.data() + i * per_image;
                double mean = 0.0;
                for (std::int64_t j = 0; j < per_image; ++j) mean += img[j];
                mean /= static_cast<double>(per_image);
                for (std::int64_t j = 0; j < per_image; ++j) {
                    img[j] = std::clamp(mean + f * (img[j] - mean), 0.0, 1.0);
                }
            }
            break;
        }
        case CorruptionKind::pixelate: {
            const int block = ladders.pixelate_block[sev];
            for (int i = 0; i < n; ++i) {
                double* img = out.images.data() + i * per_image;
                for (int by = 0; by < h; by += block) {
                    for (int bx = 0; bx < w; bx += block) {
                        const int ey = std::min(by + block, h), ex = std::min(bx + block, w);
                        for (int ch = 0; ch < c; ++ch) {
                            double mean = 0.0;
                            int cnt = 0;
                            for (int y = by; y < ey; ++y) {
                                for (int x = bx; x < ex; ++x) {
                                    mean += img[(static_cast<std::int64_t>(y) * w + x) * c + ch];
                                    ++cnt;
                                }
                            }
                            mean /= cnt;
                            for (int y = by; y < ey; ++y) {
                                for (int x = bx; x < ex; ++x) {
                                    img[(static_cast<std::int64_t>(y) * w + x) * c + ch] = std::clamp(mean, 0.0, 1.0);
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case CorruptionKind::occlusion: {
            const double frac = ladders.occlusion_fraction[sev];
            const int side = std::max(1, static_cast<int>(std::lround(frac * std::min(h, w))));
            for (int i = 0; i < n; ++i) {
                Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
                const int oy = static_cast<int>(uniform(rng, 0.0, static_cast<double>(h - side)));
                const int ox = static_cast<int>(uniform(rng, 0.0, static_cast<double>(w - side)));
                double* img = out.images.data() + i * per_image;
                for (int y = oy; y < oy + side; ++y) {
                    for (int x = ox; x < ox + side; ++x) {
                        for (int ch = 0; ch < c; ++ch) img[(static_cast<std::int64_t>(y) * w + x) * c + ch] = 0.5;
                    }
                }
            }
            break;
        }
    }
    return out;
}

Dataset take(const Dataset& ds, int n) {
    if (n < 1 || n > ds.size()) throw ContractError("take: n out of range");
    Dataset out;
    out.images = Tensor(Shape{n, ds.height(), ds.width(), ds.channels()});
    const std::int64_t per_image = ds.images.size() / ds.size();
    std::copy(ds.images.data(), ds.images.data() + n * per_image, out.images.data());
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    return out;
}

std::vector<Batch> epoch_batches(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed, int epoch) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const int n = ds.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    const int h = ds.height(), w = ds.width(), c = ds.channels();
    const std::int64_t per_image = static_cast<std::int64_t>(h) * w * c;
    std::vector<Batch> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int b = std::min(batch_size, n - start);
        Batch batch;
        batch.x = Tensor(Shape{b, h, w, c});
        batch.labels.resize(static_cast<std::size_t>(b));
        batch.indices.resize(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            const int src = order[static_cast<std::size_t>(start + i)];
            batch.indices[static_cast<std::size_t>(i)] = src;
            batch.labels[static_cast<std::size_t>(i)] = ds.labels[static_cast<std::size_t>(src)];
            std::copy(ds.images.data() + src * per_image, ds.images.data() + (src + 1) * per_image,
                      batch.x.data() + i * per_image);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

void BatchStream::start_epoch(int epoch) {
    batches_ = epoch_batches(*ds_, batch_size_, seed_, epoch);
    cursor_ = 0;
}

bool BatchStream::next(Batch& out) {
    if (cursor_ >= batches_.size()) return false;
    out = batches_[cursor_++];
    return true;
}

Batch augment_flip_crop(const Batch& batch, std::uint64_t seed, std::uint64_t step) {
    const int b = batch.x.dim(0), h = batch.x.dim(1), w = batch.x.dim(2), c = batch.x.dim(3);
    Batch out;
    out.x = Tensor(batch.x.shape());
    out.labels = batch.labels;
    out.indices = batch.indices;
    const std::int64_t per_image = static_cast<std::int64_t>(h) * w * c;
    for (int i = 0; i < b; ++i) {
        Rng rng(derive_seed(derive_seed(seed, step), static_cast<std::uint64_t>(i)));
        const bool flip = uniform(rng, 0.0, 1.0) < 0.5;
        const int dy = static_cast<int>(uniform(rng, 0.0, 5.0)) - 2;
        const int dx = static_cast<int>(uniform(rng, 0.0, 5.0)) - 2;
        const double* src = batch.x.data() + i * per_image;
        double* dst = out.x.data() + i * per_image;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int sy = y + dy;
                int sx = x + dx;
                if (flip) sx = w - 1 - sx;
                for (int ch = 0; ch < c; ++ch) {
                    double v = 0.0;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                        v = src[(static_cast<std::int64_t>(sy) * w + sx) * c + ch];
                    }
                    dst[(static_cast<std::int64_t>(y) * w + x) * c + ch] = v;
                }
            }
        }
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    TensorContainer c;
    c.meta["kind"] = "dataset";
    c.meta["name"] = ds.name;
    c.meta["num_classes"] = ds.num_classes;
    Tensor labels(Shape{std::max(1, ds.size())});
    for (std::size_t i = 0; i < ds.labels.size(); ++i) labels[static_cast<std::int64_t>(i)] = ds.labels[i];
    c.tensors.emplace_back("images", ds.images);
    c.tensors.emplace_back("labels", labels);
    save_container(path, c);
}

Dataset load_dataset(const std::string& path) {
    TensorContainer c = load_container(path);
    if (!c.meta.contains("kind") || c.meta["kind"] != "dataset") throw FormatError("container is not a dataset");
    const Tensor* images = c.find("images");
    const Tensor* labels = c.find("labels");
    if (!images || !labels) throw FormatError("dataset container is missing tensors");
    Dataset ds;
    ds.images = *images;
    ds.labels.resize(static_cast<std::size_t>(labels->size()));
    for (std::int64_t i = 0; i < labels->size(); ++i) {
        ds.labels[static_cast<std::size_t>(i)] = static_cast<int>((*labels)[i]);
    }
    ds.labels.resize(static_cast<std::size_t>(ds.images.dim(0)));
    ds.num_classes = c.meta["num_classes"].get<int>();
    ds.name = c.meta["name"].get<std::string>();
    return ds;
}

}  // namespace dadl
