#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dadl/tensor.hpp"

namespace dadl {

// Channels-last image dataset with pixel values in [0,1].
struct Dataset {
    Tensor images;  // [n,h,w,c]
    std::vector<int> labels;
    std::string name;
    int num_classes = 0;

    int size() const { return images.defined() ? images.dim(0) : 0; }
    int height() const { return images.dim(1); }
    int width() const { return images.dim(2); }
    int channels() const { return images.dim(3); }

    void validate() const;  // pixel range + label range invariants
};

enum class CorruptionKind { gaussian_noise, gaussian_blur, contrast, pixelate, occlusion };

const char* corruption_kind_name(CorruptionKind kind);
CorruptionKind corruption_kind_from_name(const std::string& name);

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::gaussian_noise;
    int severity = 1;  // 1..5
    std::uint64_t seed = 0;
};

// Severity ladders, severity 1..5 maps to index 0..4. Pinned in config so
// tests can assert the exact values.
struct CorruptionLadders {
    double noise_sigma[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
    double blur_sigma[5] = {0.4, 0.6, 0.9, 1.3, 1.8};
    double contrast_factor[5] = {0.75, 0.6, 0.45, 0.3, 0.2};
    int pixelate_block[5] = {2, 3, 4, 6, 8};
    double occlusion_fraction[5] = {0.10, 0.15, 0.20, 0.25, 0.30};
};

// IDX (MNIST container format): big-endian magic 0x803 for images / 0x801 for
// labels. Pixels are scaled by 1/255 into [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

enum class CifarVariant { cifar10, cifar100 };

// Reads every *.bin file in `dir` (sorted by name). CIFAR-10 records are
// 1 label + 3072 pixel bytes; CIFAR-100 adds a leading coarse label byte and
// the fine label is used.
Dataset load_cifar_binary(const std::string& dir, CifarVariant variant = CifarVariant::cifar10);

// Class-conditional oriented stripe patterns plus pixel noise; balanced
// classes, deterministic in seed. Fast enough for CI smoke tests.
Dataset synth_shapes(int n, int image_size, int num_classes, std::uint64_t seed);

// Procedurally rendered digits 0-9 in MNIST-style grayscale images (random
// affine jitter, stroke field rendered from a 5x7 glyph atlas, pixel noise).
// `contrast` is the foreground-background intensity gap; small values make a
// fixed pixel-space attack radius proportionally stronger.
struct SynthDigitsOptions {
    int image_size = 20;
    double contrast = 0.55;
    double background = 0.20;
    double noise_sigma = 0.05;
    double jitter = 1.0;  // scales rotation/shift/scale jitter
};
Dataset synth_digits(int n, std::uint64_t seed, const SynthDigitsOptions& opt = {});

Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec, const CorruptionLadders& ladders = {});

// First n examples (fixture subsampling).
Dataset take(const Dataset& ds, int n);

struct Batch {
    Tensor x;                  // [b,h,w,c]
    std::vector<int> labels;   // length b
    std::vector<int> indices;  // dataset indices, length b
};

// Deterministic epoch partition: shuffles indices with a seed derived from
// (shuffle_seed, epoch), includes the final partial batch.
std::vector<Batch> epoch_batches(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed, int epoch);

// Single-consumer stream over epochs, same order as epoch_batches.
class BatchStream {
public:
    BatchStream(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed)
        : ds_(&ds), batch_size_(batch_size), seed_(shuffle_seed) {}
    void start_epoch(int epoch);
    bool next(Batch& out);

private:
    const Dataset* ds_;
    int batch_size_;
    std::uint64_t seed_;
    std::vector<Batch> batches_;
    std::size_t cursor_ = 0;
};

// Horizontal flip + 2-pixel random crop (zero-padded), the only train-time
// augmentation in this lab.
Batch augment_flip_crop(const Batch& batch, std::uint64_t seed, std::uint64_t step);

// Fixture round trip through the checkpoint tensor container.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace dadl
