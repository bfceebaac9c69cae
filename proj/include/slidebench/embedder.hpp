#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slidebench/dataset_store.hpp"
#include "slidebench/raster.hpp"

namespace slidebench {

enum class EmbedderKind { Native, External };

struct EmbedderSpec {
    std::string embedder_id;  ///< empty => derived from (seed, dim) for native
    int dim = 128;
    EmbedderKind kind = EmbedderKind::Native;
    std::uint64_t seed = 42;

    std::string resolved_id() const;
};

/// Input width of the native embedder: 8 x 8 RGB.
inline constexpr int kNativeInputs = 192;

/// D x 192 matrix with entries 2 * u - 1, u = CounterRng::unit_at(seed, j * 192 + k).
class Projection {
public:
    Projection(int dim, std::uint64_t seed);
    int dim() const { return dim_; }
    double at(int row, int col) const { return weights_[static_cast<std::size_t>(row) * kNativeInputs + static_cast<std::size_t>(col)]; }

private:
    int dim_;
    std::vector<double> weights_;
};

/// Deterministic reference embedder:
///   1. area-average the square tile to 8 x 8 RGB (rounded to 8 bits),
///   2. flatten row-major, channel-interleaved, scale by 1/255,
///   3. project with the seeded D x 192 matrix (double, left-to-right sums),
///   4. L2-normalize (all-zero projections stay zero) and narrow to float.
std::vector<float> native_embed(const Raster& tile, const Projection& projection);
std::vector<float> native_embed(const Raster& tile, const EmbedderSpec& spec);

struct EmbedOptions {
    int batch = 64;
    int workers = 1;
    bool force = false;
    std::string adapter_cmd;  ///< external embedder command (kind == External)
};

struct EmbedSummary {
    std::vector<std::string> written;
    std::vector<std::string> skipped_existing;
    std::vector<std::string> empty;     ///< zero-tile slides, no file written
    std::vector<std::string> rejected;  ///< external outputs deleted after failing validation
};

/// Embeds every slide folder under `root` that has a manifest. Tiles are read
/// in manifest order; coords are copied from the manifest. Existing feature
/// files are kept unless `force`.
EmbedSummary embed_dataset(const std::filesystem::path& root, const EmbedderSpec& spec, const EmbedOptions& options = {});

/// mpp recorded by the crop stage in `<slide_dir>/run_config.json`.
double recorded_slide_mpp(const std::filesystem::path& slide_dir);

struct SlideConformance {
    std::string slide_id;
    bool ok = true;
    std::vector<std::string> reasons;
};

struct ConformanceReport {
    std::vector<SlideConformance> slides;
    bool all_ok() const;
    std::size_t failures() const;
    std::string to_text() const;
};

/// One slide folder: the feature file must load cleanly through
/// read_features and its coords must equal the manifest sequence.
SlideConformance validate_slide_features(const SlideEntry& slide);
ConformanceReport validate_features(const std::filesystem::path& root);

}  // namespace slidebench
