#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace slidebench {

/// Per-slide embeddings with the level-0 tile origins they came from.
struct FeatureBag {
    std::int64_t rows = 0;  ///< N
    std::int64_t dim = 0;   ///< D
    std::vector<float> features;      ///< N x D row-major
    std::vector<std::int32_t> coords; ///< N x 2 (x, y)
    std::string slide_id;
    std::string embedder_id;
    double mpp = 0.0;
    std::int64_t tile_size = 0;

    const float* row(std::int64_t i) const { return features.data() + i * dim; }

    /// Throws InvariantViolation / ShapeMismatch / NonFinite.
    void validate() const;
    bool operator==(const FeatureBag&) const = default;
};

/// HDF5 layout: "features" f32le [N, D], "coords_xy" i32le [N, 2], root
/// attributes slide_id, embedder_id (strings), mpp (f64), tile_size (i64).
/// Files carry no object timestamps, so identical bags give identical bytes.
/// Throws InvariantViolation when the bag breaks its invariants.
void write_features(const std::filesystem::path& path, const FeatureBag& bag);

/// Reads and revalidates. Errors: MissingDataset, MissingAttribute,
/// DtypeMismatch, ShapeMismatch, NonFinite, InvariantViolation, IoError.
FeatureBag read_features(const std::filesystem::path& path);

enum class TaskKind { Classification, Regression };

struct TaskConfig {
    std::string name;
    TaskKind kind = TaskKind::Classification;
    std::vector<std::string> classes;  ///< classification only, >= 2
    std::string label_column;

    std::size_t output_width() const { return kind == TaskKind::Classification ? classes.size() : 1; }
    bool operator==(const TaskConfig&) const = default;
};

/// Either a class index or a regression target.
using LabelValue = std::variant<int, double>;

struct LabelTable {
    std::vector<std::string> columns;  ///< task columns, header order (excludes slide_id, patient_id)
    struct Row {
        std::string slide_id;
        std::string patient_id;
        std::vector<std::optional<std::string>> cells;  ///< one per column; nullopt = missing
    };
    std::vector<Row> rows;

    const Row* find(const std::string& slide_id) const;
    std::optional<std::size_t> column_index(const std::string& name) const;
};

enum class Subset { Train, Val, Test };
std::string to_string(Subset s);
Subset parse_subset(const std::string& s);

using SplitMap = std::map<std::string, Subset>;

struct SlideEntry {
    std::string slide_id;
    std::filesystem::path dir;
    bool has_manifest = false;
    bool has_tiles = false;
    bool has_features = false;
    bool labeled = false;

    std::filesystem::path manifest_path() const { return dir / "tile_manifest.jsonl"; }
    std::filesystem::path features_path() const { return dir / (slide_id + ".h5"); }
};

struct Dataset {
    std::filesystem::path root;
    std::vector<SlideEntry> slides;  ///< sorted by slide_id
    std::vector<TaskConfig> tasks;
    LabelTable labels;
    std::optional<SplitMap> splits;

    const TaskConfig& task(const std::string& name) const;
    const SlideEntry* slide(const std::string& slide_id) const;
    /// Parsed label of `slide_id` for `task`, or nullopt when missing.
    std::optional<LabelValue> label(const TaskConfig& task, const std::string& slide_id) const;
    std::filesystem::path settings_dir() const { return root / "task-settings"; }
};

/// Enumerates slide folders and parses task-settings/. Errors:
/// MissingTaskSettings, MalformedConfig, DuplicateSlideId.
Dataset load_dataset(const std::filesystem::path& root);

/// Slide folders only; task-settings is not required.
std::vector<SlideEntry> scan_slides(const std::filesystem::path& root);

std::vector<TaskConfig> parse_task_configs(const std::string& json_text);
std::string task_configs_to_json(const std::vector<TaskConfig>& tasks);
LabelTable parse_labels_csv(const std::string& text);
std::string labels_to_csv(const LabelTable& table);
SplitMap parse_splits_csv(const std::string& text);
std::string splits_to_csv(const SplitMap& splits);

/// Checks every labels cell against its task (class token / number).
void validate_labels(const std::vector<TaskConfig>& tasks, const LabelTable& labels);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace slidebench
