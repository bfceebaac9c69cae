#include "slidebench/dataset_store.hpp"

#include <hdf5.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "slidebench/error.hpp"

namespace slidebench {

// ---------------------------------------------------------------------------
// HDF5 feature files

namespace {

// The system libhdf5 is built without thread safety.
std::mutex& h5_mutex() {
    static std::mutex m;
    return m;
}

void quiet_hdf5() {
    static std::once_flag once;
    std::call_once(once, [] { H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr); });
}

class H5Handle {
public:
    using Closer = herr_t (*)(hid_t);
    H5Handle() = default;
    H5Handle(hid_t id, Closer closer) : id_(id), closer_(closer) {}
    H5Handle(const H5Handle&) = delete;
    H5Handle& operator=(const H5Handle&) = delete;
    H5Handle(H5Handle&& o) noexcept : id_(o.id_), closer_(o.closer_) { o.id_ = -1; }
    H5Handle& operator=(H5Handle&& o) noexcept {
        std::swap(id_, o.id_);
        std::swap(closer_, o.closer_);
        return *this;
    }
    ~H5Handle() {
        if (id_ >= 0 && closer_) closer_(id_);
    }
    hid_t get() const { return id_; }
    bool valid() const { return id_ >= 0; }

private:
    hid_t id_ = -1;
    Closer closer_ = nullptr;
};

H5Handle checked(hid_t id, H5Handle::Closer closer, const std::string& what) {
    if (id < 0) fail(ErrorCode::IoError, "HDF5 failure: " + what);
    return {id, closer};
}

void check(herr_t status, const std::string& what) {
    if (status < 0) fail(ErrorCode::IoError, "HDF5 failure: " + what);
}

void write_dataset(hid_t file, const char* name, hid_t file_type, hid_t mem_type, std::int64_t rows, std::int64_t cols,
                   const void* data) {
    const hsize_t dims[2] = {static_cast<hsize_t>(rows), static_cast<hsize_t>(cols)};
    auto space = checked(H5Screate_simple(2, dims, nullptr), H5Sclose, "dataspace");
    auto dcpl = checked(H5Pcreate(H5P_DATASET_CREATE), H5Pclose, "dcpl");
    check(H5Pset_obj_track_times(dcpl.get(), false), "track times");
    auto ds = checked(H5Dcreate2(file, name, file_type, space.get(), H5P_DEFAULT, dcpl.get(), H5P_DEFAULT), H5Dclose,
                      std::string("create ") + name);
    check(H5Dwrite(ds.get(), mem_type, H5S_ALL, H5S_ALL, H5P_DEFAULT, data), std::string("write ") + name);
}

void write_string_attr(hid_t obj, const char* name, const std::string& value) {
    auto type = checked(H5Tcopy(H5T_C_S1), H5Tclose, "string type");
    check(H5Tset_size(type.get(), std::max<std::size_t>(1, value.size())), "string size");
    check(H5Tset_strpad(type.get(), H5T_STR_NULLPAD), "string pad");
    auto space = checked(H5Screate(H5S_SCALAR), H5Sclose, "scalar space");
    auto attr = checked(H5Acreate2(obj, name, type.get(), space.get(), H5P_DEFAULT, H5P_DEFAULT), H5Aclose, name);
    std::string buf = value.empty() ? std::string(1, '\0') : value;
    check(H5Awrite(attr.get(), type.get(), buf.data()), name);
}

template <typename T>
void write_scalar_attr(hid_t obj, const char* name, hid_t file_type, hid_t mem_type, T value) {
    auto space = checked(H5Screate(H5S_SCALAR), H5Sclose, "scalar space");
    auto attr = checked(H5Acreate2(obj, name, file_type, space.get(), H5P_DEFAULT, H5P_DEFAULT), H5Aclose, name);
    check(H5Awrite(attr.get(), mem_type, &value), name);
}

H5Handle open_attr(hid_t obj, const char* name) {
    if (H5Aexists(obj, name) <= 0) fail(ErrorCode::MissingAttribute, std::string("attribute '") + name + "' absent");
    return checked(H5Aopen(obj, name, H5P_DEFAULT), H5Aclose, name);
}

std::string read_string_attr(hid_t obj, const char* name) {
    auto attr = open_attr(obj, name);
    auto type = checked(H5Aget_type(attr.get()), H5Tclose, name);
    if (H5Tget_class(type.get()) != H5T_STRING) fail(ErrorCode::DtypeMismatch, std::string("attribute '") + name + "' is not a string");
    if (H5Tis_variable_str(type.get()) > 0) {
        auto mem = checked(H5Tcopy(H5T_C_S1), H5Tclose, "vlen type");
        check(H5Tset_size(mem.get(), H5T_VARIABLE), "vlen size");
        char* ptr = nullptr;
        check(H5Aread(attr.get(), mem.get(), &ptr), name);
        std::string out = ptr ? ptr : "";
        auto space = checked(H5Aget_space(attr.get()), H5Sclose, "attr space");
        H5Dvlen_reclaim(mem.get(), space.get(), H5P_DEFAULT, &ptr);
        return out;
    }
    const std::size_t size = H5Tget_size(type.get());
    std::string buf(size, '\0');
    check(H5Aread(attr.get(), type.get(), buf.data()), name);
    buf.resize(std::strlen(buf.c_str()));
    return buf;
}

template <typename T>
T read_scalar_attr(hid_t obj, const char* name, H5T_class_t klass, hid_t mem_type) {
    auto attr = open_attr(obj, name);
    auto type = checked(H5Aget_type(attr.get()), H5Tclose, name);
    if (H5Tget_class(type.get()) != klass) fail(ErrorCode::DtypeMismatch, std::string("attribute '") + name + "' has the wrong type");
    T value{};
    check(H5Aread(attr.get(), mem_type, &value), name);
    return value;
}

struct DatasetShape {
    std::int64_t rows = 0, cols = 0;
};

H5Handle open_dataset(hid_t file, const char* name) {
    if (H5Lexists(file, name, H5P_DEFAULT) <= 0) fail(ErrorCode::MissingDataset, std::string("dataset '") + name + "' absent");
    return checked(H5Dopen2(file, name, H5P_DEFAULT), H5Dclose, name);
}

DatasetShape dataset_shape(hid_t ds, const char* name) {
    auto space = checked(H5Dget_space(ds), H5Sclose, name);
    if (H5Sget_simple_extent_ndims(space.get()) != 2) fail(ErrorCode::ShapeMismatch, std::string("dataset '") + name + "' must be 2-D");
    hsize_t dims[2] = {0, 0};
    H5Sget_simple_extent_dims(space.get(), dims, nullptr);
    return {static_cast<std::int64_t>(dims[0]), static_cast<std::int64_t>(dims[1])};
}

void require_type(hid_t ds, const char* name, H5T_class_t klass, std::size_t size, bool is_signed) {
    auto type = checked(H5Dget_type(ds), H5Tclose, name);
    bool ok = H5Tget_class(type.get()) == klass && H5Tget_size(type.get()) == size;
    if (ok && klass == H5T_INTEGER) ok = (H5Tget_sign(type.get()) == H5T_SGN_2) == is_signed;
    if (!ok) {
        fail(ErrorCode::DtypeMismatch, std::string("dataset '") + name + "' must be " +
                                           (klass == H5T_FLOAT ? "float" : "int") + std::to_string(size * 8));
    }
}

}  // namespace

void FeatureBag::validate() const {
    if (rows < 1) fail(ErrorCode::InvariantViolation, "feature bag '" + slide_id + "' is empty");
    if (dim < 1) fail(ErrorCode::InvariantViolation, "feature dimension must be positive");
    if (features.size() != static_cast<std::size_t>(rows * dim)) fail(ErrorCode::ShapeMismatch, "features buffer does not hold N x D values");
    if (coords.size() != static_cast<std::size_t>(rows * 2)) fail(ErrorCode::ShapeMismatch, "coords row count differs from features");
    for (float v : features) {
        if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "feature bag '" + slide_id + "' holds non-finite values");
    }
    for (std::int64_t i = 1; i < rows; ++i) {
        const auto py = coords[2 * (i - 1) + 1], px = coords[2 * (i - 1)];
        const auto cy = coords[2 * i + 1], cx = coords[2 * i];
        if (!(cy > py || (cy == py && cx > px))) {
            fail(ErrorCode::InvariantViolation, "coords not strictly increasing in (y, x) at row " + std::to_string(i));
        }
    }
}

void write_features(const std::filesystem::path& path, const FeatureBag& bag) {
    try {
        bag.validate();
    } catch (const Error& e) {
        fail(ErrorCode::InvariantViolation, std::string("refusing to write: ") + e.what());
    }
    std::lock_guard lock(h5_mutex());
    quiet_hdf5();
    auto fcpl = checked(H5Pcreate(H5P_FILE_CREATE), H5Pclose, "fcpl");
    check(H5Pset_obj_track_times(fcpl.get(), false), "root track times");
    auto file = checked(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, fcpl.get(), H5P_DEFAULT), H5Fclose, "create " + path.string());
    write_dataset(file.get(), "features", H5T_IEEE_F32LE, H5T_NATIVE_FLOAT, bag.rows, bag.dim, bag.features.data());
    write_dataset(file.get(), "coords_xy", H5T_STD_I32LE, H5T_NATIVE_INT32, bag.rows, 2, bag.coords.data());
    write_string_attr(file.get(), "slide_id", bag.slide_id);
    write_string_attr(file.get(), "embedder_id", bag.embedder_id);
    write_scalar_attr(file.get(), "mpp", H5T_IEEE_F64LE, H5T_NATIVE_DOUBLE, bag.mpp);
    write_scalar_attr(file.get(), "tile_size", H5T_STD_I64LE, H5T_NATIVE_INT64, static_cast<std::int64_t>(bag.tile_size));
    check(H5Fflush(file.get(), H5F_SCOPE_LOCAL), "flush");
}

FeatureBag read_features(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "no such file: " + path.string());
    FeatureBag bag;
    {
        std::lock_guard lock(h5_mutex());
        quiet_hdf5();
        if (H5Fis_hdf5(path.c_str()) <= 0) fail(ErrorCode::IoError, path.string() + " is not an HDF5 file");
        auto file = checked(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose, "open " + path.string());

        auto feats = open_dataset(file.get(), "features");
        auto coords = open_dataset(file.get(), "coords_xy");
        require_type(feats.get(), "features", H5T_FLOAT, 4, true);
        require_type(coords.get(), "coords_xy", H5T_INTEGER, 4, true);
        const auto fs = dataset_shape(feats.get(), "features");
        const auto cs = dataset_shape(coords.get(), "coords_xy");
        if (cs.cols != 2) fail(ErrorCode::ShapeMismatch, "coords_xy must have 2 columns");
        if (fs.rows != cs.rows) {
            fail(ErrorCode::ShapeMismatch, "features has " + std::to_string(fs.rows) + " rows but coords_xy has " + std::to_string(cs.rows));
        }
        bag.rows = fs.rows;
        bag.dim = fs.cols;
        bag.features.resize(static_cast<std::size_t>(fs.rows * fs.cols));
        bag.coords.resize(static_cast<std::size_t>(cs.rows * 2));
        if (!bag.features.empty()) check(H5Dread(feats.get(), H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, bag.features.data()), "read features");
        if (!bag.coords.empty()) check(H5Dread(coords.get(), H5T_NATIVE_INT32, H5S_ALL, H5S_ALL, H5P_DEFAULT, bag.coords.data()), "read coords_xy");

        bag.slide_id = read_string_attr(file.get(), "slide_id");
        bag.embedder_id = read_string_attr(file.get(), "embedder_id");
        bag.mpp = read_scalar_attr<double>(file.get(), "mpp", H5T_FLOAT, H5T_NATIVE_DOUBLE);
        bag.tile_size = read_scalar_attr<std::int64_t>(file.get(), "tile_size", H5T_INTEGER, H5T_NATIVE_INT64);
    }
    bag.validate();
    return bag;
}

// ---------------------------------------------------------------------------
// Dataset layout

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::IoError, "short write on " + path.string());
}

std::string to_string(Subset s) {
    switch (s) {
        case Subset::Train: return "train";
        case Subset::Val: return "val";
        case Subset::Test: return "test";
    }
    return "train";
}

Subset parse_subset(const std::string& s) {
    if (s == "train") return Subset::Train;
    if (s == "val") return Subset::Val;
    if (s == "test") return Subset::Test;
    fail(ErrorCode::MalformedConfig, "unknown split '" + s + "' (expected train, val or test)");
}

namespace {

std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<LabelValue> parse_cell(const TaskConfig& task, const std::string& cell) {
    if (task.kind == TaskKind::Classification) {
        auto it = std::find(task.classes.begin(), task.classes.end(), cell);
        if (it == task.classes.end()) return std::nullopt;
        return LabelValue{static_cast<int>(it - task.classes.begin())};
    }
    if (auto v = parse_double(cell)) return LabelValue{*v};
    return std::nullopt;
}

}  // namespace

std::vector<TaskConfig> parse_task_configs(const std::string& json_text) {
    std::vector<TaskConfig> tasks;
    try {
        const auto j = nlohmann::json::parse(json_text);
        for (const auto& t : j.at("tasks")) {
            TaskConfig task;
            task.name = t.at("name").get<std::string>();
            const auto kind = t.at("kind").get<std::string>();
            if (kind == "classification") task.kind = TaskKind::Classification;
            else if (kind == "regression") task.kind = TaskKind::Regression;
            else fail(ErrorCode::MalformedConfig, "task '" + task.name + "' has unknown kind '" + kind + "'");
            if (t.contains("classes")) task.classes = t.at("classes").get<std::vector<std::string>>();
            task.label_column = t.value("label_column", task.name);
            if (task.kind == TaskKind::Classification && task.classes.size() < 2) {
                fail(ErrorCode::MalformedConfig, "classification task '" + task.name + "' needs at least 2 classes");
            }
            if (task.kind == TaskKind::Regression && !task.classes.empty()) {
                fail(ErrorCode::MalformedConfig, "regression task '" + task.name + "' must not list classes");
            }
            std::set<std::string> uniq(task.classes.begin(), task.classes.end());
            if (uniq.size() != task.classes.size()) fail(ErrorCode::MalformedConfig, "task '" + task.name + "' repeats a class");
            for (const auto& other : tasks) {
                if (other.name == task.name) fail(ErrorCode::MalformedConfig, "duplicate task name '" + task.name + "'");
            }
            tasks.push_back(std::move(task));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedConfig, std::string("task_configs.json: ") + e.what());
    }
    if (tasks.empty()) fail(ErrorCode::MalformedConfig, "task_configs.json declares no tasks");
    return tasks;
}

std::string task_configs_to_json(const std::vector<TaskConfig>& tasks) {
    nlohmann::ordered_json j;
    j["tasks"] = nlohmann::ordered_json::array();
    for (const auto& t : tasks) {
        nlohmann::ordered_json o;
        o["name"] = t.name;
        o["kind"] = t.kind == TaskKind::Classification ? "classification" : "regression";
        if (t.kind == TaskKind::Classification) o["classes"] = t.classes;
        o["label_column"] = t.label_column;
        j["tasks"].push_back(o);
    }
    return j.dump(2) + "\n";
}

const LabelTable::Row* LabelTable::find(const std::string& slide_id) const {
    for (const auto& r : rows) {
        if (r.slide_id == slide_id) return &r;
    }
    return nullptr;
}

std::optional<std::size_t> LabelTable::column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
}

LabelTable parse_labels_csv(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty()) fail(ErrorCode::MalformedConfig, "labels.csv is empty");
    const auto header = split_csv_line(lines.front());
    if (header.size() < 2 || header[0] != "slide_id" || header[1] != "patient_id") {
        fail(ErrorCode::MalformedConfig, "labels.csv header must start with slide_id,patient_id");
    }
    LabelTable table;
    table.columns.assign(header.begin() + 2, header.end());
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = split_csv_line(lines[i]);
        if (cells.size() != header.size()) {
            fail(ErrorCode::MalformedConfig, "labels.csv row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                                                 " cells, expected " + std::to_string(header.size()));
        }
        if (cells[0].empty() || cells[1].empty()) fail(ErrorCode::MalformedConfig, "labels.csv row " + std::to_string(i) + " lacks ids");
        if (!seen.insert(cells[0]).second) fail(ErrorCode::DuplicateSlideId, "slide '" + cells[0] + "' appears twice in labels.csv");
        LabelTable::Row row{cells[0], cells[1], {}};
        for (std::size_t c = 2; c < cells.size(); ++c) {
            if (cells[c].empty()) row.cells.emplace_back(std::nullopt);
            else row.cells.emplace_back(cells[c]);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string labels_to_csv(const LabelTable& table) {
    std::string out = "slide_id,patient_id";
    for (const auto& c : table.columns) out += "," + c;
    out += "\n";
    for (const auto& r : table.rows) {
        out += r.slide_id + "," + r.patient_id;
        for (const auto& cell : r.cells) out += "," + cell.value_or("");
        out += "\n";
    }
    return out;
}

SplitMap parse_splits_csv(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty() || split_csv_line(lines.front()) != std::vector<std::string>{"slide_id", "split"}) {
        fail(ErrorCode::MalformedConfig, "splits.csv header must be slide_id,split");
    }
    SplitMap out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_csv_line(lines[i]);
        if (cells.size() != 2) fail(ErrorCode::MalformedConfig, "splits.csv row " + std::to_string(i) + " malformed");
        if (!out.emplace(cells[0], parse_subset(cells[1])).second) {
            fail(ErrorCode::DuplicateSlideId, "slide '" + cells[0] + "' appears twice in splits.csv");
        }
    }
    return out;
}

std::string splits_to_csv(const SplitMap& splits) {
    std::string out = "slide_id,split\n";
    for (const auto& [id, s] : splits) out += id + "," + to_string(s) + "\n";
    return out;
}

void validate_labels(const std::vector<TaskConfig>& tasks, const LabelTable& labels) {
    for (const auto& task : tasks) {
        const auto col = labels.column_index(task.label_column);
        if (!col) fail(ErrorCode::MalformedConfig, "task '" + task.name + "' binds missing column '" + task.label_column + "'");
        for (std::size_t r = 0; r < labels.rows.size(); ++r) {
            const auto& cell = labels.rows[r].cells[*col];
            if (cell && !parse_cell(task, *cell)) {
                fail(ErrorCode::MalformedConfig, "labels.csv row " + std::to_string(r + 1) + " (slide '" + labels.rows[r].slide_id +
                                                     "') column '" + task.label_column + "': invalid value '" + *cell + "'");
            }
        }
    }
}

const TaskConfig& Dataset::task(const std::string& name) const {
    for (const auto& t : tasks) {
        if (t.name == name) return t;
    }
    fail(ErrorCode::MalformedConfig, "dataset has no task named '" + name + "'");
}

const SlideEntry* Dataset::slide(const std::string& slide_id) const {
    for (const auto& s : slides) {
        if (s.slide_id == slide_id) return &s;
    }
    return nullptr;
}

std::optional<LabelValue> Dataset::label(const TaskConfig& task, const std::string& slide_id) const {
    const auto* row = labels.find(slide_id);
    if (!row) return std::nullopt;
    const auto col = labels.column_index(task.label_column);
    if (!col || !row->cells[*col]) return std::nullopt;
    return parse_cell(task, *row->cells[*col]);
}

std::vector<SlideEntry> scan_slides(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<SlideEntry> slides;
    if (!fs::is_directory(root)) return slides;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const auto name = entry.path().filename().string();
        if (name == "task-settings") continue;
        SlideEntry s;
        s.slide_id = name;
        s.dir = entry.path();
        s.has_manifest = fs::is_regular_file(s.manifest_path());
        s.has_tiles = fs::is_directory(s.dir / "tiles");
        s.has_features = fs::is_regular_file(s.features_path());
        if (s.has_manifest || s.has_tiles || s.has_features) slides.push_back(std::move(s));
    }
    std::sort(slides.begin(), slides.end(), [](const SlideEntry& a, const SlideEntry& b) { return a.slide_id < b.slide_id; });
    return slides;
}

Dataset load_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    Dataset ds;
    ds.root = root;
    const auto settings = root / "task-settings";
    if (!fs::is_regular_file(settings / "task_configs.json") || !fs::is_regular_file(settings / "labels.csv")) {
        fail(ErrorCode::MissingTaskSettings, "expected task_configs.json and labels.csv under " + settings.string());
    }
    ds.tasks = parse_task_configs(read_text_file(settings / "task_configs.json"));
    ds.labels = parse_labels_csv(read_text_file(settings / "labels.csv"));
    validate_labels(ds.tasks, ds.labels);
    if (fs::is_regular_file(settings / "splits.csv")) ds.splits = parse_splits_csv(read_text_file(settings / "splits.csv"));
    ds.slides = scan_slides(root);
    for (auto& s : ds.slides) s.labeled = ds.labels.find(s.slide_id) != nullptr;
    return ds;
}

}  // namespace slidebench
