// Stand-in external embedder speaking the adapter handoff protocol.
// FAKE_ADAPTER_MODE selects the behaviour: ok (default), f64, coords, fail, noop.

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

#include "h5_fixtures.hpp"
#include "slidebench/dataset_store.hpp"
#include "slidebench/png_io.hpp"
#include "slidebench/tiler.hpp"

int main(int argc, char** argv) {
    std::string tiles_dir, manifest, out, embedder_id;
    int dim = 0;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string key = argv[i];
        const std::string val = argv[i + 1];
        if (key == "--tiles-dir") tiles_dir = val;
        else if (key == "--manifest") manifest = val;
        else if (key == "--out") out = val;
        else if (key == "--dim") dim = std::stoi(val);
        else if (key == "--embedder-id") embedder_id = val;
        else {
            std::cerr << "unknown flag " << key << "\n";
            return 2;
        }
    }
    const char* env = std::getenv("FAKE_ADAPTER_MODE");
    const std::string mode = env ? env : "ok";
    if (tiles_dir.empty() || manifest.empty() || out.empty() || dim < 1 || embedder_id.empty()) {
        std::cerr << "missing arguments\n";
        return 2;
    }
    if (mode == "fail") return 3;
    if (mode == "noop") return 0;

    const auto records = slidebench::read_manifest(manifest);
    if (records.empty()) {
        std::cerr << "empty manifest\n";
        return 1;
    }
    if (mode == "f64") {
        h5fix::Parts p;
        p.n = static_cast<std::int64_t>(records.size());
        p.d = dim;
        p.features_f64 = true;
        h5fix::write(out, p);
        return 0;
    }
    slidebench::FeatureBag bag;
    bag.rows = static_cast<std::int64_t>(records.size());
    bag.dim = dim;
    const std::filesystem::path slide_dir = std::filesystem::path(tiles_dir).parent_path();
    for (const auto& r : records) {
        const auto tile = slidebench::read_png(slide_dir / r.path);
        std::uint64_t h = 1469598103934665603ULL;
        for (auto b : tile.data) h = (h ^ b) * 1099511628211ULL;
        for (int k = 0; k < dim; ++k) bag.features.push_back(static_cast<float>((h >> (k % 48)) & 0xffff) / 65535.0f);
        bag.coords.push_back(r.x);
        bag.coords.push_back(r.y);
    }
    if (mode == "coords") bag.coords[0] += 1;
    bag.slide_id = slide_dir.filename().string();
    bag.embedder_id = embedder_id;
    bag.mpp = 0.5;
    bag.tile_size = records.front().w;
    slidebench::write_features(out, bag);
    return 0;
}
