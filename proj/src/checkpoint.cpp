#include "slidebench/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "slidebench/error.hpp"

namespace slidebench {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'B', 'C', 'K', 'P', 'T', '\0', '\1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void u32(std::uint32_t v) { raw(&v, 4); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void f32s(std::span<const float> v) { raw(v.data(), v.size() * 4); }
    void f64(double v) { raw(&v, 8); }
    void raw(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
    std::string out;
};

class Reader {
public:
    explicit Reader(const std::string& b) : bytes(b) {}
    void raw(void* p, std::size_t n) {
        if (pos + n > bytes.size()) fail(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v = 0.0;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const auto n = u32();
        if (n > bytes.size()) fail(ErrorCode::CorruptCheckpoint, "string length out of range");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    const std::string& bytes;
    std::size_t pos = 0;
};

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::span<float> data;
};

std::vector<NamedTensor> named_tensors(MILParams<float>& p) {
    std::vector<NamedTensor> out{
        {"V", {static_cast<std::uint32_t>(p.V.rows), static_cast<std::uint32_t>(p.V.cols)}, p.V.data},
        {"U", {static_cast<std::uint32_t>(p.U.rows), static_cast<std::uint32_t>(p.U.cols)}, p.U.data},
        {"w", {static_cast<std::uint32_t>(p.w.size())}, p.w},
    };
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
        auto& h = p.heads[i];
        const auto prefix = "head" + std::to_string(i);
        out.push_back({prefix + ".W", {static_cast<std::uint32_t>(h.W.rows), static_cast<std::uint32_t>(h.W.cols)}, h.W.data});
        out.push_back({prefix + ".b", {static_cast<std::uint32_t>(h.b.size())}, h.b});
    }
    return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.kind));
    w.str(ckpt.embedder_id);
    w.u32(static_cast<std::uint32_t>(ckpt.params.dim));
    w.u32(static_cast<std::uint32_t>(ckpt.params.hidden));
    w.u32(static_cast<std::uint32_t>(ckpt.tasks.size()));
    for (std::size_t i = 0; i < ckpt.tasks.size(); ++i) {
        const auto& t = ckpt.tasks[i];
        w.str(t.name);
        w.u32(t.kind == TaskKind::Classification ? 0 : 1);
        w.str(t.label_column);
        w.u32(static_cast<std::uint32_t>(t.classes.size()));
        for (const auto& c : t.classes) w.str(c);
        w.f64(i < ckpt.target_mean.size() ? ckpt.target_mean[i] : 0.0);
        w.f64(i < ckpt.target_scale.size() ? ckpt.target_scale[i] : 1.0);
    }
    auto params = ckpt.params;
    const auto tensors = named_tensors(params);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) w.u32(d);
        w.f32s(t.data);
    }
    return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) fail(ErrorCode::CorruptCheckpoint, "bad magic");
    if (r.u32() != kVersion) fail(ErrorCode::CorruptCheckpoint, "unsupported checkpoint version");
    Checkpoint ck;
    const auto kind = r.u32();
    if (kind > 2) fail(ErrorCode::CorruptCheckpoint, "unknown model kind");
    ck.kind = static_cast<ModelKind>(kind);
    ck.embedder_id = r.str();
    const int dim = static_cast<int>(r.u32());
    const int hidden = static_cast<int>(r.u32());
    const auto ntasks = r.u32();
    for (std::uint32_t i = 0; i < ntasks; ++i) {
        TaskConfig t;
        t.name = r.str();
        t.kind = r.u32() == 0 ? TaskKind::Classification : TaskKind::Regression;
        t.label_column = r.str();
        const auto nc = r.u32();
        for (std::uint32_t c = 0; c < nc; ++c) t.classes.push_back(r.str());
        ck.tasks.push_back(std::move(t));
        ck.target_mean.push_back(r.f64());
        ck.target_scale.push_back(r.f64());
    }
    ck.params = build_model<float>(ck.tasks, dim, std::max(1, hidden), ck.kind, 0);
    auto tensors = named_tensors(ck.params);
    if (r.u32() != tensors.size()) fail(ErrorCode::CorruptCheckpoint, "tensor count mismatch");
    for (auto& t : tensors) {
        if (r.str() != t.name) fail(ErrorCode::CorruptCheckpoint, "unexpected tensor, wanted " + t.name);
        const auto rank = r.u32();
        if (rank != t.dims.size()) fail(ErrorCode::CorruptCheckpoint, "rank mismatch for " + t.name);
        for (auto d : t.dims) {
            if (r.u32() != d) fail(ErrorCode::CorruptCheckpoint, "shape mismatch for " + t.name);
        }
        r.raw(t.data.data(), t.data.size() * 4);
    }
    if (r.pos != bytes.size()) fail(ErrorCode::CorruptCheckpoint, "trailing bytes");
    return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_text_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_text_file(path)); }

}  // namespace slidebench
