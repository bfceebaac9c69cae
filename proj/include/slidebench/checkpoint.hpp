#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slidebench/dataset_store.hpp"
#include "slidebench/mil_core.hpp"

namespace slidebench {

/// Checkpoint file, version 1. All integers are little-endian u32 unless
/// noted, strings are a u32 byte length followed by UTF-8 bytes.
///
///     "SBCKPT\0\1"                   8-byte magic
///     u32 version (= 1)
///     u32 model kind (0 SlideAve, 1 SlideMax, 2 ABMIL)
///     str embedder_id
///     u32 D, u32 L
///     u32 task count, then per task:
///         str name, u32 kind (0 classification, 1 regression),
///         str label_column, u32 class count, str class...,
///         f64le target_mean, f64le target_scale (regression targets are
///         standardized for training; 0 / 1 for classification)
///     u32 tensor count, then per tensor:
///         str name, u32 rank, u32 dims[rank], f32le data[prod(dims)]
///
/// Tensor order is V, U, w, then head<i>.W, head<i>.b per task.
struct Checkpoint {
    ModelKind kind = ModelKind::ABMIL;
    std::string embedder_id;
    std::vector<TaskConfig> tasks;
    std::vector<double> target_mean;   ///< per task
    std::vector<double> target_scale;  ///< per task
    MILParams<float> params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace slidebench
