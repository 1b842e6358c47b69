#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pargrappa/tensor.hpp"

// File formats:
//   KTS1 — complex tensors: magic "KTS1", LE u32 rank, LE u32 dims (rank 2-4,
//          slowest first: time, coil, row, col), float64 (re, im) pairs in
//          row-major order, coil-then-time-major.
//   KMS1 — byte masks/labels: magic "KMS1", LE u32 rank=2, dims, u8 values.
// CSV and 8-bit PGM (with a plain-text scale sidecar) round out the exports.

namespace pargrappa::io {

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<Cx> data;  // row-major over dims
};

void write_kts(const std::filesystem::path& path, const Tensor& t);
Tensor read_kts(const std::filesystem::path& path);

// Convenience shapes.
void write_kts_series(const std::filesystem::path& path, const CoilSeries& s);   // rank 4
CoilSeries read_kts_series(const std::filesystem::path& path);
void write_kts_images(const std::filesystem::path& path, const std::vector<CxMat>& imgs);  // rank 3
std::vector<CxMat> read_kts_images(const std::filesystem::path& path);
void write_kts_image(const std::filesystem::path& path, const CxMat& img);       // rank 2
CxMat read_kts_image(const std::filesystem::path& path);

void write_kms(const std::filesystem::path& path, const ByteMat& m);
ByteMat read_kms(const std::filesystem::path& path);

void write_design_csv(const std::filesystem::path& path, const std::vector<int>& x);
std::vector<int> read_design_csv(const std::filesystem::path& path);

// Min-max scaled 8-bit grayscale; the applied (min, max) pair goes to
// <path>.scale.txt.
void write_pgm(const std::filesystem::path& path, const RMat& img);

}  // namespace pargrappa::io
