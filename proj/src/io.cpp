#include "pargrappa/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "KTS1/KMS1 writers assume a little-endian host");

namespace pargrappa::io {

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw std::runtime_error("unexpected end of file");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  return f;
}

void check_magic(std::ifstream& f, const char expect[4], const std::filesystem::path& path) {
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, expect, 4) != 0)
    throw std::runtime_error("bad magic in " + path.string());
}

size_t element_count(const std::vector<std::uint32_t>& dims) {
  size_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw std::runtime_error("zero dimension");
    n *= d;
  }
  return n;
}

}  // namespace

void write_kts(const std::filesystem::path& path, const Tensor& t) {
  if (t.dims.size() < 2 || t.dims.size() > 4)
    throw std::invalid_argument("KTS1: rank must be 2-4");
  if (t.data.size() != element_count(t.dims))
    throw std::invalid_argument("KTS1: data size does not match dims");
  auto f = open_out(path);
  f.write("KTS1", 4);
  put_u32(f, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(f, d);
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(Cx)));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_kts(const std::filesystem::path& path) {
  auto f = open_in(path);
  check_magic(f, "KTS1", path);
  const std::uint32_t rank = get_u32(f);
  if (rank < 2 || rank > 4) throw std::runtime_error("KTS1: rank must be 2-4");
  Tensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) d = get_u32(f);
  t.data.resize(element_count(t.dims));
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(Cx)));
  if (!f) throw std::runtime_error("truncated KTS1 file: " + path.string());
  return t;
}

namespace {

void plane_to_rowmajor(const CxMat& m, Cx* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) *out++ = m(r, c);
}

void rowmajor_to_plane(const Cx* in, CxMat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = *in++;
}

}  // namespace

void write_kts_series(const std::filesystem::path& path, const CoilSeries& s) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(s.nt()), static_cast<std::uint32_t>(s.nc()),
            static_cast<std::uint32_t>(s.ny()), static_cast<std::uint32_t>(s.nx())};
  t.data.resize(element_count(t.dims));
  const size_t plane = static_cast<size_t>(s.ny()) * s.nx();
  for (int ti = 0; ti < s.nt(); ++ti)
    for (int c = 0; c < s.nc(); ++c)
      plane_to_rowmajor(s.at(ti, c), t.data.data() + (static_cast<size_t>(ti) * s.nc() + c) * plane);
  write_kts(path, t);
}

CoilSeries read_kts_series(const std::filesystem::path& path) {
  Tensor t = read_kts(path);
  if (t.dims.size() != 4) throw std::runtime_error("expected rank-4 KTS1: " + path.string());
  CoilSeries s(t.dims[0], t.dims[1], t.dims[2], t.dims[3]);
  const size_t plane = static_cast<size_t>(s.ny()) * s.nx();
  for (int ti = 0; ti < s.nt(); ++ti)
    for (int c = 0; c < s.nc(); ++c)
      rowmajor_to_plane(t.data.data() + (static_cast<size_t>(ti) * s.nc() + c) * plane, s.at(ti, c));
  return s;
}

void write_kts_images(const std::filesystem::path& path, const std::vector<CxMat>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("empty image series");
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(imgs.size()), static_cast<std::uint32_t>(imgs[0].rows()),
            static_cast<std::uint32_t>(imgs[0].cols())};
  t.data.resize(element_count(t.dims));
  const size_t plane = static_cast<size_t>(imgs[0].size());
  for (size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i].rows() != imgs[0].rows() || imgs[i].cols() != imgs[0].cols())
      throw std::invalid_argument("ragged image series");
    plane_to_rowmajor(imgs[i], t.data.data() + i * plane);
  }
  write_kts(path, t);
}

std::vector<CxMat> read_kts_images(const std::filesystem::path& path) {
  Tensor t = read_kts(path);
  if (t.dims.size() != 3) throw std::runtime_error("expected rank-3 KTS1: " + path.string());
  std::vector<CxMat> imgs(t.dims[0], CxMat(t.dims[1], t.dims[2]));
  const size_t plane = static_cast<size_t>(t.dims[1]) * t.dims[2];
  for (size_t i = 0; i < imgs.size(); ++i)
    rowmajor_to_plane(t.data.data() + i * plane, imgs[i]);
  return imgs;
}

void write_kts_image(const std::filesystem::path& path, const CxMat& img) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(img.rows()), static_cast<std::uint32_t>(img.cols())};
  t.data.resize(element_count(t.dims));
  plane_to_rowmajor(img, t.data.data());
  write_kts(path, t);
}

CxMat read_kts_image(const std::filesystem::path& path) {
  Tensor t = read_kts(path);
  if (t.dims.size() != 2) throw std::runtime_error("expected rank-2 KTS1: " + path.string());
  CxMat img(t.dims[0], t.dims[1]);
  rowmajor_to_plane(t.data.data(), img);
  return img;
}

void write_kms(const std::filesystem::path& path, const ByteMat& m) {
  auto f = open_out(path);
  f.write("KMS1", 4);
  put_u32(f, 2);
  put_u32(f, static_cast<std::uint32_t>(m.rows()));
  put_u32(f, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      f.put(static_cast<char>(m(r, c)));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

ByteMat read_kms(const std::filesystem::path& path) {
  auto f = open_in(path);
  check_magic(f, "KMS1", path);
  if (get_u32(f) != 2) throw std::runtime_error("KMS1: rank must be 2");
  const std::uint32_t ny = get_u32(f), nx = get_u32(f);
  ByteMat m(ny, nx);
  for (std::uint32_t r = 0; r < ny; ++r)
    for (std::uint32_t c = 0; c < nx; ++c) {
      int v = f.get();
      if (v == EOF) throw std::runtime_error("truncated KMS1 file: " + path.string());
      m(r, c) = static_cast<std::uint8_t>(v);
    }
  return m;
}

void write_design_csv(const std::filesystem::path& path, const std::vector<int>& x) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  for (int v : x) f << v << "\n";
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<int> read_design_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<int> x;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    x.push_back(std::stoi(line));
  }
  return x;
}

void write_pgm(const std::filesystem::path& path, const RMat& img) {
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  const double span = (hi > lo) ? (hi - lo) : 1.0;
  auto f = open_out(path);
  f << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      int v = static_cast<int>(std::lround((img(r, c) - lo) / span * 255.0));
      f.put(static_cast<char>(std::clamp(v, 0, 255)));
    }
  if (!f) throw std::runtime_error("write failed: " + path.string());
  std::ofstream side(path.string() + ".scale.txt");
  side << "min " << lo << "\nmax " << hi << "\n";
}

}  // namespace pargrappa::io
