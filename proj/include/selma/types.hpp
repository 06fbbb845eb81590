#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>

namespace selma {

// Dense types used throughout the numeric core. Everything is dynamically
// sized and templated on the scalar so the same code runs in 32-bit training
// mode and 64-bit verification mode.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using VectorF = Vector<float>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

// Toy image canvas. Images are stored flat in (row, col, channel) order so
// the diffusion code can treat them as plain vectors.
inline constexpr int kImageH = 16;
inline constexpr int kImageW = 16;
inline constexpr int kImageC = 3;
inline constexpr int kImageDim = kImageH * kImageW * kImageC;  // 768

// Denoiser input layout: image | time embedding | prompt embedding.
inline constexpr int kTimeEmbDim = 32;
inline constexpr int kPromptEmbDim = 32;
inline constexpr int kDenoiserInDim = kImageDim + kTimeEmbDim + kPromptEmbDim;

struct Image {
  VectorF data = VectorF::Zero(kImageDim);

  float& at(int y, int x, int c) { return data[(y * kImageW + x) * kImageC + c]; }
  float at(int y, int x, int c) const { return data[(y * kImageW + x) * kImageC + c]; }
};

// 64-bit FNV-1a. Used for the hashed tokenizer buckets, scene hashing, and
// artifact fingerprints.
inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a64(b, 8, h);
}

std::string hex64(std::uint64_t v);

}  // namespace selma
