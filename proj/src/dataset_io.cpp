#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "flpoison/synthdata.hpp"

namespace flpoison {

namespace {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'L', 'P', 'D', 'S', 'E', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw std::runtime_error(path + ": truncated dataset file");
  return value;
}

}  // namespace

void write_dataset(const std::string& path, std::span<const Sample> samples, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  const std::uint64_t image_len = samples.empty() ? 0 : samples.front().image.size();
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(samples.size()));
  put(out, seed);
  put(out, image_len);
  put(out, static_cast<std::uint64_t>(kOutputWidth));
  for (const Sample& s : samples) {
    if (s.image.size() != image_len || s.target.size() != kOutputWidth) {
      throw std::invalid_argument(path + ": samples have inconsistent shapes");
    }
    out.write(reinterpret_cast<const char*>(s.image.data()), static_cast<std::streamsize>(s.image.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(s.target.data()),
              static_cast<std::streamsize>(s.target.size() * sizeof(double)));
    put(out, static_cast<std::uint8_t>(s.poisoned ? 1 : 0));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<Sample> read_dataset(const std::string& path, std::uint64_t* seed_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path + ": not a dataset file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw std::runtime_error(path + ": unsupported dataset version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in, path);
  const auto seed = get<std::uint64_t>(in, path);
  const auto image_len = get<std::uint64_t>(in, path);
  const auto target_len = get<std::uint64_t>(in, path);
  if (target_len != kOutputWidth) throw std::runtime_error(path + ": unexpected target width");
  if (seed_out != nullptr) *seed_out = seed;

  std::vector<Sample> samples(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample& s = samples[i];
    s.image.resize(image_len);
    s.target.resize(target_len);
    if (!in.read(reinterpret_cast<char*>(s.image.data()), static_cast<std::streamsize>(image_len * sizeof(float))) ||
        !in.read(reinterpret_cast<char*>(s.target.data()), static_cast<std::streamsize>(target_len * sizeof(double)))) {
      throw std::runtime_error(path + ": truncated dataset file");
    }
    s.poisoned = get<std::uint8_t>(in, path) != 0;
    s.id = i;
  }
  return samples;
}

}  // namespace flpoison
