#include "priorformer/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "binary_io.hpp"
#include "priorformer/errors.hpp"

namespace priorformer {

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path);
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'P', 'F', 'V', 'F'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 5 * 4 + 4 + 4;
constexpr std::uint32_t kFlagMos = 1u;
// Refuse payloads beyond 64 GiB rather than attempt the allocation.
constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 36;

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return false;
  out = a * b;
  return true;
}

Tensor read_f32_tensor(detail::ByteReader& in, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<double>(in.f32());
  return t;
}

}  // namespace

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void FeatureSequence::validate() const {
  if (frames.empty()) throw ContractError("video '" + id + "' has no frames");
  const Frame& first = frames.front();
  if (first.features.rank() != 2) {
    throw DimensionError("video '" + id + "': feature map must be N x C_feat, got " +
                         shape_str(first.features.shape()));
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Frame& f = frames[t];
    if (f.features.shape() != first.features.shape() || f.content.shape() != Shape{first.content.size()} ||
        f.distortion.shape() != Shape{first.distortion.size()}) {
      throw DimensionError("video '" + id + "': frame " + std::to_string(t) + " shapes " +
                           shape_str(f.features.shape()) + "/" + shape_str(f.content.shape()) + "/" +
                           shape_str(f.distortion.shape()) + " differ from frame 0");
    }
  }
  if (mos && !std::isfinite(*mos)) throw ContractError("video '" + id + "': MOS is not finite");
}

std::vector<std::uint8_t> encode_feature_file(const FeatureSequence& seq) {
  seq.validate();
  detail::ByteWriter out;
  out.raw(kMagic, 4);
  out.u32(kFeatureFileVersion);
  out.u32(static_cast<std::uint32_t>(seq.frame_count()));
  out.u32(static_cast<std::uint32_t>(seq.tokens()));
  out.u32(static_cast<std::uint32_t>(seq.c_feat()));
  out.u32(static_cast<std::uint32_t>(seq.c_cont()));
  out.u32(static_cast<std::uint32_t>(seq.c_dist()));
  out.u32(seq.mos ? kFlagMos : 0u);
  out.f32(seq.mos ? static_cast<float>(*seq.mos) : 0.0f);
  for (const Frame& f : seq.frames) {
    for (double v : f.features.data()) out.f32(static_cast<float>(v));
    for (double v : f.content.data()) out.f32(static_cast<float>(v));
    for (double v : f.distortion.data()) out.f32(static_cast<float>(v));
  }
  auto& bytes = out.bytes();
  out.u32(crc32_ieee(bytes.data(), bytes.size()));
  return std::move(bytes);
}

FeatureSequence decode_feature_file(const std::vector<std::uint8_t>& bytes, const std::string& id) {
  const std::string what = id.empty() ? std::string("feature file") : "feature file '" + id + "'";
  if (bytes.size() >= 4 && !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw BadMagicError(what + ": bad magic (expected \"PFVF\")");
  }
  detail::ByteReader in(bytes.data(), bytes.size(), what);
  in.str(4);
  if (bytes.size() < kHeaderBytes) {
    throw TruncatedError(what + ": " + std::to_string(bytes.size()) + " bytes is shorter than the header");
  }
  const std::uint32_t version = in.u32();
  if (version != kFeatureFileVersion) {
    throw VersionError(what + ": unsupported version " + std::to_string(version) + " (expected " +
                       std::to_string(kFeatureFileVersion) + ")");
  }
  const std::uint64_t frames = in.u32(), tokens = in.u32(), c_feat = in.u32(), c_cont = in.u32(), c_dist = in.u32();
  const std::uint32_t flags = in.u32();
  const float mos = in.f32();
  if (frames == 0 || tokens == 0 || c_feat == 0 || c_cont == 0 || c_dist == 0) {
    throw FormatError(what + ": zero extent in header (T=" + std::to_string(frames) + ", N=" +
                      std::to_string(tokens) + ", C_feat=" + std::to_string(c_feat) + ", C_cont=" +
                      std::to_string(c_cont) + ", C_dist=" + std::to_string(c_dist) + ")");
  }
  if (flags & ~kFlagMos) throw FormatError(what + ": unknown flag bits " + std::to_string(flags));

  std::uint64_t map = 0, per_frame = 0, payload = 0;
  bool ok = checked_mul(tokens, c_feat, map);
  ok = ok && map <= std::numeric_limits<std::uint64_t>::max() - c_cont - c_dist;
  per_frame = map + c_cont + c_dist;
  ok = ok && checked_mul(per_frame, frames, payload) && checked_mul(payload, 4, payload);
  if (!ok || payload > kMaxPayloadBytes) {
    throw ShapeOverflowError(what + ": header shape T=" + std::to_string(frames) + " N=" + std::to_string(tokens) +
                             " C_feat=" + std::to_string(c_feat) + " C_cont=" + std::to_string(c_cont) +
                             " C_dist=" + std::to_string(c_dist) + " overflows the payload size limit");
  }
  const std::uint64_t expected = kHeaderBytes + payload + 4;
  if (bytes.size() < expected) {
    throw TruncatedError(what + ": header promises " + std::to_string(frames) + " frames (" +
                         std::to_string(expected) + " bytes) but file has " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError(what + ": " + std::to_string(bytes.size() - expected) + " trailing bytes after checksum");
  }
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader tail(bytes.data() + body, 4, what);
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual = crc32_ieee(bytes.data(), body);
  if (stored != actual) throw ChecksumError(what + ": CRC-32 mismatch");

  FeatureSequence seq;
  seq.id = id;
  if (flags & kFlagMos) {
    if (!std::isfinite(mos)) throw FormatError(what + ": MOS is not finite");
    seq.mos = static_cast<double>(mos);
  }
  seq.frames.reserve(frames);
  for (std::uint64_t t = 0; t < frames; ++t) {
    Frame f;
    f.features = read_f32_tensor(in, {tokens, c_feat});
    f.content = read_f32_tensor(in, {c_cont});
    f.distortion = read_f32_tensor(in, {c_dist});
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_feature_file(seq));
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(detail::read_file_bytes(path.string()), path.stem().string());
}

std::vector<FeatureSequence> read_feature_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pfvf") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<FeatureSequence> videos;
  videos.reserve(paths.size());
  for (const auto& p : paths) videos.push_back(read_feature_file(p));
  return videos;
}

void SynthSpec::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(std::string("synth: ") + field + " must be >= 1");
  };
  positive(videos, "videos");
  positive(frames, "frames");
  positive(tokens, "tokens");
  positive(c_feat, "c_feat");
  positive(c_cont, "c_cont");
  positive(c_dist, "c_dist");
  positive(content_clusters, "content_clusters");
  if (!(sigma >= 0)) throw ConfigError("synth: sigma must be >= 0");
  if (!(feature_signal >= 0)) throw ConfigError("synth: feature_signal must be >= 0");
  if (!(distortion_signal >= 0)) throw ConfigError("synth: distortion_signal must be >= 0");
}

std::vector<FeatureSequence> synth_dataset(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  auto random_direction = [&](Shape shape, double norm) {
    Tensor t(std::move(shape));
    double sq = 0.0;
    for (auto& v : t.data()) {
      v = unit(rng);
      sq += v * v;
    }
    if (norm >= 0) {
      const double k = norm / std::sqrt(sq);
      for (auto& v : t.data()) v *= k;
    }
    return t;
  };

  const Shape map_shape{spec.tokens, spec.c_feat};
  const Tensor b0 = random_direction(map_shape, -1);
  const Tensor b1 = random_direction(map_shape, spec.feature_signal);
  const Tensor d0 = random_direction({spec.c_dist}, -1);
  const Tensor d1 = random_direction({spec.c_dist}, spec.distortion_signal);
  std::vector<Tensor> centres;
  for (std::size_t k = 0; k < spec.content_clusters; ++k) centres.push_back(random_direction({spec.c_cont}, -1));

  std::uniform_real_distribution<double> quality(1.0, 5.0);
  std::uniform_int_distribution<std::size_t> cluster(0, spec.content_clusters - 1);
  auto noise = [&]() { return spec.sigma > 0 ? spec.sigma * unit(rng) : 0.0; };

  std::vector<FeatureSequence> videos;
  videos.reserve(spec.videos);
  for (std::size_t v = 0; v < spec.videos; ++v) {
    FeatureSequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", v);
    seq.id = id;
    const double s = quality(rng);
    const Tensor& centre = centres[cluster(rng)];
    seq.mos = s;
    for (std::size_t t = 0; t < spec.frames; ++t) {
      Frame f;
      f.features = Tensor(map_shape);
      for (std::size_t i = 0; i < f.features.size(); ++i) f.features[i] = b0[i] + s * b1[i] + noise();
      f.content = Tensor({spec.c_cont});
      for (std::size_t i = 0; i < f.content.size(); ++i) f.content[i] = centre[i] + noise();
      f.distortion = Tensor({spec.c_dist});
      for (std::size_t i = 0; i < f.distortion.size(); ++i) f.distortion[i] = d0[i] + s * d1[i] + noise();
      seq.frames.push_back(std::move(f));
    }
    videos.push_back(std::move(seq));
  }
  return videos;
}

}  // namespace priorformer
