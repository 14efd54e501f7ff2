#include "priorformer/model.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "priorformer/encoder.hpp"
#include "priorformer/errors.hpp"

namespace priorformer {

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) { return init_params(config, seed); }

void check_video(const FeatureSequence& video, const ModelConfig& config) {
  video.validate();
  const EncoderConfig& e = config.encoder;
  auto expect = [&](const char* field, std::size_t got, std::size_t want) {
    if (got != want) {
      throw DimensionError("video '" + video.id + "': " + field + " is " + std::to_string(got) + ", model expects " +
                           std::to_string(want));
    }
  };
  expect("N (feature tokens)", video.tokens(), e.tokens);
  expect("C_feat", video.c_feat(), e.c_feat);
  expect("C_cont", video.c_cont(), e.c_cont);
  expect("C_dist", video.c_dist(), e.c_dist);
}

VideoForward forward_video(Graph& g, const FeatureSequence& video, const ModelVars& params, const ModelConfig& config) {
  check_video(video, config);
  const bool gru = config.ablation.use_gru;
  if (gru != params.temporal.cell.has_value()) {
    throw ConfigError(std::string("use_gru=") + (gru ? "true" : "false") +
                      " does not match the parameter set (GRU cell " +
                      (params.temporal.cell ? "present" : "absent") + ")");
  }

  std::vector<Var> scores;
  scores.reserve(video.frame_count());
  Var state;
  if (gru) state = g.constant(Tensor::zeros({config.gru_hidden}));
  for (const Frame& frame : video.frames) {
    Var quality = encode_frame(g.constant(frame.features), g.constant(frame.content), g.constant(frame.distortion),
                               params.encoder, config.encoder, config.ablation);
    if (gru) {
      state = gru_step(quality, state, *params.temporal.cell);
      scores.push_back(frame_score(state, params.temporal));
    } else {
      scores.push_back(frame_score(quality, params.temporal));
    }
  }
  Var q = ad::stack(scores);

  VideoForward out;
  PooledScore pooled = video_score(q, config.pooling);
  out.trace.q.assign(q.value().data().begin(), q.value().data().end());
  out.trace.m = std::move(pooled.memory);
  out.trace.c = std::move(pooled.current);
  out.score = config.ablation.use_temporal_pooling ? pooled.score : mean_score(q);
  out.trace.score = out.score.value().item();
  return out;
}

QualityTrace predict_video(const FeatureSequence& video, const ModelParams& params, const ModelConfig& config) {
  Graph g;
  ModelVars vars = bind_params(g, params, false);
  return forward_video(g, video, vars, config).trace;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'M', 'P'};

std::uint32_t to_u32(std::size_t v, const char* field) {
  if (v > 0xffffffffu) throw ConfigError(std::string(field) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

void write_config(detail::ByteWriter& out, const ModelConfig& c) {
  const EncoderConfig& e = c.encoder;
  out.u32(to_u32(e.layers, "layers"));
  out.u32(to_u32(e.heads, "heads"));
  out.u32(to_u32(e.d_model, "d_model"));
  out.u32(to_u32(e.d_ff, "d_ff"));
  out.u32(to_u32(e.tokens, "tokens"));
  out.u32(to_u32(e.c_feat, "c_feat"));
  out.u32(to_u32(e.c_cont, "c_cont"));
  out.u32(to_u32(e.c_dist, "c_dist"));
  out.u32(to_u32(c.gru_hidden, "gru_hidden"));
  out.u32(to_u32(c.pooling.tau, "tau"));
  out.f64(c.pooling.gamma);
  out.f64(e.layer_norm_eps);
  const Ablation& a = c.ablation;
  out.u32((a.use_content_token ? 1u : 0u) | (a.use_distortion_token ? 2u : 0u) |
          (a.use_temporal_pooling ? 4u : 0u) | (a.use_gru ? 8u : 0u));
  out.u64(c.seed);
}

ModelConfig read_config(detail::ByteReader& in) {
  ModelConfig c;
  EncoderConfig& e = c.encoder;
  e.layers = in.u32();
  e.heads = in.u32();
  e.d_model = in.u32();
  e.d_ff = in.u32();
  e.tokens = in.u32();
  e.c_feat = in.u32();
  e.c_cont = in.u32();
  e.c_dist = in.u32();
  c.gru_hidden = in.u32();
  c.pooling.tau = in.u32();
  c.pooling.gamma = in.f64();
  e.layer_norm_eps = in.f64();
  const std::uint32_t bits = in.u32();
  c.ablation.use_content_token = bits & 1u;
  c.ablation.use_distortion_token = bits & 2u;
  c.ablation.use_temporal_pooling = bits & 4u;
  c.ablation.use_gru = bits & 8u;
  c.seed = in.u64();
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_params(const ModelParams& params, const ModelConfig& config, std::uint32_t version) {
  detail::ByteWriter out;
  out.raw(kMagic, 4);
  out.u32(version);
  write_config(out, config);
  std::vector<std::pair<std::string, const Tensor*>> table;
  visit_params(params, [&](const std::string& name, const Tensor& t) { table.emplace_back(name, &t); });
  out.u32(to_u32(table.size(), "tensor count"));
  for (const auto& [name, t] : table) {
    out.u32(to_u32(name.size(), "tensor name"));
    out.raw(name.data(), name.size());
    out.u32(to_u32(t->rank(), "rank"));
    for (auto e : t->shape()) out.u32(to_u32(e, "extent"));
    for (double v : t->data()) out.f64(v);
  }
  auto& bytes = out.bytes();
  out.u32(crc32_ieee(bytes.data(), bytes.size()));
  return std::move(bytes);
}

StoredModel decode_params(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() >= 4 && !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw BadMagicError(what + ": bad magic (expected \"PFMP\")");
  }
  if (bytes.size() < 12) throw TruncatedError(what + ": file too short (" + std::to_string(bytes.size()) + " bytes)");
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader in(bytes.data(), body, what);
  in.str(4);
  const std::uint32_t version = in.u32();
  if (version != kParamsFileVersion) {
    throw VersionError(what + ": parameter file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kParamsFileVersion) + ")");
  }

  StoredModel model;
  model.config = read_config(in);
  const std::uint32_t count = in.u32();
  std::vector<std::pair<std::string, Tensor>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw FormatError(what + ": tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& e : shape) {
      e = in.u32();
      if (e == 0) throw FormatError(what + ": tensor '" + name + "' has a zero extent");
      if (e > in.remaining() / 8 / numel) {
        throw TruncatedError(what + ": tensor '" + name + "' of shape " + shape_str(shape) +
                             " does not fit in the remaining " + std::to_string(in.remaining()) + " bytes");
      }
      numel *= e;
    }
    std::vector<double> data(numel);
    for (auto& v : data) v = in.f64();
    table.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (in.remaining() != 0) {
    throw FormatError(what + ": " + std::to_string(in.remaining()) + " unexpected bytes before checksum");
  }
  detail::ByteReader tail(bytes.data() + body, 4, what);
  if (tail.u32() != crc32_ieee(bytes.data(), body)) throw ChecksumError(what + ": CRC-32 mismatch");

  try {
    model.config.validate();
    model.params = zero_params(model.config);
  } catch (const ConfigError& e) {
    throw FormatError(what + ": invalid embedded config: " + e.what());
  }
  std::size_t i = 0;
  visit_params(model.params, [&](const std::string& name, Tensor& t) {
    if (i >= table.size() || table[i].first != name) {
      throw FormatError(what + ": expected tensor '" + name + "' at position " + std::to_string(i) + ", found " +
                        (i < table.size() ? "'" + table[i].first + "'" : std::string("end of table")));
    }
    if (table[i].second.shape() != t.shape()) {
      throw FormatError(what + ": tensor '" + name + "' has shape " + shape_str(table[i].second.shape()) +
                        ", config implies " + shape_str(t.shape()));
    }
    t = std::move(table[i].second);
    ++i;
  });
  if (i != table.size()) throw FormatError(what + ": " + std::to_string(table.size() - i) + " unexpected tensors");
  return model;
}

void save_params(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_params(params, config));
}

StoredModel load_params(const std::filesystem::path& path) {
  return decode_params(detail::read_file_bytes(path.string()), "parameter file '" + path.string() + "'");
}

}  // namespace priorformer
