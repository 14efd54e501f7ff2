#include "priorformer/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "priorformer/errors.hpp"
#include "priorformer/gradcheck.hpp"
#include "priorformer/model.hpp"

namespace priorformer::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

using Setter = std::function<void(const std::string&)>;

template <class T>
Setter number(T& field) {
  return [&field](const std::string& v) {
    T parsed{};
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("not a number: '" + v + "'");
    field = parsed;
  };
}

Setter boolean(bool& field) {
  return [&field](const std::string& v) {
    if (v == "true" || v == "1") {
      field = true;
    } else if (v == "false" || v == "0") {
      field = false;
    } else {
      throw ConfigError("not a boolean: '" + v + "'");
    }
  };
}

void apply(std::string_view text, const std::string& what, const std::map<std::string, Setter>& keys) {
  std::map<std::string, int> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const std::string where = what + ":" + std::to_string(lineno);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (seen.count(key)) throw ConfigError(where + ": '" + key + "' already set on line " + std::to_string(seen[key]));
    seen[key] = lineno;
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + key + ": " + e.what());
    }
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string optional_fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& what) {
  RunConfig c;
  EncoderConfig& e = c.model.encoder;
  TrainConfig& t = c.train;
  Ablation& a = c.model.ablation;
  const std::map<std::string, Setter> keys{
      {"layers", number(e.layers)},
      {"heads", number(e.heads)},
      {"d_model", number(e.d_model)},
      {"d_ff", number(e.d_ff)},
      {"tokens", number(e.tokens)},
      {"c_feat", number(e.c_feat)},
      {"c_cont", number(e.c_cont)},
      {"c_dist", number(e.c_dist)},
      {"layer_norm_eps", number(e.layer_norm_eps)},
      {"gru_hidden", number(c.model.gru_hidden)},
      {"tau", number(c.model.pooling.tau)},
      {"gamma", number(c.model.pooling.gamma)},
      {"seed", number(c.model.seed)},
      {"use_content_token", boolean(a.use_content_token)},
      {"use_distortion_token", boolean(a.use_distortion_token)},
      {"use_temporal_pooling", boolean(a.use_temporal_pooling)},
      {"use_gru", boolean(a.use_gru)},
      {"epochs", number(t.epochs)},
      {"lr", number(t.lr)},
      {"batch_size", number(t.batch_size)},
      {"optimizer",
       [&t](const std::string& v) {
         if (v == "adam") {
           t.optimizer = OptimizerKind::kAdam;
         } else if (v == "sgd") {
           t.optimizer = OptimizerKind::kSgd;
         } else {
           throw ConfigError("expected adam or sgd, got '" + v + "'");
         }
       }},
      {"beta1", number(t.beta1)},
      {"beta2", number(t.beta2)},
      {"adam_eps", number(t.adam_eps)},
      {"split_ratio", number(t.split_ratio)},
      {"train_seed", number(t.seed)},
      {"threads", number(t.threads)},
  };
  apply(text, what, keys);
  c.model.validate();
  t.validate();
  return c;
}

SynthSpec parse_synth_spec(std::string_view text, const std::string& what) {
  SynthSpec s;
  const std::map<std::string, Setter> keys{
      {"videos", number(s.videos)},
      {"frames", number(s.frames)},
      {"tokens", number(s.tokens)},
      {"c_feat", number(s.c_feat)},
      {"c_cont", number(s.c_cont)},
      {"c_dist", number(s.c_dist)},
      {"sigma", number(s.sigma)},
      {"content_clusters", number(s.content_clusters)},
      {"feature_signal", number(s.feature_signal)},
      {"distortion_signal", number(s.distortion_signal)},
      {"seed", number(s.seed)},
  };
  apply(text, what, keys);
  s.validate();
  return s;
}

namespace {

struct Options {
  std::size_t threads = 1;
  std::string spec, out_dir;
  std::string data, config, out;
  std::string params, video;
  std::vector<std::string> ablate;
  std::string gc_config;
  std::uint64_t seed = 0;
  std::size_t frames = 3;
};

int cmd_synth(const Options& o, std::ostream& out) {
  const SynthSpec spec = o.spec.empty() ? SynthSpec{} : parse_synth_spec(read_text(o.spec), o.spec);
  const auto videos = synth_dataset(spec);
  std::filesystem::create_directories(o.out_dir);
  for (const auto& v : videos) write_feature_file(v, std::filesystem::path(o.out_dir) / (v.id + ".pfvf"));
  out << "wrote " << videos.size() << " videos to " << o.out_dir << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : parse_run_config(read_text(o.config), o.config);
  if (o.threads > 1) rc.train.threads = o.threads;
  const auto videos = read_feature_dir(o.data);
  const DatasetSplit split = split_dataset(videos, rc.train.split_ratio, rc.train.seed);
  const TrainResult result = train(split.train, rc.model, rc.train, &split.test);
  out << "epoch\ttrain_l1\tval_plcc\tval_srcc\n";
  for (const auto& e : result.history) {
    out << e.epoch << '\t' << fmt(e.train_loss) << '\t' << optional_fmt(e.val_plcc) << '\t'
        << optional_fmt(e.val_srcc) << '\n';
  }
  save_params(result.params, rc.model, o.out);
  if (result.diverged) throw NumericError("training diverged (" + result.message + "); last finite state saved");
  out << format_report(evaluate(result.params, rc.model, split.test, rc.train.threads));
  return kOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const StoredModel model = load_params(o.params);
  const QualityTrace trace = predict_video(read_feature_file(o.video), model.params, model.config);
  for (std::size_t t = 0; t < trace.q.size(); ++t) out << "q\t" << t << '\t' << fmt(trace.q[t]) << '\n';
  out << "Q\t" << fmt(trace.score) << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  StoredModel model = load_params(o.params);
  Ablation& a = model.config.ablation;
  for (const auto& part : o.ablate) {
    if (part == "ct") a.use_content_token = false;
    if (part == "dt") a.use_distortion_token = false;
    if (part == "tp") a.use_temporal_pooling = false;
  }
  out << format_report(evaluate(model.params, model.config, read_feature_dir(o.data), o.threads));
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const ModelConfig config =
      o.gc_config.empty() ? gradcheck_config() : parse_run_config(read_text(o.gc_config), o.gc_config).model;
  const GradCheckReport r = check_model_gradients(config, o.seed, o.frames);
  constexpr double kTolerance = 1e-4;
  out << "parameters\t" << r.checked << '\n';
  out << "max_rel_error\t" << fmt(r.max_rel_error) << '\t' << r.worst_param << '[' << r.worst_index << "]\n";
  return r.max_rel_error < kTolerance ? kOk : kGradCheckFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PriorFormer video quality model: synthetic data, training, prediction and checks", "priorformer"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "Worker threads for per-video work")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Write a synthetic labelled dataset as PFVF files");
  synth->add_option("--spec", o.spec, "key=value generator spec (defaults when omitted)");
  synth->add_option("--out-dir", o.out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train on a directory of PFVF files and save parameters");
  tr->add_option("--data", o.data, "Directory of labelled .pfvf files")->required();
  tr->add_option("--config", o.config, "key=value model and training config");
  tr->add_option("--out", o.out, "Output parameter file (PFMP)")->required();

  auto* pr = app.add_subcommand("predict", "Print frame scores q_t and the video score Q");
  pr->add_option("--params", o.params, "Parameter file (PFMP)")->required();
  pr->add_option("--video", o.video, "Feature file (PFVF)")->required();

  auto* ev = app.add_subcommand("eval", "Report PLCC and SRCC on a labelled directory");
  ev->add_option("--params", o.params, "Parameter file (PFMP)")->required();
  ev->add_option("--data", o.data, "Directory of labelled .pfvf files")->required();
  ev->add_option("--ablate", o.ablate, "Remove a component at inference (repeatable)")
      ->check(CLI::IsMember({"ct", "dt", "tp"}));

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--config", o.gc_config, "key=value model config (tiny default when omitted)");
  gc->add_option("--seed", o.seed, "Parameter and input seed");
  gc->add_option("--frames", o.frames, "Frames in the random video")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*tr) return cmd_train(o, out);
    if (*pr) return cmd_predict(o, out);
    if (*ev) return cmd_eval(o, out);
    return cmd_gradcheck(o, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const UndefinedCorrelation& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kContract;
  }
}

}  // namespace priorformer::cli
