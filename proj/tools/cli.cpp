#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dyntex/container.hpp"
#include "dyntex/gram.hpp"
#include "dyntex/network.hpp"
#include "dyntex/synthesis.hpp"
#include "dyntex/video_io.hpp"

namespace dyntex::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kDefaultLayers{"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
constexpr std::size_t kDefaultDeltaT = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// ---- config file --------------------------------------------------------

std::string key_to_flag(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::size_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw UsageError("config: " + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw UsageError("config: " + key + " must be a string");
  return v.get<std::string>();
}

using Setter = std::function<void(RunConfig&, const json&, const fs::path& base)>;

Setter path_setter(std::string RunConfig::*field, std::string key) {
  return [field, key](RunConfig& c, const json& v, const fs::path& base) {
    const fs::path p = as_string(v, key);
    c.*field = (p.is_relative() ? base / p : p).string();
  };
}

Setter string_setter(std::string RunConfig::*field, std::string key) {
  return [field, key](RunConfig& c, const json& v, const fs::path&) { c.*field = as_string(v, key); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"frames", path_setter(&RunConfig::frames, "frames")},
      {"stats", path_setter(&RunConfig::stats, "stats")},
      {"net", path_setter(&RunConfig::net, "net")},
      {"weights", path_setter(&RunConfig::weights, "weights")},
      {"seed_frames", path_setter(&RunConfig::seed_frames, "seed_frames")},
      {"out", path_setter(&RunConfig::out, "out")},
      {"init", string_setter(&RunConfig::init, "init")},
      {"dtype", string_setter(&RunConfig::dtype, "dtype")},
      {"dt", [](RunConfig& c, const json& v, const fs::path&) { c.dt = as_count(v, "dt"); }},
      {"n_frames", [](RunConfig& c, const json& v, const fs::path&) { c.n_frames = as_count(v, "n_frames"); }},
      {"iters", [](RunConfig& c, const json& v, const fs::path&) { c.iters = as_count(v, "iters"); }},
      {"seed", [](RunConfig& c, const json& v, const fs::path&) { c.seed = as_count(v, "seed"); }},
      {"layers",
       [](RunConfig& c, const json& v, const fs::path&) {
         c.layers.clear();
         if (v.is_string()) {
           std::stringstream ss(v.get<std::string>());
           for (std::string item; std::getline(ss, item, ',');) c.layers.push_back(item);
         } else if (v.is_array()) {
           for (const auto& e : v) c.layers.push_back(as_string(e, "layers"));
         } else {
           throw UsageError("config: layers must be a list or a comma-separated string");
         }
       }},
      {"layer_weights",
       [](RunConfig& c, const json& v, const fs::path&) {
         if (!v.is_array()) throw UsageError("config: layer_weights must be a list of numbers");
         c.layer_weights.clear();
         for (const auto& e : v) {
           if (!e.is_number()) throw UsageError("config: layer_weights must be a list of numbers");
           c.layer_weights.push_back(e.get<double>());
         }
       }},
  };
  return table;
}

// Values from the file only fill flags the user did not pass. Keys the
// current command has no flag for are ignored so one file can serve both
// analyze and synthesize; unknown keys are rejected.
void merge_config(RunConfig& c, const CLI::App& sub) {
  if (c.config.empty()) return;
  std::ifstream in(c.config);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + c.config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + c.config + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + c.config + ": expected a JSON object");
  const fs::path base = fs::path(c.config).parent_path();
  for (const auto& [raw_key, value] : j.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '-', '_');
    const auto it = setters().find(key);
    if (it == setters().end()) throw UsageError("config: unknown key '" + raw_key + "'");
    const CLI::Option* opt = sub.get_option_no_throw(key_to_flag(key));
    if (opt == nullptr || opt->count() > 0) continue;
    it->second(c, value, base);
  }
}

json effective_json(const RunConfig& c) {
  json j{{"command", c.command}, {"dtype", c.dtype}};
  auto put = [&j](const char* k, const std::string& v) {
    if (!v.empty()) j[k] = v;
  };
  put("frames", c.frames);
  put("stats", c.stats);
  put("net", c.net);
  put("weights", c.weights);
  put("seed_frames", c.seed_frames);
  put("out", c.out);
  put("config", c.config);
  put("path", c.path);
  if (c.command != "info") {
    j["dt"] = c.dt ? json(*c.dt) : json(nullptr);
    j["layers"] = c.layers;
    j["layer_weights"] = c.layer_weights;
  }
  if (c.command == "synthesize" || c.command == "extrapolate") {
    j["n_frames"] = c.n_frames ? json(*c.n_frames) : json(nullptr);
    j["seed"] = c.seed;
    j["iters"] = c.iters;
    j["init"] = c.command == "extrapolate" ? "frames" : c.init;
  }
  return j;
}

// ---- analyze ------------------------------------------------------------

// Where analyze found the network, so synthesize can default to it.
void record_network(const fs::path& stats_path, const RunConfig& c) {
  const auto meta = sidecar_path(stats_path);
  json j;
  {
    std::ifstream in(meta);
    j = json::parse(in);
  }
  j["network"] = {{"descriptor", fs::absolute(c.net).lexically_normal().string()},
                  {"weights", fs::absolute(c.weights).lexically_normal().string()}};
  std::ofstream out(meta);
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::io, "write failed for " + meta.string());
}

template <typename T>
int analyze(const RunConfig& c, std::ostream& out) {
  require(c.frames, "--frames");
  require(c.net, "--net");
  require(c.weights, "--weights");
  require(c.out, "--out");
  const std::size_t dt = *c.dt;
  const auto& layers = c.layers;
  const auto& weights = c.layer_weights;
  if (weights.size() != layers.size()) {
    throw Error(ErrorCode::consistency, std::to_string(weights.size()) + " layer weights for " +
                                            std::to_string(layers.size()) + " layers");
  }

  const Video video = read_sequence(c.frames);
  if (video.size() < dt) {
    throw Error(ErrorCode::consistency, "analyze: T < \xCE\x94t (T=" + std::to_string(video.size()) +
                                            ", \xCE\x94t=" + std::to_string(dt) + ")");
  }
  const Network<T> net = load_network(c.net, c.weights).template cast<T>();
  for (const auto& l : layers) {
    if (!net.descriptor().find(l)) throw Error(ErrorCode::unknown_layer, "network has no layer '" + l + "'");
  }

  std::vector<Tensor<T>> frames;
  frames.reserve(video.size());
  for (const auto& f : video) frames.push_back(preprocess<T>(f, net.descriptor().preprocessing));
  const auto stats = compute_statistics<T>(frames, net, layers, dt, weights);
  fs::create_directories(fs::absolute(c.out).parent_path());
  save_statistics(stats, c.out);
  record_network(c.out, c);

  out << "frames: " << video.size() << " (" << video[0].width << "x" << video[0].height << ")\n";
  out << "delta_t: " << dt << "\n";
  out << "windows: " << video.size() - dt + 1 << "\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& g = stats.grams.at(layers[i]);
    out << "  " << layers[i] << ": gram " << g.side() << "x" << g.side() << " (" << dt << " x " << g.channels()
        << " channels), weight " << weights[i] << "\n";
  }
  out << "wrote " << c.out << "\n";
  return ok;
}

// ---- synthesize / extrapolate --------------------------------------------

std::pair<std::string, std::string> resolve_network(const RunConfig& c) {
  if (!c.net.empty() && !c.weights.empty()) return {c.net, c.weights};
  json j;
  {
    std::ifstream in(sidecar_path(c.stats));
    if (in) j = json::parse(in, nullptr, false);
  }
  std::string net = c.net, weights = c.weights;
  if (j.is_object() && j.contains("network") && j["network"].is_object()) {
    if (net.empty()) net = j["network"].value("descriptor", "");
    if (weights.empty()) weights = j["network"].value("weights", "");
  }
  if (net.empty() || weights.empty()) {
    throw UsageError("--net and --weights are required (the statistics file records no network)");
  }
  return {net, weights};
}

template <typename T>
int synthesize(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const bool from_example = c.command == "extrapolate" || c.init == "frames";
  require(c.stats, "--stats");
  require(c.out, "--out");
  if (!c.n_frames) throw UsageError("--n-frames is required");
  if (from_example) require(c.seed_frames, "--seed-frames");
  if (c.iters == 0) throw UsageError("--iters must be positive");

  auto stats = load_statistics(c.stats).template cast<T>();
  if (c.dt && *c.dt != stats.delta_t) {
    throw Error(ErrorCode::consistency, "--dt " + std::to_string(*c.dt) + " disagrees with the statistics (\xCE\x94t=" +
                                            std::to_string(stats.delta_t) + ")");
  }
  if (!c.layers.empty() && c.layers != stats.layer_names) {
    throw Error(ErrorCode::consistency,
                "--layers " + join(c.layers) + " disagrees with the statistics (" + join(stats.layer_names) + ")");
  }
  if (!c.layer_weights.empty()) {
    if (c.layer_weights.size() != stats.layer_names.size()) {
      throw Error(ErrorCode::consistency, std::to_string(c.layer_weights.size()) + " layer weights for " +
                                              std::to_string(stats.layer_names.size()) + " layers");
    }
    stats.layer_weights = c.layer_weights;
    validate(stats);
  }
  const auto [net_path, weights_path] = resolve_network(c);
  auto net = std::make_shared<const Network<T>>(load_network(net_path, weights_path).template cast<T>());
  const auto& pre = net->descriptor().preprocessing;

  SynthesisConfig<T> cfg;
  cfg.target = std::make_shared<const TextureStatistics<T>>(std::move(stats));
  cfg.net = net;
  cfg.n_frames_out = *c.n_frames;
  cfg.seed = c.seed;
  cfg.lbfgs.max_iters = c.iters;

  Video seeds;
  if (from_example) {
    seeds = read_sequence(c.seed_frames);
    const std::size_t want = cfg.delta_t() - 1;
    if (seeds.size() != want) {
      throw Error(ErrorCode::consistency, "expected \xCE\x94t-1 = " + std::to_string(want) + " seed frames, got " +
                                              std::to_string(seeds.size()));
    }
    cfg.init_mode = InitMode::from_example;
    for (const auto& f : seeds) cfg.example_frames.push_back(preprocess<T>(f, pre));
  }
  cfg.validate();

  cfg.on_frame = [&err, n_seeds = seeds.size()](std::size_t i, const OptimizationTrace& t) {
    if (i < n_seeds) return;
    char line[160];
    std::snprintf(line, sizeof line, "frame %zu: loss %.6g -> %.6g, %zu iterations (%s)\n", i, t.initial.loss,
                  t.final_loss(), t.iterations.size(), std::string(to_string(t.reason)).c_str());
    err << line << std::flush;
  };
  const auto video = generate(cfg);

  Video frames;
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    frames.push_back(i < seeds.size() ? seeds[i] : deprocess(video.frames[i], pre));
  }
  fs::create_directories(c.out);
  write_sequence(frames, c.out, SequenceManifest{});
  for (std::size_t i = 0; i < video.results.size(); ++i) {
    const auto& r = video.results[i];
    if (r.from_example) continue;
    if (!std::isfinite(r.trace.final_loss())) {
      throw Error(ErrorCode::non_finite, "frame " + std::to_string(i) + " ended with a non-finite loss");
    }
    char name[32];
    std::snprintf(name, sizeof name, "trace_%05zu.csv", i);
    std::ofstream csv(fs::path(c.out) / name);
    write_trace_csv(r.trace, csv);
    if (!csv) throw Error(ErrorCode::io, "write failed for " + (fs::path(c.out) / name).string());
  }

  for (std::size_t i = 0; i < video.results.size(); ++i) {
    const auto& r = video.results[i];
    if (r.from_example) {
      out << "frame " << i << ": seed\n";
    } else {
      out << "frame " << i << ": initial " << r.trace.initial.loss << ", final " << r.trace.final_loss() << ", "
          << r.trace.iterations.size() << " iterations, " << to_string(r.trace.reason) << "\n";
    }
  }
  out << "wrote " << frames.size() << " frames to " << c.out << "\n";
  return ok;
}

// ---- info ---------------------------------------------------------------

void info_descriptor(const fs::path& p, std::ostream& out) {
  const auto d = load_descriptor(p);
  out << "network descriptor " << p.string() << "\n";
  out << "input channels: " << d.input_channels << "\n";
  out << "channel order: " << to_string(d.preprocessing.channel_order) << ", means ["
      << d.preprocessing.channel_means[0] << ", " << d.preprocessing.channel_means[1] << ", "
      << d.preprocessing.channel_means[2] << "]\n";
  for (std::size_t i = 0; i < d.layers.size(); ++i) {
    const auto& l = d.layers[i];
    out << "  " << l.name << ": " << to_string(l.kind);
    if (l.kind == LayerKind::conv) {
      out << " " << l.conv.in_channels << "->" << l.conv.out_channels << " " << l.conv.kernel_h << "x"
          << l.conv.kernel_w << " stride " << l.conv.stride << " pad " << l.conv.zero_padding;
    } else if (l.kind == LayerKind::pool) {
      out << " " << to_string(l.pool.mode) << " " << l.pool.window << "x" << l.pool.window << " stride "
          << l.pool.stride;
    }
    out << "\n";
  }
}

void info_statistics(const fs::path& p, std::ostream& out) {
  const auto stats = load_statistics(p);
  std::ifstream in(sidecar_path(p));
  const json meta = json::parse(in);
  out << "texture statistics " << p.string() << "\n";
  out << "format version: " << meta.at("format_version").get<int>() << "\n";
  out << "delta_t: " << stats.delta_t << "\n";
  out << "source: " << stats.source.frame_count << " frames, " << stats.source.width << "x" << stats.source.height
      << "\n";
  out << "layers: " << join(stats.layer_names) << "\n";
  for (std::size_t i = 0; i < stats.layer_names.size(); ++i) {
    const auto& g = stats.grams.at(stats.layer_names[i]);
    out << "  " << g.layer << ": gram " << g.side() << "x" << g.side() << " = " << stats.delta_t << " x "
        << g.channels() << " channels, weight " << stats.layer_weights[i] << "\n";
  }
  if (meta.contains("network")) {
    out << "network: " << meta["network"].value("descriptor", "?") << ", " << meta["network"].value("weights", "?")
        << "\n";
  }
}

void info_container(const fs::path& p, std::ostream& out) {
  const auto entries = container::read(p);
  out << "tensor container " << p.string() << " (version " << container::kVersion << ", " << entries.size()
      << " tensors)\n";
  for (const auto& e : entries) out << "  " << e.name << " " << shape_string(e.tensor.shape()) << "\n";
}

int info(const RunConfig& c, std::ostream& out) {
  std::string path = c.path;
  for (const auto* alt : {&c.stats, &c.weights, &c.net}) {
    if (path.empty()) path = *alt;
  }
  if (path.empty()) throw UsageError("info needs a file (positional, --stats, --weights or --net)");
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::io, "no such file " + path);
  if (fs::path(path).extension() == ".json") {
    info_descriptor(path, out);
  } else if (fs::exists(sidecar_path(path))) {
    info_statistics(path, out);
  } else {
    info_container(path, out);
  }
  return ok;
}

// ---- parser -------------------------------------------------------------

struct Parser {
  CLI::App app{"Dynamic texture synthesis from spatio-temporal Gram statistics of CNN features.", "dyntex"};
  RunConfig cfg;
  std::size_t dt = 0, n_frames = 0;
  std::map<std::string, CLI::App*> subs;

  Parser() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every command");

    auto* analyze = add("analyze", "Extract window-averaged Gram statistics from a frame sequence");
    analyze->add_option("--frames", cfg.frames, "Directory of source frames (name_NNNNN.ppm)");
    network_flags(analyze);
    statistics_flags(analyze);
    analyze->add_option("--out", cfg.out, "Statistics file to write (sidecar goes to <out>.meta.json)");

    auto* synth = add("synthesize", "Generate a new sequence matching a statistics file");
    generation_flags(synth);
    synth->add_option("--init", cfg.init, "Start from noise, or from --seed-frames")
        ->check(CLI::IsMember({"noise", "frames"}));

    auto* extra = add("extrapolate", "Continue a sequence from its last \xCE\x94t-1 frames");
    generation_flags(extra);

    auto* info = add("info", "Describe a statistics file, weights container or network descriptor");
    info->add_option("path", cfg.path, "Artifact to inspect");
    info->add_option("--stats", cfg.stats, "Statistics file");
    info->add_option("--weights", cfg.weights, "Weights container");
    info->add_option("--net", cfg.net, "Network descriptor (JSON)");
  }

  CLI::App* add(const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", cfg.config, "JSON file of flag values; flags given on the command line win");
    sub->add_option("--dtype", cfg.dtype, "Arithmetic precision")->check(CLI::IsMember({"f32", "f64"}));
    subs[name] = sub;
    return sub;
  }

  void network_flags(CLI::App* sub) {
    sub->add_option("--net", cfg.net, "Network descriptor (JSON)");
    sub->add_option("--weights", cfg.weights, "Weights container (DTXW)");
  }

  void statistics_flags(CLI::App* sub) {
    sub->add_option("--dt", dt, "Temporal window \xCE\x94t (default 2)");
    sub->add_option("--layers", cfg.layers, "Comma-separated layer names (default conv1_1..conv5_1)")
        ->delimiter(',');
    sub->add_option("--layer-weights", cfg.layer_weights, "Comma-separated per-layer weights (default all 1)")
        ->delimiter(',');
  }

  void generation_flags(CLI::App* sub) {
    sub->add_option("--stats", cfg.stats, "Statistics file written by analyze");
    network_flags(sub);
    statistics_flags(sub);
    sub->add_option("--n-frames", n_frames, "Number of output frames");
    sub->add_option("--seed", cfg.seed, "Noise seed");
    sub->add_option("--iters", cfg.iters, "L-BFGS iterations per frame")->capture_default_str();
    sub->add_option("--seed-frames", cfg.seed_frames, "Directory holding the \xCE\x94t-1 starting frames");
    sub->add_option("--out", cfg.out, "Output directory");
  }
};

template <typename T>
int dispatch(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.command == "analyze") return analyze<T>(c, out);
  if (c.command == "info") return info(c, out);
  return synthesize<T>(c, out, err);
}

}  // namespace

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io:
    case ErrorCode::missing_frame:
    case ErrorCode::missing_metadata:
      return io_error;
    case ErrorCode::non_finite:
      return numeric_error;
    case ErrorCode::invalid_argument:
      return usage;
    default:
      return data_error;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Parser p;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    p.app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return p.app.exit(e, out, err) == 0 ? ok : usage;
  }

  RunConfig& c = p.cfg;
  for (const auto& [name, sub] : p.subs) {
    if (!sub->parsed()) continue;
    c.command = name;
    if (sub->get_option_no_throw("--dt") && sub->get_option("--dt")->count()) c.dt = p.dt;
    if (sub->get_option_no_throw("--n-frames") && sub->get_option("--n-frames")->count()) c.n_frames = p.n_frames;
  }
  try {
    merge_config(c, *p.subs.at(c.command));
    if (c.dtype != "f32" && c.dtype != "f64") throw UsageError("--dtype must be f32 or f64");
    if (c.init != "noise" && c.init != "frames") throw UsageError("--init must be noise or frames");
    if (c.command == "analyze") {
      if (!c.dt) c.dt = kDefaultDeltaT;
      if (c.layers.empty()) c.layers = kDefaultLayers;
      if (c.layer_weights.empty()) c.layer_weights.assign(c.layers.size(), 1.0);
    }
    err << effective_json(c).dump() << "\n";
    return c.dtype == "f32" ? dispatch<float>(c, out, err) : dispatch<double>(c, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return io_error;
  } catch (const json::exception& e) {
    err << "error: malformed metadata: " << e.what() << "\n";
    return data_error;
  }
}

}  // namespace dyntex::cli
