#include "chromacodec/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "chromacodec/errors.hpp"
#include "chromacodec/metrics.hpp"
#include "chromacodec/pipeline.hpp"
#include "chromacodec/synthetic.hpp"
#include "chromacodec/trainer.hpp"

namespace chromacodec {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct RunConfig {
  std::string input, output, weights, reference, test, anchor_csv, proposed_csv, loss_csv, format = "raw";
  std::size_t width = 0, height = 0, frames = 12;
  int qp = 32;
  std::size_t gop = kDefaultGopSize;
  double fps = kDefaultFps;
  std::uint64_t seed = 7;
  std::size_t steps = 300;
  std::size_t threads = 1;
  std::size_t channels = 8;
  bool no_attention = false, no_glrc = false;
  std::string loss_group = "G4";
  double learning_rate = 2e-4;
  std::string overlap = "classic";
};

json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

void write_json(const std::string& path, const json& j, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << j.dump(2) << '\n';
}

// Raw 4:4:4 file (needs dims) or a directory of P6 files in name order.
std::vector<Frame> load_frames(const RunConfig& c) {
  if (c.input.empty()) throw ConfigError("--input is required");
  if (!fs::exists(c.input)) throw DataError("input " + c.input + " does not exist");
  if (fs::is_directory(c.input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(c.input))
      if (e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .ppm files in " + c.input);
    std::vector<Frame> frames;
    for (const auto& f : files) frames.push_back(rgb_to_ycbcr(read_ppm(f)));
    return frames;
  }
  if (c.width == 0 || c.height == 0) throw ConfigError("raw input needs --width and --height");
  return read_raw(fs::path(c.input), c.width, c.height, SubsamplingMode::k444);
}

std::vector<Frame> load_raw(const std::string& path, const RunConfig& c) {
  if (!fs::exists(path)) throw DataError("input " + path + " does not exist");
  if (c.width == 0 || c.height == 0) throw ConfigError("raw input needs --width and --height");
  return read_raw(fs::path(path), c.width, c.height, SubsamplingMode::k444);
}

json config_json(const std::string& command, const RunConfig& c) {
  json j;
  j["command"] = command;
  j["input"] = c.input;
  j["output"] = c.output;
  j["weights"] = c.weights;
  j["width"] = c.width;
  j["height"] = c.height;
  j["frames"] = c.frames;
  j["qp"] = c.qp;
  j["gop"] = c.gop;
  j["fps"] = c.fps;
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["threads"] = c.threads;
  j["channels"] = c.channels;
  j["attention"] = !c.no_attention;
  j["glrc"] = !c.no_glrc;
  j["loss_group"] = c.loss_group;
  j["learning_rate"] = c.learning_rate;
  j["format"] = c.format;
  return j;
}

int cmd_synth(const RunConfig& c, std::ostream&) {
  if (c.output.empty()) throw ConfigError("--out is required");
  SyntheticConfig s;
  s.frames = c.frames;
  s.width = c.width ? c.width : 64;
  s.height = c.height ? c.height : 64;
  s.seed = c.seed;
  write_raw(fs::path(c.output), moving_rectangles(s));
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  if (c.output.empty()) throw ConfigError("--out is required");
  const auto frames = load_frames(c);
  NetworkConfig net;
  net.width = frames.at(0).width();
  net.height = frames.at(0).height();
  net.base_channels = c.channels;
  net.use_attention = !c.no_attention;
  net.use_glrc = !c.no_glrc;
  net.validate();
  TrainConfig cfg;
  cfg.steps = c.steps;
  cfg.seed = c.seed;
  cfg.adam.learning_rate = c.learning_rate;
  cfg.weights = weights_for_group(loss_group_from_string(c.loss_group));
  const auto pairs = build_training_set(frames, c.gop, c.qp);
  const auto result = train(init_generator(net, c.seed), init_discriminator(net, c.seed + 1), pairs, cfg);
  save_generator(fs::path(c.output), result.generator);
  const std::string csv = c.loss_csv.empty() ? c.output + ".loss.csv" : c.loss_csv;
  std::ofstream f(csv);
  if (!f) throw DataError("cannot open " + csv + " for writing");
  write_history_csv(f, result.history);
  json j;
  j["pairs"] = pairs.size();
  j["steps"] = result.history.size();
  if (!result.history.empty()) {
    j["initial_loss"] = result.history.front().total;
    j["final_loss"] = result.history.back().total;
  }
  j["weights"] = c.output;
  j["loss_csv"] = csv;
  out << j.dump() << '\n';
  return kExitOk;
}

json report_json(const BitrateReport& r) {
  json j;
  j["frames"] = r.frame_count;
  j["fps"] = r.fps;
  j["anchor_bits"] = r.anchor_bits;
  j["luma_only_bits"] = r.luma_only_bits;
  j["model_bits"] = r.model_bits;
  j["overhead_bits"] = r.overhead_bits;
  j["total_bits"] = r.total_bits;
  j["total_bits_without_model"] = r.total_bits_without_model;
  j["kbps"] = r.kbps;
  j["kbps_without_model"] = r.kbps_without_model;
  return j;
}

int cmd_encode(const RunConfig& c, std::ostream& out) {
  if (c.output.empty()) throw ConfigError("--out is required");
  if (c.weights.empty()) throw ConfigError("--weights is required");
  if (!fs::exists(c.weights)) throw DataError("weights " + c.weights + " do not exist");
  const auto frames = load_frames(c);
  EncodeOptions o;
  o.qp = c.qp;
  o.gop_size = c.gop;
  o.threads = c.threads;
  const auto video = encode_sequence(frames, o, load_generator(fs::path(c.weights)));
  write_container(fs::path(c.output), video);
  out << report_json(bitrate_report(video, c.fps)).dump() << '\n';
  return kExitOk;
}

int cmd_decode(const RunConfig& c, std::ostream&) {
  if (c.output.empty()) throw ConfigError("--out is required");
  if (c.input.empty()) throw ConfigError("--input is required");
  if (!fs::exists(c.input)) throw DataError("input " + c.input + " does not exist");
  const auto frames = decode_sequence(read_container(fs::path(c.input)), c.threads);
  if (c.format == "raw") {
    write_raw(fs::path(c.output), frames);
  } else if (c.format == "ppm") {
    fs::create_directories(c.output);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.ppm", i);
      write_ppm(fs::path(c.output) / name, ycbcr_to_rgb(frames[i]));
    }
  } else {
    throw ConfigError("--format must be raw or ppm");
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  if (c.reference.empty() || c.test.empty()) throw ConfigError("--ref and --test are required");
  const auto ref = load_raw(c.reference, c);
  const auto tst = load_raw(c.test, c);
  if (ref.size() != tst.size()) throw DataError("frame counts differ: " + std::to_string(ref.size()) +
                                                " vs " + std::to_string(tst.size()));
  const GopStructure gop = split_gops(ref.size(), c.gop);
  json frames = json::array();
  double sum[2] = {0, 0};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const FramePsnr p = psnr_frame(ref[i], tst[i]);
    json f;
    f["index"] = i;
    f["anchor"] = gop.is_anchor(i);
    f["psnr_y"] = number_or_inf(p.y);
    f["psnr_cb"] = number_or_inf(p.cb);
    f["psnr_cr"] = number_or_inf(p.cr);
    f["psnr_combined"] = number_or_inf(p.combined);
    f["ssim_y"] = ssim(ref[i].y, tst[i].y);
    f["mse_chroma"] = 0.5 * (mse(*ref[i].cb, *tst[i].cb) + mse(*ref[i].cr, *tst[i].cr));
    frames.push_back(f);
    const int k = gop.is_anchor(i) ? 0 : 1;
    sum[k] += p.combined;
    ++count[k];
  }
  json j;
  j["frames"] = frames;
  j["gop"] = c.gop;
  if (count[0]) j["mean_psnr_combined_anchor"] = number_or_inf(sum[0] / count[0]);
  if (count[1]) j["mean_psnr_combined_non_anchor"] = number_or_inf(sum[1] / count[1]);
  write_json(c.output, j, out);
  return kExitOk;
}

int cmd_rd_report(const RunConfig& c, std::ostream& out) {
  if (c.anchor_csv.empty() || c.proposed_csv.empty()) {
    throw ConfigError("--anchor and --proposed are required");
  }
  for (const auto& p : {c.anchor_csv, c.proposed_csv})
    if (!fs::exists(p)) throw DataError("curve " + p + " does not exist");
  OverlapPolicy policy;
  if (c.overlap == "classic") {
    policy = OverlapPolicy::kClassic;
  } else if (c.overlap == "strict") {
    policy = OverlapPolicy::kStrict;
  } else {
    throw ConfigError("--overlap must be classic or strict");
  }
  const RdCurve anchor = read_rd_csv(fs::path(c.anchor_csv));
  const RdCurve proposed = read_rd_csv(fs::path(c.proposed_csv));
  if (anchor.size() != proposed.size()) throw DataError("curves have different point counts");
  json points = json::array();
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    json p;
    p["qp"] = anchor[i].qp;
    p["anchor_kbps"] = anchor[i].bitrate_kbps;
    p["anchor_psnr"] = anchor[i].psnr_db;
    p["proposed_kbps"] = proposed[i].bitrate_kbps;
    p["proposed_psnr"] = proposed[i].psnr_db;
    p["delta_br_percent"] = delta_br(proposed[i], anchor[i]);
    p["delta_psnr_db"] = delta_psnr(proposed[i], anchor[i]);
    points.push_back(p);
  }
  json j;
  j["points"] = points;
  j["bd_rate_percent"] = bd_rate(anchor, proposed, policy);
  j["bd_psnr_db"] = bd_psnr(anchor, proposed, policy);
  write_json(c.output, j, out);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"chroma colorization video codec"};
  app.require_subcommand(1);
  RunConfig c;

  auto* synth = app.add_subcommand("synth", "write a synthetic 4:4:4 raw sequence");
  synth->add_option("--out", c.output, "output raw file");
  synth->add_option("--frames", c.frames);
  synth->add_option("--width", c.width);
  synth->add_option("--height", c.height);
  synth->add_option("--seed", c.seed);

  auto* trn = app.add_subcommand("train", "train a generator on the anchor frames");
  trn->add_option("--input", c.input, "raw 4:4:4 file or PPM directory");
  trn->add_option("--width", c.width);
  trn->add_option("--height", c.height);
  trn->add_option("--qp", c.qp);
  trn->add_option("--gop", c.gop);
  trn->add_option("--steps", c.steps);
  trn->add_option("--seed", c.seed);
  trn->add_option("--lr", c.learning_rate);
  trn->add_option("--channels", c.channels);
  trn->add_flag("--no-attention", c.no_attention);
  trn->add_flag("--no-glrc", c.no_glrc);
  trn->add_option("--loss-group", c.loss_group, "G1, G2, G3 or G4");
  trn->add_option("--loss-csv", c.loss_csv);
  trn->add_option("--out", c.output, "weights file");

  auto* enc = app.add_subcommand("encode", "encode a sequence");
  enc->add_option("--input", c.input, "raw 4:4:4 file or PPM directory");
  enc->add_option("--width", c.width);
  enc->add_option("--height", c.height);
  enc->add_option("--weights", c.weights);
  enc->add_option("--qp", c.qp);
  enc->add_option("--gop", c.gop);
  enc->add_option("--fps", c.fps);
  enc->add_option("--threads", c.threads);
  enc->add_option("--out", c.output, "container file");

  auto* dec = app.add_subcommand("decode", "decode a container");
  dec->add_option("--input", c.input);
  dec->add_option("--out", c.output, "raw file or PPM directory");
  dec->add_option("--format", c.format, "raw or ppm");
  dec->add_option("--threads", c.threads);

  auto* ev = app.add_subcommand("eval", "quality of a decoded sequence");
  ev->add_option("--ref", c.reference);
  ev->add_option("--test", c.test);
  ev->add_option("--width", c.width);
  ev->add_option("--height", c.height);
  ev->add_option("--gop", c.gop);
  ev->add_option("--out", c.output, "report JSON (stdout if omitted)");

  auto* rd = app.add_subcommand("rd-report", "per-point and Bjontegaard deltas of two RD curves");
  rd->add_option("--anchor", c.anchor_csv);
  rd->add_option("--proposed", c.proposed_csv);
  rd->add_option("--overlap", c.overlap, "classic or strict");
  rd->add_option("--out", c.output, "report JSON (stdout if omitted)");

  std::vector<std::string> argv_store{"chromacodec"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (const char* env = std::getenv("CHROMACODEC_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      err << "error: CHROMACODEC_SEED is not an unsigned integer\n";
      return kExitUsage;
    }
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  err << config_json(name, c).dump() << '\n';
  try {
    if (c.threads == 0) throw ConfigError("--threads must be at least 1");
    if (name == "synth") return cmd_synth(c, out);
    if (name == "train") return cmd_train(c, out);
    if (name == "encode") return cmd_encode(c, out);
    if (name == "decode") return cmd_decode(c, out);
    if (name == "eval") return cmd_eval(c, out);
    return cmd_rd_report(c, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace chromacodec
