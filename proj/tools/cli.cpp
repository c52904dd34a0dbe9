#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pnc/convnet.hpp"
#include "pnc/count_classifier.hpp"
#include "pnc/error.hpp"
#include "pnc/evaluation.hpp"
#include "pnc/feature_dict.hpp"
#include "pnc/io.hpp"
#include "pnc/lego.hpp"
#include "pnc/pipelines.hpp"
#include "pnc/rng.hpp"

#ifndef PNC_VERSION
#define PNC_VERSION "0.0.0"
#endif
#ifndef PNC_DEFAULT_DATA_DIR
#define PNC_DEFAULT_DATA_DIR ""
#endif

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace pnc::cli {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("bad ratio '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--ratios needs at least one value");
  return out;
}

std::vector<std::size_t> parse_channels(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    const long v = std::stol(item);
    if (v <= 0) throw std::invalid_argument("channel counts must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw std::invalid_argument("--channels needs at least one value");
  return out;
}

std::string command_path(const CLI::App* app) {
  std::string out;
  for (; app != nullptr && app->get_parent() != nullptr; app = app->get_parent()) {
    out = out.empty() ? app->get_name() : app->get_name() + " " + out;
  }
  return out;
}

// Resolved options of the selected subcommand, defaults included.
ojson resolved_config(const CLI::App& app) {
  ojson config = ojson::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    config[name] = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
  }
  return config;
}

struct Context {
  std::string meta;  // {"tool","version","command","config"}
  ojson config;
};

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void write_sidecar(const fs::path& artifact, const Context& ctx) {
  write_text_file(fs::path(artifact.string() + ".meta.json"), ctx.meta + "\n");
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  return fs::path(out.string() + suffix);
}

ojson read_json(const fs::path& path) {
  try {
    return ojson::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<lego::LegoClassSpec> load_ruleset(const fs::path& data_dir) {
  return lego::ruleset_from_json(read_text_file(data_dir / "ruleset.json"));
}

// ---------------------------------------------------------------- lego gen

struct LegoGenArgs {
  int classes = 100;
  int digits = 3;
  int train = 500;
  int test = 100;
  double noise = 0.5;
  std::uint64_t seed = 0;
  std::string out;
  int canvas = 84;
  std::string mnist = "mnist5k";
  double pool_fraction = 0.8;
};

void lego_gen(const LegoGenArgs& a, const Context& ctx) {
  const auto store = lego::DigitStore::load(locate_input(a.mnist));
  const auto ruleset = lego::make_ruleset(a.classes, a.digits, a.seed);
  lego::ClassificationOptions opts;
  opts.n_train_per_class = a.train;
  opts.n_test_per_class = a.test;
  opts.canvas = a.canvas;
  opts.noise = a.noise;
  opts.train_pool_fraction = a.pool_fraction;
  opts.seed = a.seed;
  const auto set = lego::gen_classification_set(ruleset, store, opts);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file(out / "ruleset.json", lego::ruleset_to_json(ruleset) + "\n");
  lego::write_split(out, "train", set.train, ctx.meta);
  lego::write_split(out, "test", set.test, ctx.meta);
  write_text_file(out / "manifest.json", ctx.meta + "\n");
  std::cerr << "wrote " << set.train.labels.size() << " train / " << set.test.labels.size() << " test images to "
            << out.string() << "\n";
}

// ---------------------------------------------------------------- lego scenes

struct LegoScenesArgs {
  std::string preset = "easy";
  int instances = 4;
  int min_instances = 1;
  int n = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string data;
  std::string pool = "test";
  int canvas = 168;
  double noise = 0.5;
};

void lego_scenes(const LegoScenesArgs& a, const Context& ctx) {
  const fs::path data = locate_input(a.data);
  const auto manifest = read_json(data / "manifest.json");
  std::string mnist;
  double fraction = 0;
  try {
    const auto& cfg = manifest.at("config");
    mnist = cfg.at("mnist").get<std::string>();
    fraction = std::stod(cfg.at("pool-fraction").get<std::string>());
  } catch (const std::exception& e) {
    throw DataError((data / "manifest.json").string() + ": " + e.what());
  }
  if (a.pool != "train" && a.pool != "test") throw std::invalid_argument("--pool must be train or test");
  const auto [train_pool, test_pool] = lego::DigitStore::load(locate_input(mnist)).split(fraction);

  lego::SceneSetOptions opts;
  opts.preset = lego::preset_from_string(a.preset);
  opts.min_instances = a.min_instances;
  opts.max_instances = a.instances;
  opts.n = a.n;
  opts.seed = a.seed;
  opts.scene.canvas = a.canvas;
  opts.scene.noise = a.noise;
  const auto set = lego::gen_scene_set(load_ruleset(data), a.pool == "train" ? train_pool : test_pool, opts);

  const fs::path out(a.out);
  fs::create_directories(out);
  lego::write_scene_set(out, set, ctx.meta);
  write_text_file(out / "manifest.json", ctx.meta + "\n");
  std::cerr << "wrote " << set.annotations.size() << " " << a.preset << " scenes to " << out.string() << "\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  int epochs = 10;
  std::uint64_t seed = 0;
  std::string out;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 64;
  double weight_decay = 1e-4;
  double lr_decay = 1.0;
  std::size_t kernel = 5;
  std::string channels = "32,64,128,256";
  std::string metrics;
  bool validate = true;
};

void train_cmd(const TrainArgs& a, const Context& ctx) {
  const fs::path data = locate_input(a.data);
  const auto train_split = lego::read_split(data, "train");
  std::optional<lego::ClassificationSplit> test_split;
  if (a.validate && fs::exists(data / "test.tnsr")) test_split = lego::read_split(data, "test");

  net::Architecture arch;
  arch.conv_channels = parse_channels(a.channels);
  arch.kernel = a.kernel;
  arch.classes = load_ruleset(data).size();
  for (int label : train_split.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= arch.classes) {
      throw DataError("train label " + std::to_string(label) + " outside the ruleset");
    }
  }
  auto net = net::Network<float>::initialized(arch, a.seed);

  net::TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.weight_decay = a.weight_decay;
  cfg.lr_decay = a.lr_decay;

  const net::LabeledImages train_set{&train_split.images, train_split.labels};
  net::LabeledImages val_set;
  if (test_split) val_set = {&test_split->images, test_split->labels};
  const auto metrics = net::train(net, train_set, test_split ? &val_set : nullptr, cfg, [](const net::EpochMetrics& m) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d  loss %.4f  train_acc %.4f  val_acc %.4f\n", m.epoch, m.train_loss,
                  m.train_acc, m.val_acc);
    std::cerr << line << std::flush;
  });

  const fs::path out(a.out);
  ensure_parent(out);
  net::save_network(out, net, ctx.meta);
  const fs::path metrics_path = a.metrics.empty() ? with_suffix(out, ".metrics.csv") : fs::path(a.metrics);
  ensure_parent(metrics_path);
  write_text_file(metrics_path, net::metrics_csv(metrics));
  write_sidecar(metrics_path, ctx);
}

// ---------------------------------------------------------------- dict build

struct DictArgs {
  std::string data;
  std::string model;
  std::string out;
  std::string split = "train";
  int per_class = 0;
};

void dict_build(const DictArgs& a, const Context& ctx) {
  const auto split = lego::read_split(locate_input(a.data), a.split);
  const auto net = net::load_network(a.model);
  ByteTensor images = split.images;
  std::vector<int> labels = split.labels;
  if (a.per_class > 0) {
    std::map<int, int> taken;
    std::vector<std::uint8_t> px;
    labels.clear();
    for (std::size_t i = 0; i < split.labels.size(); ++i) {
      if (taken[split.labels[i]]++ >= a.per_class) continue;
      const auto s = split.images.slice(i);
      px.insert(px.end(), s.begin(), s.end());
      labels.push_back(split.labels[i]);
    }
    images = ByteTensor({labels.size(), split.images.dim(1), split.images.dim(2)}, std::move(px));
  }
  const auto dict = build_dictionary(images, labels, net);
  const fs::path out(a.out);
  ensure_parent(out);
  save_dictionary(out, dict, ctx.meta);
}

// ---------------------------------------------------------------- count train

struct CountArgs {
  std::string scenes;
  std::string model;
  std::string out;
  double lambda = 1e-4;
  int epochs = 50;
  std::uint64_t seed = 0;
  int c_max = kDefaultCountMax;
};

void count_train(const CountArgs& a, const Context& ctx) {
  const auto set = lego::read_scene_set(locate_input(a.scenes));
  const auto net = net::load_network(a.model);
  std::vector<std::vector<float>> features;
  std::vector<int> labels;
  for (std::size_t i = 0; i < set.annotations.size(); ++i) {
    net::ActivationTrace trace;
    net.forward(net::image_tensor(set.images, i), &trace);
    features.push_back(extract_count_features(trace));
    labels.push_back(set.annotations[i].count);
  }
  SvmOptions opts;
  opts.lambda = a.lambda;
  opts.epochs = a.epochs;
  opts.seed = a.seed;
  opts.c_max = a.c_max;
  const auto model = svm_train(features, labels, opts);
  const fs::path out(a.out);
  ensure_parent(out);
  save_svm(out, model, ctx.meta);
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string scenes;
  std::string model;
  std::string dict;
  std::string svm;
  std::string out;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  std::size_t k_last = 20;
  std::size_t k_prev = 50;
  double dc_fraction = 0.02;
  double rho_fraction = 0.1;
  double delta_fraction = 0.15;
};

P2cOptions p2c_options(const RunArgs& a) {
  P2cOptions o;
  o.k_last = a.k_last;
  o.k_prev = a.k_prev;
  o.point_threshold = a.threshold;
  o.d_c_fraction = a.dc_fraction;
  o.rho_min_fraction = a.rho_fraction;
  o.delta_min_fraction = a.delta_fraction;
  return o;
}

void run_pipeline(const std::string& method, const RunArgs& a, const Context& ctx) {
  const auto set = lego::read_scene_set(locate_input(a.scenes));
  const auto net = net::load_network(a.model);
  std::vector<PncOutput> results;
  if (method == "c2p") {
    const auto svm = load_svm(a.svm);
    for (std::size_t i = 0; i < set.annotations.size(); ++i) {
      C2pOptions o;
      o.seed = derive_seed(a.seed, {i});
      o.point_threshold = a.threshold;
      auto r = run_c2p(net::image_tensor(set.images, i), net, svm, o);
      r.image_id = set.annotations[i].image_id;
      results.push_back(std::move(r));
    }
  } else {
    const auto dict = load_dictionary(a.dict);
    const auto opts = p2c_options(a);
    for (std::size_t i = 0; i < set.annotations.size(); ++i) {
      auto r = run_p2c(net::image_tensor(set.images, i), net, dict, opts);
      r.image_id = set.annotations[i].image_id;
      results.push_back(std::move(r));
    }
  }
  const fs::path out(a.out);
  ensure_parent(out);
  save_results(out, std::move(results));
  write_sidecar(out, ctx);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string results;
  std::string annotations;
  std::string ratios = "0.5,0.8";
  std::string out;
  int c_max = kDefaultCountMax;
};

fs::path annotations_file(const std::string& arg) {
  const fs::path p = locate_input(arg);
  return fs::is_directory(p) ? p / "annotations.jsonl" : p;
}

void eval_cmd(const EvalArgs& a, const Context& ctx) {
  const auto truth = load_annotations(annotations_file(a.annotations));
  const auto ratios = parse_ratios(a.ratios);
  const auto files = split_list(a.results);
  if (files.empty()) throw std::invalid_argument("--results needs at least one file");
  std::vector<CountTableRow> count_rows;
  std::vector<PointingTableRow> pointing_rows;
  std::vector<std::vector<PointingTableRow>> per_method;
  for (const auto& file : files) {
    const auto outputs = load_results(file);
    const std::string method = outputs.empty() ? fs::path(file).stem().string() : outputs.front().method;
    count_rows.push_back(count_table_row(method, count_accuracy(outputs, truth, a.c_max)));
    per_method.push_back(pointing_table_rows(method, pointing_accuracy(outputs, truth, ratios, a.c_max)));
  }
  // grouped by overlap, methods in argument order
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    for (const auto& rows : per_method) pointing_rows.push_back(rows.at(r));
  }

  const fs::path out(a.out);
  ensure_parent(out);
  write_text_file(out, format_pointing_table_csv(pointing_rows));
  write_sidecar(out, ctx);
  const fs::path count_path = with_suffix(out, ".count.csv");
  write_text_file(count_path, format_count_table_csv(count_rows));
  write_sidecar(count_path, ctx);
  const std::string text = format_count_table_text(count_rows) + "\n" + format_pointing_table_text(pointing_rows);
  write_text_file(with_suffix(out, ".txt"), text);
  std::cout << text;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string results;
  std::string scenes;
  std::string out;
  std::string model;
  std::string dict;
  std::size_t k_last = 20;
  std::size_t k_prev = 50;
  std::size_t limit = 0;
};

void render_cmd(const RenderArgs& a, const Context&) {
  const auto set = lego::read_scene_set(locate_input(a.scenes));
  const auto results = load_results(a.results);
  std::optional<net::Network<float>> model;
  std::optional<SignatureDictionary> dict;
  if (!a.model.empty()) model = net::load_network(a.model);
  if (!a.dict.empty()) dict = load_dictionary(a.dict);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < set.annotations.size(); ++i) index[set.annotations[i].image_id] = i;

  const fs::path out(a.out);
  fs::create_directories(out);
  std::size_t written = 0;
  for (const auto& r : results) {
    if (a.limit > 0 && written >= a.limit) break;
    const auto it = index.find(r.image_id);
    if (it == index.end()) throw DataError("result " + r.image_id + " has no scene");
    const Grid2D image = lego::image_from_stack(set.images, it->second);
    const int w = static_cast<int>(image.cols);
    const int h = static_cast<int>(image.rows);
    Heatmap hm = Heatmap::covering(Grid2D(image.rows, image.cols, 0.0f), w, h);
    if (model) {
      net::ActivationTrace trace;
      const auto scores = model->forward(net::image_tensor(set.images, it->second), &trace);
      if (r.method == "c2p") {
        hm = c2p_heatmap(trace, model->architecture(), w, h);
      } else if (dict) {
        const int cls = r.predicted_class >= 0
                            ? r.predicted_class
                            : static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        const auto& sig = dict->at(cls);
        const auto sel =
            top_features(*dict, cls, std::min(a.k_last, sig.last.size()), std::min(a.k_prev, sig.prev.size()));
        hm = feature_selected_heatmap(trace, sel, model->architecture(), w, h);
      } else {
        throw std::invalid_argument("rendering p2c heatmaps needs --dict");
      }
    }
    write_png(out / (r.image_id + ".png"), render_overlay(image, hm, r.pointers));
    ++written;
  }
  std::cerr << "wrote " << written << " overlays to " << out.string() << "\n";
}

// ---------------------------------------------------------------- argv handling

// Pulls --config out of args and splices the file's options in right after
// the subcommand path, ahead of the user's own flags (which win: TakeLast).
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> config_path;
  for (std::size_t i = 1; i < args.size();) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a path");
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
    } else {
      ++i;
    }
  }
  if (!config_path) return args;
  const auto entries = parse_config(read_text_file(*config_path));
  std::size_t pos = 1;
  while (pos < args.size() && !args[pos].empty() && args[pos][0] != '-') ++pos;
  std::vector<std::string> injected;
  for (const auto& [key, value] : entries) {
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  args.insert(args.begin() + static_cast<long>(pos), injected.begin(), injected.end());
  return args;
}

template <typename F>
int guarded(F&& body) {
  try {
    body();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "pnc: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "pnc: invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "pnc: data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "pnc: numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "pnc: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "pnc: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
  }
  return out;
}

fs::path locate_input(const fs::path& path) {
  if (path.is_absolute()) return path;
  std::vector<fs::path> candidates;
  if (const char* root = std::getenv("PNC_DATA_DIR"); root != nullptr && *root != '\0') {
    candidates.push_back(fs::path(root) / path);
  }
  candidates.push_back(path);
  if (*PNC_DEFAULT_DATA_DIR != '\0') candidates.push_back(fs::path(PNC_DEFAULT_DATA_DIR) / path);
  for (const auto& c : candidates) {
    std::error_code ec;
    if (fs::exists(c, ec)) return c;
  }
  return path;
}

int run_cli(const std::vector<std::string>& raw_args) {
  CLI::App app{"Point-and-count toolkit: MNIST-LEGO generation, training, C2P/P2C pipelines and evaluation", "pnc"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", PNC_VERSION);
  app.require_subcommand(1);
  std::string config_help;
  app.add_option("--config", config_help, "key=value file; command-line flags override it");

  LegoGenArgs gen;
  LegoScenesArgs scenes;
  TrainArgs tr;
  DictArgs dict;
  CountArgs count;
  RunArgs run_c2p_args;
  RunArgs run_p2c_args;
  EvalArgs ev;
  RenderArgs render;

  auto* lego_cmd = app.add_subcommand("lego", "synthetic data generation");
  lego_cmd->require_subcommand(1);
  auto* gen_cmd = lego_cmd->add_subcommand("gen", "classification set");
  gen_cmd->add_option("--classes", gen.classes)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--digits", gen.digits, "digits per object")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--train", gen.train, "train images per class")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--test", gen.test, "test images per class")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--noise", gen.noise, "background noise strength")->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out)->required();
  gen_cmd->add_option("--canvas", gen.canvas)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--mnist", gen.mnist, "IDX digit directory");
  gen_cmd->add_option("--pool-fraction", gen.pool_fraction, "share of digit exemplars reserved for train")
      ->check(CLI::Range(0.0, 1.0));

  auto* scenes_cmd = lego_cmd->add_subcommand("scenes", "counting scenes with box annotations");
  scenes_cmd->add_option("--preset", scenes.preset)
      ->check(CLI::IsMember({"easy", "big_o", "parallel", "close_by"}));
  scenes_cmd->add_option("--instances", scenes.instances, "maximum instances per scene")->check(CLI::PositiveNumber);
  scenes_cmd->add_option("--min-instances", scenes.min_instances)->check(CLI::NonNegativeNumber);
  scenes_cmd->add_option("--n", scenes.n)->check(CLI::NonNegativeNumber);
  scenes_cmd->add_option("--seed", scenes.seed);
  scenes_cmd->add_option("--out", scenes.out)->required();
  scenes_cmd->add_option("--data", scenes.data, "classification set providing the ruleset")->required();
  scenes_cmd->add_option("--pool", scenes.pool)->check(CLI::IsMember({"train", "test"}));
  scenes_cmd->add_option("--canvas", scenes.canvas)->check(CLI::PositiveNumber);
  scenes_cmd->add_option("--noise", scenes.noise)->check(CLI::Range(0.0, 1.0));

  auto* train_cmd_app = app.add_subcommand("train", "train the classification network");
  train_cmd_app->add_option("--data", tr.data)->required();
  train_cmd_app->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber);
  train_cmd_app->add_option("--seed", tr.seed);
  train_cmd_app->add_option("--out", tr.out)->required();
  train_cmd_app->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train_cmd_app->add_option("--momentum", tr.momentum)->check(CLI::Range(0.0, 1.0));
  train_cmd_app->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  train_cmd_app->add_option("--weight-decay", tr.weight_decay)->check(CLI::NonNegativeNumber);
  train_cmd_app->add_option("--lr-decay", tr.lr_decay)->check(CLI::PositiveNumber);
  train_cmd_app->add_option("--kernel", tr.kernel)->check(CLI::PositiveNumber);
  train_cmd_app->add_option("--channels", tr.channels, "conv widths, comma separated");
  train_cmd_app->add_option("--metrics", tr.metrics, "per-epoch CSV (default <out>.metrics.csv)");
  train_cmd_app->add_option("--validate", tr.validate, "score the test split after every epoch");

  auto* dict_cmd = app.add_subcommand("dict", "signature dictionary");
  dict_cmd->require_subcommand(1);
  auto* dict_build_cmd = dict_cmd->add_subcommand("build", "rank feature maps per class");
  dict_build_cmd->add_option("--data", dict.data)->required();
  dict_build_cmd->add_option("--model", dict.model)->required();
  dict_build_cmd->add_option("--out", dict.out)->required();
  dict_build_cmd->add_option("--split", dict.split)->check(CLI::IsMember({"train", "test"}));
  dict_build_cmd->add_option("--per-class", dict.per_class, "images per class, 0 for all")
      ->check(CLI::NonNegativeNumber);

  auto* count_cmd = app.add_subcommand("count", "count classifier");
  count_cmd->require_subcommand(1);
  auto* count_train_cmd = count_cmd->add_subcommand("train", "train the C2P count head");
  count_train_cmd->add_option("--scenes", count.scenes)->required();
  count_train_cmd->add_option("--model", count.model)->required();
  count_train_cmd->add_option("--out", count.out)->required();
  count_train_cmd->add_option("--lambda", count.lambda)->check(CLI::PositiveNumber);
  count_train_cmd->add_option("--epochs", count.epochs)->check(CLI::PositiveNumber);
  count_train_cmd->add_option("--seed", count.seed);
  count_train_cmd->add_option("--c-max", count.c_max)->check(CLI::PositiveNumber);

  auto* run_cmd = app.add_subcommand("run", "run a pipeline over a scene set");
  run_cmd->require_subcommand(1);
  auto* c2p_cmd = run_cmd->add_subcommand("c2p", "count, then point");
  c2p_cmd->add_option("--scenes", run_c2p_args.scenes)->required();
  c2p_cmd->add_option("--model", run_c2p_args.model)->required();
  c2p_cmd->add_option("--svm", run_c2p_args.svm)->required();
  c2p_cmd->add_option("--out", run_c2p_args.out)->required();
  c2p_cmd->add_option("--seed", run_c2p_args.seed);
  c2p_cmd->add_option("--threshold", run_c2p_args.threshold, "heat points must exceed this");
  auto* p2c_cmd = run_cmd->add_subcommand("p2c", "point, then count");
  p2c_cmd->add_option("--scenes", run_p2c_args.scenes)->required();
  p2c_cmd->add_option("--model", run_p2c_args.model)->required();
  p2c_cmd->add_option("--dict", run_p2c_args.dict)->required();
  p2c_cmd->add_option("--out", run_p2c_args.out)->required();
  p2c_cmd->add_option("--seed", run_p2c_args.seed, "unused; P2C is deterministic");
  p2c_cmd->add_option("--threshold", run_p2c_args.threshold, "heat points must exceed this");
  p2c_cmd->add_option("--k-last", run_p2c_args.k_last);
  p2c_cmd->add_option("--k-prev", run_p2c_args.k_prev);
  p2c_cmd->add_option("--dc-fraction", run_p2c_args.dc_fraction, "cutoff distance, share of the diagonal")
      ->check(CLI::PositiveNumber);
  p2c_cmd->add_option("--rho-fraction", run_p2c_args.rho_fraction, "center density, share of the maximum")
      ->check(CLI::Range(0.0, 1.0));
  p2c_cmd->add_option("--delta-fraction", run_p2c_args.delta_fraction, "center separation, share of the diagonal")
      ->check(CLI::NonNegativeNumber);

  auto* eval_cmd_app = app.add_subcommand("eval", "count and pointing accuracy tables");
  eval_cmd_app->add_option("--results", ev.results, "results files, comma separated")->required();
  eval_cmd_app->add_option("--annotations", ev.annotations, "scene directory or annotations.jsonl")->required();
  eval_cmd_app->add_option("--ratios", ev.ratios, "containment thresholds, comma separated");
  eval_cmd_app->add_option("--out", ev.out)->required();
  eval_cmd_app->add_option("--c-max", ev.c_max)->check(CLI::PositiveNumber);

  auto* render_cmd_app = app.add_subcommand("render", "PNG overlays of results");
  render_cmd_app->add_option("--results", render.results)->required();
  render_cmd_app->add_option("--scenes", render.scenes)->required();
  render_cmd_app->add_option("--out", render.out)->required();
  render_cmd_app->add_option("--model", render.model, "recompute heatmaps with this network");
  render_cmd_app->add_option("--dict", render.dict, "needed for p2c heatmaps");
  render_cmd_app->add_option("--k-last", render.k_last);
  render_cmd_app->add_option("--k-prev", render.k_prev);
  render_cmd_app->add_option("--limit", render.limit, "0 renders every result");

  return guarded([&] {
    auto args = expand_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    try {
      app.parse(std::move(reversed));
    } catch (const CLI::Success& e) {
      app.exit(e);
      return;
    }

    const CLI::App* leaf = &app;
    while (!leaf->get_subcommands().empty()) leaf = leaf->get_subcommands().front();
    Context ctx;
    ctx.config = resolved_config(*leaf);
    const std::string command = command_path(leaf);
    ctx.meta = ojson{{"tool", "pnc"}, {"version", PNC_VERSION}, {"command", command}, {"config", ctx.config}}.dump();
    std::cerr << "pnc " << command << " " << ctx.config.dump() << "\n";

    if (leaf == gen_cmd) {
      lego_gen(gen, ctx);
    } else if (leaf == scenes_cmd) {
      lego_scenes(scenes, ctx);
    } else if (leaf == train_cmd_app) {
      train_cmd(tr, ctx);
    } else if (leaf == dict_build_cmd) {
      dict_build(dict, ctx);
    } else if (leaf == count_train_cmd) {
      count_train(count, ctx);
    } else if (leaf == c2p_cmd) {
      run_pipeline("c2p", run_c2p_args, ctx);
    } else if (leaf == p2c_cmd) {
      run_pipeline("p2c", run_p2c_args, ctx);
    } else if (leaf == eval_cmd_app) {
      eval_cmd(ev, ctx);
    } else if (leaf == render_cmd_app) {
      render_cmd(render, ctx);
    }
  });
}

int run_cli(int argc, char** argv) { return run_cli(std::vector<std::string>(argv, argv + argc)); }

}  // namespace pnc::cli
