// Copyright 2026 The sphflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sphflow/conformance.hpp"
#include "sphflow/grad_check.hpp"

namespace sphflow::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys{
      "command", "task", "n_demos", "seed", "out", "data", "checkpoint", "episodes", "perturb",
      "steps_list", "layers", "cases", "ops", "lr", "batch_size", "epochs", "max_steps", "ema_decay",
      "weight_decay", "warmup", "sampler_steps", "log_every", "probe_size"};
  return keys;
}

template <typename T>
void read_key(const Json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

}  // namespace

std::string run_config_json(const RunConfig& c) {
  Json j{{"command", c.command},
         {"task", c.task},
         {"n_demos", c.n_demos},
         {"seed", c.seed},
         {"out", c.out},
         {"data", c.data},
         {"checkpoint", c.checkpoint},
         {"episodes", c.episodes},
         {"perturb", c.perturb},
         {"steps_list", c.steps_list},
         {"layers", c.layers},
         {"cases", c.cases},
         {"ops", c.ops},
         {"lr", c.train.lr},
         {"batch_size", c.train.batch_size},
         {"epochs", c.train.epochs},
         {"max_steps", c.train.max_steps},
         {"ema_decay", c.train.ema_decay},
         {"weight_decay", c.train.weight_decay},
         {"warmup", c.train.warmup},
         {"sampler_steps", c.train.sampler_steps},
         {"log_every", c.train.log_every},
         {"probe_size", c.train.probe_size}};
  const Json model = Json::parse(policy_config_json(c.policy));
  for (const auto& [k, v] : model.items()) j[k] = v;
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  RunConfig c;
  try {
    const Json j = Json::parse(text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    Json model = Json::parse(policy_config_json(c.policy));
    for (const auto& [k, v] : j.items()) {
      if (run_keys().count(k)) continue;
      if (!model.contains(k)) throw ConfigError("unknown config key '" + k + "'");
      model[k] = v;
    }
    read_key(j, "command", c.command);
    read_key(j, "task", c.task);
    read_key(j, "n_demos", c.n_demos);
    read_key(j, "seed", c.seed);
    read_key(j, "out", c.out);
    read_key(j, "data", c.data);
    read_key(j, "checkpoint", c.checkpoint);
    read_key(j, "episodes", c.episodes);
    read_key(j, "perturb", c.perturb);
    read_key(j, "steps_list", c.steps_list);
    read_key(j, "layers", c.layers);
    read_key(j, "cases", c.cases);
    read_key(j, "ops", c.ops);
    read_key(j, "lr", c.train.lr);
    read_key(j, "batch_size", c.train.batch_size);
    read_key(j, "epochs", c.train.epochs);
    read_key(j, "max_steps", c.train.max_steps);
    read_key(j, "ema_decay", c.train.ema_decay);
    read_key(j, "weight_decay", c.train.weight_decay);
    read_key(j, "warmup", c.train.warmup);
    read_key(j, "sampler_steps", c.train.sampler_steps);
    read_key(j, "log_every", c.train.log_every);
    read_key(j, "probe_size", c.train.probe_size);
    c.policy = policy_config_from_json(model.dump(), false);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  c.train.seed = c.seed;
  return c;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  return f;
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path dir(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + c.out + "': " + ec.message());
  return dir;
}

void write_config(const fs::path& dir, const RunConfig& c) {
  auto f = open_output(dir / "config.json");
  f << run_config_json(c);
}

Json report_json(const EvalReport& r, const std::string& policy, int sampler_steps) {
  return Json{{"type", "eval"},
              {"task", r.task},
              {"policy", policy},
              {"perturbation", r.perturbation},
              {"sampler_steps", sampler_steps},
              {"episodes", r.episodes},
              {"successes", r.successes},
              {"success_rate", r.success_rate},
              {"mean_length", r.mean_length},
              {"seeds", r.seeds},
              {"lengths", r.lengths},
              {"success", r.success}};
}

// Fixed-width table on stdout.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  void print(std::ostream& out) const {
    std::vector<std::size_t> w(header_.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = header_[i].size();
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < w.size() && i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        out << (i ? "  " : "") << std::left << std::setw(int(w[i])) << (i < r.size() ? r[i] : "");
      }
      out << '\n';
    };
    line(header_);
    std::vector<std::string> rule;
    for (auto n : w) rule.emplace_back(n, '-');
    line(rule);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

Dataset load_or_generate(const RunConfig& c) {
  if (!c.data.empty()) return load_dataset(c.data);
  return generate_dataset(parse_task(c.task), c.n_demos, c.seed);
}

// -------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& c, std::ostream& out) {
  const Task task = parse_task(c.task);
  const fs::path dir = prepare_out(c);
  const Dataset d = generate_dataset(task, c.n_demos, c.seed);
  write_config(dir, c);
  save_dataset((dir / "dataset.bin").string(), d);
  Json episodes = Json::array();
  for (std::size_t i = 0; i < d.episodes.size(); ++i) {
    const Episode& e = d.episodes[i];
    episodes.push_back({{"index", i}, {"seed", e.seed}, {"steps", e.steps.size()}, {"success", e.success}});
  }
  const Json manifest{{"format", "sphflow-dataset"},
                      {"version", kDatasetVersion},
                      {"task", task_name(task)},
                      {"n_demos", c.n_demos},
                      {"seed", c.seed},
                      {"steps", d.step_count()},
                      {"file", "dataset.bin"},
                      {"episodes", episodes}};
  open_output(dir / "manifest.json") << manifest.dump(2) << '\n';
  out << "wrote " << d.episodes.size() << " demos (" << d.step_count() << " steps) to "
      << (dir / "dataset.bin").string() << '\n';
  return kOk;
}

int cmd_train(RunConfig c, std::ostream& out) {
  const fs::path dir = prepare_out(c);
  const Dataset d = load_or_generate(c);
  if (d.episodes.empty() || d.episodes.front().steps.empty()) throw ConfigError("dataset is empty");
  if (c.policy.variant == Variant::kMlp && c.policy.mlp_points < 1) {
    c.policy.mlp_points = int(d.episodes.front().steps.front().obs.cloud.points.rows());
  }
  c.policy.finalize();
  write_config(dir, c);
  const std::vector<TrainingSample> samples = prepare_dataset(d, c.policy);
  auto metrics = open_output(dir / "metrics.jsonl");
  auto timing = open_output(dir / "timing.jsonl");
  const TrainResult r = train(samples, c.policy, c.train, &metrics, &timing);
  save_checkpoint((dir / "checkpoint.bin").string(), {c.policy, r.params, r.ema});
  out << "trained " << variant_name(c.policy.variant) << " policy: " << r.steps << " steps on " << samples.size()
      << " samples, final loss " << sci(r.epoch_loss.back()) << '\n'
      << "checkpoint " << (dir / "checkpoint.bin").string() << '\n';
  return kOk;
}

struct LoadedPolicy {
  std::string name;
  bool expert = false;
  Checkpoint ckpt;
};

LoadedPolicy load_policy(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required (a file or 'expert')");
  LoadedPolicy p;
  if (c.checkpoint == "expert") {
    p.name = "expert";
    p.expert = true;
    return p;
  }
  p.ckpt = load_checkpoint(c.checkpoint);
  p.name = variant_name(p.ckpt.config.variant);
  return p;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const Task task = parse_task(c.task);
  std::vector<Perturbation> perturb;
  for (const auto& s : c.perturb) perturb.push_back(Perturbation::parse(s));
  const LoadedPolicy lp = load_policy(c);
  const fs::path dir = prepare_out(c);
  write_config(dir, c);
  const Policy policy =
      lp.expert ? expert_policy() : flow_policy(lp.ckpt.config, lp.ckpt.ema, c.train.sampler_steps);
  auto records = open_output(dir / "eval.jsonl");
  Table table({"task", "policy", "perturbation", "steps", "episodes", "success %", "mean length"});
  for (const auto& p : perturb) {
    const EvalReport r = evaluate(policy, task, c.episodes, p, c.seed);
    const int steps = lp.expert ? 0 : c.train.sampler_steps;
    records << report_json(r, lp.name, steps).dump() << '\n';
    table.add({r.task, lp.name, r.perturbation, std::to_string(steps), std::to_string(r.episodes),
               fixed(100.0 * r.success_rate, 1), fixed(r.mean_length, 1)});
  }
  table.print(out);
  return kOk;
}

int cmd_sweep_steps(const RunConfig& c, std::ostream& out) {
  if (c.steps_list.empty()) throw ConfigError("--steps needs at least one step count");
  for (int k : c.steps_list)
    if (k < 1) throw ConfigError("step counts must be positive");
  const Task task = parse_task(c.task);
  std::vector<Perturbation> perturb;
  for (const auto& s : c.perturb) perturb.push_back(Perturbation::parse(s));
  const LoadedPolicy lp = load_policy(c);
  if (lp.expert) throw ConfigError("sweep-steps needs a trained checkpoint");
  const fs::path dir = prepare_out(c);
  write_config(dir, c);
  auto records = open_output(dir / "sweep.jsonl");
  auto reports = open_output(dir / "eval.jsonl");
  Table table({"task", "perturbation", "steps", "episodes", "success %", "ms / chunk"});
  for (const auto& p : perturb) {
    for (int k : c.steps_list) {
      SamplerStats stats;
      const EvalReport r = evaluate(flow_policy(lp.ckpt.config, lp.ckpt.ema, k, &stats), task, c.episodes, p, c.seed);
      const double ms = stats.calls ? 1e3 * stats.seconds / double(stats.calls) : 0.0;
      reports << report_json(r, lp.name, k).dump() << '\n';
      records << Json{{"type", "sweep"},           {"task", r.task},
                      {"perturbation", r.perturbation}, {"sampler_steps", k},
                      {"episodes", r.episodes},     {"success_rate", r.success_rate},
                      {"sampler_calls", stats.calls}, {"sampler_seconds", stats.seconds},
                      {"ms_per_chunk", ms}}
                     .dump()
              << '\n';
      table.add({r.task, r.perturbation, std::to_string(k), std::to_string(r.episodes),
                 fixed(100.0 * r.success_rate, 1), fixed(ms, 3)});
    }
  }
  table.print(out);
  return kOk;
}

int cmd_equiv_check(const RunConfig& c, std::ostream& out) {
  ConformanceOptions opt;
  opt.seed = c.seed;
  opt.layers = c.layers;
  opt.cases = c.cases;
  if (opt.cases < 1) throw ConfigError("--cases must be positive");
  for (const auto& l : opt.layers) {
    const auto& all = conformance_layers();
    if (std::find(all.begin(), all.end(), l) == all.end()) throw ConfigError("unknown layer '" + l + "'");
  }
  std::optional<Checkpoint> ckpt;
  if (!c.checkpoint.empty()) {
    if (c.checkpoint == "expert") throw ConfigError("equiv-check needs a model checkpoint");
    ckpt = load_checkpoint(c.checkpoint);
  }
  const fs::path dir = prepare_out(c);
  write_config(dir, c);
  const std::vector<ConformanceCheck> checks =
      ckpt ? run_conformance(opt, &ckpt->config, &ckpt->ema) : run_conformance(opt, &c.policy);
  auto records = open_output(dir / "equiv.jsonl");
  Table table({"layer", "check", "cases", "max violation", "tolerance", "status"});
  bool ok = true;
  for (const auto& k : checks) {
    const std::string status = k.expected_fail ? (k.passed() ? "EXPECTED-FAIL" : "FAIL (control)")
                                               : (k.passed() ? "PASS" : "FAIL");
    ok = ok && k.passed();
    table.add({k.layer, k.name, std::to_string(k.cases), sci(k.violation), sci(k.tolerance), status});
    records << Json{{"type", "equiv"},          {"layer", k.layer},
                    {"check", k.name},          {"cases", k.cases},
                    {"violation", k.violation}, {"tolerance", k.tolerance},
                    {"expected_fail", k.expected_fail}, {"passed", k.passed()}}
                   .dump()
            << '\n';
  }
  table.print(out);
  return ok ? kOk : kConformance;
}

int cmd_grad_check(const RunConfig& c, std::ostream& out) {
  const std::vector<std::string> ops = c.ops.empty() ? grad_check_ops() : c.ops;
  for (const auto& op : ops) grad_check_tolerance(op);  // rejects unknown names up front
  const fs::path dir = prepare_out(c);
  write_config(dir, c);
  auto records = open_output(dir / "gradcheck.jsonl");
  Table table({"op", "coefficients", "max rel error", "tolerance", "status"});
  bool ok = true;
  for (const auto& op : ops) {
    const GradCheckResult r = grad_check(op, c.seed);
    ok = ok && r.passed();
    table.add({r.op, std::to_string(r.coefficients), sci(r.error), sci(r.tolerance), r.passed() ? "PASS" : "FAIL"});
    records << Json{{"type", "grad_check"}, {"op", r.op}, {"coefficients", r.coefficients},
                    {"error", r.error},      {"tolerance", r.tolerance}, {"passed", r.passed()}}
                   .dump()
            << '\n';
  }
  table.print(out);
  return ok ? kOk : kConformance;
}

// Options given on the command line; unset ones leave the config untouched.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, task, data, checkpoint, variant;
  std::optional<int> n, episodes, batch_size, epochs, sampler_steps, cases, log_every;
  std::optional<long> max_steps;
  std::optional<double> lr;
  std::optional<bool> fusion;
  std::vector<std::string> perturb, layers, ops;
  std::vector<int> steps;

  void apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    if (out) c.out = *out;
    if (task) c.task = *task;
    if (data) c.data = *data;
    if (checkpoint) c.checkpoint = *checkpoint;
    if (variant) c.policy.variant = parse_variant(*variant);
    if (n) c.n_demos = *n;
    if (episodes) c.episodes = *episodes;
    if (batch_size) c.train.batch_size = *batch_size;
    if (epochs) c.train.epochs = *epochs;
    if (sampler_steps) c.train.sampler_steps = *sampler_steps;
    if (cases) c.cases = *cases;
    if (log_every) c.train.log_every = *log_every;
    if (max_steps) c.train.max_steps = *max_steps;
    if (lr) c.train.lr = *lr;
    if (fusion) c.policy.fusion = *fusion;
    if (!perturb.empty()) c.perturb = perturb;
    if (!layers.empty()) c.layers = layers;
    if (!ops.empty()) c.ops = ops;
    if (!steps.empty()) c.steps_list = steps;
    c.train.seed = c.seed;
  }
};

void validate(const RunConfig& c) {
  parse_task(c.task);
  if (c.n_demos < 1) throw ConfigError("--n must be at least 1");
  if (c.episodes < 1) throw ConfigError("--episodes must be at least 1");
  if (c.out.empty()) throw ConfigError("--out must not be empty");
  c.train.validate();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sphflow: SO(3)-equivariant rectified-flow policies on a toy manipulation benchmark"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Resolved config file of an earlier run");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto task = [&](CLI::App* sub) { sub->add_option("--task", o.task, "reach or pick-place"); };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--variant", o.variant, "equivariant or mlp-baseline");
    sub->add_flag("--fusion,!--no-fusion", o.fusion, "Fuse image features into the cloud features");
  };
  auto rollout = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file, or 'expert'");
    sub->add_option("--episodes", o.episodes, "Episodes per setting");
    sub->add_option("--perturb", o.perturb, "none, yaw:<deg>, yaw:haar, tilt:<deg>")->delimiter(',');
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate scripted-expert demonstrations");
  common(gen);
  task(gen);
  gen->add_option("--n", o.n, "Number of demos");

  CLI::App* tr = app.add_subcommand("train", "Train a policy");
  common(tr);
  task(tr);
  model(tr);
  tr->add_option("--data", o.data, "Dataset file (default: generate --n demos from --seed)");
  tr->add_option("--n", o.n, "Number of demos to generate when --data is absent");
  tr->add_option("--lr", o.lr, "Peak learning rate");
  tr->add_option("--steps", o.max_steps, "Optimizer step budget");
  tr->add_option("--epochs", o.epochs, "Epochs");
  tr->add_option("--batch-size", o.batch_size, "Batch size");
  tr->add_option("--log-every", o.log_every, "Step record interval");

  CLI::App* ev = app.add_subcommand("eval", "Closed-loop evaluation");
  common(ev);
  task(ev);
  rollout(ev);
  ev->add_option("--sampler-steps", o.sampler_steps, "Euler steps per action chunk");

  CLI::App* sw = app.add_subcommand("sweep-steps", "Success and sampler cost per Euler step count");
  common(sw);
  task(sw);
  rollout(sw);
  sw->add_option("--steps", o.steps, "Comma-separated Euler step counts")->delimiter(',');

  CLI::App* eq = app.add_subcommand("equiv-check", "Randomized equivariance conformance suite");
  common(eq);
  model(eq);
  eq->add_option("--checkpoint", o.checkpoint, "Check a trained policy instead of random weights");
  eq->add_option("--layers", o.layers, "Comma-separated subset of layers")->delimiter(',');
  eq->add_option("--cases", o.cases, "Random cases per check");

  CLI::App* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  common(gc);
  gc->add_option("--ops", o.ops, "Comma-separated subset of ops")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }
  CLI::App* sub = app.get_subcommands().front();

  RunConfig c;
  try {
    if (!o.config.empty()) c = run_config_from_json(read_file(o.config));
    o.apply(c);
    c.command = sub->get_name();
    validate(c);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (c.command == "gen-data") return cmd_gen_data(c, out);
    if (c.command == "train") return cmd_train(c, out);
    if (c.command == "eval") return cmd_eval(c, out);
    if (c.command == "sweep-steps") return cmd_sweep_steps(c, out);
    if (c.command == "equiv-check") return cmd_equiv_check(c, out);
    return cmd_grad_check(c, out);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace sphflow::cli
