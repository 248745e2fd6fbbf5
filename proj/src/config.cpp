#include "dipp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_value(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  // Keep floats recognizable as floats to a human reader.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <class T>
  requires std::is_unsigned_v<T>
std::string format_value(T v) {
  return std::to_string(v);
}

std::string format_value(const std::string& v) { return "\"" + v + "\""; }

std::string format_value(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

std::string format_value(Activation a) { return format_value(std::string(activation_name(a))); }
std::string format_value(GeneratorWeighting w) { return format_value(std::string(weighting_name(w))); }

std::string unquote(const std::string& raw) {
  std::string v = trim(raw);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  if (v.find('"') != std::string::npos) throw ConfigError("stray quote in value '" + raw + "'");
  return v;
}

void parse_value(const std::string& raw, double& out) {
  const std::string v = trim(raw);
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
}

template <class T>
  requires std::is_unsigned_v<T>
void parse_value(const std::string& raw, T& out) {
  const std::string v = trim(raw);
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
}

void parse_value(const std::string& raw, std::string& out) { out = unquote(raw); }

void parse_value(const std::string& raw, std::vector<std::size_t>& out) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError("unterminated list '" + v + "'");
    v = v.substr(1, v.size() - 2);
  }
  out.clear();
  if (trim(v).empty()) return;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t n = 0;
    parse_value(item, n);
    out.push_back(n);
  }
}

void parse_value(const std::string& raw, Activation& out) { out = parse_activation(unquote(raw)); }
void parse_value(const std::string& raw, GeneratorWeighting& out) { out = parse_weighting(unquote(raw)); }

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class S, class T>
Field field(std::string section, std::string key, S ExperimentConfig::*group, T S::*member) {
  return Field{std::move(section), std::move(key),
               [=](const ExperimentConfig& c) { return format_value((c.*group).*member); },
               [=](ExperimentConfig& c, const std::string& v) { parse_value(v, (c.*group).*member); }};
}

void add_stage_fields(std::vector<Field>& f, const std::string& s, StageSettings ExperimentConfig::*g,
                      bool with_reward) {
  f.push_back(field(s, "steps", g, &StageSettings::steps));
  f.push_back(field(s, "batch", g, &StageSettings::batch));
  f.push_back(field(s, "lr_generator", g, &StageSettings::lr_generator));
  f.push_back(field(s, "lr_ta", g, &StageSettings::lr_ta));
  f.push_back(field(s, "beta1", g, &StageSettings::beta1));
  f.push_back(field(s, "beta2", g, &StageSettings::beta2));
  f.push_back(field(s, "k_ta", g, &StageSettings::k_ta));
  if (with_reward) f.push_back(field(s, "alpha_rew", g, &StageSettings::alpha_rew));
  f.push_back(field(s, "alpha_cfg", g, &StageSettings::alpha_cfg));
  f.push_back(field(s, "ema_decay", g, &StageSettings::ema_decay));
  f.push_back(field(s, "final_lr_scale", g, &StageSettings::final_lr_scale));
  f.push_back(field(s, "weighting", g, &StageSettings::weighting));
  f.push_back(field(s, "w_gen_floor", g, &StageSettings::w_gen_floor));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back(field("run", "seed", &C::run, &RunSettings::seed));
    f.push_back(field("run", "out", &C::run, &RunSettings::out));
    f.push_back(field("mixture", "dim", &C::mixture, &MixtureSettings::dim));
    f.push_back(field("mixture", "conditions", &C::mixture, &MixtureSettings::conditions));
    f.push_back(field("mixture", "components", &C::mixture, &MixtureSettings::components));
    f.push_back(field("mixture", "radius", &C::mixture, &MixtureSettings::radius));
    f.push_back(field("mixture", "sigma", &C::mixture, &MixtureSettings::sigma));
    f.push_back(field("schedule", "t_min", &C::schedule, &ScheduleSettings::t_min));
    f.push_back(field("schedule", "t_max", &C::schedule, &ScheduleSettings::t_max));
    f.push_back(field("schedule", "p_mean", &C::schedule, &ScheduleSettings::p_mean));
    f.push_back(field("schedule", "p_std", &C::schedule, &ScheduleSettings::p_std));
    f.push_back(field("schedule", "sigma_data", &C::schedule, &ScheduleSettings::sigma_data));
    f.push_back(field("schedule", "sigma_init", &C::schedule, &ScheduleSettings::sigma_init));
    f.push_back(field("network", "hidden", &C::network, &NetworkSettings::hidden));
    f.push_back(field("network", "activation", &C::network, &NetworkSettings::activation));
    f.push_back(field("pretrain", "steps", &C::pretrain, &PretrainSettings::steps));
    f.push_back(field("pretrain", "batch", &C::pretrain, &PretrainSettings::batch));
    f.push_back(field("pretrain", "lr", &C::pretrain, &PretrainSettings::lr));
    f.push_back(field("pretrain", "final_lr_scale", &C::pretrain, &PretrainSettings::final_lr_scale));
    f.push_back(field("pretrain", "beta1", &C::pretrain, &PretrainSettings::beta1));
    f.push_back(field("pretrain", "beta2", &C::pretrain, &PretrainSettings::beta2));
    f.push_back(field("pretrain", "condition_drop", &C::pretrain, &PretrainSettings::condition_drop));
    add_stage_fields(f, "distill", &C::distill, false);
    add_stage_fields(f, "align", &C::align, true);
    f.push_back(field("reward", "kind", &C::reward, &RewardSettings::kind));
    f.push_back(field("reward", "target_component", &C::reward, &RewardSettings::target_component));
    f.push_back(field("reward", "scale", &C::reward, &RewardSettings::scale));
    f.push_back(field("eval", "samples", &C::eval, &EvalSettings::samples));
    return f;
  }();
  return table;
}

std::string serialize_sections(const ExperimentConfig& config, const std::set<std::string>& only) {
  std::ostringstream os;
  std::string current;
  for (const auto& f : fields()) {
    if (!only.empty() && !only.count(f.section)) continue;
    if (f.section != current) {
      if (!current.empty()) os << "\n";
      os << "[" << f.section << "]\n";
      current = f.section;
    }
    os << f.key << " = " << f.get(config) << "\n";
  }
  return os.str();
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

void ExperimentConfig::validate() const {
  if (mixture.dim < 2) throw ConfigError("mixture.dim must be at least 2 for the ring benchmark");
  if (mixture.conditions == 0 || mixture.components == 0) {
    throw ConfigError("mixture needs at least one condition and one component");
  }
  if (!(mixture.sigma > 0.0)) throw ConfigError("mixture.sigma must be positive");
  if (!(mixture.radius >= 0.0)) throw ConfigError("mixture.radius must be >= 0");
  make_schedule(*this).validate();
  make_time_sampler(*this).validate();
  if (!(schedule.sigma_data > 0.0)) throw ConfigError("schedule.sigma_data must be positive");
  if (!(schedule.sigma_init > 0.0)) throw ConfigError("schedule.sigma_init must be positive");
  if (network.hidden.empty()) throw ConfigError("network.hidden needs at least one layer");
  for (auto w : network.hidden) {
    if (w == 0) throw ConfigError("network.hidden widths must be positive");
  }
  if (pretrain.batch == 0) throw ConfigError("pretrain.batch must be positive");
  if (!(pretrain.lr > 0.0)) throw ConfigError("pretrain.lr must be positive");
  if (!(pretrain.final_lr_scale >= 0.0)) throw ConfigError("pretrain.final_lr_scale must be >= 0");
  if (!(pretrain.condition_drop >= 0.0 && pretrain.condition_drop < 1.0)) {
    throw ConfigError("pretrain.condition_drop must lie in [0, 1)");
  }
  if (distill.alpha_rew != 0.0) throw ConfigError("distill stage is reward-free (alpha_rew must be 0)");
  for (const StageSettings* s : {&distill, &align}) {
    if (!(s->lr_generator > 0.0) || !(s->lr_ta > 0.0)) throw ConfigError("learning rates must be positive");
    make_align_config(*this, *s, 0).validate();
  }
  if (reward.kind != "quadratic") throw ConfigError("unknown reward kind '" + reward.kind + "' (expected quadratic)");
  if (reward.target_component >= mixture.components) {
    throw ConfigError("reward.target_component exceeds the component count");
  }
  if (eval.samples < 100) throw ConfigError("eval.samples must be at least 100");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  std::set<std::string> sections;
  for (const auto& f : fields()) {
    index[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }

  ExperimentConfig config = default_config();
  std::set<std::pair<std::string, std::string>> seen;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& msg) {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const auto it = index.find({section, key});
    if (it == index.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert({section, key}).second) fail("duplicate key '" + key + "' in [" + section + "]");
    try {
      it->second->set(config, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      fail(section + "." + key + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string serialize_config(const ExperimentConfig& config) { return serialize_sections(config, {}); }

void save_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  out << serialize_config(config);
  if (!out) throw Error("failed to write config file '" + path + "'");
}

std::uint64_t model_hash(const ExperimentConfig& config) {
  const std::string text = serialize_sections(config, {"mixture", "schedule", "network"});
  std::uint64_t h = 14695981039346656037ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

GaussianMixture make_mixture(const ExperimentConfig& config) {
  const auto& m = config.mixture;
  return GaussianMixture::ring(m.dim, m.conditions, m.components, m.radius, m.sigma);
}

DenoiserArch make_arch(const ExperimentConfig& config) {
  DenoiserArch arch;
  arch.dim = config.mixture.dim;
  arch.num_conditions = config.mixture.conditions;
  arch.hidden = config.network.hidden;
  arch.activation = config.network.activation;
  arch.sigma_data = config.schedule.sigma_data;
  return arch;
}

TimeSampler make_time_sampler(const ExperimentConfig& config) {
  const auto& s = config.schedule;
  return TimeSampler{s.p_mean, s.p_std, s.t_min, s.t_max};
}

DiffusionSchedule make_schedule(const ExperimentConfig& config) {
  return DiffusionSchedule{config.schedule.t_min, config.schedule.t_max};
}

RewardSpec make_reward(const ExperimentConfig& config, const GaussianMixture& mix) {
  if (config.reward.kind != "quadratic") throw ConfigError("unknown reward kind '" + config.reward.kind + "'");
  return quadratic_toward_component(mix, config.reward.target_component, config.reward.scale);
}

AlignConfig make_align_config(const ExperimentConfig& config, const StageSettings& stage, std::uint64_t seed) {
  AlignConfig a;
  a.alpha_rew = stage.alpha_rew;
  a.alpha_cfg = stage.alpha_cfg;
  a.k_ta = stage.k_ta;
  a.time = make_time_sampler(config);
  a.schedule = make_schedule(config);
  a.weighting = stage.weighting;
  a.w_gen_floor = stage.w_gen_floor;
  a.batch = stage.batch;
  a.generator_optimizer = AdamConfig{stage.lr_generator, stage.beta1, stage.beta2, 1e-8};
  a.ta_optimizer = AdamConfig{stage.lr_ta, stage.beta1, stage.beta2, 1e-8};
  a.steps = stage.steps;
  a.ema_decay = stage.ema_decay;
  a.final_lr_scale = stage.final_lr_scale;
  a.seed = seed;
  return a;
}

}  // namespace dipp
