#include "uptodate/harness/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "uptodate/evidence/evidence.hpp"
#include "uptodate/feature/feature.hpp"
#include "uptodate/openset/openset.hpp"
#include "uptodate/rng.hpp"
#include "uptodate/routine/routine.hpp"

namespace uptodate::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

CorruptResultsFile::CorruptResultsFile(const fs::path& path, std::size_t line, const std::string& why)
    : std::runtime_error(path.string() + ":" + std::to_string(line) + ": corrupt record: " + why),
      line_(line) {}

namespace {

double flag(bool b) { return b ? 1.0 : 0.0; }

template <typename M>
M method_index(const Scenario& s, const std::string& id) {
  for (std::size_t i = 0; i < s.methods.size(); ++i)
    if (s.methods[i].id == id) return static_cast<M>(i);
  throw ConfigError(s.id + ": unknown method '" + id + "'");
}

Scenario feature_scenario() {
  Scenario s;
  s.id = "feature";
  s.methods = {{"fixed_feature", "Fixed feature"},
               {"random_expansion", "Random expansion"},
               {"proposed", "Proposed"}};
  s.metrics = {{"acc", "Acc."}, {"disc", "Disc."}, {"false", "False"}, {"steps", "Steps"}, {"cost", ""}};
  s.validate = [](const json& p) { feature::config_from_json(p); };
  s.run = [self = s](const std::string& method, const json& p, std::uint64_t seed) {
    const feature::Config cfg = feature::config_from_json(p);
    Rng rng(seed);
    const auto r = feature::run_feature_method(method_index<feature::Method>(self, method), cfg, rng);
    return core::MetricMap{{"acc", r.final_accuracy},
                           {"disc", flag(r.discovered_useful)},
                           {"false", static_cast<double>(r.false_acceptances)},
                           {"steps", static_cast<double>(r.adaptation_steps)},
                           {"cost", r.evidence_cost}};
  };
  return s;
}

Scenario openset_scenario() {
  Scenario s;
  s.id = "openset";
  s.methods = {{"closed_set", "Closed-set"},
               {"open_set_only", "Open-set only"},
               {"random_expansion", "Random expansion"},
               {"proposed", "Proposed"}};
  s.metrics = {{"unk", "Unk."},   {"new", "New"},      {"false", "False"}, {"model", "Model"},
               {"forget", "Forget"}, {"created", ""}, {"mixed_acc", ""}};
  s.validate = [](const json& p) { openset::config_from_json(p); };
  s.run = [self = s](const std::string& method, const json& p, std::uint64_t seed) {
    const openset::Config cfg = openset::config_from_json(p);
    Rng rng(seed);
    const auto r = openset::run_openset_method(method_index<openset::Method>(self, method), cfg, rng);
    return core::MetricMap{{"unk", r.unknown_detection_rate},
                           {"new", flag(r.new_category_formed_correctly)},
                           {"false", static_cast<double>(r.false_categories)},
                           {"model", flag(r.model_update_success)},
                           {"forget", r.forgetting},
                           {"created", static_cast<double>(r.categories_created)},
                           {"mixed_acc", r.mixed_accuracy}};
  };
  return s;
}

Scenario routine_scenario() {
  Scenario s;
  s.id = "routine";
  s.methods = {{"fixed_routine", "Fixed routine"},
               {"random_search", "Random search"},
               {"rl_like", "RL-like"},
               {"proposed", "Proposed"}};
  s.metrics = {{"succ", "Succ."}, {"len", "Len."},  {"time", "Time"},
               {"comp", "Comp."}, {"fail", "Fail"}, {"solved", ""}};
  s.conditional = {{"len_solved", "len", "solved"}, {"comp_solved", "comp", "solved"}};
  s.validate = [](const json& p) { routine::config_from_json(p); };
  s.run = [self = s](const std::string& method, const json& p, std::uint64_t seed) {
    const routine::Config cfg = routine::config_from_json(p);
    Rng rng(seed);
    const auto r = routine::run_routine_method(method_index<routine::Method>(self, method), cfg, rng);
    return core::MetricMap{{"succ", r.success},
                           {"len", r.final_length},
                           {"time", r.adaptation_time},
                           {"comp", r.compression_ratio},
                           {"fail", r.failed_trial_rate},
                           {"solved", flag(r.solved)}};
  };
  return s;
}

Scenario evidence_scenario() {
  Scenario s;
  s.id = "evidence";
  s.methods = {{"no_improvement", "No improvement"}, {"memory_only", "Memory-only"}, {"proposed", "Proposed"}};
  s.metrics = {{"useful", "Useful"}, {"cost", "Cost"}, {"repeat", "Repeat"},
               {"think", "Think"},   {"scope", "Scope"}, {"useful_w0", ""},
               {"useful_w1", ""},    {"useful_w2", ""}};
  s.validate = [](const json& p) { evidence::config_from_json(p); };
  s.run = [self = s](const std::string& method, const json& p, std::uint64_t seed) {
    const evidence::Config cfg = evidence::config_from_json(p);
    Rng rng(seed);
    const auto r = evidence::run_evidence_method(method_index<evidence::Method>(self, method), cfg, rng);
    return core::MetricMap{{"useful", r.useful_rate},
                           {"cost", r.avg_cost},
                           {"repeat", r.repeated_error_rate},
                           {"think", r.thinking_success_rate},
                           {"scope", r.scope_success_rate},
                           {"useful_w0", r.useful_by_window[0]},
                           {"useful_w1", r.useful_by_window[1]},
                           {"useful_w2", r.useful_by_window[2]}};
  };
  return s;
}

std::vector<Scenario>& registry() {
  static std::vector<Scenario> all = {feature_scenario(), openset_scenario(), routine_scenario(),
                                      evidence_scenario()};
  return all;
}

bool has_all_metrics(const Scenario& s, const core::MetricMap& m) {
  return std::all_of(s.metrics.begin(), s.metrics.end(),
                     [&](const MetricInfo& k) { return m.contains(k.key); });
}

}  // namespace

std::vector<MetricInfo> Scenario::table_columns() const {
  std::vector<MetricInfo> out;
  for (const auto& m : metrics)
    if (!m.header.empty()) out.push_back(m);
  return out;
}

const MethodInfo& Scenario::method(std::string_view method_id) const {
  for (const auto& m : methods)
    if (m.id == method_id) return m;
  throw ConfigError(id + ": unknown method '" + std::string(method_id) + "'");
}

std::vector<std::string> scenario_ids() {
  std::vector<std::string> v;
  for (const auto& s : registry()) v.push_back(s.id);
  return v;
}

void register_scenario(Scenario s) {
  for (const auto& existing : registry())
    if (existing.id == s.id) throw ConfigError("scenario '" + s.id + "' already registered");
  if (s.methods.empty() || !s.run || !s.validate)
    throw ConfigError("scenario '" + s.id + "' needs methods, run and validate");
  registry().push_back(std::move(s));
}

const Scenario& scenario(std::string_view id) {
  for (const auto& s : registry())
    if (s.id == id) return s;
  throw ConfigError("unknown scenario '" + std::string(id) + "'");
}

// ---- config ----

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object");
  static const std::set<std::string> known = {"scenario", "methods", "rounds", "base_seed", "output",
                                              "parameters"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + key + "'");

  ExperimentConfig c;
  try {
    if (!j.contains("scenario")) throw ConfigError("config: missing 'scenario'");
    c.scenario = j.at("scenario").get<std::string>();
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
    if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("parameters")) c.parameters = j.at("parameters");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void validate_config(ExperimentConfig& c) {
  const Scenario& s = scenario(c.scenario);
  if (c.rounds < 1) throw ConfigError("config: rounds must be >= 1");
  if (c.methods.empty())
    for (const auto& m : s.methods) c.methods.push_back(m.id);
  std::set<std::string> seen;
  for (const auto& m : c.methods) {
    s.method(m);
    if (!seen.insert(m).second) throw ConfigError("config: method '" + m + "' listed twice");
  }
  if (c.parameters.is_null()) c.parameters = json::object();
  try {
    s.validate(c.parameters);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---- records ----

std::string serialize_record(const RoundRecord& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["method"] = r.method;
  j["round_index"] = r.round_index;
  j["seed"] = r.seed;
  ordered_json metrics = ordered_json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  j["metrics"] = metrics;
  j["completed"] = r.completed;
  j["wall_time_ms"] = r.wall_time_ms;
  return j.dump();
}

RoundRecord parse_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw std::invalid_argument(e.what());
  }
  static const std::set<std::string> fields = {"scenario", "method",    "round_index", "seed",
                                               "metrics",  "completed", "wall_time_ms"};
  if (!j.is_object() || j.size() != fields.size())
    throw std::invalid_argument("expected an object with exactly the record fields");
  for (const auto& [key, value] : j.items())
    if (!fields.contains(key)) throw std::invalid_argument("unexpected field '" + key + "'");
  RoundRecord r;
  try {
    r.scenario = j.at("scenario").get<std::string>();
    r.method = j.at("method").get<std::string>();
    if (!j.at("round_index").is_number_integer()) throw std::invalid_argument("round_index");
    r.round_index = j.at("round_index").get<int>();
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
      throw std::invalid_argument("seed");
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("metrics").items()) {
      if (!v.is_number()) throw std::invalid_argument("metric '" + k + "' is not a number");
      r.metrics[k] = v.get<double>();
    }
    if (!j.at("metrics").is_object()) throw std::invalid_argument("metrics");
    r.completed = j.at("completed").get<bool>();
    if (!j.at("wall_time_ms").is_number_integer()) throw std::invalid_argument("wall_time_ms");
    r.wall_time_ms = j.at("wall_time_ms").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(e.what());
  }
  if (r.round_index < 0) throw std::invalid_argument("negative round_index");
  return r;
}

ResultsFile read_results(const fs::path& path) {
  ResultsFile out;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (fs::exists(path)) throw std::runtime_error("cannot read results file " + path.string());
    return out;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string_view line(text.data() + pos, (terminated ? nl : text.size()) - pos);
    const std::size_t next = terminated ? nl + 1 : text.size();
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (!terminated) break;
      out.valid_bytes = next;
      pos = next;
      continue;
    }
    try {
      out.records.push_back(parse_record(line));
    } catch (const std::invalid_argument& e) {
      // A crash mid-append leaves an unterminated fragment; anything else is corruption.
      if (!terminated) {
        out.partial_tail = true;
        break;
      }
      throw CorruptResultsFile(path, line_no, e.what());
    }
    out.valid_bytes = next;
    pos = next;
  }
  return out;
}

// ---- aggregation ----

const AggregateRow* AggregateTable::row(std::string_view method) const {
  for (const auto& r : rows)
    if (r.method == method) return &r;
  return nullptr;
}

AggregateTable aggregate(const std::vector<RoundRecord>& records) {
  AggregateTable table;
  if (records.empty()) return table;
  table.scenario = records.front().scenario;
  for (const auto& r : records)
    if (r.scenario != table.scenario)
      throw MixedScenarios("records mix scenarios '" + table.scenario + "' and '" + r.scenario + "'");
  const Scenario& s = scenario(table.scenario);

  // First completed record per cell; order-independent because cells are unique.
  std::map<std::string, std::map<int, const RoundRecord*>> cells;
  for (const auto& r : records) {
    if (!r.completed || !has_all_metrics(s, r.metrics)) continue;
    s.method(r.method);
    cells[r.method].emplace(r.round_index, &r);
  }

  for (const auto& m : s.methods) {
    auto it = cells.find(m.id);
    if (it == cells.end()) continue;
    AggregateRow row;
    row.method = m.id;
    row.display = m.display;
    row.count = it->second.size();
    const double n = static_cast<double>(row.count);
    for (const auto& metric : s.metrics) {
      double sum = 0.0;
      for (const auto& [round, rec] : it->second) sum += rec->metrics.at(metric.key);
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& [round, rec] : it->second) ss += std::pow(rec->metrics.at(metric.key) - mean, 2);
      row.mean[metric.key] = mean;
      row.sd[metric.key] = row.count > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    for (const auto& c : s.conditional) {
      double sum = 0.0;
      double k = 0.0;
      for (const auto& [round, rec] : it->second) {
        if (rec->metrics.at(c.condition) == 0.0) continue;
        sum += rec->metrics.at(c.value);
        k += 1.0;
      }
      row.mean[c.key] = k > 0.0 ? sum / k : std::numeric_limits<double>::quiet_NaN();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---- runner ----

AggregateTable run_experiment(ExperimentConfig config, const RunOptions& options, RunSummary* summary) {
  validate_config(config);
  const Scenario& s = scenario(config.scenario);
  RunSummary local;
  RunSummary& sum = summary ? *summary : local;
  sum = {};

  std::vector<RoundRecord> records;
  if (options.resume) {
    ResultsFile existing = read_results(config.output);
    if (existing.partial_tail) {
      fs::resize_file(config.output, existing.valid_bytes);
      sum.truncated_tail = true;
    }
    for (const auto& r : existing.records) {
      if (r.scenario != config.scenario)
        throw MixedScenarios(config.output.string() + " holds '" + r.scenario + "' records, not '" +
                             config.scenario + "'");
      if (r.completed && r.seed != config.base_seed + static_cast<std::uint64_t>(r.round_index))
        throw ConfigError(config.output.string() + ": round " + std::to_string(r.round_index) +
                          " was run with a different base seed");
    }
    records = std::move(existing.records);
  }

  std::set<std::pair<std::string, int>> done;
  for (const auto& r : records)
    if (r.completed && has_all_metrics(s, r.metrics)) done.insert({r.method, r.round_index});

  // A surviving fragment without a newline would glue onto the next record.
  bool need_newline = false;
  if (options.resume && fs::exists(config.output) && fs::file_size(config.output) > 0) {
    std::ifstream tail(config.output, std::ios::binary);
    tail.seekg(-1, std::ios::end);
    need_newline = tail.get() != '\n';
  }

  std::ofstream out(config.output, options.resume ? std::ios::app | std::ios::binary
                                                  : std::ios::trunc | std::ios::binary);
  if (!out) throw OutputError("cannot open results file " + config.output.string() + " for writing");
  if (need_newline) out << '\n';

  auto clock = options.clock ? options.clock : [] {
    return static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                         std::chrono::steady_clock::now().time_since_epoch())
                                         .count());
  };

  for (const auto& method : config.methods) {
    for (int round = 0; round < config.rounds; ++round) {
      if (done.contains({method, round})) {
        ++sum.skipped;
        continue;
      }
      if (options.max_new_cells && sum.appended >= *options.max_new_cells) {
        sum.interrupted = true;
        break;
      }
      RoundRecord rec;
      rec.scenario = s.id;
      rec.method = method;
      rec.round_index = round;
      rec.seed = config.base_seed + static_cast<std::uint64_t>(round);
      const std::int64_t start = clock();
      try {
        rec.metrics = s.run(method, config.parameters, rec.seed);
      } catch (const std::exception& e) {
        throw ScenarioError(s.id + "/" + method + "/round " + std::to_string(round) + " (seed " +
                            std::to_string(rec.seed) + "): " + e.what());
      }
      rec.wall_time_ms = clock() - start;
      rec.completed = has_all_metrics(s, rec.metrics);
      out << serialize_record(rec) << '\n';
      out.flush();
      if (!out) throw OutputError("write to " + config.output.string() + " failed");
      if (options.on_record) options.on_record(rec);
      records.push_back(std::move(rec));
      ++sum.appended;
    }
    if (sum.interrupted) break;
  }
  return aggregate(records);
}

}  // namespace uptodate::harness
