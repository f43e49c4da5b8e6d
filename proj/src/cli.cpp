#include "wingpt/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "wingpt/backend.hpp"
#include "wingpt/config.hpp"
#include "wingpt/curation.hpp"
#include "wingpt/diagchain.hpp"
#include "wingpt/evalbench.hpp"
#include "wingpt/grpo.hpp"
#include "wingpt/judge.hpp"
#include "wingpt/policy.hpp"
#include "wingpt/prefmodel.hpp"
#include "wingpt/records.hpp"

namespace wingpt::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad input discovered after argument parsing: exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}

  void info(std::string_view event, json fields = json::object()) { emit("info", event, std::move(fields)); }
  void warn(std::string_view event, json fields = json::object()) { emit("warn", event, std::move(fields)); }
  void error(std::string_view event, json fields = json::object()) { emit("error", event, std::move(fields)); }

 private:
  void emit(std::string_view level, std::string_view event, json fields) {
    fields["level"] = level;
    fields["event"] = event;
    err_ << fields.dump() << "\n";
  }
  std::ostream& err_;
};

void require_file(const std::string& path, std::string_view flag) {
  if (path.empty()) throw ValidationError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw ValidationError(std::string(flag) + ": no such file: " + path);
}

void require_out(const std::string& path, std::string_view flag) {
  if (path.empty()) throw ValidationError(std::string(flag) + " is required");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ValidationError(std::string(flag) + ": directory does not exist: " + parent.string());
  }
}

// Written beside the primary output. File names only, so manifests from runs
// in different directories compare equal.
void write_manifest(const std::string& primary_out, std::string_view command, const config::RunConfig& cfg,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) {
    if (!p.empty()) in[fs::path(p).filename().string()] = sha256_hex(read_file(p));
  }
  for (const auto& p : outputs) {
    if (!p.empty()) out[fs::path(p).filename().string()] = sha256_hex(read_file(p));
  }
  json m{{"command", command},
         {"config_sha256", sha256_hex(config::to_toml(cfg))},
         {"seed", cfg.seed},
         {"inputs", in},
         {"outputs", out},
         {"version", kVersion}};
  write_file(primary_out + ".manifest.json", m.dump(2) + "\n");
}

// Backend specs: "http" (environment endpoint with the given prefix) or
// "mock:<file>" where the file is {"default": "...", "replies": {"<prompt sha256>": ["..."]},
// "prompts": {"<prompt>": ["..."]}}.
std::unique_ptr<backend::TextBackend> make_backend(const std::string& spec, std::string_view env_prefix) {
  if (spec == "http") return std::make_unique<backend::HttpChatBackend>(backend::HttpChatConfig::from_env(env_prefix));
  if (spec.rfind("mock:", 0) == 0) {
    const std::string path = spec.substr(5);
    require_file(path, "mock backend");
    const json j = json::parse(read_file(path));
    auto b = std::make_unique<backend::ScriptedBackend>();
    if (j.contains("default")) b->set_default(j.at("default").get<std::string>());
    if (j.contains("replies")) {
      for (auto it = j.at("replies").begin(); it != j.at("replies").end(); ++it) {
        b->add_by_hash(it.key(), it->get<std::vector<std::string>>());
      }
    }
    if (j.contains("prompts")) {
      for (auto it = j.at("prompts").begin(); it != j.at("prompts").end(); ++it) {
        b->add(it.key(), it->get<std::vector<std::string>>());
      }
    }
    return b;
  }
  throw ValidationError("unknown backend spec '" + spec + "' (expected http or mock:<file>)");
}

policy::ToyPolicy load_policy(const std::string& path) {
  require_file(path, "policy checkpoint");
  return policy::deserialize_policy(read_file(path));
}

class PolicyBackend : public backend::TextBackend {
 public:
  PolicyBackend(policy::ToyPolicy p, std::size_t max_len) : policy_(std::move(p)), max_len_(max_len) {}
  std::string complete(const std::string& prompt) override {
    std::vector<policy::TokenId> ids;
    try {
      ids = policy_.vocab().encode(prompt);
    } catch (const policy::UnknownToken& e) {
      throw backend::BackendUnavailable(std::string("prompt outside the policy vocabulary: ") + e.what());
    }
    return policy_.vocab().decode(policy::greedy_sequence(policy_, ids, max_len_));
  }

 private:
  policy::ToyPolicy policy_;
  std::size_t max_len_;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

config::RunConfig resolve_config(const Options& o) {
  if (!o.config_path.empty()) require_file(o.config_path, "--config");
  std::vector<std::string> overrides = o.sets;
  if (o.seed) overrides.push_back("run.seed=" + std::to_string(*o.seed));
  return config::load_config(o.config_path, overrides);
}

std::map<std::string, records::QaRecord> qa_by_id(const std::vector<records::QaRecord>& qas) {
  std::map<std::string, records::QaRecord> out;
  for (const auto& q : qas) out.emplace(q.id, q);
  return out;
}

// ---- curate ---------------------------------------------------------------

void curate_filter(const config::RunConfig& cfg, const std::string& in, const std::string& out,
                   const std::string& rejected_path, Log& log) {
  require_file(in, "--in");
  require_out(out, "--out");
  const auto cots = records::read_jsonl<records::CotRecord>(in);
  const auto result = curation::filter_dataset(cots, cfg.filter);
  records::write_jsonl(result.kept, out);
  std::vector<std::string> outputs{out};
  if (!rejected_path.empty()) {
    std::string lines;
    for (const auto& r : result.rejected) {
      lines += json{{"index", r.index}, {"reason", r.reason}, {"record_id", r.record.record_id}}.dump() + "\n";
    }
    write_file(rejected_path, lines);
    outputs.push_back(rejected_path);
  }
  write_manifest(out, "curate filter", cfg, {in}, outputs);
  log.info("curate.filter", {{"input", cots.size()}, {"kept", result.kept.size()}, {"rejected", result.rejected.size()}});
}

void curate_classify(const config::RunConfig& cfg, const std::string& qa_path, const std::string& cot_path,
                     const std::string& out, const std::string& judge_spec, Log& log) {
  require_file(qa_path, "--qa");
  require_file(cot_path, "--cot");
  require_out(out, "--out");
  const auto qas = records::read_jsonl<records::QaRecord>(qa_path);
  const auto cots = records::read_jsonl<records::CotRecord>(cot_path);
  std::map<std::string, const records::CotRecord*> first_cot;
  for (const auto& c : cots) first_cot.emplace(c.record_id, &c);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < qas.size(); ++i) {
    if (first_cot.count(qas[i].id)) {
      todo.push_back(i);
    } else {
      log.warn("curate.classify.no_cot", {{"record_id", qas[i].id}});
    }
  }
  std::unique_ptr<backend::TextBackend> judge;
  if (judge_spec != "heuristic") judge = make_backend(judge_spec, "WINGPT_JUDGE");
  std::vector<records::LabeledQa> labeled(todo.size());
  backend::parallel_for(todo.size(), judge ? cfg.judge.workers : 1, [&](std::size_t k) {
    const auto& qa = qas[todo[k]];
    const auto& cot = *first_cot.at(qa.id);
    labeled[k].record = qa;
    labeled[k].label = judge ? curation::classify_difficulty(qa, cot, *judge)
                             : curation::classify_difficulty_heuristic(qa, cot);
  });
  records::write_jsonl(labeled, out);
  write_manifest(out, "curate classify", cfg, {qa_path, cot_path}, {out});
  log.info("curate.classify", {{"labeled", labeled.size()}, {"judge", judge_spec}});
}

void curate_sample(const config::RunConfig& cfg, const std::string& in, const std::string& out,
                   std::size_t total, Log& log) {
  require_file(in, "--in");
  require_out(out, "--out");
  if (total == 0) total = cfg.curate.sample_total;
  if (total == 0) throw ValidationError("sample size missing: pass --total or set curate.sample_total");
  const auto pool = records::read_jsonl<records::LabeledQa>(in);
  const auto picked = curation::sample_sft(pool, cfg.sampling, total);
  records::write_jsonl(picked, out);
  write_manifest(out, "curate sample", cfg, {in}, {out});
  log.info("curate.sample", {{"pool", pool.size()}, {"sampled", picked.size()}});
}

void curate_select_rl(const config::RunConfig& cfg, const std::string& in, const std::string& out,
                      std::optional<std::size_t> k, Log& log) {
  require_file(in, "--in");
  require_out(out, "--out");
  const auto stats = records::read_jsonl<records::PassStats>(in);
  std::size_t limit = k.value_or(cfg.curate.rl_k);
  if (limit == 0) limit = stats.size();
  const auto ids = curation::select_rl_candidates(stats, limit);
  std::string lines;
  for (const auto& id : ids) lines += id + "\n";
  write_file(out, lines);
  write_manifest(out, "curate select-rl", cfg, {in}, {out});
  log.info("curate.select_rl", {{"stats", stats.size()}, {"selected", ids.size()}});
}

void curate_trace(const config::RunConfig& cfg, const std::string& in, const std::string& out,
                  const std::string& generator_spec, Log& log) {
  require_file(in, "--qa");
  require_out(out, "--out");
  const auto qas = records::read_jsonl<records::QaRecord>(in);
  auto generator = make_backend(generator_spec, "WINGPT_GEN");
  std::vector<const records::QaRecord*> todo;
  for (const auto& q : qas) {
    if (q.gold_answer) {
      todo.push_back(&q);
    } else {
      log.warn("curate.trace.no_answer", {{"record_id", q.id}});
    }
  }
  std::vector<records::CotRecord> traced(todo.size());
  backend::parallel_for(todo.size(), cfg.judge.workers, [&](std::size_t i) {
    traced[i] = curation::trace_think(todo[i]->id, todo[i]->question, *todo[i]->gold_answer, *generator,
                                      cfg.curate.trace_attempts);
  });
  records::write_jsonl(traced, out);
  write_manifest(out, "curate trace", cfg, {in}, {out});
  log.info("curate.trace", {{"traced", traced.size()}});
}

// ---- tasks ----------------------------------------------------------------

void make_tasks(const config::RunConfig& cfg, const std::string& out, const std::string& cot_out,
                const std::string& bench_out, Log& log) {
  require_out(out, "--out");
  const auto tasks = policy::gen_tasks(cfg.tasks.kind, cfg.tasks.count, cfg.seed);
  std::vector<records::QaRecord> qas;
  std::vector<records::CotRecord> cots;
  std::vector<evalbench::BenchItem> bench;
  std::set<std::string> seen_prompts;
  for (const auto& t : tasks) {
    qas.push_back(policy::to_qa(t));
    cots.push_back(records::CotRecord::from_parts(t.id, t.prompt + t.gold_answer, "\\boxed{" + t.gold_answer + "}",
                                                  records::CotSource::distilled));
    if (!seen_prompts.insert(t.prompt).second) continue;
    evalbench::BenchItem item{t.id, t.prompt, evalbench::ExactAnswer{t.gold_answer}};
    if (t.verifier_kind == policy::VerifierKind::bounds) item.answer = evalbench::BoundsAnswer{t.lower, t.upper};
    bench.push_back(std::move(item));
  }
  records::write_jsonl(qas, out);
  std::vector<std::string> outputs{out};
  if (!cot_out.empty()) {
    records::write_jsonl(cots, cot_out);
    outputs.push_back(cot_out);
  }
  if (!bench_out.empty()) {
    std::string lines;
    for (const auto& item : bench) lines += evalbench::to_json(item).dump() + "\n";
    write_file(bench_out, lines);
    outputs.push_back(bench_out);
  }
  write_manifest(out, "tasks", cfg, {}, outputs);
  log.info("tasks", {{"kind", cfg.tasks.kind}, {"count", tasks.size()}, {"bench_items", bench.size()}});
}

// ---- train ----------------------------------------------------------------

void train_sft(const config::RunConfig& cfg, const std::string& qa_path, const std::string& cot_path,
               const std::string& init, const std::string& out, const std::string& metrics, Log& log) {
  require_file(qa_path, "--qa");
  require_file(cot_path, "--cot");
  require_out(out, "--out");
  const auto qas = qa_by_id(records::read_jsonl<records::QaRecord>(qa_path));
  const auto cots = records::read_jsonl<records::CotRecord>(cot_path);
  policy::ToyPolicy pol = init.empty() ? policy::ToyPolicy(policy::Vocabulary::standard(), cfg.policy_order)
                                       : load_policy(init);
  std::vector<policy::SftExample> data;
  for (const auto& c : cots) {
    auto it = qas.find(c.record_id);
    if (it == qas.end()) throw ValidationError("cot record " + c.record_id + " has no question in --qa");
    policy::SftExample ex;
    try {
      ex.prompt = pol.vocab().encode(it->second.question);
      ex.target = pol.vocab().encode(c.response_raw);
    } catch (const policy::UnknownToken& e) {
      throw ValidationError("record " + c.record_id + ": " + e.what());
    }
    ex.target.push_back(pol.vocab().eos());
    data.push_back(std::move(ex));
  }
  const auto result = policy::sft_train(pol, data, cfg.sft);
  write_file(out, policy::serialize(pol));
  std::vector<std::string> outputs{out};
  if (!metrics.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
      lines += json{{"loss", result.loss_history[i]}, {"lr", result.lr_history[i]}, {"step", i + 1}}.dump() + "\n";
    }
    write_file(metrics, lines);
    outputs.push_back(metrics);
  }
  write_manifest(out, "train sft", cfg, {qa_path, cot_path, init}, outputs);
  log.info("train.sft", {{"examples", data.size()},
                         {"steps", result.loss_history.size()},
                         {"final_loss", policy::mean_token_cross_entropy(pol, data)}});
}

void train_grpo(const config::RunConfig& cfg, const std::string& reward, const std::string& qa_path,
                const std::string& emr_path, const std::string& init, const std::string& reference_path,
                const std::string& judge_spec, const std::string& out, const std::string& metrics, Log& log) {
  require_out(out, "--out");
  std::optional<policy::ToyPolicy> pol;
  if (!init.empty()) pol = load_policy(init);
  std::optional<policy::ToyPolicy> reference;
  if (!reference_path.empty()) reference = load_policy(reference_path);

  std::vector<std::vector<policy::TokenId>> prompts;
  grpo::RewardFn reward_fn;
  std::unique_ptr<backend::TextBackend> judge;
  std::vector<records::EmrCase> cases;
  std::vector<std::string> inputs{init, reference_path};

  if (reward == "rule" || reward == "judge") {
    require_file(qa_path, "--qa");
    inputs.push_back(qa_path);
    if (!pol) pol.emplace(policy::Vocabulary::standard(), cfg.policy_order);
    const auto qas = records::read_jsonl<records::QaRecord>(qa_path);
    std::vector<policy::SyntheticTask> tasks;
    for (const auto& q : qas) {
      tasks.push_back(policy::from_qa(q));
      try {
        prompts.push_back(pol->vocab().encode(q.question));
      } catch (const policy::UnknownToken& e) {
        throw ValidationError("record " + q.id + ": " + e.what());
      }
    }
    if (reward == "rule") {
      reward_fn = grpo::task_reward_fn(tasks, cfg.length);
    } else {
      judge = make_backend(judge_spec, "WINGPT_JUDGE");
      const judge::JudgeOptions opts{cfg.judge.max_attempts};
      reward_fn = [qas, &judge, opts](std::size_t i, const std::string& completion) {
        const judge::JudgeRequest req({}, qas.at(i).question, judge::strip_think(*qas.at(i).gold_answer),
                                      judge::strip_think(completion));
        return judge::judge_reward(req, *judge, opts);
      };
    }
  } else if (reward == "diagchain") {
    require_file(emr_path, "--emr");
    inputs.push_back(emr_path);
    cases = records::read_jsonl<records::EmrCase>(emr_path);
    const auto vocab = diagchain::action_vocabulary(cases);
    if (!pol) pol.emplace(vocab, cfg.policy_order);
    if (!(pol->vocab() == vocab)) throw ValidationError("--init policy vocabulary does not match the EMR cases");
    for (const auto& c : cases) prompts.push_back(diagchain::case_prompt(vocab, c));
    judge = make_backend(judge_spec, "WINGPT_JUDGE");
    reward_fn = diagchain::script_reward_fn(cases, *judge, cfg.diagchain.max_turns);
  } else {
    throw ValidationError("--reward must be rule, judge, or diagchain");
  }
  if (prompts.empty()) throw ValidationError("no training prompts");
  if (reference && !(reference->vocab() == pol->vocab())) {
    throw ValidationError("--reference policy vocabulary does not match");
  }

  int last_logged = 0;
  const auto result = grpo::grpo_train(*pol, prompts, reward_fn, cfg.grpo, reference ? &*reference : nullptr,
                                       [&](const grpo::StepMetrics& m, const auto&) {
                                         if (m.step - last_logged >= 100 || m.step == cfg.grpo.steps) {
                                           last_logged = m.step;
                                           log.info("train.grpo.step",
                                                    {{"step", m.step}, {"mean_reward", m.mean_reward}});
                                         }
                                       });
  write_file(out, policy::serialize(*pol));
  std::vector<std::string> outputs{out};
  if (!metrics.empty()) {
    write_file(metrics, grpo::metrics_jsonl(result.history));
    outputs.push_back(metrics);
  }
  write_manifest(out, "train grpo", cfg, inputs, outputs);
  log.info("train.grpo", {{"reward", reward},
                          {"steps", result.history.size()},
                          {"final_mean_reward", result.history.empty() ? 0.0 : result.history.back().mean_reward}});
}

void train_rm(const config::RunConfig& cfg, const std::string& in, const std::string& out, Log& log) {
  require_file(in, "--in");
  require_out(out, "--out");
  const auto pairs = records::read_jsonl<records::PreferencePair>(in);
  if (pairs.empty()) throw ValidationError("no preference pairs in " + in);
  const auto result = prefmodel::train_scorer(pairs, cfg.rm);
  write_file(out, prefmodel::serialize(result.scorer));
  write_manifest(out, "train rm", cfg, {in}, {out});
  log.info("train.rm", {{"pairs", pairs.size()},
                        {"final_loss", result.loss_history.back()},
                        {"train_accuracy", prefmodel::eval_pairwise(result.scorer, prefmodel::featurize(pairs))}});
}

void merge(const config::RunConfig& cfg, const std::string& a, const std::string& b, double weight,
           const std::string& out, Log& log) {
  require_out(out, "--out");
  if (!(weight >= 0.0 && weight <= 1.0)) throw ValidationError("--weight must lie in [0, 1]");
  const auto merged = grpo::merge_parameters(load_policy(a), load_policy(b), weight);
  write_file(out, policy::serialize(merged));
  write_manifest(out, "merge", cfg, {a, b}, {out});
  log.info("merge", {{"weight", weight}, {"rows", merged.table().size()}});
}

// ---- simulate -------------------------------------------------------------

void simulate_diagchain(const config::RunConfig& cfg, const std::string& emr_path, const std::string& agent_spec,
                        const std::string& judge_spec, const std::string& out, Log& log) {
  require_file(emr_path, "--emr");
  require_out(out, "--out");
  const auto cases = records::read_jsonl<records::EmrCase>(emr_path);
  std::optional<diagchain::SynonymTable> synonyms;
  if (!cfg.diagchain.synonyms.empty()) {
    require_file(cfg.diagchain.synonyms, "diagchain.synonyms");
    synonyms = diagchain::load_synonyms(cfg.diagchain.synonyms);
  }
  auto judge = make_backend(judge_spec, "WINGPT_JUDGE");

  std::map<std::string, std::vector<diagchain::AgentAction>> scripts;
  std::optional<policy::ToyPolicy> agent_policy;
  std::unique_ptr<backend::TextBackend> agent_model;
  std::vector<std::string> inputs{emr_path};
  if (agent_spec.rfind("script:", 0) == 0) {
    const std::string path = agent_spec.substr(7);
    require_file(path, "agent script");
    inputs.push_back(path);
    const json j = json::parse(read_file(path));
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::vector<diagchain::AgentAction> actions;
      for (const auto& line : *it) actions.push_back(diagchain::parse_action(line.get<std::string>()));
      scripts[it.key()] = std::move(actions);
    }
  } else if (agent_spec.rfind("policy:", 0) == 0) {
    inputs.push_back(agent_spec.substr(7));
    agent_policy = load_policy(agent_spec.substr(7));
  } else if (agent_spec == "http") {
    agent_model = make_backend("http", "WINGPT_AGENT");
  } else {
    throw ValidationError("--agent must be script:<file>, policy:<file>, or http");
  }

  std::vector<diagchain::Episode> episodes(cases.size());
  backend::parallel_for(cases.size(), cfg.judge.workers, [&](std::size_t i) {
    const auto& c = cases[i];
    std::unique_ptr<diagchain::AgentPolicy> agent;
    if (agent_policy) {
      agent = std::make_unique<diagchain::PolicyAgent>(*agent_policy, c);
    } else if (agent_model) {
      agent = std::make_unique<diagchain::TextAgent>(*agent_model);
    } else {
      auto it = scripts.find(c.case_id);
      if (it == scripts.end()) throw ValidationError("agent script has no entry for case " + c.case_id);
      agent = std::make_unique<diagchain::ScriptedAgent>(it->second);
    }
    episodes[i] = diagchain::run_episode(c, *agent, cfg.diagchain.max_turns, *judge, synonyms ? &*synonyms : nullptr);
  });
  std::string lines;
  double total = 0.0;
  for (const auto& e : episodes) {
    lines += diagchain::episode_jsonl(e);
    total += e.reward.value_or(0.0);
  }
  write_file(out, lines);
  write_manifest(out, "simulate diagchain", cfg, inputs, {out});
  log.info("simulate.diagchain",
           {{"episodes", episodes.size()}, {"mean_reward", episodes.empty() ? 0.0 : total / episodes.size()}});
}

// ---- eval -----------------------------------------------------------------

void eval_run(const config::RunConfig& cfg, const std::vector<std::string>& benches, const std::string& metric_name,
              const std::string& backend_spec, const std::string& out, const std::string& table_path,
              const std::string& reference_path, Log& log) {
  if (benches.empty()) throw ValidationError("--bench is required");
  for (const auto& b : benches) require_file(b, "--bench");
  require_out(out, "--out");
  std::optional<evalbench::Metric> forced;
  if (metric_name != "auto") {
    forced = evalbench::parse_metric(metric_name);
    if (!forced) throw ValidationError("--metric must be auto, accuracy, or micro_f1");
  }
  std::optional<evalbench::ReferenceTable> reference;
  if (!reference_path.empty()) {
    require_file(reference_path, "--reference");
    reference = evalbench::load_reference(reference_path);
  }

  std::vector<evalbench::BenchReport> reports;
  std::string lines;
  for (const auto& path : benches) {
    const auto items = evalbench::read_bench(path);
    if (items.empty()) throw evalbench::EmptyBenchmark(path + ": no items");
    std::unique_ptr<backend::TextBackend> model;
    std::optional<backend::FunctionBackend> oracle;
    if (backend_spec == "oracle") {
      oracle.emplace(evalbench::oracle_backend(items));
    } else if (backend_spec.rfind("policy:", 0) == 0) {
      model = std::make_unique<PolicyBackend>(load_policy(backend_spec.substr(7)), cfg.grpo.max_len);
    } else {
      model = make_backend(backend_spec, "WINGPT_EVAL");
    }
    bool all_choices = true;
    for (const auto& item : items) all_choices &= std::holds_alternative<evalbench::ChoicesAnswer>(item.answer);
    const evalbench::Metric metric = forced.value_or(all_choices ? evalbench::Metric::micro_f1 : evalbench::Metric::accuracy);
    std::string name = fs::path(path).filename().string();
    if (auto dot = name.find('.'); dot != std::string::npos) name = name.substr(0, dot);
    auto report = evalbench::run_benchmark(name, items, oracle ? static_cast<backend::TextBackend&>(*oracle) : *model,
                                           metric, cfg.eval_workers);
    lines += evalbench::report_jsonl(report);
    log.info("eval.benchmark", {{"benchmark", name}, {"metric", evalbench::to_string(metric)}, {"value", report.value}});
    reports.push_back(std::move(report));
  }
  write_file(out, lines);
  std::vector<std::string> outputs{out};
  if (!table_path.empty()) {
    write_file(table_path, evalbench::render_table(reports, reference ? &*reference : nullptr));
    outputs.push_back(table_path);
  }
  std::vector<std::string> inputs = benches;
  if (backend_spec.rfind("policy:", 0) == 0) inputs.push_back(backend_spec.substr(7));
  write_manifest(out, "eval run", cfg, inputs, outputs);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Log log(err);
  CLI::App app{"Desk-scale reasoning-model training pipeline", "wingpt"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Options opts;
  app.add_option("--config", opts.config_path, "TOML config file");
  app.add_option("--seed", opts.seed, "Global seed (overrides run.seed)");
  app.add_option("--set", opts.sets, "Config override section.key=value (repeatable)");

  std::string in, out_path, qa, cot, emr, init, reference, judge_spec = "http", metrics, rejected, cot_out,
      bench_out, table, reference_scores;
  std::optional<std::size_t> k;
  std::size_t total = 0;
  double weight = 0.5;

  auto* curate = app.add_subcommand("curate", "Data curation stages");
  curate->require_subcommand(1);
  auto* c_filter = curate->add_subcommand("filter", "Drop malformed and repetitive chains of thought");
  c_filter->add_option("--in", in, "Input .cot.jsonl")->required();
  c_filter->add_option("--out", out_path, "Kept records")->required();
  c_filter->add_option("--rejected", rejected, "Rejected indices and reasons (JSONL)");
  auto* c_classify = curate->add_subcommand("classify", "Label difficulty");
  c_classify->add_option("--qa", qa, "Questions .qa.jsonl")->required();
  c_classify->add_option("--cot", cot, "Chains of thought .cot.jsonl")->required();
  c_classify->add_option("--out", out_path, "Labeled records")->required();
  c_classify->add_option("--judge", judge_spec, "heuristic, http, or mock:<file>")->capture_default_str();
  auto* c_sample = curate->add_subcommand("sample", "Draw the SFT mix");
  c_sample->add_option("--in", in, "Labeled pool")->required();
  c_sample->add_option("--out", out_path, "Sampled records")->required();
  c_sample->add_option("--total", total, "Sample size (default curate.sample_total)");
  auto* c_select = curate->add_subcommand("select-rl", "Pick RL candidates from pass statistics");
  c_select->add_option("--in", in, "Pass statistics JSONL")->required();
  c_select->add_option("--out", out_path, "Selected ids, one per line")->required();
  c_select->add_option("--k", k, "Number of candidates (default curate.rl_k, 0 = all)");
  auto* c_trace = curate->add_subcommand("trace", "Generate think segments for known answers");
  c_trace->add_option("--qa", in, "Questions with gold answers")->required();
  c_trace->add_option("--out", out_path, "Traced .cot.jsonl")->required();
  c_trace->add_option("--generator", judge_spec, "http or mock:<file>")->capture_default_str();

  auto* tasks = app.add_subcommand("tasks", "Generate synthetic verifiable tasks");
  tasks->add_option("--out", out_path, "Questions .qa.jsonl")->required();
  tasks->add_option("--cot", cot_out, "Reference chains of thought .cot.jsonl");
  tasks->add_option("--bench", bench_out, "Benchmark JSONL (one item per distinct prompt)");

  auto* train = app.add_subcommand("train", "Training stages");
  train->require_subcommand(1);
  auto* t_sft = train->add_subcommand("sft", "Supervised fine-tuning of the toy policy");
  t_sft->add_option("--qa", qa, "Questions .qa.jsonl")->required();
  t_sft->add_option("--cot", cot, "Targets .cot.jsonl")->required();
  t_sft->add_option("--init", init, "Starting checkpoint");
  t_sft->add_option("--out", out_path, "Output checkpoint")->required();
  t_sft->add_option("--metrics", metrics, "Per-step loss and learning rate (JSONL)");
  std::string reward = "rule";
  auto* t_grpo = train->add_subcommand("grpo", "Group relative policy optimization");
  t_grpo->add_option("--reward", reward, "rule, judge, or diagchain")->capture_default_str();
  t_grpo->add_option("--qa", qa, "Questions .qa.jsonl (rule and judge rewards)");
  t_grpo->add_option("--emr", emr, "EMR cases .emr.jsonl (diagchain reward)");
  t_grpo->add_option("--init", init, "Starting checkpoint");
  t_grpo->add_option("--reference", reference, "Reference checkpoint for the KL term");
  t_grpo->add_option("--judge", judge_spec, "http or mock:<file>")->capture_default_str();
  t_grpo->add_option("--out", out_path, "Output checkpoint")->required();
  t_grpo->add_option("--metrics", metrics, "Per-step metrics (JSONL)");
  auto* t_rm = train->add_subcommand("rm", "Train the scaled Bradley-Terry preference scorer");
  t_rm->add_option("--in", in, "Preference pairs .pref.jsonl")->required();
  t_rm->add_option("--out", out_path, "Scorer file")->required();

  std::string a_path, b_path;
  auto* merge_cmd = app.add_subcommand("merge", "Linear interpolation of two checkpoints");
  merge_cmd->add_option("--a", a_path, "First checkpoint")->required();
  merge_cmd->add_option("--b", b_path, "Second checkpoint")->required();
  merge_cmd->add_option("--weight", weight, "Weight of the first checkpoint")->capture_default_str();
  merge_cmd->add_option("--out", out_path, "Merged checkpoint")->required();

  std::string agent_spec;
  auto* simulate = app.add_subcommand("simulate", "Environment rollouts");
  simulate->require_subcommand(1);
  auto* s_diag = simulate->add_subcommand("diagchain", "Run diagnostic-chain consultations");
  s_diag->add_option("--emr", emr, "EMR cases .emr.jsonl")->required();
  s_diag->add_option("--agent", agent_spec, "script:<file>, policy:<file>, or http")->required();
  s_diag->add_option("--judge", judge_spec, "http or mock:<file>")->capture_default_str();
  s_diag->add_option("--out", out_path, "Episode transcripts (JSONL)")->required();

  std::vector<std::string> benches;
  std::string metric = "auto", eval_backend;
  auto* eval = app.add_subcommand("eval", "Benchmark evaluation");
  eval->require_subcommand(1);
  auto* e_run = eval->add_subcommand("run", "Score a backend on benchmark files");
  e_run->add_option("--bench", benches, "Benchmark JSONL (repeatable)")->required();
  e_run->add_option("--backend", eval_backend, "oracle, policy:<file>, http, or mock:<file>")->required();
  e_run->add_option("--metric", metric, "auto, accuracy, or micro_f1")->capture_default_str();
  e_run->add_option("--out", out_path, "Report JSONL")->required();
  e_run->add_option("--table", table, "Rendered table");
  e_run->add_option("--reference", reference_scores, "Reference scores JSON to print under the table");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) {
      out << app.help();
    } else {
      log.error("usage", {{"message", e.what()}});
      err << "Run with --help for more information.\n";
    }
    return 2;
  }

  try {
    const config::RunConfig cfg = resolve_config(opts);
    if (c_filter->parsed()) {
      curate_filter(cfg, in, out_path, rejected, log);
    } else if (c_classify->parsed()) {
      curate_classify(cfg, qa, cot, out_path, judge_spec, log);
    } else if (c_sample->parsed()) {
      curate_sample(cfg, in, out_path, total, log);
    } else if (c_select->parsed()) {
      curate_select_rl(cfg, in, out_path, k, log);
    } else if (c_trace->parsed()) {
      curate_trace(cfg, in, out_path, judge_spec, log);
    } else if (tasks->parsed()) {
      make_tasks(cfg, out_path, cot_out, bench_out, log);
    } else if (t_sft->parsed()) {
      train_sft(cfg, qa, cot, init, out_path, metrics, log);
    } else if (t_grpo->parsed()) {
      train_grpo(cfg, reward, qa, emr, init, reference, judge_spec, out_path, metrics, log);
    } else if (t_rm->parsed()) {
      train_rm(cfg, in, out_path, log);
    } else if (merge_cmd->parsed()) {
      merge(cfg, a_path, b_path, weight, out_path, log);
    } else if (s_diag->parsed()) {
      simulate_diagchain(cfg, emr, agent_spec, judge_spec, out_path, log);
    } else if (e_run->parsed()) {
      eval_run(cfg, benches, metric, eval_backend, out_path, table, reference_scores, log);
    }
  } catch (const config::ConfigError& e) {
    log.error("config", {{"key", e.key()}, {"message", e.what()}});
    return 1;
  } catch (const std::exception& e) {
    log.error("failed", {{"message", e.what()}});
    return 1;
  }
  return 0;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace wingpt::cli
