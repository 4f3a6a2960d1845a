#include "privdet/cli.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "privdet/baselines.h"
#include "privdet/config.h"
#include "privdet/corpus.h"
#include "privdet/evaluation.h"
#include "privdet/pipeline.h"
#include "privdet/prompts.h"
#include "privdet/provenance.h"
#include "privdet/version.h"

namespace privdet {
namespace {

namespace fs = std::filesystem;

// Flags shared by commands; unset values leave the config untouched.
struct CommonFlags {
  std::string config;
  std::string lang;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string out;
};

void AddCommon(CLI::App* cmd, CommonFlags* f, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", f->config, "JSON config file");
  }
  cmd->add_option("--lang", f->lang, "english or chinese");
  cmd->add_option("--seed", f->seed, "random seed");
  cmd->add_option("--parallelism", f->parallelism, "worker threads")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", f->out, "output directory");
}

ToolConfig ResolveConfig(const CommonFlags& f, bool require_file) {
  if (f.config.empty() && require_file) {
    throw ConfigError("--config is required for this command");
  }
  ToolConfig c;
  if (!f.config.empty()) {
    c = LoadToolConfig(f.config);
  } else {
    c.template_dir = DefaultTemplateDir();
  }
  if (!f.lang.empty()) c.lang = ParseLang(f.lang);
  if (f.seed) c.seed = *f.seed;
  if (f.parallelism) c.parallelism = *f.parallelism;
  if (!f.out.empty()) c.output_dir = f.out;
  c.Propagate();
  c.pipeline.Validate();
  return c;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw ConfigError("cannot write " + path.string());
  o << text;
  if (!o) throw ConfigError("write failed: " + path.string());
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Pretty(const Json& j) {
  return j.dump(2, ' ', false, Json::error_handler_t::replace) + "\n";
}

std::vector<QuerySample> LoadSamples(const std::string& path,
                                     std::ostream& err) {
  auto parsed = ReadDatasetFile(path);
  for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
  return Flatten(parsed.records);
}

ChatClient MakeClient(const ToolConfig& c) {
  return ChatClient(MakeBackend(c.backend), c.backend.client);
}

// ------------------------------------------------------------ annotate

struct AnnotateArgs {
  CommonFlags common;
  std::string input;
};

int CmdAnnotate(const AnnotateArgs& a, std::ostream& out, std::ostream& err) {
  ToolConfig c = ResolveConfig(a.common, true);
  const auto templates = TemplateRegistry::Load(c.template_dir);
  auto parsed = ReadDatasetFile(a.input);
  for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
  ChatClient client = MakeClient(c);
  PipelineResult r = RunPipeline(parsed.records, templates, client, c.pipeline);

  const Json digest = c.DigestJson();
  r.report["provenance"] = Provenance(digest);
  r.report["config"] = digest;
  r.category_file["provenance"] = Provenance(digest);

  const fs::path dir(c.output_dir);
  WriteText(dir / "annotated.jsonl", WriteDataset(r.records));
  WriteText(dir / "categories.json", Pretty(r.category_file));
  WriteText(dir / "run_report.json", Pretty(r.report));

  const auto& counts = r.report["counts"];
  out << "annotated " << counts["samples"].get<std::size_t>()
      << " samples: leak " << counts["final_leak"].get<std::size_t>()
      << " / non-leak " << counts["final_nonleak"].get<std::size_t>()
      << " / phrases " << counts["phrases_annotated"].get<std::size_t>()
      << "\n";
  out << "categories " << r.categories.entries.size() << ", warnings "
      << r.report["warning_count"].get<std::size_t>() << ", failures "
      << r.failures.size() << "\n";
  out << "wrote " << (dir / "annotated.jsonl").string() << ", "
      << (dir / "categories.json").string() << ", "
      << (dir / "run_report.json").string() << "\n";
  if (r.failures.empty()) return kExitOk;

  bool backend = false;
  err << r.failures.size() << " sample(s) failed:\n";
  for (const auto& f : r.failures) {
    err << "  " << f.dialogue_id << "#" << f.turn_index << " " << f.step
        << ": " << f.error << "\n";
    backend = backend || f.backend;
  }
  return backend ? kExitBackend : kExitData;
}

// ------------------------------------------------------------ evaluate

struct EvaluateArgs {
  CommonFlags common;
  std::string gold;
  std::string pred;
  bool lenient = false;
  std::string component = "f1";
  double threshold = 0.5;
  bool one_to_one = false;
};

int CmdEvaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  ToolConfig c = ResolveConfig(a.common, false);
  EvalOptions opts;
  opts.lang = c.lang;
  opts.strict = !a.lenient;
  opts.match.component = ParseRougeComponent(a.component);
  opts.match.threshold = a.threshold;
  opts.match.one_to_one = a.one_to_one;

  const auto golds = LoadSamples(a.gold, err);
  const auto preds = ReadPredictionsFile(a.pred);
  const EvalReport report = BuildReport(preds, golds, opts);
  if (report.n_unmatched > 0) {
    err << "warning: " << report.n_unmatched
        << " prediction(s) have no gold sample and were ignored\n";
  }
  const fs::path path = fs::path(c.output_dir) / "eval_report.json";
  WriteText(path, Pretty(ReportToJson(report, opts)));
  out << FormatReportTable(report);
  return kExitOk;
}

// --------------------------------------------------------------- split

struct SplitArgs {
  CommonFlags common;
  std::string input;
  double ratio = 0.8;
  std::string test_ids;
  std::optional<double> balance;
};

int CmdSplit(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  ToolConfig c = ResolveConfig(a.common, false);
  auto parsed = ReadDatasetFile(a.input);
  for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";

  SplitResult<DialogueRecord> split;
  Json cfg = Json::object();
  if (!a.test_ids.empty()) {
    std::vector<std::string> ids;
    std::istringstream in(ReadText(a.test_ids));
    for (std::string line; std::getline(in, line);) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
        line.pop_back();
      }
      if (!line.empty()) ids.push_back(line);
    }
    split = SplitByTestIds(parsed.records, ids);
    cfg["mode"] = "test_ids";
    cfg["n_test_ids"] = ids.size();
  } else {
    split = SplitRecords(parsed.records, a.ratio, c.seed);
    cfg["mode"] = "ratio";
    cfg["ratio"] = a.ratio;
    cfg["seed"] = c.seed;
  }

  const fs::path dir(c.output_dir);
  WriteText(dir / "train.jsonl", WriteDataset(split.train));
  WriteText(dir / "test.jsonl", WriteDataset(split.test));

  Json manifest = Json::object();
  Json counts = Json::object();
  counts["train_dialogues"] = split.train.size();
  counts["test_dialogues"] = split.test.size();
  if (a.balance) {
    cfg["balance"] = *a.balance;
    const auto balanced = Balance(Flatten(split.train), *a.balance, c.seed);
    std::string text;
    for (const auto& s : balanced) text += SampleToJson(s).dump() + "\n";
    WriteText(dir / "train_balanced.samples.jsonl", text);
    const auto st = ComputeStats(balanced);
    counts["balanced_leak"] = st.n_leak;
    counts["balanced_nonleak"] = st.n_nonleak;
  }
  manifest["provenance"] = Provenance(cfg);
  manifest["config"] = cfg;
  manifest["counts"] = counts;
  WriteText(dir / "split.json", Pretty(manifest));

  out << "train " << split.train.size() << " dialogues / test "
      << split.test.size() << " dialogues\n";
  return kExitOk;
}

// --------------------------------------------------------------- stats

struct StatsArgs {
  std::string input;
  bool json = false;
};

int CmdStats(const StatsArgs& a, std::ostream& out, std::ostream& err) {
  const auto st = ComputeStats(LoadSamples(a.input, err));
  if (a.json) {
    Json j = Json::object();
    j["leak"] = st.n_leak;
    j["non_leak"] = st.n_nonleak;
    j["phrases"] = st.n_phrases;
    if (st.mean_phrases_per_leak) {
      j["mean_phrases_per_leak"] = *st.mean_phrases_per_leak;
    }
    out << Pretty(j);
    return kExitOk;
  }
  out << "leak " << st.n_leak << " / non-leak " << st.n_nonleak
      << " / phrases " << st.n_phrases << "\n";
  if (st.mean_phrases_per_leak) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mean phrases per leak sample %.4f\n",
                  *st.mean_phrases_per_leak);
    out << buf;
  }
  return kExitOk;
}

// ------------------------------------------------------------ baseline

struct BaselineArgs {
  CommonFlags common;
  std::string test;
  std::string train;
  std::string method;
  std::string task;
  std::optional<int> k;
  std::string examples;
};

std::vector<SampleKey> ReadExampleKeys(const std::string& path) {
  Json j;
  try {
    j = Json::parse(ReadText(path));
    std::vector<SampleKey> keys;
    for (const auto& e : j) {
      keys.emplace_back(e.at("id").get<std::string>(), e.at("turn").get<int>());
    }
    return keys;
  } catch (const Json::exception& e) {
    throw DataError("example list " + path + ": " + e.what());
  }
}

int CmdBaseline(const BaselineArgs& a, std::ostream& out, std::ostream& err) {
  ToolConfig c = ResolveConfig(a.common, true);
  if (!a.method.empty()) c.baseline.method = ParseBaselineMethod(a.method);
  if (!a.task.empty()) c.baseline.task = ParseBaselineTask(a.task);
  if (a.k) c.baseline.icl_k = *a.k;
  c.baseline.Validate();
  const auto templates = TemplateRegistry::Load(c.template_dir);
  const auto samples = LoadSamples(a.test, err);

  std::vector<QuerySample> examples;
  Json cfg = c.DigestJson();
  if (c.baseline.method == BaselineMethod::kIcl) {
    if (a.train.empty()) throw ConfigError("icl needs --train");
    const auto train = LoadSamples(a.train, err);
    examples = a.examples.empty()
                   ? SelectIclExamples(train, c.baseline.icl_k, c.seed)
                   : SelectFixedExamples(train, ReadExampleKeys(a.examples));
    Json keys = Json::array();
    for (const auto& e : examples) {
      keys.push_back({{"id", e.dialogue_id}, {"turn", e.turn_index}});
    }
    cfg["icl_examples"] = keys;
  }

  ChatClient client = MakeClient(c);
  const auto r = RunBaseline(samples, examples, templates, client, c.baseline);

  Json report = Json::object();
  report["provenance"] = Provenance(cfg);
  report["config"] = cfg;
  report["samples"] = samples.size();
  report["warning_count"] = r.warnings.size();
  report["warnings"] = r.warnings;
  report["failures"] = r.failures;
  report["ledger"] = client.ledger().Report(samples.size()).ToJson();

  const fs::path dir(c.output_dir);
  WriteText(dir / "predictions.jsonl", WritePredictions(r.predictions));
  WriteText(dir / "baseline_report.json", Pretty(report));
  out << BaselineMethodName(c.baseline.method) << "/"
      << BaselineTaskName(c.baseline.task) << ": " << samples.size()
      << " predictions, warnings " << r.warnings.size() << ", failures "
      << r.failures.size() << "\n";
  if (r.failures.empty()) return kExitOk;
  for (const auto& f : r.failures) err << "  " << f << "\n";
  return kExitBackend;
}

// ---------------------------------------------------------------- cost

struct CostArgs {
  std::string report;
  std::optional<std::size_t> prompt_tokens;
  std::optional<std::size_t> completion_tokens;
  std::optional<double> input_price;
  std::optional<double> output_price;
  std::optional<std::size_t> samples;
  bool json = false;
};

int CmdCost(const CostArgs& a, std::ostream& out, std::ostream&) {
  LedgerSummary s;
  if (!a.report.empty()) {
    Json j;
    try {
      j = Json::parse(ReadText(a.report));
    } catch (const Json::exception& e) {
      throw DataError("report " + a.report + ": " + e.what());
    }
    s = LedgerSummary::FromJson(j.contains("ledger") ? j["ledger"] : j);
  } else if (a.prompt_tokens || a.completion_tokens) {
    StepUsage u;
    u.prompt_tokens = a.prompt_tokens.value_or(0);
    u.completion_tokens = a.completion_tokens.value_or(0);
    s.steps["manual"] = u;
  } else {
    throw ConfigError("cost needs --report or token counts");
  }
  Prices p = s.prices;
  if (a.input_price) p.input_per_1k = *a.input_price;
  if (a.output_price) p.output_per_1k = *a.output_price;
  s = s.WithPrices(p, a.samples ? a.samples : s.samples);
  if (a.json) {
    out << Pretty(s.ToJson());
  } else {
    out << s.FormatTable();
  }
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Privacy-leakage annotation pipeline and evaluation harness",
               kToolName};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  AnnotateArgs ann;
  auto* c_ann = app.add_subcommand("annotate", "run the annotation pipeline");
  AddCommon(c_ann, &ann.common);
  c_ann->add_option("--input", ann.input, "dialogue dataset")->required();

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "score predictions against gold");
  AddCommon(c_ev, &ev.common);
  c_ev->add_option("--gold", ev.gold, "gold dataset")->required();
  c_ev->add_option("--pred", ev.pred, "prediction file")->required();
  c_ev->add_flag("--lenient", ev.lenient,
                 "count missing predictions as empty instead of failing");
  c_ev->add_option("--component", ev.component,
                   "Rouge-L component for phrase matching: f1, precision, "
                   "recall");
  c_ev->add_option("--threshold", ev.threshold, "phrase match threshold");
  c_ev->add_flag("--one-to-one", ev.one_to_one,
                 "count matches with a maximum one-to-one assignment");

  SplitArgs sp;
  auto* c_sp = app.add_subcommand("split", "dialogue-level train/test split");
  AddCommon(c_sp, &sp.common);
  c_sp->add_option("--input", sp.input, "dialogue dataset")->required();
  c_sp->add_option("--ratio", sp.ratio, "train fraction of dialogues");
  c_sp->add_option("--test-ids", sp.test_ids,
                   "file listing test dialogue ids, one per line");
  c_sp->add_option("--balance", sp.balance,
                   "target leak fraction for a balanced train sample file");

  StatsArgs st;
  auto* c_st = app.add_subcommand("stats", "leak / non-leak / phrase counts");
  c_st->add_option("--input", st.input, "dialogue dataset")->required();
  c_st->add_flag("--json", st.json, "print JSON");

  BaselineArgs bl;
  auto* c_bl = app.add_subcommand("baseline", "zero-shot or in-context baseline");
  AddCommon(c_bl, &bl.common);
  c_bl->add_option("--test", bl.test, "dataset to predict")->required();
  c_bl->add_option("--train", bl.train, "training dataset (icl)");
  c_bl->add_option("--method", bl.method, "zg or icl");
  c_bl->add_option("--task", bl.task, "leakage, phrase, or information");
  c_bl->add_option("--k", bl.k, "number of in-context examples");
  c_bl->add_option("--examples", bl.examples,
                   "fixed examples: JSON list of {\"id\", \"turn\"}");

  CostArgs co;
  auto* c_co = app.add_subcommand("cost", "token and cost summary");
  c_co->add_option("--report", co.report,
                   "run or baseline report holding a ledger");
  c_co->add_option("--prompt-tokens", co.prompt_tokens);
  c_co->add_option("--completion-tokens", co.completion_tokens);
  c_co->add_option("--input-price", co.input_price, "price per 1K input tokens");
  c_co->add_option("--output-price", co.output_price,
                   "price per 1K output tokens");
  c_co->add_option("--samples", co.samples, "sample count for per-sample cost");
  c_co->add_flag("--json", co.json, "print JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*c_ann) return CmdAnnotate(ann, out, err);
    if (*c_ev) return CmdEvaluate(ev, out, err);
    if (*c_sp) return CmdSplit(sp, out, err);
    if (*c_st) return CmdStats(st, out, err);
    if (*c_bl) return CmdBaseline(bl, out, err);
    if (*c_co) return CmdCost(co, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const BackendError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace privdet
