#include "couple/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "couple/cli/config.hpp"
#include "couple/datakit/manifest.hpp"
#include "couple/datakit/split.hpp"
#include "couple/errors.hpp"
#include "couple/evalkit/evaluate.hpp"
#include "couple/evalkit/report.hpp"
#include "couple/model/checkpoint.hpp"
#include "couple/model/model.hpp"

namespace couple::cli {

namespace fs = std::filesystem;
using Settings = std::map<std::string, std::string>;

namespace {

// Training settings that may change between a checkpoint and its resumption.
const std::set<std::string> kResumable{"data",   "checkpoint", "loss_log", "resume",
                                       "checkpoint_every", "epochs", "max_steps"};

struct Parsed {
  std::string config_file;
  Settings values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

RunConfig resolve(const std::string& command, const Settings& base, const Parsed& parsed) {
  Settings values;
  for (const KeySpec& k : keys_for(command)) {
    const auto it = base.find(k.name);
    values[k.name] = it != base.end() ? it->second : k.fallback;
  }
  if (!parsed.config_file.empty()) {
    const auto file = parse_config_text(evalkit::read_text(parsed.config_file), parsed.config_file);
    for (const auto& [key, value] : file) {
      if (values.count(key)) values[key] = value;
    }
  }
  for (const auto& [key, opt] : parsed.options) {
    if (opt->count() == 0) continue;
    const auto flag = parsed.flags.find(key);
    values[key] = flag != parsed.flags.end() ? (flag->second ? "true" : "false")
                                             : parsed.values.at(key);
  }
  return RunConfig(std::move(values));
}

const std::string& require(const RunConfig& c, const std::string& key) {
  const auto& v = c.text(key);
  if (v.empty()) throw ValidationError("missing required option " + flag_name(key));
  return v;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path, std::ios::openmode extra = std::ios::trunc) {
  std::ofstream out(path, std::ios::binary | extra);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_comments(std::ostream& out, const Settings& echo) {
  for (const auto& line : datakit::echo_lines(echo)) out << "# " << line << '\n';
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Settings prefixed(const Settings& base, const std::string& prefix, Settings into) {
  for (const auto& [k, v] : base) into[prefix + k] = v;
  return into;
}

void check_vocabulary(const model::CoupleParams& params, const datakit::ItemCatalog& catalog) {
  if (params.tag_count() != catalog.tag_count() || params.domain_count() < catalog.domain_count()) {
    throw ValidationError("checkpoint was trained on " + std::to_string(params.tag_count()) +
                          " tags and " + std::to_string(params.domain_count()) +
                          " domains; the split catalog has " + std::to_string(catalog.tag_count()) +
                          " and " + std::to_string(catalog.domain_count()));
  }
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
  const fs::path dir = require(c, "out");
  const auto data = datakit::synth_generate(synth_config(c));
  make_dir(dir);
  const auto comments = datakit::echo_lines(c.values());
  datakit::write_catalog(data.catalog, dir / "catalog.tsv", comments);
  datakit::write_interactions(data.log, data.catalog, dir / "interactions.tsv", comments);
  auto groups = open_out(dir / "user_groups.tsv");
  write_comments(groups, c.values());
  for (std::size_t u = 0; u < data.user_group.size(); ++u) {
    groups << data.log.user_name(u) << '\t' << data.user_group[u] << '\n';
  }
  if (!groups) throw IoError("failed writing user_groups.tsv");
  out << "synth: " << data.catalog.size() << " items, " << data.log.user_count() << " users, "
      << data.log.events().size() << " events -> " << dir.string() << '\n';
  return 0;
}

int cmd_split(const RunConfig& c, std::ostream& out) {
  const auto catalog = datakit::load_catalog(require(c, "catalog"));
  const auto log = datakit::load_interactions(require(c, "interactions"), catalog);
  const fs::path dir = require(c, "out");
  auto split = datakit::leave_one_out_split(log, catalog, c.size("target_domain"),
                                            c.real("cold_fraction"), c.u64("seed"));
  datakit::attach_candidates(split, log, catalog, c.size("eval_random"), c.size("eval_popular"));
  datakit::write_split_dir(dir, catalog, split, c.values());
  const auto cold = std::count_if(split.cases.begin(), split.cases.end(),
                                  [](const datakit::TestCase& t) { return t.cold; });
  const auto skipped = std::count_if(split.cases.begin(), split.cases.end(),
                                     [](const datakit::TestCase& t) { return t.skipped; });
  out << "split: " << split.cases.size() << " test cases (" << cold << " cold, " << skipped
      << " skipped), " << split.train.events().size() << " training events -> " << dir.string()
      << '\n';
  return 0;
}

// Keeps the header and the rows logged before `step`, so a resumed run ends
// with the same log as an uninterrupted one.
void truncate_loss_log(const fs::path& path, std::uint64_t step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open loss log " + path.string() + " for resuming");
  std::ostringstream kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#' || line.rfind("step\t", 0) == 0) {
      kept << line << '\n';
      continue;
    }
    if (std::stoull(line.substr(0, line.find('\t'))) < step) kept << line << '\n';
  }
  in.close();
  auto out = open_out(path);
  out << kept.str();
}

int cmd_train(const Parsed& parsed, std::ostream& out, std::ostream& err) {
  RunConfig c = resolve("train", {}, parsed);
  const fs::path ckpt_path = require(c, "checkpoint");
  std::optional<model::Checkpoint> resumed;
  if (c.boolean("resume")) {
    resumed = model::load_checkpoint(ckpt_path);
    c = resolve("train", resumed->config, parsed);
    c.set("resume", "true");
    for (const auto& [key, value] : c.values()) {
      if (kResumable.count(key)) continue;
      const auto it = resumed->config.find(key);
      if (it == resumed->config.end() || it->second != value) {
        throw ValidationError("setting '" + key + "' differs from the checkpoint (" +
                              (it == resumed->config.end() ? std::string("absent") : it->second) +
                              " there, " + value + " here)");
      }
    }
  }
  const auto split_dir = datakit::load_split_dir(require(c, "data"));
  const auto mc = model_config(c);
  const auto tc = train_config(c);
  auto samples = model::make_training_samples(split_dir.split.train, split_dir.catalog, mc.max_len);
  if (samples.empty()) throw ValidationError("the training split yields no samples");

  std::optional<model::Trainer> trainer;
  if (resumed) {
    check_vocabulary(resumed->params, split_dir.catalog);
    trainer.emplace(split_dir.catalog, std::move(samples), resumed->params, tc, resumed->adam,
                    resumed->queue, resumed->step);
  } else {
    trainer.emplace(split_dir.catalog, std::move(samples),
                    model::CoupleParams::init(mc, split_dir.catalog.tag_count(),
                                              split_dir.catalog.domain_count(), tc.seed),
                    tc);
  }

  const fs::path log_path =
      c.text("loss_log").empty() ? fs::path(ckpt_path.string() + ".loss.tsv") : fs::path(c.text("loss_log"));
  if (resumed && fs::exists(log_path)) {
    truncate_loss_log(log_path, resumed->step);
  } else {
    auto fresh = open_out(log_path);
    write_comments(fresh, c.values());
    fresh << "step\ttotal\tcontrastive\tortho\n";
  }
  auto log = open_out(log_path, std::ios::app);

  const auto save = [&] {
    model::Checkpoint ck{trainer->params(), trainer->adam(),  trainer->queue(),
                         trainer->config(), trainer->step(), c.values()};
    model::save_checkpoint(ck, ckpt_path);
  };
  const std::uint64_t every = c.u64("checkpoint_every");
  model::StepLoss last;
  bool any = false;
  const auto on_step = [&](const model::StepLoss& l) {
    log << l.step << '\t' << fmt(l.total) << '\t' << fmt(l.contrastive) << '\t' << fmt(l.ortho) << '\n';
    if ((l.step + 1) % 100 == 0) {
      err << "step " << l.step + 1 << "/" << trainer->total_steps() << " loss " << l.total << '\n';
    }
    last = l;
    any = true;
  };
  do {
    const std::uint64_t chunk = every ? every - trainer->step() % every : UINT64_MAX;
    trainer->run(chunk, on_step);
    save();
  } while (!trainer->done());
  log.flush();
  if (!log) throw IoError("failed writing " + log_path.string());

  out << "train: step " << trainer->step() << "/" << trainer->total_steps();
  if (any) out << ", last loss " << fmt(last.total);
  out << " -> " << ckpt_path.string() << '\n';
  return 0;
}

void emit_report(const evalkit::EvalReport& report, const fs::path& path, std::ostream& out) {
  evalkit::write_text(path, evalkit::report_json(report));
  out << evalkit::report_table(report);
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const auto ck = model::load_checkpoint(require(c, "checkpoint"));
  const auto sd = datakit::load_split_dir(require(c, "split"));
  const fs::path report_path = require(c, "out");
  check_vocabulary(ck.params, sd.catalog);
  auto report = evalkit::evaluate(ck.params, sd.split, sd.catalog, c.sizes("k", ','), ck.train.seed,
                                  c.size("workers"));
  report.config = prefixed(sd.config, "split.", prefixed(ck.config, "train.", c.values()));
  emit_report(report, report_path, out);
  return 0;
}

int cmd_baseline(const RunConfig& c, std::ostream& out) {
  const auto kind = evalkit::parse_baseline(require(c, "kind"));
  const auto sd = datakit::load_split_dir(require(c, "split"));
  const fs::path report_path = require(c, "out");
  auto report = evalkit::baseline_scores(kind, sd.split, sd.catalog, c.sizes("k", ','), c.u64("seed"));
  report.config = prefixed(sd.config, "split.", c.values());
  emit_report(report, report_path, out);
  return 0;
}

void write_rows(std::ostream& os, const std::string& id, const double* row, std::size_t d) {
  os << id;
  for (std::size_t j = 0; j < d; ++j) os << '\t' << fmt(row[j]);
  os << '\n';
}

int cmd_export(const RunConfig& c, std::ostream& out) {
  const auto ck = model::load_checkpoint(require(c, "checkpoint"));
  const std::string what = require(c, "what");
  const fs::path path = require(c, "out");
  if (what != "tags" && what != "leaves" && what != "users" && what != "assignments") {
    throw ValidationError("--what must be tags, leaves, users or assignments, got '" + what + "'");
  }
  const auto& mc = ck.params.config();
  const std::size_t d = mc.dim;
  const Settings echo = prefixed(ck.config, "train.", c.values());

  if (what == "leaves") {
    if (!mc.use_group) throw ValidationError("the checkpoint was trained without the memory tree");
    const auto& slots = ck.params.get("tree.layer" + std::to_string(mc.tree.depth()));
    auto os = open_out(path);
    write_comments(os, echo);
    for (std::size_t i = 0; i < slots.shape()[0]; ++i) {
      write_rows(os, std::to_string(i), slots.data().data() + i * d, d);
    }
    if (!os) throw IoError("failed writing " + path.string());
    out << "export-embeddings: " << slots.shape()[0] << " leaves -> " << path.string() << '\n';
    return 0;
  }

  const auto sd = datakit::load_split_dir(require(c, "split"));
  check_vocabulary(ck.params, sd.catalog);
  auto os = open_out(path);
  write_comments(os, echo);
  std::size_t rows = 0;
  if (what == "tags") {
    const auto& table = ck.params.get("tag_table");
    for (std::size_t t = 0; t < sd.catalog.tag_count(); ++t, ++rows) {
      write_rows(os, sd.catalog.tag_names()[t], table.data().data() + t * d, d);
    }
  } else {
    std::vector<std::string> users;
    std::vector<std::vector<std::size_t>> histories;
    for (const auto& tc : sd.split.cases) {
      if (tc.history.empty()) continue;
      users.push_back(sd.split.train.user_name(tc.user));
      histories.push_back(tc.history);
    }
    if (what == "users") {
      const auto vecs = model::infer_users(ck.params, sd.catalog, histories);
      for (std::size_t i = 0; i < users.size(); ++i, ++rows) {
        write_rows(os, users[i], vecs.data().data() + i * d, d);
      }
    } else {
      if (!mc.use_group) throw ValidationError("the checkpoint was trained without the memory tree");
      const auto picks = model::infer_assignments(ck.params, sd.catalog, histories);
      for (std::size_t i = 0; i < users.size(); ++i) {
        for (const auto& [leaf, weight] : picks[i]) {
          os << users[i] << '\t' << leaf << '\t' << fmt(weight) << '\n';
          ++rows;
        }
      }
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
  out << "export-embeddings: " << rows << " " << what << " rows -> " << path.string() << '\n';
  return 0;
}

int cmd_report(const RunConfig& c, std::ostream& out) {
  const auto report = evalkit::parse_report_json(evalkit::read_text(require(c, "in")));
  const auto& format = c.text("format");
  std::string text;
  if (format == "table") {
    text = evalkit::report_table(report);
  } else if (format == "csv") {
    text = evalkit::report_csv(report);
  } else if (format == "json") {
    text = evalkit::report_json(report);
  } else {
    throw ValidationError("--format must be table, csv or json, got '" + format + "'");
  }
  if (c.text("out").empty()) {
    out << text;
  } else {
    evalkit::write_text(c.text("out"), text);
  }
  return 0;
}

const char* describe(const std::string& command) {
  if (command == "synth") return "generate a two-domain dataset with planted user groups";
  if (command == "split") return "leave-one-out split with cold users and fixed candidate lists";
  if (command == "train") return "train the model and write a checkpoint and loss log";
  if (command == "eval") return "score a checkpoint on a split";
  if (command == "baseline") return "score the random or popularity baseline on a split";
  if (command == "export-embeddings") return "write tag, leaf or user vectors, or leaf assignments";
  return "print a report as a table, CSV or JSON";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cold-start cross-domain recommendation toolkit", "couple"};
  app.require_subcommand(1, 1);
  std::map<std::string, Parsed> parsed;
  for (const auto& command : command_names()) {
    auto* sub = app.add_subcommand(command, describe(command));
    Parsed& p = parsed[command];
    sub->add_option("--config", p.config_file, "flat key = value settings file");
    for (const KeySpec& k : keys_for(command)) {
      const std::string help = k.help + (k.fallback.empty() ? "" : " [" + k.fallback + "]");
      if (k.flag) {
        p.options[k.name] = sub->add_flag(flag_name(k.name), p.flags[k.name], help);
      } else {
        p.options[k.name] = sub->add_option(flag_name(k.name), p.values[k.name], help);
      }
    }
  }

  if (!args.empty() && !args.front().empty() && args.front().front() != '-') {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), args.front()) == names.end()) {
      err << "error: unknown command '" << args.front() << "'\n" << app.help();
      return 1;
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Parsed& p = parsed.at(command);
    if (command == "train") return cmd_train(p, out, err);
    const RunConfig c = resolve(command, {}, p);
    if (command == "synth") return cmd_synth(c, out);
    if (command == "split") return cmd_split(c, out);
    if (command == "eval") return cmd_eval(c, out);
    if (command == "baseline") return cmd_baseline(c, out);
    if (command == "export-embeddings") return cmd_export(c, out);
    return cmd_report(c, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace couple::cli
