// fairdraw: operator and auditor entry points for the commit-reveal draw
// protocol. Subcommands: keygen, run, verify, simulate, stats.
//
// Exit codes: 0 success, 1 verification failure or aborted draw, 2 usage
// error, 3 internal error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fairdraw/register.hpp"
#include "fairdraw/simnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairdraw;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::array<std::uint8_t, 32> seed_from_string(const std::string& s) {
  if (s.rfind("0x", 0) == 0) {
    std::array<std::uint8_t, 32> seed{};
    Bytes raw = from_hex(s.substr(2));
    if (raw.size() > 32) throw UsageError("seed is longer than 32 bytes");
    std::copy(raw.begin(), raw.end(), seed.begin() + (32 - raw.size()));
    return seed;
  }
  std::array<std::uint8_t, 32> seed{};
  std::uint64_t v = 0;
  try {
    v = std::stoull(s);
  } catch (const std::exception&) {
    throw UsageError("seed must be a decimal integer or 0x-prefixed hex");
  }
  for (int i = 0; i < 8; ++i) seed[31 - i] = static_cast<std::uint8_t>(v >> (8 * i));
  return seed;
}

/// FAIRDRAW_SEED overrides --seed so CI runs are reproducible without
/// touching invocations.
std::optional<std::array<std::uint8_t, 32>> effective_seed(const std::string& flag_value) {
  if (const char* env = std::getenv("FAIRDRAW_SEED")) return seed_from_string(env);
  if (!flag_value.empty()) return seed_from_string(flag_value);
  return std::nullopt;
}

struct RosterFileEntry {
  Role role;
  std::string name;
  std::string pub_path;
  std::string sec_path;  // may be empty
};

std::vector<RosterFileEntry> parse_roster_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read roster file: " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<RosterFileEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string role, name, pub, sec;
    if (!(ls >> role)) continue;
    if (!(ls >> name >> pub))
      throw UsageError("roster line " + std::to_string(line_no) +
                       ": expected <role> <name> <pubkey-file> [secretkey-file]");
    ls >> sec;
    RosterFileEntry e;
    if (role == "initiator") e.role = Role::initiator;
    else if (role == "guarantor") e.role = Role::guarantor;
    else throw UsageError("roster line " + std::to_string(line_no) + ": unknown role " + role);
    e.name = name;
    e.pub_path = (base / pub).string();
    if (!sec.empty()) e.sec_path = (base / sec).string();
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw UsageError("roster file is empty: " + path);
  return entries;
}

Roster roster_from_entries(const std::vector<RosterFileEntry>& entries) {
  Roster roster;
  for (const auto& e : entries)
    roster.participants.push_back(RosterEntry{e.role, e.name, read_public_key_file(e.pub_path)});
  std::stable_sort(roster.participants.begin(), roster.participants.end(),
                   [](const RosterEntry& a, const RosterEntry& b) {
                     return static_cast<int>(a.role) < static_cast<int>(b.role);
                   });
  roster.validate();
  return roster;
}

void print_abort(std::ostream& os, const Abort& a) {
  os << "abort at step " << a.phase << ": " << fault_cause_name(a.cause);
  if (a.culprit) os << " (culprit: " << *a.culprit << ")";
  os << (a.mode == AbortMode::signed_error ? " [signed-error]" : " [silent]") << "\n";
}

json abort_json(const Abort& a) {
  json j{{"phase", a.phase}, {"cause", fault_cause_name(a.cause)},
         {"mode", a.mode == AbortMode::signed_error ? "signed-error" : "silent"}};
  if (a.culprit) j["culprit"] = *a.culprit;
  return j;
}

// --- keygen -----------------------------------------------------------------

int cmd_keygen(const std::string& scheme, const std::string& out, const std::string& name,
               const std::string& seed_flag) {
  auto scheme_id = scheme_from_name(scheme);
  if (!scheme_id) throw UsageError("unknown signature scheme: " + scheme);
  auto seed = effective_seed(seed_flag);
  EntropySource src = seed ? EntropySource::seeded(*seed) : EntropySource::system();
  const std::string signer = name.empty() ? fs::path(out).filename().string() : name;
  KeyPair kp = generate_keypair(signer, src, *scheme_id);
  if (const fs::path dir = fs::path(out).parent_path(); !dir.empty()) fs::create_directories(dir);
  write_public_key_file(out + ".pk", kp.pub);
  write_secret_key_file(out + ".sk", kp.sec);
  std::cout << "wrote " << out << ".pk and " << out << ".sk (scheme " << scheme_name(*scheme_id)
            << ", signer " << signer << ")\n";
  return kExitOk;
}

// --- run --------------------------------------------------------------------

int cmd_run(const std::string& roster_path, std::uint64_t k, const std::string& seed_flag,
            const std::string& out_dir, bool machine) {
  if (k < 1) throw UsageError("k must be >= 1");
  auto entries = parse_roster_file(roster_path);
  std::vector<KeyPair> keys;
  std::vector<sim::ParticipantSpec> specs;
  for (const auto& e : entries) {
    if (e.sec_path.empty())
      throw UsageError("run needs a secret key file for every participant (" + e.name + ")");
    KeyPair kp;
    kp.signer_id = e.name;
    kp.pub = read_public_key_file(e.pub_path);
    kp.sec = read_secret_key_file(e.sec_path);
    keys.push_back(std::move(kp));
    specs.push_back(sim::ParticipantSpec{e.role, e.name, sim::Strategy{}});
  }

  sim::SimSchedule schedule;
  if (auto seed = effective_seed(seed_flag)) {
    schedule.seed = *seed;
  } else {
    EntropySource::system().fill(schedule.seed);
  }

  // Registers continue from the per-participant stores under out_dir, so
  // successive invocations number their draws consecutively.
  std::map<std::string, std::unique_ptr<RegisterStore>> stores;
  std::uint64_t expected = 1;
  bool first = true;
  for (const auto& e : entries) {
    auto store = std::make_unique<RegisterStore>((fs::path(out_dir) / e.name).string());
    std::uint64_t next = store->reg().next_draw_number();
    if (first) {
      expected = next;
      first = false;
    } else if (next != expected) {
      throw UsageError("participant registers under " + out_dir + " disagree on the next draw");
    }
    stores.emplace(e.name, std::move(store));
  }

  sim::SimWorld world(std::move(specs), schedule);
  world.use_keys(std::move(keys));
  for (const auto& e : entries) world.set_register(e.name, stores.at(e.name)->reg());
  sim::RunOutcome outcome = world.run_draw(k);

  for (const auto& [name, transcript] : outcome.transcripts)
    stores.at(name)->append(transcript);

  if (outcome.completed) {
    const auto& t = outcome.transcripts.begin()->second;
    if (machine) {
      json j{{"event", "result"},
             {"draw_no", t.header.draw_no},
             {"k", k},
             {"result", *outcome.result}};
      std::cout << j.dump() << "\n";
    } else {
      std::cout << "draw " << t.header.draw_no << ": result " << *outcome.result << "\n";
      for (const auto& [name, store] : stores)
        std::cout << "  transcript: " << (fs::path(store->dir()) /
                                          store->reg().entries().back().transcript_ref)
                         .string()
                  << "\n";
    }
    return kExitOk;
  }
  if (machine) {
    json j{{"event", "abort"}};
    if (outcome.first_abort) j["abort"] = abort_json(*outcome.first_abort);
    std::cout << j.dump() << "\n";
  } else if (outcome.first_abort) {
    print_abort(std::cout, *outcome.first_abort);
  }
  return kExitFailure;
}

// --- verify -----------------------------------------------------------------

int cmd_verify(const std::string& transcript_path, const std::string& roster_path, bool machine) {
  auto entries = parse_roster_file(roster_path);
  Roster roster = roster_from_entries(entries);
  std::ifstream in(transcript_path, std::ios::binary);
  if (!in) throw UsageError("cannot read transcript file: " + transcript_path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  VerifyOutcome v = verify_transcript(as_span(bytes), roster);
  switch (v.kind) {
    case VerifyOutcome::Kind::valid:
      if (machine)
        std::cout << json{{"event", "verify"}, {"status", "valid"}, {"result", *v.result}}.dump()
                  << "\n";
      else
        std::cout << "valid: result " << *v.result << "\n";
      return kExitOk;
    case VerifyOutcome::Kind::aborted_evidence:
      if (machine) {
        json j{{"event", "verify"}, {"status", "aborted-evidence"}};
        if (v.abort) j["abort"] = abort_json(*v.abort);
        std::cout << j.dump() << "\n";
      } else {
        std::cout << "aborted draw, evidence consistent\n";
        if (v.abort) print_abort(std::cout, *v.abort);
      }
      return kExitFailure;
    case VerifyOutcome::Kind::invalid: {
      const VerifyFailure& f = *v.failure;
      if (machine) {
        json j{{"event", "verify"},
               {"status", "invalid"},
               {"step", f.step},
               {"cause", fault_cause_name(f.cause)},
               {"detail", f.detail}};
        if (f.culprit) j["culprit"] = *f.culprit;
        std::cout << j.dump() << "\n";
      } else {
        std::cout << "invalid at step " << f.step << ": " << fault_cause_name(f.cause) << " — "
                  << f.detail;
        if (f.culprit) std::cout << " (culprit: " << *f.culprit << ")";
        std::cout << "\n";
      }
      return kExitFailure;
    }
  }
  return kExitInternal;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 const std::string& seed_flag, std::uint64_t draws_override, bool machine) {
  sim::ScenarioConfig cfg = sim::load_scenario_file(scenario_path);
  if (auto seed = effective_seed(seed_flag)) cfg.schedule.seed = *seed;
  if (draws_override > 0) cfg.draws = draws_override;

  sim::SimWorld world(cfg.participants, cfg.schedule);
  std::map<std::string, std::unique_ptr<RegisterStore>> stores;
  if (!out_dir.empty()) {
    for (const auto& p : cfg.participants)
      stores.emplace(p.name,
                     std::make_unique<RegisterStore>((fs::path(out_dir) / p.name).string()));
    // the auditor inputs: public keys and a roster usable with `verify`
    fs::create_directories(fs::path(out_dir) / "keys");
    std::ofstream roster(fs::path(out_dir) / "roster.txt");
    for (const RosterEntry& e : world.roster().participants) {
      write_public_key_file((fs::path(out_dir) / "keys" / (e.name + ".pk")).string(), e.pub);
      roster << (e.role == Role::initiator ? "initiator " : "guarantor ") << e.name << " keys/"
             << e.name << ".pk\n";
    }
  }
  for (std::uint64_t d = 0; d < cfg.draws; ++d) {
    sim::RunOutcome out = world.run_draw(cfg.k);
    if (machine) {
      json j{{"event", "draw"}, {"draw_no", world.draws_run()}, {"completed", out.completed}};
      if (out.completed) j["result"] = *out.result;
      if (out.first_abort) j["abort"] = abort_json(*out.first_abort);
      std::cout << j.dump() << "\n";
    } else {
      std::cout << "draw " << world.draws_run() << ": ";
      if (out.completed) {
        std::cout << "result " << *out.result << "\n";
      } else if (out.first_abort) {
        print_abort(std::cout, *out.first_abort);
      } else {
        std::cout << "aborted\n";
      }
    }
    for (const auto& [name, transcript] : out.transcripts) {
      auto it = stores.find(name);
      if (it != stores.end()) it->second->append(transcript);
    }
  }
  return kExitOk;
}

// --- stats -------------------------------------------------------------------

int cmd_stats(const std::string& scenario_path, std::uint64_t trials, unsigned threads,
              const std::string& seed_flag, bool machine) {
  sim::ScenarioConfig cfg = sim::load_scenario_file(scenario_path);
  if (auto seed = effective_seed(seed_flag)) cfg.schedule.seed = *seed;
  sim::ExperimentSpec spec;
  spec.participants = cfg.participants;
  spec.k = cfg.k;
  spec.trials = trials ? trials : (cfg.trials ? cfg.trials : 10 * cfg.k);
  spec.seed = cfg.schedule.seed;
  spec.threads = threads ? threads : cfg.threads;
  spec.timeout_ms = cfg.schedule.timeout_ms;
  if (spec.trials < 10 * spec.k)
    throw UsageError("underpowered experiment: need at least " + std::to_string(10 * spec.k) +
                     " trials for k=" + std::to_string(spec.k) + " (10 per bin)");

  ChiSquareReport r = sim::coalition_bias_experiment(spec);
  if (machine) {
    json j{{"event", "stats"},          {"bins", r.bins},
           {"statistic", r.statistic},  {"dof", r.degrees_of_freedom},
           {"threshold", r.threshold},  {"pass", r.pass},
           {"completed", r.trials},     {"aborted", r.aborted_runs}};
    std::cout << j.dump() << "\n";
  } else {
    std::cout << format_report(r) << "\n";
  }
  return r.pass ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairdraw: n-party commit-reveal generation of a uniform integer in [0, k)"};
  app.require_subcommand(1);
  bool machine = false;
  app.add_flag("--machine", machine, "one machine-readable JSON record per line");

  auto* keygen = app.add_subcommand("keygen", "generate a signing key pair");
  std::string kg_scheme = "ed25519", kg_out, kg_name, kg_seed;
  keygen->add_option("--scheme", kg_scheme, "signature scheme")->capture_default_str();
  keygen->add_option("--out", kg_out, "output path base (writes .pk/.sk)")->required();
  keygen->add_option("--name", kg_name, "signer name (default: basename of --out)");
  keygen->add_option("--seed", kg_seed, "deterministic key seed");

  auto* run = app.add_subcommand("run", "execute one honest draw and record transcripts");
  std::string run_roster, run_seed, run_out = "fairdraw-out";
  std::uint64_t run_k = 0;
  run->add_option("--roster", run_roster, "roster file")->required();
  run->add_option("--k", run_k, "exclusive upper bound of the draw")->required();
  run->add_option("--seed", run_seed, "deterministic run seed");
  run->add_option("--out-dir", run_out, "register directory root")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "verify a published transcript");
  std::string ver_transcript, ver_roster;
  verify->add_option("--transcript", ver_transcript, "transcript file")->required();
  verify->add_option("--roster", ver_roster, "roster file with trusted public keys")->required();

  auto* simulate = app.add_subcommand("simulate", "run a scenario with faults and adversaries");
  std::string sim_scenario, sim_out, sim_seed;
  std::uint64_t sim_draws = 0;
  simulate->add_option("--scenario", sim_scenario, "scenario file")->required();
  simulate->add_option("--out-dir", sim_out, "write honest transcripts here");
  simulate->add_option("--draws", sim_draws, "override the scenario draw count");
  simulate->add_option("--seed", sim_seed, "override the scenario seed");

  auto* stats = app.add_subcommand("stats", "uniformity experiment over many simulated draws");
  std::string st_scenario, st_seed;
  std::uint64_t st_trials = 0;
  unsigned st_threads = 0;
  stats->add_option("--scenario", st_scenario, "scenario file")->required();
  stats->add_option("--trials", st_trials, "completed draws to tally");
  stats->add_option("--threads", st_threads, "worker threads (0 = hardware)");
  stats->add_option("--seed", st_seed, "override the scenario seed");

  try {
    app.parse(argc, argv);
    if (keygen->parsed()) return cmd_keygen(kg_scheme, kg_out, kg_name, kg_seed);
    if (run->parsed()) return cmd_run(run_roster, run_k, run_seed, run_out, machine);
    if (verify->parsed()) return cmd_verify(ver_transcript, ver_roster, machine);
    if (simulate->parsed())
      return cmd_simulate(sim_scenario, sim_out, sim_seed, sim_draws, machine);
    if (stats->parsed()) return cmd_stats(st_scenario, st_trials, st_threads, st_seed, machine);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
