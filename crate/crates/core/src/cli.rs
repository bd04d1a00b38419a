//! `kedge` command-line interface.
//!
//! Every command is exposed as a function returning its exit code so the
//! acceptance suite can drive the CLI in-process.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::chain::{self, verify_bytes, EvidenceChain};
use crate::event::Payload;
use crate::fixed::Fixed4;
use crate::governance::{govern, GovernanceConfig};
use crate::harness::{execute_scenario, Scenario};
use crate::model::{Action, ActorId, EntityId, FactAssertion, IntentId, IntentProposal, Role, Tick};
use crate::policy::{self, EvaluationRequest, Outcome, PolicySet};
use crate::state::{fold, replay_at};
use crate::world::{load_world, load_world_file, WorldSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EXPECTATION: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

pub const CONFIG_ENV: &str = "KEDGE_CONFIG";

const EXIT_CODES: &str = "\
Exit codes:
  run           0 pass, 1 expectation failure, 2 invariant failure, 3 usage error
  verify        0 chain intact, 2 chain broken, 3 usage error
  policy check  0 Approve, 1 Reject, 2 Escalate, 3 usage error
  other         0 success, 3 usage or input error";

/// Defaults read from the file named by `KEDGE_CONFIG`. Command-line flags
/// take precedence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub log_path: Option<PathBuf>,
    pub policy_path: Option<PathBuf>,
    pub world_path: Option<PathBuf>,
    pub governance_config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<CliConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn from_env() -> Result<CliConfig, String> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => CliConfig::load(Path::new(&p)),
            None => Ok(CliConfig::default()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kedge", version, about = "Intent governance engine and scenario harness", after_help = EXIT_CODES)]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write log.jsonl, state.json and report.json.
    Run(RunArgs),
    /// Govern a batch of intents and append the decisions to a log.
    Submit(SubmitArgs),
    /// Verify the hash chain of a log file.
    Verify(LogArgs),
    /// Print the derived state after the first N entries.
    Replay(ReplayArgs),
    /// Print every entry recorded for one intent.
    Lineage(LineageArgs),
    /// Policy tools.
    #[command(subcommand)]
    Policy(PolicyCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed; defaults to 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replaces the scenario's world with this world spec.
    #[arg(long)]
    pub world: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SubmitArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub policies: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub intents: PathBuf,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Number of leading entries to fold; defaults to the whole log.
    #[arg(long)]
    pub at: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LineageArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub intent: String,
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Parse a policy file and evaluate one request against it.
    Check(PolicyCheckArgs),
}

#[derive(Debug, Args)]
pub struct PolicyCheckArgs {
    #[arg(long)]
    pub policies: Option<PathBuf>,
    #[arg(long)]
    pub request: PathBuf,
}

/// Batch file accepted by `kedge submit`. Authority is taken from the
/// governance config, never from the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitBatch {
    pub now: Tick,
    #[serde(default)]
    pub batch_id: Option<String>,
    pub intents: Vec<SubmittedIntent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmittedIntent {
    pub intent_id: IntentId,
    pub actor: ActorId,
    pub role: Role,
    pub trust: Fixed4,
    pub action: Action,
    pub target: EntityId,
    pub facts: Vec<FactAssertion>,
    #[serde(default)]
    pub origin_tick: Option<Tick>,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    json: bool,
}

type CmdResult = Result<i32, String>;

impl Io<'_> {
    fn print(&mut self, text: &str) {
        let _ = self.out.write_all(text.as_bytes());
    }

    fn print_json<T: Serialize>(&mut self, value: &T) -> Result<(), String> {
        let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        self.print(&text);
        self.print("\n");
        Ok(())
    }
}

fn require(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, String> {
    let path = flag.or_else(|| fallback.clone()).ok_or_else(|| format!("missing --{name}"))?;
    Ok(path)
}

fn existing(path: PathBuf) -> Result<PathBuf, String> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(format!("{}: no such file", path.display()))
    }
}

fn read_text(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_log(path: &Path) -> Result<Vec<chain::ChainEntry>, String> {
    chain::parse_jsonl(&read_text(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    let config = match CliConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {CONFIG_ENV}: {e}");
            return EXIT_USAGE;
        }
    };
    dispatch(cli, &config, out, err)
}

/// Runs an already-parsed command with explicit defaults.
pub fn dispatch(cli: Cli, config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut io = Io { out, err, json: cli.json };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, config, &mut io),
        Command::Submit(a) => cmd_submit(a, config, &mut io),
        Command::Verify(a) => cmd_verify(a, config, &mut io),
        Command::Replay(a) => cmd_replay(a, config, &mut io),
        Command::Lineage(a) => cmd_lineage(a, config, &mut io),
        Command::Policy(PolicyCommand::Check(a)) => cmd_policy_check(a, config, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(io.err, "error: {message}");
            EXIT_USAGE
        }
    }
}

fn cmd_run(a: RunArgs, config: &CliConfig, io: &mut Io<'_>) -> CmdResult {
    let scenario_path = existing(a.scenario)?;
    let out_dir = require(a.out, &config.output_dir, "out")?;
    let world_path = a.world.or_else(|| config.world_path.clone()).map(existing).transpose()?;
    let seed = a.seed.or(config.seed).unwrap_or(0);

    let mut scenario =
        Scenario::load(&scenario_path, Some(seed)).map_err(|e| format!("{}: {e}", scenario_path.display()))?;
    if let Some(p) = world_path {
        let spec: WorldSpec = serde_json::from_str(&read_text(&p)?).map_err(|e| format!("{}: {e}", p.display()))?;
        load_world(&spec).map_err(|e| format!("{}: {e}", p.display()))?;
        scenario.world = spec;
    }
    let run = execute_scenario(&scenario).map_err(|e| e.to_string())?;

    std::fs::create_dir_all(&out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
    run.chain.save(&out_dir.join("log.jsonl")).map_err(|e| e.to_string())?;
    let write_json = |name: &str, value: &dyn erased::Json| -> Result<(), String> {
        let path = out_dir.join(name);
        std::fs::write(&path, value.pretty()?).map_err(|e| format!("{}: {e}", path.display()))
    };
    write_json("state.json", &run.state.dump())?;
    write_json("report.json", &run.report)?;

    let report = &run.report;
    if io.json {
        io.print_json(report)?;
    } else {
        let mut t = String::new();
        let _ = writeln!(t, "scenario   {}", report.scenario);
        let _ = writeln!(t, "seed       {}", report.seed);
        let _ = writeln!(t, "entries    {}", report.entries);
        let _ = writeln!(t, "log        {}", report.log_digest);
        let _ = writeln!(t, "state      {}", report.state_digest);
        let _ = writeln!(t, "time       {} ms", report.wall_time_ms);
        if report.outcomes.len() <= 64 {
            let _ = writeln!(t, "\n{:<24} status", "intent");
            for (id, status) in &report.outcomes {
                let _ = writeln!(t, "{:<24} {status:?}", id.as_str());
            }
        }
        let inv = &report.invariants;
        let _ = writeln!(t, "\ninvariants");
        for (name, r) in [
            ("execution-event consistency", &inv.execution_event_consistency),
            ("conflict safety", &inv.conflict_safety),
            ("liveness", &inv.liveness),
            ("world containment", &inv.world_containment),
        ] {
            let _ = writeln!(t, "  {:<28} {}", name, if r.passed { "pass" } else { "FAIL" });
            for v in &r.violations {
                let _ = writeln!(t, "    {v}");
            }
        }
        for d in &report.expectation_diffs {
            let _ = writeln!(t, "expectation failed: {d}");
        }
        io.print(&t);
    }

    Ok(if !report.invariants.all_passed() {
        EXIT_INVARIANT
    } else if !report.expectation_diffs.is_empty() {
        EXIT_EXPECTATION
    } else {
        EXIT_OK
    })
}

/// Small helper so `cmd_run` can write differently typed values through one
/// closure.
mod erased {
    pub trait Json {
        fn pretty(&self) -> Result<String, String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn pretty(&self) -> Result<String, String> {
            serde_json::to_string_pretty(self).map(|s| s + "\n").map_err(|e| e.to_string())
        }
    }
}

fn cmd_submit(a: SubmitArgs, config: &CliConfig, io: &mut Io<'_>) -> CmdResult {
    let log_path = require(a.log, &config.log_path, "log")?;
    let policy_path = existing(require(a.policies, &config.policy_path, "policies")?)?;
    let world_path = existing(require(a.world, &config.world_path, "world")?)?;
    let gov_path = a.config.or_else(|| config.governance_config_path.clone()).map(existing).transpose()?;
    let intents_path = existing(a.intents)?;

    let policies = PolicySet::load(&policy_path).map_err(|e| format!("{}: {e}", policy_path.display()))?;
    let world = load_world_file(&world_path).map_err(|e| format!("{}: {e}", world_path.display()))?;
    let cfg = match gov_path {
        Some(p) => GovernanceConfig::load(&p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => GovernanceConfig::default(),
    };
    let batch: SubmitBatch =
        serde_json::from_str(&read_text(&intents_path)?).map_err(|e| format!("{}: {e}", intents_path.display()))?;

    let entries = if log_path.exists() { load_log(&log_path)? } else { Vec::new() };
    let report = chain::verify_chain(&entries);
    if !report.is_ok() {
        return Err(format!("{}: {report}", log_path.display()));
    }
    let state = fold(&entries).map_err(|e| e.to_string())?;
    let mut log = EvidenceChain::from_entries(entries);
    let start = log.len();

    let batch_id = batch.batch_id.clone().unwrap_or_else(|| format!("batch-{}", batch.now));
    let proposals: Vec<IntentProposal> = batch
        .intents
        .iter()
        .map(|i| IntentProposal {
            intent_id: i.intent_id.clone(),
            actor: cfg.actor(i.actor.as_str(), i.role, i.trust),
            action: i.action,
            target: i.target.clone(),
            asserted_facts: i.facts.clone(),
            origin_tick: i.origin_tick.unwrap_or(batch.now),
            batch_id: batch_id.clone(),
        })
        .collect();
    let decisions =
        govern(&proposals, &state, &world, &policies, &cfg, &mut log, batch.now).map_err(|e| e.to_string())?;
    log.append_to_file(&log_path, start).map_err(|e| e.to_string())?;

    if io.json {
        io.print_json(&decisions)?;
    } else {
        let mut t = format!("{:<24} {:<9} {:<16} rules\n", "intent", "outcome", "reason");
        for e in &decisions {
            if let Some(d) = e.event.as_decision() {
                let _ = writeln!(
                    t,
                    "{:<24} {:<9} {:<16} {}",
                    e.event.intent_id.as_str(),
                    d.outcome.to_string(),
                    format!("{:?}", d.reason),
                    d.explanation.join(",")
                );
            }
        }
        let _ = writeln!(t, "appended {} entries to {}", log.len() - start, log_path.display());
        io.print(&t);
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: LogArgs, config: &CliConfig, io: &mut Io<'_>) -> CmdResult {
    let path = existing(require(a.log, &config.log_path, "log")?)?;
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let report = verify_bytes(&bytes);
    if io.json {
        io.print_json(&report)?;
    } else {
        io.print(&format!("{report}\n"));
    }
    Ok(if report.is_ok() { EXIT_OK } else { EXIT_INVARIANT })
}

fn cmd_replay(a: ReplayArgs, config: &CliConfig, io: &mut Io<'_>) -> CmdResult {
    let path = existing(require(a.log, &config.log_path, "log")?)?;
    let entries = load_log(&path)?;
    let at = a.at.unwrap_or(entries.len());
    let dump = replay_at(&entries, at).map_err(|e| e.to_string())?.dump();
    if io.json {
        io.print_json(&dump)?;
    } else {
        let mut t = format!(
            "entries      {at}\nlast tick    {}\nstate digest {}\n",
            fmt_opt(dump.last_tick),
            dump.state_digest
        );
        if !dump.facts.is_empty() {
            let _ = writeln!(
                t,
                "\n{:<20} {:<20} {:<16} {:<16} {:>8} {:>12}",
                "entity", "key", "value", "by", "at", "valid until"
            );
        }
        for f in &dump.facts {
            let _ = writeln!(
                t,
                "{:<20} {:<20} {:<16} {:<16} {:>8} {:>12}",
                f.entity_id.as_str(),
                f.key,
                f.value.to_string(),
                f.asserted_by.as_str(),
                f.asserted_at,
                fmt_opt(f.valid_until)
            );
        }
        io.print(&t);
    }
    Ok(EXIT_OK)
}

fn fmt_opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn cmd_lineage(a: LineageArgs, config: &CliConfig, io: &mut Io<'_>) -> CmdResult {
    let path = existing(require(a.log, &config.log_path, "log")?)?;
    let entries = load_log(&path)?;
    let id = IntentId(a.intent);
    let lineage = chain::lineage(&entries, &id).map_err(|e| e.to_string())?;
    if io.json {
        io.print_json(&lineage)?;
        return Ok(EXIT_OK);
    }
    let mut t = String::new();
    for e in lineage {
        let ev = &e.event;
        let _ = write!(
            t,
            "#{:<6} t={:<8} {:<20} by {:<14}",
            e.index,
            ev.logical_time,
            ev.kind().to_string(),
            ev.actor_id.as_str()
        );
        match &ev.payload {
            Payload::IntentProposed(p) => {
                let _ = write!(t, " {} on {} (trust {}, origin {})", p.action, p.target, p.actor.trust, p.origin_tick);
            }
            Payload::ContextSnapshotted(c) => {
                let attrs: Vec<String> = c.attributes.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = write!(t, " {}", attrs.join(" "));
            }
            Payload::DecisionRendered(d) => {
                let _ = write!(t, " {} ({:?})", d.outcome, d.reason);
                if !d.explanation.is_empty() {
                    let _ = write!(t, " rules: {}", d.explanation.join(", "));
                }
                if let Some(detail) = &d.detail {
                    let _ = write!(t, " [{detail}]");
                }
            }
            Payload::ContractIssued(c) => {
                let _ = write!(t, " {c}");
            }
            Payload::ExecutionOutcome(o) => {
                let _ = write!(t, " {} on {}: {}", o.attempted.action, o.attempted.resource, o.authorization);
            }
        }
        t.push('\n');
    }
    io.print(&t);
    Ok(EXIT_OK)
}

fn cmd_policy_check(a: PolicyCheckArgs, config: &CliConfig, io: &mut Io<'_>) -> CmdResult {
    let policy_path = existing(require(a.policies, &config.policy_path, "policies")?)?;
    let request_path = existing(a.request)?;
    let policies = PolicySet::load(&policy_path).map_err(|e| format!("{}: {e}", policy_path.display()))?;
    let request: EvaluationRequest =
        serde_json::from_str(&read_text(&request_path)?).map_err(|e| format!("{}: {e}", request_path.display()))?;

    match policy::evaluate(&policies, &request) {
        Ok(decision) => {
            if io.json {
                io.print_json(&decision)?;
            } else {
                io.print(&policy::explain(&decision));
            }
            Ok(match decision.outcome {
                Outcome::Approve => 0,
                Outcome::Reject => 1,
                Outcome::Escalate => 2,
            })
        }
        Err(e) => {
            if io.json {
                io.print_json(&serde_json::json!({ "outcome": "Escalate", "error": e.to_string() }))?;
            } else {
                io.print(&format!("decision: Escalate\n  evaluation error: {e}\n"));
            }
            Ok(2)
        }
    }
}
