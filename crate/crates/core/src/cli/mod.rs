//! Command-line front end.

pub mod render;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::{analyze, EngineError, Variant};
use crate::exec::Exec;
use crate::gen::random_networks;
use crate::netmodel::{load_network, NetError, Network, NodeId};
use crate::oracle::{check_against, simulate, CompareReport, OracleError, DEFAULT_MAX_WIDTH};
use crate::pktset::PacketSpace;
use crate::policy::{infer_policy, overlap_report, witnesses};

use render::{analysis_json, analysis_text, formula_json, formula_text, header_text};

#[derive(Parser, Debug)]
#[command(
    name = "pktflow",
    version,
    about = "Packet-flow analysis of firewall networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate a network configuration.
    Validate(Common),
    /// Compute the abstract packets reaching every node from one zone.
    Analyze(Common),
    /// Infer the accept/reject policy of a zone.
    Policy(Common),
    /// Compare the analysis with exhaustive simulation.
    Check(CheckArgs),
    /// Generate test packets for every reachable zone.
    Testgen(TestgenArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, visible_alias = "zone")]
    origin: Option<String>,
    #[arg(long, value_enum, default_value_t = VariantArg::V2)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Header-bit limit for exhaustive simulation.
    #[arg(long, default_value_t = DEFAULT_MAX_WIDTH)]
    max_width: u32,
    /// Treat a non-empty policy overlap as a failure.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Check this many random networks instead of `--network`.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct TestgenArgs {
    #[command(flatten)]
    common: Common,
    /// Witnesses per abstract packet.
    #[arg(long, default_value_t = 1)]
    per_packet: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    V1,
    V2,
    Ia,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::V1 => Variant::V1,
            VariantArg::V2 => Variant::V2,
            VariantArg::Ia => Variant::Ia,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: String, source: NetError },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Output plus whether a checked property was violated.
struct Outcome {
    text: String,
    violation: bool,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Runs the command line `args` (program name first), writing results to
/// `out` (or the `--out` file) and errors to `err`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let target = match &cli.command {
        Command::Validate(c) | Command::Analyze(c) | Command::Policy(c) => c.out.clone(),
        Command::Check(c) => c.common.out.clone(),
        Command::Testgen(c) => c.common.out.clone(),
    };
    match dispatch(cli.command) {
        Ok(o) => {
            let written = match target {
                Some(path) => fs::write(&path, &o.text),
                None => out.write_all(o.text.as_bytes()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: {e}");
                return EXIT_ERROR;
            }
            if o.violation {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Validate(c) => validate(&c),
        Command::Analyze(c) => analyze_cmd(&c),
        Command::Policy(c) => policy_cmd(&c),
        Command::Check(c) => check_cmd(&c),
        Command::Testgen(c) => testgen_cmd(&c),
    }
}

fn load(c: &Common) -> Result<Network, CliError> {
    let path = c
        .network
        .as_ref()
        .ok_or_else(|| CliError::Usage("--network <file> is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    load_network(&text).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

fn origin_of(c: &Common, net: &Network) -> Result<NodeId, CliError> {
    let name = c
        .origin
        .as_deref()
        .ok_or_else(|| CliError::Usage("--origin <zone> is required".into()))?;
    net.zone_id(name)
        .ok_or_else(|| CliError::Usage(format!("unknown zone `{name}`")))
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn validate(c: &Common) -> Result<Outcome, CliError> {
    let net = load(c)?;
    let text = match c.format {
        Format::Text => format!(
            "valid: {} zones, {} firewalls, {} rules ({} besides default rules), {} links\n",
            net.zones.len(),
            net.firewalls.len(),
            net.rule_count(),
            net.non_default_rule_count(),
            net.links.len()
        ),
        Format::Json => json_text(&json!({
            "network": net.name,
            "valid": true,
            "zones": net.zones.len(),
            "firewalls": net.firewalls.len(),
            "rules": net.rule_count(),
            "non_default_rules": net.non_default_rule_count(),
            "links": net.links.len(),
        })),
    };
    Ok(Outcome {
        text,
        violation: false,
    })
}

fn analyze_cmd(c: &Common) -> Result<Outcome, CliError> {
    let net = load(c)?;
    let origin = origin_of(c, &net)?;
    let mut sp = PacketSpace::new(net.layout.clone());
    let r = analyze(&mut sp, &net, net.node_name(origin), c.variant.into())?;
    let violation = !r.diagnostics.misdelivered.is_empty();
    let text = match c.format {
        Format::Text => analysis_text(&mut sp, &net, &r),
        Format::Json => json_text(&analysis_json(&mut sp, &net, &r)),
    };
    Ok(Outcome { text, violation })
}

fn policy_cmd(c: &Common) -> Result<Outcome, CliError> {
    let net = load(c)?;
    let origin = origin_of(c, &net)?;
    let mut sp = PacketSpace::new(net.layout.clone());
    let (p, _) = infer_policy(&mut sp, &net, net.node_name(origin))?;
    let overlap = overlap_report(&mut sp, &p);
    let violation = c.strict && !overlap.is_empty();
    let text = match c.format {
        Format::Text => {
            let mut t = format!("zone: {}\n", net.node_name(origin));
            t.push_str(&format!("accept = {}\n", formula_text(&mut sp, p.accept)));
            t.push_str(&format!("reject = {}\n", formula_text(&mut sp, p.reject)));
            t.push_str(&format!("overlap = {}\n", formula_text(&mut sp, p.overlap)));
            if !overlap.is_empty() {
                t.push_str("warning: some packets may be both delivered and dropped\n");
            }
            t
        }
        Format::Json => json_text(&json!({
            "network": net.name,
            "zone": net.node_name(origin),
            "accept": formula_json(&mut sp, p.accept),
            "reject": formula_json(&mut sp, p.reject),
            "overlap": formula_json(&mut sp, p.overlap),
            "overlap_fields": overlap
                .iter()
                .map(|f| {
                    let id = net.layout.field_id(&f.field).expect("layout field");
                    json!({
                        "field": f.field,
                        "set": crate::netmodel::literal::format_value_set(&f.set, net.layout.width(id)),
                    })
                })
                .collect::<Vec<_>>(),
        })),
    };
    Ok(Outcome { text, violation })
}

fn report_line(net: &Network, origin: NodeId, rep: &CompareReport) -> String {
    let zone = net.node_name(origin);
    let v = rep.variant;
    if rep.is_ok() {
        if v == Variant::Ia {
            format!(
                "{zone} {v}: SUPERSET at all {} nodes (strict at {})\n",
                rep.nodes_checked,
                rep.strict_nodes.len()
            )
        } else {
            format!("{zone} {v}: EQUAL at all {} nodes\n", rep.nodes_checked)
        }
    } else {
        let mut s = format!(
            "{zone} {v}: MISMATCH at {} nodes, {} ledger rules\n",
            rep.diffs.len(),
            rep.ledger_diffs.len()
        );
        for d in &rep.diffs {
            s.push_str(&format!(
                "  {}: {} missing {:?}, {} spurious {:?}\n",
                net.node_name(d.node),
                d.missing_count,
                d.missing,
                d.spurious_count,
                d.spurious
            ));
        }
        for r in &rep.ledger_diffs {
            s.push_str(&format!("  rule {r}: drop ledger differs\n"));
        }
        s
    }
}

fn check_cmd(c: &CheckArgs) -> Result<Outcome, CliError> {
    let variant: Variant = c.common.variant.into();
    let exec = if c.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    if let Some(n) = c.trials {
        if c.common.network.is_some() {
            return Err(CliError::Usage("use either --network or --trials".into()));
        }
        let nets = random_networks(c.seed, n);
        let max_width = c.common.max_width;
        let results = exec.map(nets.iter().enumerate().collect(), |(i, net)| {
            let mut failed = Vec::new();
            for z in net.zone_ids() {
                let exact = simulate(net, z, max_width, None, Exec::Sequential)?;
                let rep = check_against(net, z, variant, &exact, Default::default())?;
                if !rep.is_ok() {
                    failed.push(format!("trial {i}: {}", report_line(net, z, &rep)));
                }
            }
            Ok::<_, OracleError>(failed)
        });
        let mut text = String::new();
        let mut bad = 0;
        for r in results {
            let failed = r?;
            if !failed.is_empty() {
                bad += 1;
            }
            for f in failed {
                text.push_str(&f);
            }
        }
        text.push_str(&format!(
            "{} {variant} trials (seed {}): {} passed, {bad} failed\n",
            n,
            c.seed,
            n - bad
        ));
        return Ok(Outcome {
            text,
            violation: bad > 0,
        });
    }
    let net = load(&c.common)?;
    let origins: Vec<NodeId> = match &c.common.origin {
        Some(_) => vec![origin_of(&c.common, &net)?],
        None => net.zone_ids().collect(),
    };
    let mut text = String::new();
    let mut violation = false;
    for z in origins {
        let exact = simulate(&net, z, c.common.max_width, None, exec)?;
        let rep = check_against(&net, z, variant, &exact, Default::default())?;
        violation |= !rep.is_ok();
        text.push_str(&report_line(&net, z, &rep));
    }
    Ok(Outcome { text, violation })
}

fn testgen_cmd(c: &TestgenArgs) -> Result<Outcome, CliError> {
    let net = load(&c.common)?;
    let origin = origin_of(&c.common, &net)?;
    let mut sp = PacketSpace::new(net.layout.clone());
    let r = analyze(&mut sp, &net, net.node_name(origin), Variant::V2)?;
    let packets = witnesses(&mut sp, &net, &r, c.per_packet.max(1));
    let text = match c.common.format {
        Format::Text => packets
            .iter()
            .map(|t| {
                format!(
                    "{} sent {} arrives {}\n",
                    net.node_name(t.zone),
                    header_text(&net.layout, t.orig),
                    header_text(&net.layout, t.curr)
                )
            })
            .collect(),
        Format::Json => json_text(&Value::Array(
            packets
                .iter()
                .map(|t| {
                    json!({
                        "zone": net.node_name(t.zone),
                        "orig": header_text(&net.layout, t.orig),
                        "curr": header_text(&net.layout, t.curr),
                    })
                })
                .collect(),
        )),
    };
    Ok(Outcome {
        text,
        violation: false,
    })
}
