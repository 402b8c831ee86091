use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commtype::minimpi::{check_compliance, parse_program, SetupError};
use commtype::protocol::parse_protocol_with_spans;
use commtype::sim::{explore_all_tapes_with, SimConfig, SimError, SimVerdict, DEFAULT_STATE_LIMIT};
use commtype::{check_wf, parse_local_type, print_local_type, project_all, Env, Instantiation, LocalType};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "commtype", version, about = "Check SPMD programs against communication protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a protocol is well formed for the given parameters.
    Validate {
        protocol: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write one local type per rank as `rank<r>.clt`.
    Project {
        protocol: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a MiniMPI program against a protocol, rank by rank.
    Verify {
        program: Option<PathBuf>,
        protocol: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Explore all interleavings of a protocol's projections, or of local
    /// types given as `.clt` rank files in rank order.
    Simulate {
        inputs: Vec<PathBuf>,
        /// Write the deadlock witness step list to this file.
        #[arg(long)]
        witness: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Parameter binding `name=value`; repeatable, overrides the manifest.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Flat `key=value` file; keys other than protocol, program,
    /// max_loop_iters and state_limit are parameters.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    max_loop_iters: Option<u32>,
    #[arg(long)]
    state_limit: Option<usize>,
    /// Print `rank:line:col:code:message` lines on standard output.
    #[arg(long)]
    report: bool,
}

/// Failure that ends the run with a given exit code after printing `message`.
struct Exit {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Exit {
    Exit { code: EXIT_USAGE, message: message.into() }
}

type Outcome = Result<u8, Exit>;

struct Settings {
    protocol: Option<PathBuf>,
    program: Option<PathBuf>,
    params: BTreeMap<String, i64>,
    max_loop_iters: u32,
    state_limit: usize,
    report: bool,
}

fn parse_binding(s: &str) -> Result<(String, i64), Exit> {
    let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("expected NAME=VALUE, got `{s}`")))?;
    let v = v.trim().parse().map_err(|_| usage(format!("value of `{}` is not an integer", k.trim())))?;
    Ok((k.trim().to_string(), v))
}

fn parse_number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Exit> {
    v.trim().parse().map_err(|_| usage(format!("`{key}` must be a non-negative integer")))
}

fn settings(common: &Common) -> Result<Settings, Exit> {
    let mut s = Settings {
        protocol: None,
        program: None,
        params: BTreeMap::new(),
        max_loop_iters: 2,
        state_limit: DEFAULT_STATE_LIMIT,
        report: common.report,
    };
    if let Some(path) = &common.manifest {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "protocol" => s.protocol = Some(base.join(v)),
                "program" => s.program = Some(base.join(v)),
                "max_loop_iters" => s.max_loop_iters = parse_number(k, v)?,
                "state_limit" => s.state_limit = parse_number(k, v)?,
                _ => {
                    let (k, v) = parse_binding(line)?;
                    s.params.insert(k, v);
                }
            }
        }
    }
    for p in &common.params {
        let (k, v) = parse_binding(p)?;
        s.params.insert(k, v);
    }
    if let Some(n) = common.max_loop_iters {
        s.max_loop_iters = n;
    }
    if let Some(n) = common.state_limit {
        s.state_limit = n;
    }
    Ok(s)
}

fn read(path: &Path) -> Result<String, Exit> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn pick(arg: &Option<PathBuf>, manifest: &Option<PathBuf>, what: &str) -> Result<PathBuf, Exit> {
    arg.clone().or_else(|| manifest.clone()).ok_or_else(|| usage(format!("no {what} file given")))
}

struct LoadedProtocol {
    path: String,
    protocol: commtype::Protocol,
    map: commtype::protocol::SourceMap,
}

fn load_protocol(path: &Path) -> Result<LoadedProtocol, Exit> {
    let text = read(path)?;
    let path = path.display().to_string();
    let (protocol, map) = parse_protocol_with_spans(&text).map_err(|e| usage(format!("{path}:{e}")))?;
    Ok(LoadedProtocol { path, protocol, map })
}

/// Every binder must be bound and every binding must name a binder or one of
/// `extra`.
fn instantiation(lp: &LoadedProtocol, params: &BTreeMap<String, i64>, extra: &[String]) -> Result<Instantiation, Exit> {
    for b in &lp.protocol.binders {
        if !params.contains_key(&b.name) {
            return Err(usage(format!("{}: missing value for parameter `{}`", lp.path, b.name)));
        }
    }
    for k in params.keys() {
        if !lp.protocol.binders.iter().any(|b| &b.name == k) && !extra.contains(k) {
            return Err(usage(format!("unknown parameter `{k}`")));
        }
    }
    Ok(Instantiation(params.iter().map(|(k, v)| (k.clone(), *v)).collect::<Env>()))
}

/// Prints well-formedness failures and returns the failure exit code.
fn report_wf(lp: &LoadedProtocol, report: &commtype::WfReport, machine: bool) -> u8 {
    for d in &report.diagnostics {
        eprintln!("{}", d.render(&lp.path, Some(&lp.map)));
        if machine {
            let pos = d.pos(&lp.map).unwrap_or_default();
            println!("-:{pos}:{}:{}", d.code, d.message);
        }
    }
    EXIT_FAILURE
}

fn validate(protocol: Option<PathBuf>, common: Common) -> Outcome {
    let s = settings(&common)?;
    let lp = load_protocol(&pick(&protocol, &s.protocol, "protocol")?)?;
    let inst = instantiation(&lp, &s.params, &[])?;
    let report = check_wf(&lp.protocol, &inst);
    if !report.is_ok() {
        return Ok(report_wf(&lp, &report, s.report));
    }
    eprintln!("{}: well-formed", lp.path);
    Ok(0)
}

fn project(protocol: Option<PathBuf>, out: PathBuf, common: Common) -> Outcome {
    let s = settings(&common)?;
    let lp = load_protocol(&pick(&protocol, &s.protocol, "protocol")?)?;
    let inst = instantiation(&lp, &s.params, &[])?;
    let report = check_wf(&lp.protocol, &inst);
    if !report.is_ok() {
        return Ok(report_wf(&lp, &report, s.report));
    }
    let result = project_all(&lp.protocol, &inst).map_err(|e| Exit { code: EXIT_FAILURE, message: e.to_string() })?;
    fs::create_dir_all(&out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let n = result.locals.len();
    for (r, local) in result.locals.iter().enumerate() {
        let path = out.join(format!("rank{r}.clt"));
        let text = format!("// rank {r} of {n}\n{}", print_local_type(local));
        fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(0)
}

fn verify(program: Option<PathBuf>, protocol: Option<PathBuf>, common: Common) -> Outcome {
    let s = settings(&common)?;
    let prog_path = pick(&program, &s.program, "program")?;
    let prog_name = prog_path.display().to_string();
    let prog = parse_program(&read(&prog_path)?).map_err(|e| usage(format!("{prog_name}:{e}")))?;
    let lp = load_protocol(&pick(&protocol, &s.protocol, "protocol")?)?;
    let inst = instantiation(&lp, &s.params, &prog.params)?;
    let report = match check_compliance(&prog, &lp.protocol, &inst) {
        Ok(r) => r,
        Err(SetupError::IllFormed(wf)) => return Ok(report_wf(&lp, &wf, s.report)),
        Err(SetupError::UnboundParam(p)) => return Err(usage(format!("missing value for program parameter `{p}`"))),
        Err(e) => return Err(Exit { code: EXIT_FAILURE, message: e.to_string() }),
    };
    for d in report.diagnostics() {
        eprintln!("{prog_name}:{d}");
        if s.report {
            println!("{}", d.report_line());
        }
    }
    if report.is_compliant() {
        eprintln!("{prog_name}: all {} ranks compliant", report.ranks.len());
        Ok(0)
    } else {
        Ok(EXIT_FAILURE)
    }
}

fn simulate(inputs: Vec<PathBuf>, witness: Option<PathBuf>, common: Common) -> Outcome {
    let s = settings(&common)?;
    let rank_files = !inputs.is_empty() && inputs.iter().all(|p| p.extension().is_some_and(|e| e == "clt"));
    let locals: Vec<LocalType> = if rank_files {
        inputs
            .iter()
            .map(|p| {
                let text = read(p)?;
                parse_local_type(&text).map_err(|e| usage(format!("{}:{e}", p.display())))
            })
            .collect::<Result<_, _>>()?
    } else {
        if inputs.len() > 1 {
            return Err(usage("give one protocol file or a list of .clt rank files"));
        }
        let lp = load_protocol(&pick(&inputs.first().cloned(), &s.protocol, "protocol")?)?;
        let inst = instantiation(&lp, &s.params, &[])?;
        let report = check_wf(&lp.protocol, &inst);
        if !report.is_ok() {
            return Ok(report_wf(&lp, &report, s.report));
        }
        project_all(&lp.protocol, &inst)
            .map_err(|e| Exit { code: EXIT_FAILURE, message: e.to_string() })?
            .locals
    };
    let cfg = SimConfig { state_limit: s.state_limit, ..SimConfig::default() };
    match explore_all_tapes_with(&locals, s.max_loop_iters, cfg) {
        Ok(v @ SimVerdict::AllDone { .. }) => {
            println!("{v}");
            Ok(0)
        }
        Ok(SimVerdict::Deadlock(w)) => {
            print!("{w}");
            if let Some(path) = witness {
                fs::write(&path, w.steps_text()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            }
            Ok(EXIT_FAILURE)
        }
        Err(e @ SimError::StateSpaceExceeded { .. }) => {
            println!("inconclusive: {e}");
            Ok(EXIT_FAILURE)
        }
        Err(e) => Err(usage(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { protocol, common } => validate(protocol, common),
        Command::Project { protocol, out, common } => project(protocol, out, common),
        Command::Verify { program, protocol, common } => verify(program, protocol, common),
        Command::Simulate { inputs, witness, common } => simulate(inputs, witness, common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Exit { code, message }) => {
            eprintln!("commtype: {message}");
            ExitCode::from(code)
        }
    }
}
