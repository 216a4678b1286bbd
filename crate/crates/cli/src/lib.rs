//! `vherald`: command-line front end for the vortex-herald simulator.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` into an
//! output directory: `--out`, else `$VHERALD_OUT/<name>`, else
//! `runs/<name>`. Failures print a single `vherald: error[<kind>]: <msg>`
//! line on stderr and exit with 2 (usage), 3 (config) or 4 (runtime).

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use vortex_herald::export::{self, Manifest};
use vortex_herald::kets::{self, PumpKind};
use vortex_herald::polarimetry::{self, DEFAULT_INTENSITY_THRESHOLD, DEFAULT_LINEAR_THRESHOLD};
use vortex_herald::qplate::{self, QPlateParams};
use vortex_herald::render;
use vortex_herald::scenarios::{self, ScenarioConfig, ScenarioResult, SUITE_IDS};
use vortex_herald::{PolKet, Pol};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "VHERALD_OUT";

const SCENARIO_SCHEMA: &str = "\
Scenario config (JSON); only `name` and `pump` are required:
  {
    \"name\": \"fp_q0.5_A\",                  [A-Za-z0-9._-]
    \"pump\": {\"kind\": \"FP\"|\"VV\", \"q\": 0.5, \"varphi\": 0.0},
    \"qplate\": {\"plate\": {\"q\": 0.5, \"delta\": 1.5707963, \"alpha0\": 0.0},
               \"input\": \"L\"},          optional: pump = plate applied to |input,0>
    \"spdc\": {\"spectrum\": [{\"ell\": 0, \"re\": 1.0, \"im\": 0.0}], \"phi_crystal\": 0.0},
    \"herald\": \"H\"|\"V\"|\"D\"|\"A\"|\"L\"|\"R\",  omit for the pump alone
    \"grid\": {\"n\": 256, \"half_width\": 3.0},  half_width in units of w0
    \"w0\": 1.0,
    \"profile\": \"LaguerreGauss\"|\"PhaseOnly\",
    \"polarimeter\": {\"angles\": [0.0, 0.3926990817, ...]},  default 8 steps of pi/8
    \"offset\": {\"dx\": 0.0, \"dy\": 0.0},      units of w0, magnitude < 0.5
    \"perturb\": \"constituent\"|\"crystal\",
    \"export_frames\": false
  }
Flags such as --kind/--q/--varphi/--herald and `--set key.path=value` override
fields of the file (values are parsed as JSON, else taken as strings).";

const QPLATE_SCHEMA: &str = "\
Q-plate config (JSON):
  {\"plate\": {\"q\": 0.5, \"delta\": 3.14159, \"alpha0\": 0.0}, \"input\": \"L\", \"ell\": 0}
--delta also accepts the presets half-wave and quarter-wave.";

const SUITE_HELP: &str = "\
Suites: fig2 (FP pumps, heralds D/A/L/R), fig3 (VV pumps), fig4 (offset sweep),
fig5 (H/V homogeneity control), correlations (fringe visibilities).
Writes one directory per case, summary.csv and manifest.json.";

#[derive(Debug, Parser)]
#[command(name = "vherald", version, about = "Heralded vector-vortex photon simulator")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// JSON config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a config field, e.g. `--set grid.n=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Default)]
pub struct PumpFlags {
    /// FP or VV.
    #[arg(long)]
    pub kind: Option<PumpKind>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub varphi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pump: PumpFlags,
    /// Idler projection label.
    #[arg(long)]
    pub herald: Option<Pol>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pump ket, Stokes maps and preview.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Pump(ScenarioArgs),
    /// Apply a q-plate to a single-mode ket.
    #[command(after_long_help = QPLATE_SCHEMA)]
    Qplate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        q: Option<f64>,
        /// Radians, `half-wave` or `quarter-wave`.
        #[arg(long)]
        delta: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        alpha0: Option<f64>,
        #[arg(long)]
        input: Option<Pol>,
        #[arg(long, allow_hyphen_values = true)]
        ell: Option<i32>,
    },
    /// Two-photon state of the dual-crystal source.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Spdc(ScenarioArgs),
    /// Heralded signal ket and its Stokes maps.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Herald(ScenarioArgs),
    /// Simulated polarimeter frames and reconstructed Stokes maps.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Polarimetry(ScenarioArgs),
    /// Singularities, disclination index and class.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Topology(ScenarioArgs),
    /// Full pipeline with every artifact.
    #[command(after_long_help = SCENARIO_SCHEMA)]
    Scenario(ScenarioArgs),
    /// Run a figure suite.
    #[command(after_long_help = SUITE_HELP)]
    Suite {
        /// fig2, fig3, fig4, fig5 or correlations.
        id: String,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Failure with its exit-code class.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        // keep the report on one line
        let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "vherald: error[{kind}]: {msg}")
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("{}", CliError::Usage(first));
            return EXIT_USAGE;
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("wrote {}", manifest.display());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Executes a parsed invocation; returns the path of the written manifest.
pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Pump(a) => cmd_pump(a),
        Command::Qplate {
            common,
            q,
            delta,
            alpha0,
            input,
            ell,
        } => cmd_qplate(common, q, delta, alpha0, input, ell),
        Command::Spdc(a) => cmd_spdc(a),
        Command::Herald(a) => cmd_herald(a),
        Command::Polarimetry(a) => cmd_polarimetry(a),
        Command::Topology(a) => cmd_topology(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Suite { id, out } => cmd_suite(&id, out),
    }
}

/// `--out`, else `$VHERALD_OUT/<name>`, else `runs/<name>`.
pub fn output_dir(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name)
    })
}

fn load_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Sets `root[a][b]… = value` for the dotted `key`, creating objects.
pub fn apply_override(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("bad override key `{key}`")));
        }
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        let obj = node.as_object_mut().expect("object ensured above");
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Object(Map::new()));
    }
    Ok(())
}

fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn base_config(common: &Common, default_name: &str) -> Result<Value, CliError> {
    match &common.config {
        Some(path) => load_json(path),
        None => Ok(json!({ "name": default_name })),
    }
}

fn finish_config(mut root: Value, common: &Common) -> Result<Value, CliError> {
    for o in &common.overrides {
        let (k, v) = parse_override(o)?;
        apply_override(&mut root, &k, v)?;
    }
    Ok(root)
}

/// Builds and validates a scenario config from file, flags and overrides.
pub fn scenario_config(args: &ScenarioArgs, default_name: &str) -> Result<ScenarioConfig, CliError> {
    let mut root = base_config(&args.common, default_name)?;
    if let Some(kind) = args.pump.kind {
        apply_override(&mut root, "pump.kind", json!(kind.to_string()))?;
    }
    if let Some(q) = args.pump.q {
        apply_override(&mut root, "pump.q", json!(q))?;
    }
    if let Some(v) = args.pump.varphi {
        apply_override(&mut root, "pump.varphi", json!(v))?;
    }
    if root.get("pump").and_then(|p| p.get("varphi")).is_none() && root.get("pump").is_some() {
        apply_override(&mut root, "pump.varphi", json!(0.0))?;
    }
    if let Some(h) = args.herald {
        apply_override(&mut root, "herald", json!(h.to_string()))?;
    }
    let root = finish_config(root, &args.common)?;
    let cfg: ScenarioConfig = serde_json::from_value(root).map_err(config)?;
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

fn write_manifest<C: serde::Serialize>(
    command: &str,
    cfg: &C,
    dir: &Path,
    names: &[String],
) -> Result<PathBuf, CliError> {
    let mut m = Manifest::new(command, cfg).map_err(runtime)?;
    m.record(dir, names).map_err(runtime)?;
    m.write(dir).map_err(runtime)?;
    Ok(dir.join("manifest.json"))
}

fn put_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    names: &mut Vec<String>,
) -> Result<(), CliError> {
    export::write_json(&dir.join(name), value).map_err(runtime)?;
    names.push(name.to_string());
    Ok(())
}

fn put_bytes(dir: &Path, name: &str, bytes: &[u8], names: &mut Vec<String>) -> Result<(), CliError> {
    export::write_file(&dir.join(name), bytes).map_err(runtime)?;
    names.push(name.to_string());
    Ok(())
}

fn put_stokes_preview(
    dir: &Path,
    s: &vortex_herald::StokesMap,
    names: &mut Vec<String>,
) -> Result<(), CliError> {
    names.extend(export::write_stokes(dir, s).map_err(runtime)?);
    let e = polarimetry::ellipse_map(s, DEFAULT_LINEAR_THRESHOLD, DEFAULT_INTENSITY_THRESHOLD)
        .map_err(runtime)?;
    put_bytes(
        dir,
        "ellipse.csv",
        export::ellipse_csv(&e, render::GLYPH_STRIDE).as_bytes(),
        names,
    )?;
    let img = render::render_preview(s, &e, render::GLYPH_STRIDE);
    put_bytes(dir, "preview.ppm", &img.to_ppm(), names)
}

fn cmd_pump(a: ScenarioArgs) -> Result<PathBuf, CliError> {
    let mut cfg = scenario_config(&a, "pump")?;
    cfg.herald = None;
    let dir = output_dir(a.common.out, "pump");
    let ket = kets::pump_state(&cfg.pump).map_err(runtime)?;
    let grid = cfg.grid_spec().map_err(runtime)?;
    let field = kets::synthesize(&ket, &grid, cfg.w0, cfg.profile, |_, _| (0.0, 0.0))
        .map_err(runtime)?;
    let mut names = Vec::new();
    put_json(&dir, "pump_ket.json", &ket, &mut names)?;
    put_stokes_preview(&dir, &polarimetry::stokes_of_field(&field), &mut names)?;
    write_manifest("pump", &cfg, &dir, &names)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct QPlateConfig {
    plate: QPlateParams,
    input: Pol,
    #[serde(default)]
    ell: i32,
}

fn cmd_qplate(
    common: Common,
    q: Option<f64>,
    delta: Option<String>,
    alpha0: Option<f64>,
    input: Option<Pol>,
    ell: Option<i32>,
) -> Result<PathBuf, CliError> {
    let mut root = match &common.config {
        Some(p) => load_json(p)?,
        None => json!({"plate": {"q": 0.5, "delta": std::f64::consts::PI, "alpha0": 0.0}, "input": "L"}),
    };
    if let Some(q) = q {
        apply_override(&mut root, "plate.q", json!(q))?;
    }
    if let Some(d) = delta {
        let d = qplate::parse_retardation(&d).map_err(config)?;
        apply_override(&mut root, "plate.delta", json!(d))?;
    }
    if let Some(a) = alpha0 {
        apply_override(&mut root, "plate.alpha0", json!(a))?;
    }
    if let Some(p) = input {
        apply_override(&mut root, "input", json!(p.to_string()))?;
    }
    if let Some(l) = ell {
        apply_override(&mut root, "ell", json!(l))?;
    }
    let root = finish_config(root, &common)?;
    let cfg: QPlateConfig = serde_json::from_value(root).map_err(config)?;
    cfg.plate.validate().map_err(config)?;
    let dir = output_dir(common.out, "qplate");
    let ket_in = PolKet::basis_state(cfg.input, cfg.ell);
    let ket_out = qplate::qplate_apply_ket(&ket_in, &cfg.plate);
    let mut names = Vec::new();
    put_json(&dir, "input_ket.json", &ket_in, &mut names)?;
    put_json(&dir, "output_ket.json", &ket_out, &mut names)?;
    write_manifest("qplate", &cfg, &dir, &names)
}

fn cmd_spdc(a: ScenarioArgs) -> Result<PathBuf, CliError> {
    let cfg = scenario_config(&a, "spdc")?;
    let dir = output_dir(a.common.out, "spdc");
    let pump = kets::pump_state(&cfg.pump).map_err(runtime)?;
    let pair = kets::spdc_state(&pump, &cfg.spdc).map_err(runtime)?;
    let projected = kets::project_idler_oam0(&pair).map_err(runtime)?;
    let mut names = Vec::new();
    put_json(&dir, "pump_ket.json", &pump, &mut names)?;
    put_json(&dir, "biphoton.json", &pair, &mut names)?;
    put_json(&dir, "biphoton_idler_oam0.json", &projected, &mut names)?;
    write_manifest("spdc", &cfg, &dir, &names)
}

fn require_herald(cfg: &ScenarioConfig) -> Result<Pol, CliError> {
    cfg.herald
        .ok_or_else(|| CliError::Config(format!("scenario `{}` needs a herald label", cfg.name)))
}

fn cmd_herald(a: ScenarioArgs) -> Result<PathBuf, CliError> {
    let cfg = scenario_config(&a, "herald")?;
    require_herald(&cfg)?;
    let dir = output_dir(a.common.out, "herald");
    let r = scenarios::run_scenario(&cfg).map_err(runtime)?;
    let mut names = Vec::new();
    if let Some(k) = &r.herald_ket {
        put_json(&dir, "herald_ket.json", k, &mut names)?;
    }
    put_stokes_preview(&dir, &r.analytic_stokes, &mut names)?;
    write_manifest("herald", &cfg, &dir, &names)
}

fn cmd_polarimetry(a: ScenarioArgs) -> Result<PathBuf, CliError> {
    let cfg = scenario_config(&a, "polarimetry")?;
    let dir = output_dir(a.common.out, "polarimetry");
    let r = scenarios::run_scenario(&cfg).map_err(runtime)?;
    let mut names: Vec<String> = export::write_frames(&dir.join("frames"), &r.frames)
        .map_err(runtime)?
        .into_iter()
        .map(|n| format!("frames/{n}"))
        .collect();
    put_stokes_preview(&dir, &r.stokes, &mut names)?;
    put_json(
        &dir,
        "roundtrip.json",
        &json!({ "max_relative_error": r.roundtrip_error }),
        &mut names,
    )?;
    write_manifest("polarimetry", &cfg, &dir, &names)
}

fn topology_json(r: &ScenarioResult) -> Value {
    json!({
        "center": r.center,
        "class": r.class.map(|c| c.to_string()),
        "rotation_vs_pump": r.rotation,
        "singularities": r.singularities,
    })
}

fn cmd_topology(a: ScenarioArgs) -> Result<PathBuf, CliError> {
    let cfg = scenario_config(&a, "topology")?;
    let dir = output_dir(a.common.out, "topology");
    let r = scenarios::run_scenario(&cfg).map_err(runtime)?;
    let mut names = Vec::new();
    put_json(&dir, "topology.json", &topology_json(&r), &mut names)?;
    write_manifest("topology", &cfg, &dir, &names)
}

fn cmd_scenario(a: ScenarioArgs) -> Result<PathBuf, CliError> {
    let cfg = scenario_config(&a, "scenario")?;
    let dir = output_dir(a.common.out, &cfg.name);
    let r = scenarios::run_scenario(&cfg).map_err(runtime)?;
    scenarios::write_scenario(&r, &dir, &r.metrics()).map_err(runtime)?;
    Ok(dir.join("manifest.json"))
}

fn cmd_suite(id: &str, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if !SUITE_IDS.contains(&id) {
        return Err(CliError::Usage(format!(
            "unknown suite `{id}` (expected one of {})",
            SUITE_IDS.join(", ")
        )));
    }
    let dir = output_dir(out, id);
    let run = scenarios::run_figure_suite(id).map_err(runtime)?;
    scenarios::write_suite(&run, &dir).map_err(runtime)?;
    Ok(dir.join("manifest.json"))
}
