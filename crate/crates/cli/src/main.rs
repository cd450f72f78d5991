use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisokin::christoffel::{decompose, detect_acoustic_axes, velocity_surface, AxisReport};
use anisokin::correlation::{CorrelationError, CorrelationFile, CorrelationModel};
use anisokin::grid::{to_spherical, LatLongGrid};
use anisokin::material::{builtin_materials, resolve, MaterialError, MaterialRecord, GPA};
use anisokin::quadrature::{QuadratureError, SphereRule};
use anisokin::scattering::{
    convergence_check, cross_section_rule, CrossSectionTable, ScatteringError, DEFAULT_GRADED,
};
use anisokin::transport::{run, SimConfig, TransportError};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

mod svg;

/// Relative change under rule refinement above which a cross-section table
/// is reported as under-resolved.
const CONVERGENCE_TOL: f64 = 1e-6;

/// Directions probed by the refinement check of `xsection`.
const CHECK_DIRECTIONS: usize = 8;

#[derive(Parser, Debug)]
#[command(
    name = "anisokin",
    version,
    about = "Elastic waves in random anisotropic media"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 3 when a numerical convergence check fails.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Built-in material database.
    Materials {
        #[command(subcommand)]
        action: MaterialsAction,
    },
    /// Phase-speed maps with acoustic axes marked.
    Surfaces(SurfacesArgs),
    /// Acoustic axes as JSON.
    Axes(AxesArgs),
    /// Partial, total and normalized scattering cross-sections at fixed a|k|.
    Xsection(XsectionArgs),
    /// Monte Carlo radiative transfer.
    Transport(TransportArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum MaterialsAction {
    List,
    Show { name: String },
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SurfacesArgs {
    /// Built-in name or material JSON file.
    #[arg(long)]
    material: String,
    /// Map grid spacing [deg].
    #[arg(long, default_value_t = 2.0)]
    grid: f64,
    /// Acoustic-axis tolerance on the relative speed gap.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct AxesArgs {
    #[arg(long)]
    material: String,
    /// Seed grid spacing [deg].
    #[arg(long, default_value_t = 2.0)]
    grid: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Also write axes.json, axes.csv and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct XsectionArgs {
    #[arg(long)]
    material: String,
    /// Correlation JSON; default is the Markov model with a = 0.1 mm and all
    /// coefficients one, in the material's own class.
    #[arg(long)]
    corr: Option<PathBuf>,
    /// Nondimensional frequency a|k|.
    #[arg(long, default_value_t = 1.0)]
    ak: f64,
    /// Gauss product rule "Np,Na" instead of the graded rule.
    #[arg(long, conflicts_with = "graded")]
    rule: Option<String>,
    /// Graded rule "base,order" (default 4,8).
    #[arg(long)]
    graded: Option<String>,
    /// Map grid spacing [deg].
    #[arg(long, default_value_t = 6.0)]
    grid: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct TransportArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Also solve for the stationary mode fractions (dense LU on all states).
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    tool_version: String,
    command: String,
    args: Value,
    /// SHA-256 of the canonical JSON of command, args and input contents.
    config_hash: String,
    material: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    corr: Option<CorrelationFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rule_orders: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    threads: usize,
    /// SHA-256 of every input file read.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

/// Input errors, reported with exit status 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Invalid>()
            || c.is::<MaterialError>()
            || c.is::<CorrelationError>()
            || matches!(
                c.downcast_ref::<QuadratureError>(),
                Some(QuadratureError::BadOrders(..))
            )
            || matches!(
                c.downcast_ref::<ScatteringError>(),
                Some(
                    ScatteringError::NoFluctuations
                        | ScatteringError::BadFrequency(_)
                        | ScatteringError::BadConstant { .. }
                )
            )
            || matches!(
                c.downcast_ref::<TransportError>(),
                Some(
                    TransportError::Config(_)
                        | TransportError::Material(_)
                        | TransportError::Correlation(_)
                )
            )
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| {
        format!("cannot read {}", path.display())
    })?))
}

struct Ctx {
    threads: usize,
    strict: bool,
}

struct Written {
    dir: PathBuf,
    files: Vec<String>,
}

impl Written {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("cannot write {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.put(name, s.as_bytes())
    }
}

struct ManifestParts {
    command: &'static str,
    args: Value,
    material: MaterialRecord,
    corr: Option<CorrelationFile>,
    rule_orders: Option<(usize, usize)>,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
}

fn write_manifest(ctx: &Ctx, out: &mut Written, parts: ManifestParts) -> Result<()> {
    // the output location does not change the result
    let mut hashed_args = parts.args.clone();
    if let Some(m) = hashed_args.as_object_mut() {
        m.remove("out");
    }
    let canonical = json!({
        "command": parts.command,
        "args": hashed_args,
        "material": parts.material.to_file_data(),
        "corr": parts.corr,
        "inputs": parts.inputs,
        "seed": parts.seed,
    });
    let mut files = out.files.clone();
    files.push("manifest.json".into());
    let m = Manifest {
        tool: "anisokin".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: parts.command.into(),
        args: parts.args,
        config_hash: sha256_hex(&serde_json::to_vec(&canonical)?),
        material: parts.material.name.clone(),
        corr: parts.corr,
        rule_orders: parts.rule_orders,
        seed: parts.seed,
        threads: ctx.threads,
        inputs: parts.inputs,
        outputs: files,
    };
    out.json("manifest.json", &m)
}

fn material_inputs(name: &str, rec: &MaterialRecord) -> Result<BTreeMap<String, String>> {
    let mut inputs = BTreeMap::new();
    if Path::new(name).exists() && rec.name != name {
        inputs.insert(name.to_string(), file_hash(Path::new(name))?);
    }
    Ok(inputs)
}

fn materials(action: &MaterialsAction) -> Result<()> {
    match action {
        MaterialsAction::List => {
            for r in builtin_materials() {
                println!(
                    "{:<10} {:<22} {}",
                    r.name,
                    r.matrix.class().to_string(),
                    r.note
                );
            }
        }
        MaterialsAction::Show { name } => {
            let r = resolve(name)?;
            let v = r.matrix.voigt() / GPA;
            let voigt: Vec<Vec<f64>> = (0..6)
                .map(|i| (0..6).map(|j| v[(i, j)]).collect())
                .collect();
            let report = r.matrix.validate_stability();
            let file = r.to_file_data();
            let out = json!({
                "name": r.name,
                "class": r.matrix.class(),
                "constant_names": r.matrix.class().constant_names(),
                "constants_gpa": file.constants_gpa,
                "density_kg_m3": r.matrix.density(),
                "voigt_gpa": voigt,
                "stable": report.is_stable(),
                "violations": report.violations,
                "anisotropy_factor_gpa": r.matrix.anisotropy_factor().map(|a| a / GPA),
                "note": r.note,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

fn axes_csv(rec: &MaterialRecord, report: &AxisReport) -> Result<String> {
    let mut s = String::from("kx,ky,kz,c1,c2,c3,mode_a,mode_b,relative_gap\n");
    for a in report.axes() {
        let d = decompose(&rec.matrix, &Vector3::from(a.direction))?;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            a.direction[0],
            a.direction[1],
            a.direction[2],
            d.speeds[0],
            d.speeds[1],
            d.speeds[2],
            a.modes.0,
            a.modes.1,
            a.relative_gap
        );
    }
    Ok(s)
}

fn axes_json(rec: &MaterialRecord, report: &AxisReport) -> Value {
    json!({ "material": rec.name, "report": report })
}

fn check_grid(deg: f64) -> Result<()> {
    if !(deg.is_finite() && deg > 0.0 && deg <= 90.0) {
        bail!(Invalid(format!(
            "grid spacing must be in (0, 90] degrees, got {deg}"
        )));
    }
    Ok(())
}

fn axes(ctx: &Ctx, args: &AxesArgs) -> Result<()> {
    check_grid(args.grid)?;
    let rec = resolve(&args.material)?;
    let report = detect_acoustic_axes(&rec.matrix, args.grid, args.tol);
    let doc = axes_json(&rec, &report);
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(dir) = &args.out {
        let mut out = Written::new(dir)?;
        out.json("axes.json", &doc)?;
        out.put("axes.csv", axes_csv(&rec, &report)?.as_bytes())?;
        let inputs = material_inputs(&args.material, &rec)?;
        write_manifest(
            ctx,
            &mut out,
            ManifestParts {
                command: "axes",
                args: serde_json::to_value(args)?,
                material: rec,
                corr: None,
                rule_orders: None,
                seed: None,
                inputs,
            },
        )?;
    }
    Ok(())
}

fn markers(report: &AxisReport) -> Vec<Vector3<f64>> {
    report
        .axes()
        .iter()
        .flat_map(|a| {
            let v = Vector3::from(a.direction);
            [v, -v]
        })
        .collect()
}

fn surfaces(ctx: &Ctx, args: &SurfacesArgs) -> Result<()> {
    check_grid(args.grid)?;
    let rec = resolve(&args.material)?;
    let grid = LatLongGrid::with_step_deg(args.grid);
    let rows = velocity_surface(&rec.matrix, &grid.directions());
    let report = detect_acoustic_axes(&rec.matrix, 2.0_f64.min(args.grid), args.tol);
    let mut out = Written::new(&args.out)?;
    let mut csv = String::from("kx,ky,kz,theta_deg,phi_deg,c1,c2,c3\n");
    for r in &rows {
        let (t, p) = to_spherical(&Vector3::from(r.direction));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.direction[0],
            r.direction[1],
            r.direction[2],
            t.to_degrees(),
            p.to_degrees(),
            r.speeds[0],
            r.speeds[1],
            r.speeds[2]
        );
    }
    out.put("surfaces.csv", csv.as_bytes())?;
    out.json("axes.json", &axes_json(&rec, &report))?;
    out.put("axes.csv", axes_csv(&rec, &report)?.as_bytes())?;
    let marks = markers(&report);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|a| rows.iter().map(|r| r.speeds[a]).collect())
        .collect();
    let panels: Vec<svg::Panel> = (0..3)
        .map(|a| svg::Panel {
            title: format!("{} c{} [m/s]", rec.name, a + 1),
            values: &cols[a],
            markers: &marks,
        })
        .collect();
    out.put("surfaces.svg", svg::heat_maps(&grid, &panels, 3).as_bytes())?;
    let inputs = material_inputs(&args.material, &rec)?;
    write_manifest(
        ctx,
        &mut out,
        ManifestParts {
            command: "surfaces",
            args: serde_json::to_value(args)?,
            material: rec,
            corr: None,
            rule_orders: None,
            seed: None,
            inputs,
        },
    )
}

fn parse_pair(s: &str, what: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if let [a, b] = parts[..] {
        if let (Ok(a), Ok(b)) = (a.parse::<usize>(), b.parse::<usize>()) {
            if a >= 1 && b >= 1 {
                return Ok((a, b));
            }
        }
    }
    bail!(Invalid(format!(
        "{what} must be two positive integers \"a,b\", got {s:?}"
    )))
}

fn xsection(ctx: &Ctx, args: &XsectionArgs) -> Result<()> {
    check_grid(args.grid)?;
    if !(args.ak.is_finite() && args.ak > 0.0) {
        bail!(Invalid(format!("a|k| must be positive, got {}", args.ak)));
    }
    let rec = resolve(&args.material)?;
    let mut inputs = material_inputs(&args.material, &rec)?;
    let corr = match &args.corr {
        Some(p) => {
            inputs.insert(p.display().to_string(), file_hash(p)?);
            CorrelationModel::load(p)?
        }
        None => CorrelationModel::all_ones(1e-4, rec.matrix.class())?,
    };
    if corr.is_zero() {
        bail!(ScatteringError::NoFluctuations);
    }
    let rule = match (&args.rule, &args.graded) {
        (Some(r), _) => {
            let (np, na) = parse_pair(r, "--rule")?;
            SphereRule::new(np, na)?
        }
        (None, g) => {
            let (b, o) = match g {
                Some(g) => parse_pair(g, "--graded")?,
                None => DEFAULT_GRADED,
            };
            cross_section_rule(&rec.matrix, b, o)?
        }
    };
    let grid = LatLongGrid::with_step_deg(args.grid);
    let dirs = grid.directions();
    let table = CrossSectionTable::compute(&rec.matrix, &corr, args.ak, &dirs, &rule)?;
    let stride = (dirs.len() / CHECK_DIRECTIONS).max(1);
    let probe: Vec<Vector3<f64>> = dirs.iter().step_by(stride).copied().collect();
    let change = convergence_check(&rec.matrix, &corr, args.ak, &probe, &rule)?;

    let mut out = Written::new(&args.out)?;
    let mut csv = String::from("kx,ky,kz,alpha,beta,Sigma_ab,Sigma_a,Sigma_norm_ab,degenerate\n");
    for i in 0..table.len() {
        let d = table.directions[i];
        for a in 0..3 {
            for b in 0..3 {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    d[0],
                    d[1],
                    d[2],
                    a + 1,
                    b + 1,
                    table.partial[i][a][b],
                    table.total[i][a],
                    table.normalized[i][a][b],
                    table.degenerate[i][a] as u8
                );
            }
        }
    }
    out.put("xsection.csv", csv.as_bytes())?;
    let corr_file = corr.to_file_data();
    out.json(
        "xsection.json",
        &json!({
            "material": rec.name,
            "ak": args.ak,
            "a_m": corr.a(),
            "rho": corr_file.rho,
            "fluctuation_class": corr.class(),
            "rule": format!("{:?}", rule.scheme()),
            "rule_nodes": rule.len(),
            "refinement_change": change,
            "units": "Sigma in 1/s per GPa^2 of fluctuation variance",
            "table": table,
        }),
    )?;
    let panels_data: Vec<(String, Vec<f64>)> = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| {
            (
                format!("{} Sigma#{}{}", rec.name, a + 1, b + 1),
                table.normalized.iter().map(|n| n[a][b]).collect(),
            )
        })
        .collect();
    let panels: Vec<svg::Panel> = panels_data
        .iter()
        .map(|(t, v)| svg::Panel {
            title: t.clone(),
            values: v,
            markers: &[],
        })
        .collect();
    out.put("xsection.svg", svg::heat_maps(&grid, &panels, 3).as_bytes())?;
    write_manifest(
        ctx,
        &mut out,
        ManifestParts {
            command: "xsection",
            args: serde_json::to_value(args)?,
            material: rec,
            corr: Some(corr_file),
            rule_orders: Some(rule.orders()),
            seed: None,
            inputs,
        },
    )?;
    if change > CONVERGENCE_TOL {
        let e = ScatteringError::Unconverged(change);
        eprintln!("warning: {e}");
        if ctx.strict {
            bail!(e);
        }
    }
    Ok(())
}

fn transport(ctx: &Ctx, args: &TransportArgs) -> Result<()> {
    let mut config = SimConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let mut inputs = BTreeMap::new();
    inputs.insert(args.config.display().to_string(), file_hash(&args.config)?);
    let (rec, _) = config.resolve()?;
    inputs.extend(material_inputs(&config.material, &rec)?);
    let (result, tables) = run(&config)?;
    let mut out = Written::new(&args.out)?;
    let mut lines = String::new();
    for f in &result.frames {
        lines.push_str(&serde_json::to_string(f)?);
        lines.push('\n');
    }
    out.put("frames.jsonl", lines.as_bytes())?;
    let mut csv = String::from("time_s,E_1,E_2,E_3\n");
    for f in &result.frames {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            f.time, f.energy[0], f.energy[1], f.energy[2]
        );
    }
    out.put("summary.csv", csv.as_bytes())?;
    let stationary = if args.oracle {
        Some(tables.mode_fractions(&tables.stationary()?))
    } else {
        None
    };
    out.json(
        "diagnostics.json",
        &json!({ "diagnostics": result.diagnostics, "stationary_mode_fractions": stationary }),
    )?;
    if let Some(g) = config.spatial {
        let mut bytes = Vec::with_capacity(result.frames.len() * g.len() * 8);
        for f in &result.frames {
            for c in f
                .spatial
                .as_ref()
                .ok_or_else(|| anyhow!("spatial tally missing"))?
            {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        out.put("density.bin", &bytes)?;
        out.json(
            "density.json",
            &json!({
                "file": "density.bin",
                "dtype": "u64 little-endian",
                "shape": [result.frames.len(), g.bins, g.bins, g.bins],
                "axes": ["frame", "x", "y", "z"],
                "times_s": result.frames.iter().map(|f| f.time).collect::<Vec<_>>(),
                "origin_m": [-g.half_width_m, -g.half_width_m, -g.half_width_m],
                "bin_width_m": g.bin_width(),
                "units": "particle count; energy = count / particles",
            }),
        )?;
    }
    write_manifest(
        ctx,
        &mut out,
        ManifestParts {
            command: "transport",
            args: serde_json::to_value(args)?,
            material: rec,
            corr: Some(config.corr.clone()),
            rule_orders: Some((config.rule[0], config.rule[1])),
            seed: Some(config.seed),
            inputs,
        },
    )
}

fn replay(ctx: &Ctx, manifest: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(manifest)
        .with_context(|| format!("cannot read {}", manifest.display()))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Invalid(format!("malformed manifest: {e}")))?;
    for (path, hash) in &m.inputs {
        if &file_hash(Path::new(path))? != hash {
            bail!(Invalid(format!(
                "input {path} changed since the manifest was written"
            )));
        }
    }
    let out = Some(out.to_path_buf());
    let bad = |e: serde_json::Error| Invalid(format!("manifest args: {e}"));
    match m.command.as_str() {
        "surfaces" => {
            let mut a: SurfacesArgs = serde_json::from_value(m.args).map_err(bad)?;
            a.out = out.unwrap();
            surfaces(ctx, &a)
        }
        "axes" => {
            let mut a: AxesArgs = serde_json::from_value(m.args).map_err(bad)?;
            a.out = out;
            axes(ctx, &a)
        }
        "xsection" => {
            let mut a: XsectionArgs = serde_json::from_value(m.args).map_err(bad)?;
            a.out = out.unwrap();
            xsection(ctx, &a)
        }
        "transport" => {
            let mut a: TransportArgs = serde_json::from_value(m.args).map_err(bad)?;
            a.out = out.unwrap();
            transport(ctx, &a)
        }
        other => bail!(Invalid(format!("cannot replay command {other:?}"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx {
        threads: rayon::current_num_threads(),
        strict: cli.strict,
    };
    let result = match &cli.command {
        Command::Materials { action } => materials(action),
        Command::Surfaces(a) => surfaces(&ctx, a),
        Command::Axes(a) => axes(&ctx, a),
        Command::Xsection(a) => xsection(&ctx, a),
        Command::Transport(a) => transport(&ctx, a),
        Command::Replay { manifest, out } => replay(&ctx, manifest, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<ScatteringError>(),
                    Some(ScatteringError::Unconverged(_))
                )
            }) {
                ExitCode::from(3)
            } else if is_validation(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
