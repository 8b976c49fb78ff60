// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod grid;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use l2approx::abelian::{sdf_quadrature, QuadratureOptions};
use l2approx::complex::{load_complex_json, EquivariantComplex, LoadOptions};
use l2approx::examples;
use l2approx::ring::{int, Rational};
use l2approx::spectral::{
    check_uniform_decay, fk_logdet_step, gap_criterion, parts_identity_check, run_tower, sandwich_trace,
    synthetic_decay_violation, tower_limits, Backend, SandwichOptions, SpectralDensity, StepDensity, TowerOptions,
    TowerRun, DECAY_GRID,
};
use l2approx::QuotientSpec;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use grid::parse_grid;

#[derive(Parser)]
#[command(name = "l2approx", version, about = "Approximate L²-invariants through towers of quotients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel dimensions F_n(0) along a tower and their limit.
    Betti(RunArgs),
    /// Spectral density values F_n(λ) on a λ-grid.
    Sdf(SdfArgs),
    /// Log-determinants, determinant-class integrals and the parts identity.
    Det(RunArgs),
    /// Property checks: decay bound, F(K²) = a_j, parts identity, log det′ ≥ 0, sandwich, gap.
    Check(CheckArgs),
    /// Built-in examples.
    Examples {
        #[command(subcommand)]
        action: ExamplesCmd,
    },
}

#[derive(Subcommand)]
enum ExamplesCmd {
    List,
    /// Print the loadable JSON document of an example.
    Export {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in example name (see `examples list`).
    #[arg(long, conflicts_with = "input")]
    example: Option<String>,
    /// Complex document (JSON).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Require ±1 simplicial boundary coefficients when loading.
    #[arg(long)]
    strict: bool,
    /// Cell dimension; all dimensions when omitted.
    #[arg(short = 'j')]
    j: Option<usize>,
    #[arg(long)]
    tower: Option<String>,
    /// Use only the first N tower levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Tail window for limit estimates.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SdfArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `start:step:stop` or a comma list; defaults to 41 points on [0, K²].
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Synthetic {
    /// A density with a jump of a_j at λ = 10⁻⁶.
    DecayViolation,
    /// Random step densities for the parts identity.
    RandomSteps,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Run the gap criterion on the selected Laplacians.
    #[arg(long)]
    gap: bool,
    /// Smallest acceptable λ* for the gap check.
    #[arg(long, default_value_t = 0.0)]
    gap_min: f64,
    /// λ-grid for the decay check (within (0, 1)) and the gap criterion.
    #[arg(long)]
    grid: Option<String>,
    /// Tolerance of the gap criterion.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Run a synthetic fixture instead of a complex.
    #[arg(long, value_enum)]
    synthetic: Option<Synthetic>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random synthetic densities.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// k of the sandwich polynomial; 0 skips the sandwich check.
    #[arg(long, default_value_t = 2)]
    sandwich_k: usize,
}

/// Bad input: missing files, schema violations, unknown names, invalid flags.
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_err(msg: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(InputError(msg.to_string()))
}

/// Whether every computation succeeded and every check passed.
struct Outcome {
    ok: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Betti(a) => cmd_betti(&a),
        Command::Sdf(a) => cmd_sdf(&a),
        Command::Det(a) => cmd_det(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Examples { action } => cmd_examples(action),
    };
    match result {
        Ok(Outcome { ok: true }) => ExitCode::SUCCESS,
        Ok(Outcome { ok: false }) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<InputError>() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut h = std::io::stdout().lock();
            let written = h.write_all(text.as_bytes()).and_then(|_| if text.ends_with('\n') { Ok(()) } else { h.write_all(b"\n") });
            match written {
                // A closed pipe (`| head`) is not an error.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

struct Selection {
    complex: EquivariantComplex,
    tower_name: String,
    tower: Vec<QuotientSpec>,
    dims: Vec<usize>,
}

fn select(a: &RunArgs) -> anyhow::Result<Selection> {
    let (complex, default_tower) = match (&a.example, &a.input) {
        (Some(name), None) => {
            let e = examples::example(name).map_err(input_err)?;
            (e.complex, Some(e.default_tower.to_string()))
        }
        (None, Some(path)) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
            let c = load_complex_json(&text, LoadOptions { strict_simplicial: a.strict })
                .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
            (c, None)
        }
        _ => return Err(input_err("give exactly one of --example or --input")),
    };
    let tower_name = match (&a.tower, default_tower) {
        (Some(t), _) => t.clone(),
        (None, Some(t)) => t,
        (None, None) => match complex.towers().keys().collect::<Vec<_>>()[..] {
            [only] => only.clone(),
            [] => return Err(input_err("the complex defines no towers")),
            _ => return Err(input_err("the complex defines several towers; pick one with --tower")),
        },
    };
    let mut tower = complex.tower(&tower_name).map_err(input_err)?.to_vec();
    if let Some(n) = a.levels {
        if n == 0 {
            return Err(input_err("--levels must be at least 1"));
        }
        tower.truncate(n);
    }
    let dims = match a.j {
        Some(j) if j > complex.dimension() => {
            return Err(input_err(format!("dimension {j} out of range 0..={}", complex.dimension())))
        }
        Some(j) => vec![j],
        None => (0..=complex.dimension()).collect(),
    };
    if a.window == Some(0) {
        return Err(input_err("--window must be at least 1"));
    }
    Ok(Selection { complex, tower_name, tower, dims })
}

fn tower_options(a: &RunArgs) -> TowerOptions {
    TowerOptions { window: a.window, ..TowerOptions::default() }
}

fn runs(sel: &Selection, opts: &TowerOptions) -> anyhow::Result<Vec<TowerRun>> {
    sel.dims
        .iter()
        .map(|&j| run_tower(&sel.complex, j, &sel.tower_name, &sel.tower, opts).map_err(|e| anyhow!(e)))
        .collect()
}

fn any_level_failed(run: &TowerRun) -> bool {
    run.report.levels.iter().chain(run.report.abelian.iter()).any(|r| r.backend == Backend::Failed)
}

/// Prefixes every CSV row with the dimension `j`, keeping one header.
fn csv_with_j(parts: &[(usize, String)]) -> String {
    let mut out = String::new();
    for (i, (j, csv)) in parts.iter().enumerate() {
        for (k, line) in csv.lines().enumerate() {
            if k == 0 {
                if i == 0 {
                    out.push_str(&format!("j,{line}\n"));
                }
            } else {
                out.push_str(&format!("{j},{line}\n"));
            }
        }
    }
    out
}

fn json_one_or_many(values: Vec<Value>) -> anyhow::Result<String> {
    let v = if values.len() == 1 { values.into_iter().next().unwrap() } else { Value::Array(values) };
    Ok(serde_json::to_string_pretty(&v)?)
}

fn cmd_betti(a: &RunArgs) -> anyhow::Result<Outcome> {
    let sel = select(a)?;
    let runs = runs(&sel, &tower_options(a))?;
    let ok = !runs.iter().any(any_level_failed);
    let text = match a.format {
        Format::Json => json_one_or_many(runs.iter().map(|r| serde_json::to_value(&r.report)).collect::<Result<_, _>>()?)?,
        Format::Csv => csv_with_j(&runs.iter().map(|r| (r.report.j, r.report.to_csv())).collect::<Vec<_>>()),
    };
    emit(&a.out, &text)?;
    Ok(Outcome { ok })
}

fn k_squared_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn cmd_sdf(a: &SdfArgs) -> anyhow::Result<Outcome> {
    let sel = select(&a.run)?;
    let user_grid = a.grid.as_deref().map(parse_grid).transpose().map_err(input_err)?;
    let runs = runs(&sel, &tower_options(&a.run))?;
    let quad = QuadratureOptions { initial: 32, tol: 1e-3, max_points: 1 << 18 };
    let mut csv = String::from("j,level,quotient,backend,lambda,value,error\n");
    let mut json_out = Vec::new();
    let mut ok = true;
    for run in &runs {
        let r = &run.report;
        let k2 = k_squared_f64(&run.k_squared);
        let grid = user_grid.clone().unwrap_or_else(|| (0..=40).map(|i| k2 * i as f64 / 40.0).collect());
        ok &= !any_level_failed(run);
        let mut rows = Vec::new();
        let mut finite = Vec::new();
        for (row, dens) in r.levels.iter().zip(&run.densities) {
            let Some(d) = dens else { continue };
            finite.push(d.clone());
            for &l in &grid {
                rows.push(json!({"level": row.level, "quotient": row.quotient, "backend": "finite", "lambda": l, "value": d.eval(l), "error": 0.0}));
            }
        }
        if r.abelian.is_some() {
            for &l in &grid {
                match sdf_quadrature(&run.laplacian, l, &quad) {
                    Ok(q) => rows.push(json!({"level": 0, "quotient": "abelian", "backend": "abelian", "lambda": l, "value": q.value, "error": q.error_bound})),
                    Err(_) => ok = false,
                }
            }
        }
        let limits = if finite.len() >= 2 { tower_limits(&finite, &grid, a.run.window).map_err(|e| anyhow!(e))? } else { vec![] };
        for row in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.j,
                row["level"],
                row["quotient"].as_str().unwrap_or_default().replace(',', ";"),
                row["backend"].as_str().unwrap_or_default(),
                row["lambda"],
                row["value"],
                row["error"]
            ));
        }
        for p in &limits {
            csv.push_str(&format!("{},limit_upper,,limit,{},{},{}\n", r.j, p.lambda, p.upper, p.upper_plus - p.upper));
            csv.push_str(&format!("{},limit_lower,,limit,{},{},{}\n", r.j, p.lambda, p.lower, p.lower_plus - p.lower));
        }
        json_out.push(json!({"j": r.j, "complex": r.complex, "tower": r.tower, "a_j": r.a_j, "k_squared": r.k_squared, "rows": rows, "limits": limits}));
    }
    let text = match a.run.format {
        Format::Json => json_one_or_many(json_out)?,
        Format::Csv => csv,
    };
    emit(&a.run.out, &text)?;
    Ok(Outcome { ok })
}

fn cmd_det(a: &RunArgs) -> anyhow::Result<Outcome> {
    let sel = select(a)?;
    let runs = runs(&sel, &tower_options(a))?;
    let mut csv = String::from("j,level,quotient,backend,order,logdet,detclass,parts_residual,logdet_nonneg,error\n");
    let mut json_out = Vec::new();
    let mut ok = true;
    for run in &runs {
        let r = &run.report;
        ok &= !any_level_failed(run);
        let mut evidence = true;
        let mut rows = Vec::new();
        for row in r.levels.iter().chain(r.abelian.iter()) {
            let nonneg = row.logdet.map(|l| l >= -1e-9);
            if row.backend == Backend::Finite {
                evidence &= nonneg == Some(true) && row.parts_residual.is_some_and(|p| p <= 1e-10);
            }
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},\"{}\"\n",
                r.j,
                row.level,
                row.quotient.replace(',', ";"),
                serde_json::to_value(row.backend)?.as_str().unwrap_or_default(),
                row.order.map_or(String::new(), |o| o.to_string()),
                opt(row.logdet),
                opt(row.detclass),
                opt(row.parts_residual),
                nonneg.map_or(String::new(), |b| b.to_string()),
                row.error.clone().unwrap_or_default()
            ));
            rows.push(json!({
                "level": row.level, "quotient": row.quotient, "backend": row.backend, "order": row.order,
                "logdet": row.logdet, "detclass": row.detclass, "parts_residual": row.parts_residual,
                "logdet_nonneg": nonneg, "error": row.error,
            }));
        }
        let verdict = if evidence { "determinant-class evidence PASS" } else { "determinant-class evidence FAIL" };
        ok &= evidence;
        csv.push_str(&format!(
            "{},limit,,,,{},{},,,\"{verdict}\"\n",
            r.j,
            r.abelian.as_ref().and_then(|x| x.logdet).map_or(String::new(), |x| x.to_string()),
            r.limit.detclass_liminf.map_or(String::new(), |x| x.to_string()),
        ));
        json_out.push(json!({
            "j": r.j, "complex": r.complex, "tower": r.tower, "k_squared": r.k_squared, "rows": rows,
            "abelian_logdet": r.abelian.as_ref().and_then(|x| x.logdet),
            "detclass_liminf": r.limit.detclass_liminf, "verdict": verdict,
        }));
    }
    let text = match a.format {
        Format::Json => json_one_or_many(json_out)?,
        Format::Csv => csv,
    };
    emit(&a.out, &text)?;
    Ok(Outcome { ok })
}

struct CheckLine {
    name: String,
    pass: bool,
    detail: String,
}

fn line(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> CheckLine {
    CheckLine { name: name.into(), pass, detail: detail.into() }
}

fn random_step_density(rng: &mut ChaCha8Rng) -> StepDensity {
    let k2 = int(rng.random_range(2..=64));
    let k2f = k_squared_f64(&k2);
    let a_j = rng.random_range(1..=4usize);
    let denom = rng.random_range(1..=60i64);
    let budget = a_j as i64 * denom;
    let zero = rng.random_range(0..=budget / 4);
    let mut left = budget - zero;
    let mut jumps = Vec::new();
    for _ in 0..rng.random_range(0..=20) {
        if left == 0 {
            break;
        }
        let w = rng.random_range(1..=left);
        left -= w;
        jumps.push((rng.random_range(1e-6..=k2f), Rational::new(w.into(), denom.into())));
    }
    StepDensity::new(Rational::new(zero.into(), denom.into()), jumps, a_j, k2).expect("mass within a_j")
}

fn synthetic_checks(a: &CheckArgs, which: Synthetic) -> Vec<CheckLine> {
    match which {
        Synthetic::DecayViolation => {
            let k2 = int(16);
            let d = synthetic_decay_violation(1, k2).expect("valid fixture");
            let grid = a.grid.as_deref().and_then(|g| parse_grid(g).ok()).unwrap_or_else(|| vec![1e-6, 0.01, 0.1, 0.5, 0.9]);
            match check_uniform_decay(&[SpectralDensity::Step(d)], 1, 16.0, &grid) {
                Ok(r) => {
                    let worst = r.rows.iter().min_by(|x, y| x.margin.total_cmp(&y.margin));
                    let detail = worst.map_or("no grid points in (0,1)".into(), |w| {
                        format!("min margin {:.6e} at λ = {} (increment {}, bound {:.6})", w.margin, w.lambda, w.increment, w.bound)
                    });
                    vec![line("decay synthetic jump a_j at 1e-6", r.pass, detail)]
                }
                Err(e) => vec![line("decay synthetic", false, e.to_string())],
            }
        }
        Synthetic::RandomSteps => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let worst = (0..a.count)
                .map(|_| parts_identity_check(&random_step_density(&mut rng)).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max);
            vec![line(format!("parts identity on {} random densities", a.count), worst <= 1e-10, format!("max residual {worst:.3e}"))]
        }
    }
}

fn complex_checks(a: &CheckArgs, sel: &Selection) -> anyhow::Result<Vec<CheckLine>> {
    let user_grid = a.grid.as_deref().map(parse_grid).transpose().map_err(input_err)?;
    let decay_grid = user_grid.clone().unwrap_or_else(|| DECAY_GRID.to_vec());
    let gap_grid = user_grid.unwrap_or_else(|| (1..=99).map(|i| i as f64 * 0.01).collect());
    let opts = TowerOptions { abelian_row: false, ..tower_options(&a.run) };
    let mut lines = Vec::new();
    for run in runs(sel, &opts)? {
        let j = run.report.j;
        let a_j = run.report.a_j;
        let k2 = k_squared_f64(&run.k_squared);
        let failed: Vec<String> =
            run.report.levels.iter().filter(|r| r.backend == Backend::Failed).map(|r| r.quotient.clone()).collect();
        lines.push(line(format!("levels j={j}"), failed.is_empty(), format!("failed: {failed:?}")));
        let dens: Vec<SpectralDensity> = run.densities.iter().flatten().cloned().collect();
        let steps: Vec<&StepDensity> = dens.iter().filter_map(SpectralDensity::as_step).collect();

        let decay = check_uniform_decay(&dens, a_j, k2, &decay_grid).map_err(|e| anyhow!(e))?;
        lines.push(line(format!("decay j={j}"), decay.pass, format!("min margin {:.6e}", decay.min_margin)));

        let total_ok = steps.iter().all(|d| d.value(k2) == int(a_j as i64));
        lines.push(line(format!("F(K²) = a_j j={j}"), total_ok, format!("a_j = {a_j}, K² = {}", run.report.k_squared)));

        let worst = steps.iter().map(|d| parts_identity_check(d).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        lines.push(line(format!("parts identity j={j}"), worst <= 1e-10, format!("max residual {worst:.3e}")));

        let min_ld = steps.iter().map(|d| fk_logdet_step(d)).fold(f64::INFINITY, f64::min);
        lines.push(line(format!("log det′ ≥ 0 j={j}"), min_ld >= -1e-9, format!("min {min_ld:.6e}")));

        if a.sandwich_k > 0 && sel.complex.model().is_abelian() {
            let lambda = 0.5;
            match sandwich_trace(&run.laplacian, lambda, a.sandwich_k, &sel.tower, &SandwichOptions::default()) {
                Ok(s) => {
                    let worst = s.levels.iter().flat_map(|l| [l.lower_slack, l.upper_slack]).fold(f64::INFINITY, f64::min);
                    let past = s.min_slack_past_n0();
                    let pass = worst >= -1e-10 && past.is_none_or(|p| p >= -1e-10);
                    lines.push(line(
                        format!("sandwich j={j} λ={lambda} k={}", a.sandwich_k),
                        pass,
                        format!("degree {}, n₀ = {:?}, min slack {worst:.3e}", s.degree, s.n0),
                    ));
                }
                Err(e) => lines.push(line(format!("sandwich j={j}"), false, e.to_string())),
            }
        }

        if a.gap {
            match gap_criterion(&dens, &gap_grid, a.tol, None) {
                Ok(v) => {
                    let pass = v.lambda_star.is_some_and(|l| l >= a.gap_min);
                    let detail = match v.lambda_star {
                        Some(l) => format!("gap, λ* = {l} (required ≥ {})", a.gap_min),
                        None => "no gap".to_string(),
                    };
                    lines.push(line(format!("gap j={j}"), pass, detail));
                }
                Err(e) => lines.push(line(format!("gap j={j}"), false, e.to_string())),
            }
        }
    }
    Ok(lines)
}

fn cmd_check(a: &CheckArgs) -> anyhow::Result<Outcome> {
    let lines = match a.synthetic {
        Some(which) => synthetic_checks(a, which),
        None => complex_checks(a, &select(&a.run)?)?,
    };
    let ok = lines.iter().all(|l| l.pass);
    let text = match a.run.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "pass": ok,
            "checks": lines.iter().map(|l| json!({"name": l.name, "pass": l.pass, "detail": l.detail})).collect::<Vec<_>>(),
        }))?,
        Format::Csv => lines
            .iter()
            .map(|l| format!("{} {}: {}\n", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail))
            .collect(),
    };
    emit(&a.run.out, &text)?;
    Ok(Outcome { ok })
}

fn cmd_examples(action: ExamplesCmd) -> anyhow::Result<Outcome> {
    match action {
        ExamplesCmd::List => {
            let mut text = String::new();
            for (name, description, tower) in examples::list() {
                text.push_str(&format!("{name}\t{description} (default tower: {tower})\n"));
            }
            emit(&None, &text)?;
        }
        ExamplesCmd::Export { name, out } => {
            let doc = examples::export(&name).map_err(input_err)?;
            emit(&out, &serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(Outcome { ok: true })
}
