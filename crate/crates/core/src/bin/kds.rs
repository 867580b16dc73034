use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use kds_core::charts::{build_extension_with, default_delta};
use kds_core::flow::experiments::s_plus_sample;
use kds_core::flow::{FlowKind, FlowSystem};
use kds_core::integrate::{Event, IntegratorOptions, State};
use kds_core::kv::{to_kv, ParamFile};
use kds_core::par::Exec;
use kds_core::radial::{lambda_interval, verify_h_negative, LambdaInterval};
use kds_core::sampling::stream_rng;
use kds_core::trapping::{scan_row, trapped_radius, unit_circle};
use kds_core::verify::{run_suite, Suite, VerifyConfig};
use kds_core::{KdsError, Spacetime, SpacetimeParams, Tolerances};

#[derive(Parser)]
#[command(name = "kds", version, about = "Kerr-de Sitter horizons, trapping and bicharacteristic flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check subextremality and print horizon data.
    Validate(Common),
    /// Tabulate trapped radii over directions (ξ_t, ξ_φ) on the unit circle.
    TrappingScan {
        #[command(flatten)]
        common: Common,
        /// Scan a single direction instead of the circle.
        #[arg(long, requires = "xi_phi", allow_hyphen_values = true)]
        xi_t: Option<f64>,
        #[arg(long, requires = "xi_t", allow_hyphen_values = true)]
        xi_phi: Option<f64>,
    },
    /// Integrate one bicharacteristic and write the trajectory as CSV.
    Flow(FlowArgs),
    /// Run a verification suite.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        /// Run every sample loop on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mass: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    spin: Option<f64>,
    /// Flat `key = value` parameter file; flags take precedence.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    /// Integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = KindArg::Wave)]
    kind: KindArg,
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    theta: f64,
    /// Covector components: ξ_r,ξ_ψ,ξ_θ for mode kinds, ξ_τ,ξ_r,ξ_ψ,ξ_θ for the wave flow.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    xi: Option<Vec<f64>>,
    /// Start on the trapped set of direction (ξ_t, ξ_φ) (wave flow).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["xi", "s_plus"])]
    gamma: Option<Vec<f64>>,
    /// Start from a seeded S₊ sample near the event horizon (mode_starrot).
    #[arg(long, conflicts_with = "xi")]
    s_plus: bool,
    #[arg(long, default_value_t = 100.0, allow_hyphen_values = true)]
    span: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Identities,
    Trapping,
    Escape,
    RadialPoints,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Identities => Suite::Identities,
            SuiteArg::Trapping => Suite::Trapping,
            SuiteArg::Escape => Suite::Escape,
            SuiteArg::RadialPoints => Suite::RadialPoints,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    #[value(name = "mode_rot")]
    ModeRot,
    #[value(name = "mode_starrot")]
    ModeStarRot,
    Wave,
}

impl From<KindArg> for FlowKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::ModeRot => FlowKind::ModeRot,
            KindArg::ModeStarRot => FlowKind::ModeStarRot,
            KindArg::Wave => FlowKind::WaveRot,
        }
    }
}

/// Resolved flags and parameter file.
struct RunConfig {
    lambda: f64,
    mass: f64,
    spin: f64,
    seed: u64,
    tol: Tolerances,
    out: Option<PathBuf>,
    format: Option<Format>,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<KdsError> for Failure {
    fn from(e: KdsError) -> Self {
        match e {
            KdsError::InvalidParams(_) | KdsError::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Domain(other.to_string()),
        }
    }
}

type CmdResult = Result<bool, Failure>;

fn resolve(c: &Common) -> Result<RunConfig, Failure> {
    let file = match &c.params {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            ParamFile::parse(&text)?
        }
        None => ParamFile::default(),
    };
    let mut tol = Tolerances::default();
    file.apply(&mut tol);
    if let Some(g) = c.grid {
        tol.grid = g;
    }
    if let Some(t) = c.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Usage(format!("--tol must be positive, got {t}")));
        }
        tol.flow_tol = t;
    }
    Ok(RunConfig {
        lambda: c.lambda.or(file.lambda).unwrap_or(0.02),
        mass: c.mass.or(file.mass).unwrap_or(1.0),
        spin: c.spin.or(file.spin).unwrap_or(0.9),
        seed: c.seed.or(file.seed).unwrap_or(1),
        tol,
        out: c.out.clone(),
        format: c.format,
    })
}

fn render<T: Serialize>(value: &T, format: Option<Format>) -> Result<String, Failure> {
    match format {
        Some(Format::Json) => {
            let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Domain(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Some(Format::Csv) => {
            let mut s = String::from("key,value\n");
            for line in to_kv(value)?.lines() {
                if let Some((k, v)) = line.split_once(" = ") {
                    s.push_str(&format!("{k},{v}\n"));
                }
            }
            Ok(s)
        }
        None => Ok(to_kv(value)?),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Domain(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(c: &Common) -> CmdResult {
    let cfg = resolve(c)?;
    let p = SpacetimeParams::new(cfg.lambda, cfg.mass, cfg.spin)?;
    let iv = lambda_interval(cfg.spin, cfg.mass)?;
    let interval = |iv: &LambdaInterval| {
        if iv.empty {
            json!({ "empty": true })
        } else {
            json!({ "empty": false, "lambda0": iv.lambda0, "lambda1": iv.lambda1 })
        }
    };
    let report = if p.is_subextremal() {
        let st = Spacetime::new(p)?;
        let h = st.horizons;
        let hn = verify_h_negative(&st, cfg.tol.grid);
        json!({
            "lambda": p.lambda,
            "mass": p.mass,
            "spin": p.spin,
            "discriminant": p.discriminant_value(),
            "one_minus_gamma": p.one_minus_gamma(),
            "subextremal": true,
            "r_minus": h.r_minus,
            "r_cauchy": h.r_cauchy,
            "r_e": h.r_e,
            "r_c": h.r_c,
            "r0": h.r0,
            "beta_e": h.beta_e,
            "beta_c": h.beta_c,
            "beta": h.beta,
            "maximal_ratio_margin": p.maximal_ratio_margin(),
            "max_h": hn.max_h,
            "lambda_interval": interval(&iv),
        })
    } else {
        json!({
            "lambda": p.lambda,
            "mass": p.mass,
            "spin": p.spin,
            "discriminant": p.discriminant_value(),
            "one_minus_gamma": p.one_minus_gamma(),
            "subextremal": false,
            "lambda_interval": interval(&iv),
        })
    };
    emit(&render(&report, cfg.format)?, cfg.out.as_deref())?;
    if !p.is_subextremal() {
        if iv.empty {
            eprintln!("not subextremal: no admissible Λ for spin {} and mass {}", p.spin, p.mass);
        } else {
            eprintln!(
                "not subextremal: for spin {} and mass {} choose Λ in ({:e}, {:e})",
                p.spin, p.mass, iv.lambda0, iv.lambda1
            );
        }
    }
    Ok(p.is_subextremal())
}

fn cmd_trapping_scan(c: &Common, xi_t: Option<f64>, xi_phi: Option<f64>) -> CmdResult {
    let cfg = resolve(c)?;
    let st = Spacetime::from_triple(cfg.lambda, cfg.mass, cfg.spin)?;
    let dirs = match (xi_t, xi_phi) {
        (Some(t), Some(p)) => vec![(t, p)],
        _ => unit_circle(cfg.tol.grid.max(1)),
    };
    let rows = dirs
        .into_iter()
        .map(|(t, p)| scan_row(&st, t, p, cfg.tol.root_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match cfg.format {
        Some(Format::Json) => render(&rows, cfg.format)?,
        _ => {
            let mut s = String::from("xi_t,xi_phi,case,r_trap,f_pp,rate_equator\n");
            for r in &rows {
                s.push_str(&format!(
                    "{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e}\n",
                    r.xi_t,
                    r.xi_phi,
                    r.case.as_str(),
                    r.r_trap,
                    r.f_pp,
                    r.rate_equator
                ));
            }
            s
        }
    };
    emit(&text, cfg.out.as_deref())?;
    Ok(true)
}

fn cmd_flow(a: &FlowArgs) -> CmdResult {
    let cfg = resolve(&a.common)?;
    let st = Spacetime::from_triple(cfg.lambda, cfg.mass, cfg.spin)?;
    let profile = build_extension_with(&st, default_delta(&st), &cfg.tol)?;
    let kind = FlowKind::from(a.kind);
    let h = &st.horizons;
    let y0: State = if let Some(g) = &a.gamma {
        if kind != FlowKind::WaveRot {
            return Err(Failure::Usage("--gamma requires --kind wave".into()));
        }
        if g.len() != 2 {
            return Err(Failure::Usage(format!("--gamma takes xi_t,xi_phi, got {} values", g.len())));
        }
        let o = trapped_radius(&st, g[0], g[1], cfg.tol.root_tol)?;
        kds_core::flow::experiments::wave_state(&profile, &o, o.r_trap, a.theta, 0.0)
            .ok_or_else(|| Failure::Domain(format!("no characteristic data on the trapped set at θ = {}", a.theta)))?
    } else if a.s_plus {
        if kind != FlowKind::ModeStarRot {
            return Err(Failure::Usage("--s-plus requires --kind mode_starrot".into()));
        }
        let band = 0.02 * (h.r_c - h.r_e);
        s_plus_sample(&profile, &mut stream_rng(cfg.seed, 0), (h.r_e, h.r_e + band))?
    } else {
        let r = a.r.ok_or_else(|| Failure::Usage("--r is required without --gamma or --s-plus".into()))?;
        let xi = a.xi.clone().unwrap_or_default();
        match (kind.is_mode(), xi.len()) {
            (true, 3) => kds_core::flow::mode_state(r, 0.0, a.theta, [xi[0], xi[1], xi[2]]),
            (false, 4) => [0.0, r, 0.0, a.theta, xi[0], xi[1], xi[2], xi[3]],
            (true, n) => return Err(Failure::Usage(format!("mode flows take 3 covector components, got {n}"))),
            (false, n) => return Err(Failure::Usage(format!("the wave flow takes 4 covector components, got {n}"))),
        }
    };
    let sys = FlowSystem::new(kind, &profile);
    let (lo, hi) = if kind == FlowKind::ModeStarRot {
        (h.r_e - profile.delta, h.r_c + profile.delta)
    } else {
        let eps = 0.05 * (h.r_c - h.r_e);
        (h.r_e + eps, h.r_c - eps)
    };
    let events = [Event::terminal("inner", 1, lo), Event::terminal("outer", 1, hi)];
    let t = sys.run(&y0, a.span, &IntegratorOptions::with_tol(cfg.tol.flow_tol), &events)?;
    let summary = json!({
        "kind": kind.as_str(),
        "seed": cfg.seed,
        "span": a.span,
        "s_end": t.s_end,
        "r_end": t.y_end[1],
        "exit": t.exited_via().unwrap_or("none"),
        "samples": t.samples.len(),
        "q0": t.q0,
        "k0": t.k0,
        "q_drift": t.q_drift,
        "k_drift": t.k_drift,
    });
    let summary = render(&summary, cfg.format)?;
    match &cfg.out {
        Some(p) => {
            emit(&t.to_csv(), Some(p))?;
            print!("{summary}");
        }
        None => {
            print!("{}", t.to_csv());
            eprint!("{summary}");
        }
    }
    Ok(true)
}

fn cmd_verify(c: &Common, suite: SuiteArg, sequential: bool) -> CmdResult {
    let rc = resolve(c)?;
    let cfg = VerifyConfig {
        lambda: rc.lambda,
        mass: rc.mass,
        spin: rc.spin,
        seed: rc.seed,
        tol: rc.tol,
        exec: if sequential { Exec::Sequential } else { Exec::Parallel },
        ..VerifyConfig::default()
    };
    let report = run_suite(suite.into(), &cfg);
    let format = rc.format.or(Some(Format::Json));
    emit(&render(&report, format)?, rc.out.as_deref())?;
    for check in &report.checks {
        eprintln!("{} {}", if check.pass { "PASS" } else { "FAIL" }, check.name);
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::TrappingScan { common, xi_t, xi_phi } => cmd_trapping_scan(common, *xi_t, *xi_phi),
        Command::Flow(a) => cmd_flow(a),
        Command::Verify {
            common,
            suite,
            sequential,
        } => cmd_verify(common, *suite, *sequential),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
