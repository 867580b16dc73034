//! Verification suites. Each suite is a list of named checks; a failing
//! computation becomes a failed check carrying the error message.
//!
//! Reports depend only on the configuration and the seed: every random draw
//! comes from an indexed stream and results are reduced in index order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::charts::{build_extension_with, default_delta, spacelike_slice_check, ExtensionProfile};
use crate::config::Tolerances;
use crate::error::{KdsError, Result};
use crate::flow::experiments::{
    admissible_latitudes, conservation_runs, horizon_crossing_check, mode_no_trapping_experiment, stream,
    wave_trapping_experiment, WaveTrappingConfig, THETA_MIN,
};
use crate::par::{map_indexed, Exec};
use crate::params::{discriminant, SpacetimeParams};
use crate::radial::{
    extremal_boundary_check, h_eval, h_form_scale, lambda_interval, verify_h_negative, HForm, Spacetime,
};
use crate::sampling::{random_subextremal, ModeCharSampler};
use crate::symbols::r0_definiteness_check;
use crate::trapping::{scan_row, trapped_radius, unit_circle, TrapCase, TrappedOrbit};

const TAG_H_NEG: u64 = 32;
const TAG_H_FORMS: u64 = 33;
const TAG_EXTREMAL: u64 = 34;
const TAG_DEFINITE: u64 = 35;
const TAG_PHOTON: u64 = 36;
const TAG_NH_TRIPLE: u64 = 37;
const TAG_NH_ORBIT: u64 = 38;
const TAG_CONS_TRIPLE: u64 = 39;
const TAG_ESCAPE_TRIPLE: u64 = 40;
const TAG_RADIAL_TRIPLE: u64 = 41;
const TAG_SEEDS: u64 = 42;
const TAG_EXTENSION: u64 = 43;

/// Spin ratio above which the older sufficient condition for h < 0 fails.
const OLD_CONDITION_RATIO: f64 = 0.866_025_403_784_438_6;
/// Upper end of sampled spin ratios; triples with an empty Λ-interval are redrawn.
const MAX_RATIO: f64 = 1.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Trapping,
    Escape,
    RadialPoints,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Trapping => "trapping",
            Suite::Escape => "escape",
            Suite::RadialPoints => "radial-points",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = KdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identities" => Ok(Suite::Identities),
            "trapping" => Ok(Suite::Trapping),
            "escape" => Ok(Suite::Escape),
            "radial-points" | "radial_points" => Ok(Suite::RadialPoints),
            "all" => Ok(Suite::All),
            other => Err(KdsError::Parse(format!("unknown suite '{other}'"))),
        }
    }
}

/// Sample sizes for the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteSizes {
    pub h_neg_triples: usize,
    pub h_neg_high_spin: usize,
    pub h_neg_grid: usize,
    pub h_form_points: usize,
    pub extremal_pairs: usize,
    pub definiteness_triples: usize,
    pub extension_triples: usize,
    pub photon_triples: usize,
    pub nh_random_triples: usize,
    pub nh_orbits: usize,
    pub conservation_triples: usize,
    pub conservation_runs: usize,
    pub escape_random_triples: usize,
    pub escape_samples: usize,
    pub radial_random_triples: usize,
    pub radial_samples: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            h_neg_triples: 200,
            h_neg_high_spin: 50,
            h_neg_grid: 2048,
            h_form_points: 100_000,
            extremal_pairs: 50,
            definiteness_triples: 100,
            extension_triples: 10,
            photon_triples: 50,
            nh_random_triples: 4,
            nh_orbits: 10,
            conservation_triples: 4,
            conservation_runs: 20,
            escape_random_triples: 20,
            escape_samples: 200,
            radial_random_triples: 4,
            radial_samples: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub lambda: f64,
    pub mass: f64,
    pub spin: f64,
    pub seed: u64,
    pub tol: Tolerances,
    pub sizes: SuiteSizes,
    pub exec: Exec,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            mass: 1.0,
            spin: 0.9,
            seed: 1,
            tol: Tolerances::default(),
            sizes: SuiteSizes::default(),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub metrics: Value,
}

impl CheckOutcome {
    fn new(name: &str, pass: bool, metrics: Value) -> Self {
        Self {
            name: name.to_string(),
            pass,
            metrics,
        }
    }

    fn failed(name: &str, err: &KdsError) -> Self {
        Self::new(name, false, json!({ "error": err.to_string() }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub lambda: f64,
    pub mass: f64,
    pub spin: f64,
    pub tolerances: Tolerances,
    pub sizes: SuiteSizes,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

type CheckFn = fn(&VerifyConfig) -> Result<CheckOutcome>;

const IDENTITIES: [(&str, CheckFn); 8] = [
    ("h_negativity", check_h_negativity),
    ("h_forms", check_h_forms),
    ("horizon_data", check_horizon_data),
    ("lambda_interval", check_lambda_interval),
    ("maximal_ratio", check_maximal_ratio),
    ("extremal_boundary", check_extremal_boundary),
    ("r0_definiteness", check_r0_definiteness),
    ("extension_slice", check_extension_slice),
];

const TRAPPING: [(&str, CheckFn); 4] = [
    ("photon_sphere", check_photon_sphere),
    ("trapping_scan", check_trapping_scan),
    ("normal_hyperbolicity", check_normal_hyperbolicity),
    ("conservation", check_conservation),
];

const ESCAPE: [(&str, CheckFn); 1] = [("mode_non_trapping", check_mode_non_trapping)];

const RADIAL: [(&str, CheckFn); 1] = [("radial_points", check_radial_points)];

pub fn suite_checks(suite: Suite) -> Vec<(&'static str, CheckFn)> {
    match suite {
        Suite::Identities => IDENTITIES.to_vec(),
        Suite::Trapping => TRAPPING.to_vec(),
        Suite::Escape => ESCAPE.to_vec(),
        Suite::RadialPoints => RADIAL.to_vec(),
        Suite::All => IDENTITIES
            .iter()
            .chain(TRAPPING.iter())
            .chain(ESCAPE.iter())
            .chain(RADIAL.iter())
            .copied()
            .collect(),
    }
}

pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> SuiteReport {
    let checks: Vec<CheckOutcome> = suite_checks(suite)
        .into_iter()
        .map(|(name, f)| match f(cfg) {
            Ok(mut c) => {
                c.name = name.to_string();
                c
            }
            Err(e) => CheckOutcome::failed(name, &e),
        })
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    SuiteReport {
        suite,
        seed: cfg.seed,
        lambda: cfg.lambda,
        mass: cfg.mass,
        spin: cfg.spin,
        tolerances: cfg.tol,
        sizes: cfg.sizes,
        checks,
        pass,
    }
}

fn headline(cfg: &VerifyConfig) -> Result<Spacetime> {
    Spacetime::new(SpacetimeParams::validated(cfg.lambda, cfg.mass, cfg.spin)?)
}

fn profile_for(st: &Spacetime, tol: &Tolerances) -> Result<ExtensionProfile> {
    build_extension_with(st, default_delta(st), tol)
}

fn triple(seed: u64, tag: u64, i: usize, lo: f64, hi: f64) -> Result<Spacetime> {
    random_subextremal(&mut stream(seed, tag, i as u64), lo, hi)
}

fn sub_seed(seed: u64, k: usize) -> u64 {
    stream(seed, TAG_SEEDS, k as u64).gen()
}

fn triple_json(st: &Spacetime) -> Value {
    json!([st.params.lambda, st.params.mass, st.params.spin])
}

/// The 200 triples shared by the h-negativity, horizon and ratio checks.
fn identity_triples(cfg: &VerifyConfig) -> Result<Vec<Spacetime>> {
    let n = cfg.sizes.h_neg_triples;
    let high = cfg.sizes.h_neg_high_spin.min(n);
    let mut out: Vec<Spacetime> = map_indexed(cfg.exec, n, |i| {
        if i < high {
            triple(cfg.seed, TAG_H_NEG, i, OLD_CONDITION_RATIO, MAX_RATIO)
        } else {
            triple(cfg.seed, TAG_H_NEG, i, 0.0, OLD_CONDITION_RATIO)
        }
    })
    .into_iter()
    .collect::<Result<_>>()?;
    out.push(headline(cfg)?);
    Ok(out)
}

fn check_h_negativity(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let triples = identity_triples(cfg)?;
    let reports = map_indexed(cfg.exec, triples.len(), |i| verify_h_negative(&triples[i], cfg.sizes.h_neg_grid));
    let (worst, rep) = reports
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.max_h.total_cmp(&b.1.max_h))
        .ok_or_else(|| KdsError::InvalidParams("no triples".into()))?;
    let high = triples.iter().filter(|s| s.params.spin / s.params.mass > OLD_CONDITION_RATIO).count();
    let violations = reports.iter().filter(|r| r.violation).count();
    Ok(CheckOutcome::new(
        "",
        violations == 0,
        json!({
            "triples": triples.len(),
            "beyond_old_condition": high,
            "grid": cfg.sizes.h_neg_grid,
            "violations": violations,
            "largest_max_h": rep.max_h,
            "largest_at_r": rep.argmax_r,
            "largest_triple": triple_json(&triples[worst]),
        }),
    ))
}

fn check_h_forms(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    const CHUNK: usize = 100;
    let n = cfg.sizes.h_form_points;
    let chunks = n.div_ceil(CHUNK);
    let worst: Vec<(f64, usize)> = map_indexed(cfg.exec, chunks, |c| {
        let mut rng = stream(cfg.seed, TAG_H_FORMS, c as u64);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for _ in 0..CHUNK.min(n - c * CHUNK) {
            let lambda = rng.gen_range(1e-4..0.3);
            let mass = rng.gen_range(0.5..2.0);
            let spin = rng.gen_range(-1.5..1.5);
            let Ok(p) = SpacetimeParams::new(lambda, mass, spin) else { continue };
            if p.one_minus_gamma() <= 0.0 {
                continue;
            }
            let mut r: f64 = rng.gen_range(-20.0..20.0);
            if r.abs() < 1e-3 {
                r = 1e-3;
            }
            let scale = h_form_scale(&p, r);
            let Ok(q) = h_eval(&p, r, HForm::Quartic) else { continue };
            for form in HForm::ALL {
                if let Ok(v) = h_eval(&p, r, form) {
                    worst = worst.max((v - q).abs() / scale);
                }
            }
            count += 1;
        }
        (worst, count)
    });
    let max_rel = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let points: usize = worst.iter().map(|w| w.1).sum();
    Ok(CheckOutcome::new(
        "",
        max_rel <= 1e-10 && points == n,
        json!({ "points": points, "max_relative_difference": max_rel, "threshold": 1e-10 }),
    ))
}

fn check_horizon_data(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let triples = identity_triples(cfg)?;
    let mut failures = Vec::new();
    let mut worst_residual: f64 = 0.0;
    for st in &triples {
        let v = st.horizons.invariant_violations(&st.params, cfg.tol.identity_tol);
        worst_residual = st.horizons.scaled_residuals(&st.params).into_iter().fold(worst_residual, f64::max);
        if !v.is_empty() {
            failures.push(json!({ "triple": triple_json(st), "violations": v }));
        }
    }
    let h = headline(cfg)?.horizons;
    Ok(CheckOutcome::new(
        "",
        failures.is_empty(),
        json!({
            "triples": triples.len(),
            "worst_scaled_residual": worst_residual,
            "failures": failures,
            "headline": h,
        }),
    ))
}

fn discriminant_scale(lambda: f64, mass: f64, spin: f64) -> f64 {
    let a2 = spin * spin;
    let gamma = lambda * a2 / 3.0;
    let (b, omg) = (1.0 + gamma, 1.0 - gamma);
    b.powi(4) * a2 / (mass * mass) + 12.0 * omg.abs() * lambda * a2 + omg.abs().powi(3) + 9.0 * lambda * mass * mass
}

fn check_lambda_interval(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let mut pass = true;
    let mut rows = Vec::new();
    for mass in [cfg.mass, 0.5, 2.0] {
        for ratio in [1.01, 1.05, 1.2] {
            let spin = ratio * mass;
            let iv = lambda_interval(spin, mass)?;
            let ends_ok = |l: f64| discriminant(l, mass, spin).abs() <= 1e-10 * discriminant_scale(l, mass, spin);
            let ok = !iv.empty && iv.lambda0 > 0.0 && ends_ok(iv.lambda0) && ends_ok(iv.lambda1);
            pass &= ok;
            rows.push(json!({
                "mass": mass,
                "ratio": ratio,
                "empty": iv.empty,
                "lambda0": iv.lambda0,
                "lambda1": iv.lambda1,
                "ok": ok,
            }));
        }
        let iv = lambda_interval(0.0, mass)?;
        let target = 1.0 / (9.0 * mass * mass);
        let ok = !iv.empty && iv.lambda0 == 0.0 && (iv.lambda1 - target).abs() <= 1e-12 * target;
        pass &= ok;
        rows.push(json!({
            "mass": mass,
            "ratio": 0.0,
            "lambda0": iv.lambda0,
            "lambda1": iv.lambda1,
            "expected_lambda1": target,
            "ok": ok,
        }));
    }
    Ok(CheckOutcome::new("", pass, json!({ "cases": rows })))
}

fn check_maximal_ratio(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let triples = identity_triples(cfg)?;
    let (worst, margin) = triples
        .iter()
        .map(|s| s.params.maximal_ratio_margin())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| KdsError::InvalidParams("no triples".into()))?;
    Ok(CheckOutcome::new(
        "",
        margin > 0.0,
        json!({ "triples": triples.len(), "smallest_margin": margin, "smallest_triple": triple_json(&triples[worst]) }),
    ))
}

fn check_extremal_boundary(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let reports: Vec<_> = map_indexed(cfg.exec, cfg.sizes.extremal_pairs, |i| {
        let mut rng = stream(cfg.seed, TAG_EXTREMAL, i as u64);
        for _ in 0..10_000 {
            let mass = rng.gen_range(0.5..2.0);
            let spin = mass * rng.gen_range(1.0..MAX_RATIO);
            match extremal_boundary_check(spin, mass) {
                Err(KdsError::EmptyInterval { .. }) => continue,
                other => return other,
            }
        }
        Err(KdsError::SampleConstructionFailure("no (a, m) with nonempty interval".into()))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let failures = reports.iter().filter(|r| !r.pass()).count();
    let worst_vanishing = reports
        .iter()
        .flat_map(|r| (0..3).map(move |k| r.h[k].abs() / r.h_scale[k]))
        .fold(0.0, f64::max);
    let worst_bound = reports
        .iter()
        .map(|r| (r.h[3] - r.h3_bound) / r.h_scale[3])
        .fold(f64::NEG_INFINITY, f64::max);
    let min_slack = reports.iter().map(|r| r.slack_identity).fold(f64::INFINITY, f64::min);
    Ok(CheckOutcome::new(
        "",
        failures == 0,
        json!({
            "pairs": reports.len(),
            "failures": failures,
            "worst_scaled_h012": worst_vanishing,
            "worst_scaled_h3_excess": worst_bound,
            "smallest_slack_identity": min_slack,
        }),
    ))
}

fn check_r0_definiteness(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let reports: Vec<_> = map_indexed(cfg.exec, cfg.sizes.definiteness_triples, |i| {
        triple(cfg.seed, TAG_DEFINITE, i, 0.0, MAX_RATIO).map(|st| r0_definiteness_check(&st, 181))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let min = reports.iter().map(|r| r.min_coefficient).fold(f64::INFINITY, f64::min);
    Ok(CheckOutcome::new(
        "",
        reports.iter().all(|r| r.pass),
        json!({ "triples": reports.len(), "smallest_coefficient": min }),
    ))
}

fn check_extension_slice(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let mut spacetimes = vec![headline(cfg)?];
    for i in 0..cfg.sizes.extension_triples {
        spacetimes.push(triple(cfg.seed, TAG_EXTENSION, i, 0.0, MAX_RATIO)?);
    }
    let rows: Vec<Value> = map_indexed(cfg.exec, spacetimes.len(), |i| {
        let st = &spacetimes[i];
        match profile_for(st, &cfg.tol) {
            Ok(pr) => {
                let slice = spacelike_slice_check(&pr, cfg.tol.grid);
                json!({
                    "triple": triple_json(st),
                    "ok": pr.is_valid() && slice.pass,
                    "delta": pr.delta,
                    "f1_degree": pr.f1.degree(),
                    "band_margin": pr.band_margin,
                    "spacelike_margin": pr.spacelike_margin,
                    "worst_dual_norm": slice.worst_dual_norm,
                })
            }
            Err(e) => json!({ "triple": triple_json(st), "ok": false, "error": e.to_string() }),
        }
    });
    let pass = rows.iter().all(|r| r["ok"] == json!(true));
    Ok(CheckOutcome::new("", pass, json!({ "profiles": rows })))
}

fn check_photon_sphere(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let errs: Vec<(f64, [f64; 2])> = map_indexed(cfg.exec, cfg.sizes.photon_triples, |i| {
        let mut rng = stream(cfg.seed, TAG_PHOTON, i as u64);
        let mass = rng.gen_range(0.5..2.0);
        let lambda = rng.gen_range(0.05..0.95) / (9.0 * mass * mass);
        let st = Spacetime::from_triple(lambda, mass, 0.0)?;
        let ang = rng.gen_range(0.0..2.0 * PI);
        let o = trapped_radius(&st, ang.cos(), ang.sin(), cfg.tol.root_tol)?;
        Ok(((o.r_trap - 3.0 * mass).abs() / mass, [lambda, mass]))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let worst = errs.iter().map(|e| e.0).fold(0.0, f64::max);
    Ok(CheckOutcome::new(
        "",
        worst <= 1e-10,
        json!({ "triples": errs.len(), "max_relative_error": worst, "threshold": 1e-10 }),
    ))
}

fn check_trapping_scan(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let st = headline(cfg)?;
    let h = &st.horizons;
    let rows = unit_circle(cfg.tol.grid.clamp(8, 4096))
        .into_iter()
        .map(|(xt, xp)| scan_row(&st, xt, xp, cfg.tol.root_tol))
        .collect::<Result<Vec<_>>>()?;
    let mut bad = 0;
    let mut zero_rows = 0;
    for row in &rows {
        let ok = match row.case {
            TrapCase::ZeroXiT => {
                zero_rows += 1;
                row.r_trap == h.r0
            }
            TrapCase::Interior => row.r_trap > h.r_e && row.r_trap < h.r_c && row.f_pp > 0.0,
            TrapCase::EndpointDegenerate => true,
        };
        if !ok {
            bad += 1;
        }
    }
    let rmin = rows.iter().map(|r| r.r_trap).filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min);
    let rmax = rows.iter().map(|r| r.r_trap).filter(|r| r.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckOutcome::new(
        "",
        bad == 0 && zero_rows > 0,
        json!({ "rows": rows.len(), "zero_xi_t_rows": zero_rows, "bad_rows": bad, "r_trap_range": [rmin, rmax] }),
    ))
}

/// Random trapped direction with |ξ_φ| bounded away from zero and a latitude
/// where Γ has real points; directions without one are redrawn.
fn nh_orbit(cfg: &VerifyConfig, st: &Spacetime, pr: &ExtensionProfile, idx: u64) -> Result<(TrappedOrbit, f64)> {
    for attempt in 0..64u64 {
        let mut rng = stream(cfg.seed, TAG_NH_ORBIT, (idx << 8) | attempt);
        let ang = rng.gen_range(0.3..PI - 0.3) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let o = trapped_radius(st, ang.cos(), ang.sin(), cfg.tol.root_tol)?;
        if !o.has_trapped_radius() {
            continue;
        }
        let lats = admissible_latitudes(pr, &o, 16);
        if !lats.is_empty() {
            let th = lats[rng.gen_range(0..lats.len())];
            return Ok((o, th));
        }
    }
    Err(KdsError::SampleConstructionFailure("no trapped direction with real points on the trapped set".into()))
}

fn check_normal_hyperbolicity(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let mut spacetimes = vec![headline(cfg)?];
    for i in 0..cfg.sizes.nh_random_triples {
        spacetimes.push(triple(cfg.seed, TAG_NH_TRIPLE, i, 0.0, 1.05)?);
    }
    let mut rows = Vec::new();
    let mut pass = true;
    let mut worst_jac: f64 = 0.0;
    let mut worst_rate: f64 = 0.0;
    let mut passed = 0;
    let mut total = 0;
    for (k, st) in spacetimes.iter().enumerate() {
        let pr = profile_for(st, &cfg.tol)?;
        let n = cfg.sizes.nh_orbits;
        let results = map_indexed(cfg.exec, n, |j| -> std::result::Result<Value, Value> {
            let idx = (k * n + j) as u64;
            let (o, th) = nh_orbit(cfg, st, &pr, idx).map_err(|e| json!(e.to_string()))?;
            let wcfg = WaveTrappingConfig {
                tol: cfg.tol.flow_tol,
                seed: sub_seed(cfg.seed, idx as usize),
                ..WaveTrappingConfig::default()
            };
            match wave_trapping_experiment(&pr, &o, th, &wcfg) {
                Ok(rep) => Ok(json!(rep)),
                Err(e) => Err(json!({ "xi_t": o.xi_t, "xi_phi": o.xi_phi, "theta0": th, "message": e.to_string() })),
            }
        });
        for r in results {
            total += 1;
            match r {
                Ok(v) => {
                    let ok = v["pass"] == json!(true);
                    passed += usize::from(ok);
                    pass &= ok;
                    worst_jac = worst_jac.max(v["jacobian_error"].as_f64().unwrap_or(f64::INFINITY));
                    for branch in ["unstable", "stable", "unstable_backward"] {
                        let e = v[branch]["rel_error"].as_f64().unwrap_or(f64::INFINITY);
                        worst_rate = worst_rate.max(e);
                    }
                    rows.push(json!({ "triple": triple_json(st), "report": v }));
                }
                Err(e) => {
                    pass = false;
                    rows.push(json!({ "triple": triple_json(st), "error": e }));
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "",
        pass,
        json!({
            "orbits": total,
            "passed": passed,
            "worst_jacobian_error": worst_jac,
            "worst_rate_relative_error": worst_rate,
            "rate_threshold": 0.05,
            "jacobian_threshold": 1e-6,
            "runs": rows,
        }),
    ))
}

fn check_conservation(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let mut spacetimes = vec![headline(cfg)?];
    for i in 0..cfg.sizes.conservation_triples {
        spacetimes.push(triple(cfg.seed, TAG_CONS_TRIPLE, i, 0.0, 1.05)?);
    }
    let mut rows = Vec::new();
    let mut pass = true;
    for (k, st) in spacetimes.iter().enumerate() {
        let pr = profile_for(st, &cfg.tol)?;
        let rep = conservation_runs(&pr, cfg.sizes.conservation_runs, sub_seed(cfg.seed, 1000 + k), 100.0, cfg.tol.flow_tol, cfg.exec)?;
        pass &= rep.pass;
        rows.push(json!({ "triple": triple_json(st), "report": rep }));
    }
    let max_q = rows.iter().filter_map(|r| r["report"]["max_q_drift"].as_f64()).fold(0.0, f64::max);
    let max_k = rows.iter().filter_map(|r| r["report"]["max_k_drift"].as_f64()).fold(0.0, f64::max);
    Ok(CheckOutcome::new(
        "",
        pass,
        json!({ "max_q_drift": max_q, "max_k_drift": max_k, "budget": 1e-8, "runs": rows }),
    ))
}

/// Random triple whose ROT mode characteristic set is nonempty on the
/// sampling region; redrawn otherwise.
fn escape_triple(seed: u64, i: usize) -> Result<Spacetime> {
    for attempt in 0..64u64 {
        let mut rng = stream(seed, TAG_ESCAPE_TRIPLE, ((i as u64) << 8) | attempt);
        let st = random_subextremal(&mut rng, 0.3, MAX_RATIO)?;
        let h = &st.horizons;
        let eps = 0.05 * (h.r_c - h.r_e);
        if ModeCharSampler::new(&st, h.r_e + eps, h.r_c - eps, THETA_MIN).is_ok() {
            return Ok(st);
        }
    }
    Err(KdsError::SampleConstructionFailure("no triple with a nonempty mode characteristic set".into()))
}

fn check_mode_non_trapping(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let mut spacetimes = vec![headline(cfg)?];
    for i in 0..cfg.sizes.escape_random_triples {
        spacetimes.push(escape_triple(cfg.seed, i)?);
    }
    let mut rows = Vec::new();
    let mut pass = true;
    for (k, st) in spacetimes.iter().enumerate() {
        let h = &st.horizons;
        let eps = 0.05 * (h.r_c - h.r_e);
        let res = profile_for(st, &cfg.tol).and_then(|pr| {
            mode_no_trapping_experiment(&pr, eps, cfg.sizes.escape_samples, sub_seed(cfg.seed, 2000 + k), cfg.exec)
        });
        match res {
            Ok(rep) => {
                pass &= rep.pass;
                rows.push(json!(rep));
            }
            Err(e) => {
                pass = false;
                rows.push(json!({ "triple": triple_json(st), "error": e.to_string() }));
            }
        }
    }
    let largest_c = rows.iter().filter_map(|r| r["escape"]["c"].as_f64()).fold(0.0, f64::max);
    Ok(CheckOutcome::new(
        "",
        pass,
        json!({ "triples": rows.len(), "largest_escape_constant": largest_c, "runs": rows }),
    ))
}

fn check_radial_points(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let mut spacetimes = vec![headline(cfg)?];
    for i in 0..cfg.sizes.radial_random_triples {
        spacetimes.push(triple(cfg.seed, TAG_RADIAL_TRIPLE, i, 0.0, 1.05)?);
    }
    let mut rows = Vec::new();
    let mut pass = true;
    for (k, st) in spacetimes.iter().enumerate() {
        let res = profile_for(st, &cfg.tol)
            .and_then(|pr| horizon_crossing_check(&pr, cfg.sizes.radial_samples, sub_seed(cfg.seed, 3000 + k), cfg.exec));
        match res {
            Ok(rep) => {
                pass &= rep.pass;
                rows.push(json!(rep));
            }
            Err(e) => {
                pass = false;
                rows.push(json!({ "triple": triple_json(st), "error": e.to_string() }));
            }
        }
    }
    Ok(CheckOutcome::new("", pass, json!({ "triples": rows.len(), "runs": rows })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            sizes: SuiteSizes {
                h_neg_triples: 8,
                h_neg_high_spin: 3,
                h_neg_grid: 256,
                h_form_points: 500,
                extremal_pairs: 4,
                definiteness_triples: 4,
                extension_triples: 1,
                photon_triples: 4,
                nh_random_triples: 0,
                nh_orbits: 1,
                conservation_triples: 0,
                conservation_runs: 2,
                escape_random_triples: 1,
                escape_samples: 4,
                radial_random_triples: 0,
                radial_samples: 2,
            },
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Identities, Suite::Trapping, Suite::Escape, Suite::RadialPoints, Suite::All] {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn all_suite_covers_every_check() {
        let n = suite_checks(Suite::All).len();
        assert_eq!(n, IDENTITIES.len() + TRAPPING.len() + ESCAPE.len() + RADIAL.len());
    }

    #[test]
    fn small_identities_suite() {
        let rep = run_suite(Suite::Identities, &small());
        for c in &rep.checks {
            if c.name != "lambda_interval" {
                assert!(c.pass, "{} {}", c.name, c.metrics);
            }
        }
    }

    #[test]
    fn errors_become_failed_checks() {
        let cfg = VerifyConfig {
            lambda: 0.5,
            spin: 0.0,
            ..small()
        };
        let rep = run_suite(Suite::RadialPoints, &cfg);
        assert!(!rep.pass);
        assert!(rep.checks[0].metrics["runs"][0]["error"].is_string() || rep.checks[0].metrics["error"].is_string());
    }

    #[test]
    fn backends_give_identical_reports() {
        let mut a = small();
        a.exec = Exec::Sequential;
        let mut b = small();
        b.exec = Exec::Parallel;
        let ra = serde_json::to_string(&run_suite(Suite::Escape, &a)).unwrap();
        let rb = serde_json::to_string(&run_suite(Suite::Escape, &b)).unwrap();
        assert_eq!(ra, rb);
    }
}
