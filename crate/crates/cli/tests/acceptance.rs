//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion does. Criteria run one after another so that the
//! runtime bounds are not skewed by concurrent work.

use std::fs;
use std::process::Command;
use std::time::Instant;

use solitonlab::catalog::soliton_residual;
use solitonlab::operators::{cutoff_bump, hamiltonian_field};
use solitonlab::sampling::stream_rng;
use solitonlab::variation::{
    default_cutoff, f_value, first_variation, normal_field_from, random_normal_field, run_check, stability_sample,
    CheckKind, Settings, Tolerances, DEFAULT_STEP,
};
use solitonlab::{Backend, CheckReport, ScalarField, SolitonSpec};

const SOLITON_TOL: f64 = 1e-8;
const FD_MIN_ORDER: f64 = 1.8;
const FD_LADDER: [usize; 4] = [16, 32, 64, 128];
const CERTIFY_SECONDS: f64 = 10.0;
const QUADRATURE_MIN_ORDER: f64 = 1.9;
const F_ABS_TOL: f64 = 1e-3;
const TWO_TAN_ONE: f64 = 3.114_815_449_309_804;
const IBP_TOL: f64 = 1e-6;
const IBP_RES: usize = 128;
const IDENTITY_TOL: f64 = 1e-6;
const CRITICALITY_TOL: f64 = 1e-6;
const CRITICALITY_S2: f64 = 10.0;
const FIRST_VARIATION_RELATIVE: f64 = 1e-4;
const STABILITY_SAMPLES: usize = 20;
const STABILITY_RELATIVE: f64 = 1e-6;
/// `C` in `C (h² + s²)`, in units of the largest of the three `F″` values.
const STABILITY_C: f64 = 10.0;
const NONNEGATIVITY: f64 = 1e-8;
const CONSTANT_SAMPLE_TOL: f64 = 1e-12;
const SCAN_SECONDS: f64 = 60.0;

fn cylinder(res: usize) -> SolitonSpec {
    SolitonSpec::grim_reaper_cylinder(2).window(vec![(-1.0, 1.0), (0.0, 1.0)]).resolution(res)
}

fn product(res: usize) -> SolitonSpec {
    SolitonSpec::grim_reaper_product(vec![1.0, 2.0]).window(vec![(-0.7, 0.7); 2]).resolution(res)
}

fn fd_settings() -> Settings {
    Settings { resolutions: Some(FD_LADDER.to_vec()), ..Settings::default() }
}

fn min_order(rep: &CheckReport) -> f64 {
    rep.details.convergence.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min)
}

fn worst(rep: &CheckReport, pick: impl Fn(&str) -> bool) -> f64 {
    rep.details.samples.iter().filter(|s| pick(&s.label)).map(|s| s.sup_residual).fold(0.0, f64::max)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn soliton_certification() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for spec in [cylinder(64), product(64)] {
        let patch = spec.build(Backend::Analytic).unwrap();
        let (sup, _) = soliton_residual(&patch, &spec.translation());
        ok &= sup <= SOLITON_TOL;
        let rep = run_check(CheckKind::Soliton, &spec, Backend::FiniteDifference, &fd_settings()).unwrap();
        let order = min_order(&rep);
        ok &= order >= FD_MIN_ORDER;
        detail.push(format!("{}: sup {sup:.2e}, fd order {order:.3}", spec.name));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < CERTIFY_SECONDS;
    detail.push(format!("{elapsed:.1} s"));
    Outcome { passed: ok, detail: detail.join("; ") }
}

fn f_quadrature() -> Outcome {
    let exact = 2.0 * 1f64.tan();
    let consistent = (exact - TWO_TAN_ONE).abs() < 1e-14 && (cylinder(64).exact_f_value() - exact).abs() < 1e-14;
    let levels: Vec<(f64, f64)> = [64, 128, 256]
        .iter()
        .map(|&res| {
            let spec = cylinder(res);
            let patch = spec.build(Backend::Analytic).unwrap();
            let h = patch.grid().max_spacing();
            (h, (f_value(&patch, &spec.translation()) - exact).abs())
        })
        .collect();
    let orders: Vec<f64> = levels.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect();
    let at_128 = levels[1].1;
    let passed = consistent && at_128 <= F_ABS_TOL && orders.iter().all(|&o| o >= QUADRATURE_MIN_ORDER);
    Outcome { passed, detail: format!("|F - 2 tan 1| at res 128 = {at_128:.3e}, orders {orders:.3?}") }
}

fn integration_by_parts() -> Outcome {
    let rep = run_check(CheckKind::Ibp, &cylinder(IBP_RES), Backend::Analytic, &Settings::default()).unwrap();
    let bump = worst(&rep, |l| l == "u = v = bump");
    let pairs: Vec<f64> =
        rep.details.samples.iter().filter(|s| s.label.starts_with("pair")).map(|s| s.sup_residual).collect();
    let worst_pair = pairs.iter().copied().fold(0.0, f64::max);
    let passed = rep.resolutions == [IBP_RES] && pairs.len() == 5 && bump <= IBP_TOL && worst_pair <= IBP_TOL;
    Outcome { passed, detail: format!("bump {bump:.2e}, worst of {} pairs {worst_pair:.2e}", pairs.len()) }
}

fn jacobi_fields() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for spec in [cylinder(64), product(64)] {
        let rep = run_check(CheckKind::Jacobi, &spec, Backend::Analytic, &Settings::default()).unwrap();
        // seeded directions are labelled y0, y1, ...; "y = T" is the LH case
        let is_seeded = |l: &str| l.starts_with('y') && !l.starts_with("y = T") && l.ends_with("L y_perp");
        let ly = worst(&rep, is_seeded);
        let seeded = rep.details.samples.iter().filter(|s| is_seeded(&s.label)).count();
        let lh = worst(&rep, |l| l.ends_with("L H"));
        let drift = worst(&rep, |l| l.ends_with("drift x^A - T^A"));
        let fd = run_check(CheckKind::Jacobi, &spec, Backend::FiniteDifference, &fd_settings()).unwrap();
        let order = min_order(&fd);
        ok &= seeded == 5 && ly <= IDENTITY_TOL && lh <= IDENTITY_TOL && drift <= IDENTITY_TOL && order >= FD_MIN_ORDER;
        detail.push(format!("{}: Ly {ly:.1e} LH {lh:.1e} drift {drift:.1e} fd order {order:.3}", spec.name));
    }
    Outcome { passed: ok, detail: detail.join("; ") }
}

fn commutation() -> Outcome {
    let rep = run_check(CheckKind::Commutation, &cylinder(64), Backend::Analytic, &Settings::default()).unwrap();
    let seeded = rep.details.samples.iter().filter(|s| s.label.starts_with("potential")).count();
    let sup = worst(&rep, |_| true);
    let fd = run_check(CheckKind::Commutation, &cylinder(64), Backend::FiniteDifference, &fd_settings()).unwrap();
    let order = min_order(&fd);
    let passed = seeded == 10 && sup <= IDENTITY_TOL && order >= FD_MIN_ORDER;
    Outcome { passed, detail: format!("{seeded} potentials, sup {sup:.2e}, fd order {order:.3}") }
}

fn criticality() -> Outcome {
    let mut ok = true;
    let mut worst_formula = 0.0f64;
    let mut worst_fd_excess = f64::NEG_INFINITY;
    for spec in [cylinder(64), product(64)] {
        let patch = spec.build(Backend::Analytic).unwrap();
        let t = spec.translation();
        let bump = default_cutoff(&patch).unwrap();
        let mut rng = stream_rng(42, 0);
        for _ in 0..10 {
            let v = random_normal_field(&patch, &mut rng, &bump).unwrap();
            let s = DEFAULT_STEP / v.sup_norm();
            let (fd, formula) = first_variation(&patch, &t, &v, s).unwrap();
            let bound = CRITICALITY_TOL + CRITICALITY_S2 * s * s;
            ok &= formula.abs() <= CRITICALITY_TOL && fd.abs() <= bound;
            worst_formula = worst_formula.max(formula.abs());
            worst_fd_excess = worst_fd_excess.max(fd.abs() - bound);
        }
    }

    // a plane translating along ∂x₁, tested against the wrong T = ∂y₁
    let plane = SolitonSpec::flat_plane(2, vec![1.0, 0.0]).resolution(48).build(Backend::Analytic).unwrap();
    let wrong = [0.0, 1.0, 0.0, 0.0];
    let bump = cutoff_bump(plane.grid(), 1).unwrap();
    let v = normal_field_from(&plane, &bump, &wrong).unwrap();
    let (fd, formula) = first_variation(&plane, &wrong, &v, DEFAULT_STEP).unwrap();
    let oracle: f64 =
        plane.nodes().iter().zip(bump.values()).map(|(idx, b)| b * plane.grid().trapezoid_weight(idx)).sum();
    let relative = (fd - formula).abs() / formula.abs();
    ok &=
        fd > 0.0 && formula > 0.0 && relative <= FIRST_VARIATION_RELATIVE && (formula - oracle).abs() <= 1e-12 * oracle;
    Outcome {
        passed: ok,
        detail: format!(
            "max |formula| {worst_formula:.1e}, fd margin {worst_fd_excess:.1e}; wrong plane fd {fd:.6} formula {formula:.6} rel {relative:.1e}"
        ),
    }
}

fn main_theorem() -> Outcome {
    let spec = cylinder(64);
    let patch = spec.build(Backend::Analytic).unwrap();
    let t = spec.translation();
    let start = Instant::now();
    let rep = solitonlab::variation::hamiltonian_stability_scan(
        &patch,
        &t,
        STABILITY_SAMPLES,
        42,
        DEFAULT_STEP,
        &Tolerances::default(),
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let h = patch.grid().max_spacing();
    let mut ok = rep.details.stability.len() == STABILITY_SAMPLES;
    let mut worst_ratio = 0.0f64;
    for s in &rep.details.stability {
        // the deformation step is normalized so that s·sup|V| = DEFAULT_STEP
        let magnitude = s.fd.abs().max(s.quadratic_form.abs()).max(s.lf_squared.abs());
        let bound = (STABILITY_RELATIVE * s.scale).max(STABILITY_C * magnitude * (h * h + DEFAULT_STEP * DEFAULT_STEP));
        worst_ratio = worst_ratio.max(s.spread() / bound);
        let floor = -NONNEGATIVITY * s.scale;
        ok &= s.spread() <= bound && s.fd >= floor && s.quadratic_form >= floor && s.lf_squared >= floor;
    }

    let constant = ScalarField::constant(&patch, 1.0);
    let zero = stability_sample(&patch, &t, &constant, DEFAULT_STEP, &Tolerances::default(), 0).unwrap();
    let zero_max = zero.fd.abs().max(zero.quadratic_form.abs()).max(zero.lf_squared.abs());
    assert!(hamiltonian_field(&patch, &constant).unwrap().sup_norm() == 0.0);
    ok &= zero_max <= CONSTANT_SAMPLE_TOL && elapsed < SCAN_SECONDS;
    Outcome {
        passed: ok,
        detail: format!("worst spread/bound {worst_ratio:.3}, constant sample {zero_max:.1e}, scan {elapsed:.1} s"),
    }
}

fn determinism() -> Outcome {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_solitonlab"))
            .current_dir(dir.path())
            .args(["verify", "--check", "all", "--seed", "42", "--out", "report.json"])
            .output()
            .unwrap()
            .status;
        (status.code(), fs::read(dir.path().join("report.json")).unwrap())
    };
    let (code_a, a) = run();
    let (code_b, b) = run();
    let passed = !a.is_empty() && a == b && code_a == code_b;
    Outcome { passed, detail: format!("{} bytes, exit {code_a:?} and {code_b:?}", a.len()) }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("soliton certification", soliton_certification),
        ("F quadrature against 2 tan 1", f_quadrature),
        ("integration by parts", integration_by_parts),
        ("Jacobi fields y_perp, H and coordinate drift", jacobi_fields),
        ("commutation LJ∇f = J∇𝓛f", commutation),
        ("criticality and the wrong plane", criticality),
        ("Hamiltonian second variation", main_theorem),
        ("byte-identical reruns", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict} {name} ({})", i + 1, outcome.detail);
        if !outcome.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
