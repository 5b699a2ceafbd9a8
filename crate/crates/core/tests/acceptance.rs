//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line
//! straight to the process stdout so the verdicts stay visible while the
//! harness captures ordinary output.

use std::f64::consts::PI;
use std::io::Write;

use morlicz::fields::{gauge_transform, sample_named, Domain, Grid, GridField, MagneticPotential};
use morlicz::lab::{diamagnetic_check, diamagnetic_local, poincare_check, DIAMAGNETIC_CASES};
use morlicz::limits::{bbm_sweep, bbm_target, DEFAULT_LADDER};
use morlicz::modulars::{evaluate, ModularKind, ModularSpec, QuadratureConfig};
use morlicz::orlicz::{spherical_limit, spherical_limit_raw, OrliczFunction};
use morlicz::selftest::{gradient_fd_error, BUILTIN_FAMILIES};
use morlicz::solver::{convergence_study, DirichletProblem, Order, SolverOptions};
use num_complex::Complex64 as C64;
use rand::SeedableRng;

fn verdict(id: u32, title: &str, pass: bool, detail: String) {
    let line = format!("[criterion {id:>2}] {} {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} ({title}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `∫ (d/dx e^{-x²})² dx = ∫ 4x² e^{-2x²} dx = √(π/2)`.
fn gaussian_dirichlet() -> f64 {
    (PI / 2.0).sqrt()
}

/// `∫ e^{-2x²} dx = √(π/2)`.
fn gaussian_mass() -> f64 {
    (PI / 2.0).sqrt()
}

#[test]
fn c01_bbm_power_case() {
    let start = std::time::Instant::now();
    let grid = Grid::new(1, 6.0, 2048).unwrap();
    let u = sample_named("gaussian:1", &grid).unwrap();
    let sweep = bbm_sweep(
        &OrliczFunction::power(2.0).unwrap(),
        &u,
        &MagneticPotential::zero(1),
        &DEFAULT_LADDER,
        &QuadratureConfig::default(),
    )
    .unwrap();
    let target = 0.5 * gaussian_dirichlet();
    let gap = rel(sweep.extrapolated, target);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "BBM power case",
        gap <= 0.02 && secs <= 300.0,
        format!("extrapolated {:.6} vs {target:.6}, gap {:.3}% (limit 2%), {secs:.1}s", sweep.extrapolated, 100.0 * gap),
    );
}

#[test]
fn c02_magnetic_bbm() {
    let grid = Grid::new(1, 6.0, 2048).unwrap();
    let u = sample_named("gaussian:1", &grid).unwrap();
    let a = MagneticPotential::constant(1, [1.0, 0.0]);
    let f = OrliczFunction::power(2.0).unwrap();
    // G̃(t) = t²/2 and |u′ − iu|² = u′² + u² for real u.
    let analytic = 0.5 * (gaussian_dirichlet() + gaussian_mass());
    let local = bbm_target(&f, &u, &a).unwrap();
    let sweep = bbm_sweep(&f, &u, &a, &DEFAULT_LADDER, &QuadratureConfig::default()).unwrap();
    let gap = rel(sweep.extrapolated, local);
    verdict(
        2,
        "magnetic BBM",
        gap <= 0.02 && rel(local, analytic) < 1e-4,
        format!(
            "extrapolated {:.6} vs local target {local:.6} (analytic {analytic:.6}), gap {:.3}% (limit 2%)",
            sweep.extrapolated,
            100.0 * gap
        ),
    );
}

#[test]
fn c03_two_dimensional_smoke() {
    let start = std::time::Instant::now();
    let grid = Grid::new(2, 1.5, 96).unwrap();
    let u = sample_named("bump:1", &grid).unwrap();
    let sweep = bbm_sweep(
        &OrliczFunction::power(2.0).unwrap(),
        &u,
        &MagneticPotential::zero(2),
        &DEFAULT_LADDER,
        &QuadratureConfig::default(),
    )
    .unwrap();
    // ∫|∇(1 − r²)²|² = 2π ∫ 16 r³ (1 − r²)² dr = 4π/3 and G̃(t) = π t²/4.
    let target = PI / 4.0 * 4.0 * PI / 3.0;
    let gap = rel(sweep.extrapolated, target);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "2D smoke",
        gap <= 0.05 && secs <= 1200.0,
        format!("extrapolated {:.5} vs {target:.5}, gap {:.3}% (limit 5%), {secs:.1}s", sweep.extrapolated, 100.0 * gap),
    );
}

fn sup_rel(a: &GridField, b: &GridField) -> f64 {
    let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    d / b.sup_norm()
}

#[test]
fn c04_gauge_covariance() {
    let grid = Grid::new(1, 6.0, 256).unwrap();
    let u = sample_named("bump:1.5", &grid).unwrap();
    let base = MagneticPotential::parse("shear:0.3", 1, 6.0).unwrap();
    let kinds = [
        ModularKind::IG,
        ModularKind::IGTilde,
        ModularKind::IGA,
        ModularKind::IGATilde,
        ModularKind::IsG,
        ModularKind::IsGTilde,
        ModularKind::IsGA,
        ModularKind::IsGATilde,
    ];
    let mut worst = 0.0f64;
    for fam in BUILTIN_FAMILIES {
        let f = OrliczFunction::parse(fam).unwrap();
        for c in [0.5, 1.0, 2.0] {
            let (u2, a2) = gauge_transform(&u, &base, [c, 0.0]).unwrap();
            for kind in kinds {
                // Re/Im splitting commutes with phases only for quadratic G;
                // the A = 0 kinds are plain invariance checks of |u|-free data.
                let covariant = matches!(kind, ModularKind::IGTilde | ModularKind::IGATilde | ModularKind::IsGATilde)
                    || (f.is_quadratic() && !matches!(kind, ModularKind::IsG | ModularKind::IsGTilde));
                if !covariant {
                    continue;
                }
                let spec = |a: &MagneticPotential| {
                    if kind.is_nonlocal() {
                        ModularSpec::nonlocal(kind, 0.7, Some(a.clone()))
                    } else {
                        ModularSpec { potential: Some(a.clone()), ..ModularSpec::local(kind) }
                    }
                };
                let v1 = evaluate(&f, &u, &spec(&base)).unwrap().value;
                let v2 = evaluate(&f, &u2, &spec(&a2)).unwrap().value;
                worst = worst.max(rel(v2, v1));
            }
        }
    }
    let sgrid = Grid::with_boundary_nodes(1, 128, 1.0, 3).unwrap();
    let omega = Domain::interval(-1.0, 1.0).unwrap();
    let one = sample_named("const:1", &sgrid).unwrap();
    let zero = MagneticPotential::zero(1);
    let half = OrliczFunction::power(2.0).unwrap();
    let mut worst_solve = 0.0f64;
    for order in [Order::Local, Order::Fractional(0.8)] {
        let r0 = DirichletProblem::new(half.clone(), zero.clone(), &one, omega, order).unwrap().solve().unwrap();
        for c in [0.5, 1.0, 2.0] {
            let (f2, a2) = gauge_transform(&one, &zero, [c, 0.0]).unwrap();
            let r = DirichletProblem::new(half.clone(), a2, &f2, omega, order).unwrap().solve().unwrap();
            let (expected, _) = gauge_transform(&r0.minimizer, &zero, [c, 0.0]).unwrap();
            worst_solve = worst_solve.max(sup_rel(&r.minimizer, &expected)).max(rel(r.energy, r0.energy));
        }
    }
    verdict(
        4,
        "gauge covariance",
        worst <= 1e-8 && worst_solve <= 1e-8,
        format!("modulars {worst:.2e}, solver {worst_solve:.2e} (limit 1e-8)"),
    );
}

#[test]
fn c05_diamagnetic_suite() {
    let grid = Grid::new(1, 6.0, 512).unwrap();
    let mut violations = 0;
    let mut pairs = 0;
    let mut worst = f64::INFINITY;
    for (field, pot) in DIAMAGNETIC_CASES {
        let u = sample_named(field, &grid).unwrap();
        let a = MagneticPotential::parse(pot, 1, 6.0).unwrap();
        for s in [0.3, 0.6, 0.9] {
            let r = diamagnetic_check(&u, &a, s).unwrap();
            violations += r.violations;
            pairs += r.checked;
            worst = worst.min(r.worst_margin);
        }
        let r = diamagnetic_local(&u, &a);
        violations += r.violations;
        worst = worst.min(r.worst_margin);
    }
    verdict(
        5,
        "diamagnetic suite",
        violations == 0,
        format!("{violations} violations over {pairs} pairs, worst margin {worst:.2e} (tolerance 1e-14)"),
    );
}

#[test]
fn c06_explicit_poincare() {
    let f = OrliczFunction::pure_power(2.0).unwrap();
    let mut failures = Vec::new();
    let cases: [(usize, usize, Domain, &[&str], &[&str]); 2] = [
        (
            1,
            1024,
            Domain::interval(-1.0, 1.0).unwrap(),
            &["parabola", "bump:1", "bump:0.5", "ball:0.5", "phase:2:parabola", "phase:-1:bump:0.8"],
            &["zero", "const:1", "shear:0.5"],
        ),
        (
            2,
            96,
            Domain::square(-1.0, 1.0).unwrap(),
            &["parabola", "bump:1", "ball:0.5", "phase:2,1:bump:0.9"],
            &["zero", "const:1,-0.5", "shear:0,-0.5,0.5,0"],
        ),
    ];
    let mut checked = 0;
    for (n, points, omega, fields, pots) in cases {
        let grid = Grid::new(n, 1.5, points).unwrap();
        for field in fields {
            let u = sample_named(field, &grid).unwrap();
            for pot in pots {
                let a = MagneticPotential::parse(pot, n, 1.5).unwrap();
                let r = poincare_check(&f, &u, &omega, &a, None).unwrap();
                checked += 1;
                if !r.passed() {
                    failures.push(format!("{n}d {field} {pot}"));
                }
            }
        }
    }
    let grid = Grid::new(1, 1.5, 1024).unwrap();
    let u = sample_named("parabola", &grid).unwrap();
    let r = poincare_check(&f, &u, &Domain::interval(-1.0, 1.0).unwrap(), &MagneticPotential::zero(1), None).unwrap();
    let (e1, e2) = (rel(r.lhs, 16.0 / 15.0), rel(r.gradient_rhs, 32.0 / 3.0));
    verdict(
        6,
        "explicit Poincaré",
        failures.is_empty() && e1 <= 5e-3 && e2 <= 5e-3,
        format!(
            "{checked} cases, failures {failures:?}; parabola {:.5} (16/15, err {e1:.1e}) and {:.5} (32/3, err {e2:.1e})",
            r.lhs, r.gradient_rhs
        ),
    );
}

#[test]
fn c07_solver_oracle() {
    let grid = Grid::with_boundary_nodes(1, 1024, 1.0, 3).unwrap();
    let one = sample_named("const:1", &grid).unwrap();
    let p = DirichletProblem::new(
        OrliczFunction::power(2.0).unwrap(),
        MagneticPotential::zero(1),
        &one,
        Domain::interval(-1.0, 1.0).unwrap(),
        Order::Local,
    )
    .unwrap();
    let r = p.solve().unwrap();
    let sup = r
        .minimizer
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.point(i)[0];
            let exact = if x.abs() < 1.0 { 0.5 * (1.0 - x * x) } else { 0.0 };
            (v - C64::new(exact, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    let de = (r.energy + 1.0 / 3.0).abs();
    verdict(
        7,
        "solver oracle",
        sup < 1e-3 && de < 1e-4,
        format!("sup error {sup:.2e} (limit 1e-3), energy {:.8} off by {de:.2e} (limit 1e-4)", r.energy),
    );
}

#[test]
fn c08_convergence_study() {
    let grid = Grid::with_boundary_nodes(1, 512, 1.0, 3).unwrap();
    let one = sample_named("const:1", &grid).unwrap();
    let t = convergence_study(
        &OrliczFunction::power(2.0).unwrap(),
        &MagneticPotential::zero(1),
        &one,
        Domain::interval(-1.0, 1.0).unwrap(),
        &DEFAULT_LADDER,
        SolverOptions::default(),
    )
    .unwrap();
    let d: Vec<f64> = t.rows.iter().map(|r| r.lux_distance).collect();
    let tail = &d[d.len() - 3..];
    let decreasing = tail[0] > tail[1] && tail[1] > tail[2];
    let halved = d[d.len() - 1] <= 0.5 * d[0];
    let local = t.local.energy;
    let band = 0.03 * local.abs();
    let gaps: Vec<f64> = t.rows.iter().map(|r| (r.frac_energy - local).abs()).collect();
    // monotone approach up to the extrapolation tolerance
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0].max(band));
    let ok = decreasing && halved && monotone && t.energy_gap <= 0.03 && t.rows.iter().all(|r| r.failure.is_none());
    verdict(
        8,
        "convergence of solutions and minima",
        ok,
        format!(
            "distances {:?}, extrapolated energy {:.5} vs local {local:.5} (gap {:.2}%, limit 3%), gaps {:?}",
            d.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            t.extrapolated_energy,
            100.0 * t.energy_gap,
            gaps.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        ),
    );
}

#[test]
fn c09_gradient_correctness() {
    let grid = Grid::with_boundary_nodes(1, 128, 1.0, 3).unwrap();
    let omega = Domain::interval(-1.0, 1.0).unwrap();
    let one = sample_named("const:1", &grid).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut classes = 0;
    for fam in BUILTIN_FAMILIES {
        for pot in ["zero", "const:1", "shear:0.4"] {
            let a = MagneticPotential::parse(pot, 1, grid.half_width()).unwrap();
            for order in [Order::Local, Order::Fractional(0.3), Order::Fractional(0.8)] {
                let p = DirichletProblem::new(OrliczFunction::parse(fam).unwrap(), a.clone(), &one, omega, order).unwrap();
                worst = worst.max(gradient_fd_error(&p, &mut rng).unwrap());
                classes += 1;
            }
        }
    }
    let grid2 = Grid::with_boundary_nodes(2, 24, 1.0, 3).unwrap();
    let one2 = sample_named("const:1", &grid2).unwrap();
    let a2 = MagneticPotential::parse("shear:0,-0.5,0.5,0", 2, grid2.half_width()).unwrap();
    for order in [Order::Local, Order::Fractional(0.6)] {
        let p = DirichletProblem::new(OrliczFunction::blend(2.0, 4.0).unwrap(), a2.clone(), &one2, Domain::square(-1.0, 1.0).unwrap(), order)
            .unwrap();
        worst = worst.max(gradient_fd_error(&p, &mut rng).unwrap());
        classes += 1;
    }
    verdict(
        9,
        "gradient correctness",
        worst <= 1e-6,
        format!("{classes} problem classes x 10 directions, worst relative error {worst:.2e} (limit 1e-6)"),
    );
}

#[test]
fn c10_substitution_s_independence() {
    let mut worst = 0.0f64;
    for fam in BUILTIN_FAMILIES {
        let f = OrliczFunction::parse(fam).unwrap();
        for n in [1, 2] {
            for a in [0.1, 0.5, 1.0, 2.0, 7.0] {
                let sub = spherical_limit(&f, n, a).unwrap();
                for s in [0.5, 0.7, 0.9] {
                    worst = worst.max(rel(spherical_limit_raw(&f, n, a, s).unwrap(), sub));
                }
            }
        }
    }
    verdict(10, "s-independence of the substitution", worst <= 1e-6, format!("worst relative gap {worst:.2e} (limit 1e-6)"));
}

#[test]
fn c11_selftest_determinism() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let code = morlicz::cli::run(
            ["morlicz", "selftest", "--threads", threads, "--out", dir.path().to_str().unwrap()],
            &mut out,
        );
        let csv = std::fs::read(dir.path().join("selftest.csv")).unwrap();
        (code, out, csv)
    };
    let (c1, o1, f1) = run("1");
    let (c8, o8, f8) = run("8");
    let same = o1 == o8 && f1 == f8;
    verdict(
        11,
        "selftest determinism",
        same && c1 == 0 && c8 == 0,
        format!("exit codes {c1}/{c8}, stdout {} bytes, identical: {same}", o1.len()),
    );
}
