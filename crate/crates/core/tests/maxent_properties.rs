use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use rosa_core::maxent::{
    dual_objective_1d, estimate_fractional_moments_1d, estimate_fractional_moments_copula, fit_copula,
    fit_density, solve_density, MaxEntCopula, MaxEntDensity, MomentConstraints, GRADIENT_BOUND,
};
use rosa_core::model::std_normal_pdf;
use rosa_core::quadrature::{adaptive_simpson, Rule};

const NORMALIZATION_TOL: f64 = 1e-5;
const MOMENT_TOL: f64 = 1e-5;
const CONVEXITY_SLACK: f64 = 1e-9;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `∫_a^b g` via `x = a + (b−a)t²`, which removes the square-root behaviour
/// of fractional powers at the lower end.
fn integrate_graded(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let w = b - a;
    adaptive_simpson(&|t: f64| g(a + w * t * t) * 2.0 * w * t, 0.0, 1.0, 1e-12).unwrap()
}

fn check_density(d: &MaxEntDensity, targets: &[f64], what: &str) {
    let (a, b) = d.support;
    let mass = integrate_graded(|x| d.density(x), a, b);
    assert!((mass - 1.0).abs() <= NORMALIZATION_TOL, "{what}: mass {mass}");
    for (j, (&e, &mu)) in d.exponents.iter().zip(targets).enumerate() {
        let m = integrate_graded(|x| (x + d.shift).powf(e) * d.density(x), a, b);
        assert!((m - mu).abs() <= MOMENT_TOL, "{what}: moment {j} is {m}, target {mu}");
    }
    assert!(d.gradient_norm <= GRADIENT_BOUND, "{what}: gradient {}", d.gradient_norm);
}

fn graded_unit_rule() -> (Vec<f64>, Vec<f64>) {
    let rule = Rule::composite(0.0, 1.0, 96, 10);
    let nodes = rule.nodes.iter().map(|t| t * t).collect();
    let weights = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(t, w)| 2.0 * t * w)
        .collect();
    (nodes, weights)
}

fn check_copula(c: &MaxEntCopula, targets: &[f64], what: &str) {
    let (u, w) = graded_unit_rule();
    let k = c.exponents.len();
    let mut mass = 0.0;
    let mut moments = vec![0.0; k * k];
    for (ui, wi) in u.iter().zip(&w) {
        for (vj, wj) in u.iter().zip(&w) {
            let f = c.density(*ui, *vj) * wi * wj;
            mass += f;
            for r in 0..k {
                for s in 0..k {
                    moments[r * k + s] += ui.powf(c.exponents[r]) * vj.powf(c.exponents[s]) * f;
                }
            }
        }
    }
    assert!((mass - 1.0).abs() <= NORMALIZATION_TOL, "{what}: mass {mass}");
    for (j, (m, mu)) in moments.iter().zip(targets).enumerate() {
        assert!((m - mu).abs() <= MOMENT_TOL, "{what}: moment {j} is {m}, target {mu}");
    }
    assert!(c.gradient_norm <= GRADIENT_BOUND, "{what}: gradient {}", c.gradient_norm);
}

fn samples() -> Vec<(&'static str, Vec<f64>)> {
    let mut r = rng(11);
    let normal = Normal::new(1.0, 2.0).unwrap();
    let lognormal = LogNormal::new(0.6, 0.05).unwrap();
    let truncated: Vec<f64> = std::iter::repeat_with(|| normal.sample(&mut r))
        .filter(|x| *x > 3.0)
        .take(3000)
        .collect();
    vec![
        ("normal", (0..3000).map(|_| normal.sample(&mut r)).collect()),
        ("lognormal", (0..3000).map(|_| lognormal.sample(&mut r)).collect()),
        ("abs normal", (0..3000).map(|_| normal.sample(&mut r).abs()).collect()),
        ("uniform", (0..3000).map(|_| r.random::<f64>()).collect()),
        ("truncated normal", truncated),
    ]
}

#[test]
fn fitted_densities_are_normalized_and_match_their_moments() {
    for (name, s) in samples() {
        let c = estimate_fractional_moments_1d(&s, &[0.5, 1.0, 1.5]).unwrap();
        let d = solve_density(&c).unwrap();
        check_density(&d, &c.targets, name);
        assert_eq!(d.density(c.support.1 + 1.0), 0.0);
        assert_eq!(d.density(c.support.0 - 1.0), 0.0);
    }
}

#[test]
fn fitted_copulas_are_normalized_and_match_their_moments() {
    let mut r = rng(12);
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let noise: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let cases: Vec<(&str, Vec<f64>)> = vec![
        ("independent", noise.clone()),
        ("positive", x.iter().zip(&noise).map(|(a, b)| a + 0.5 * b).collect()),
        ("v-shaped", x.iter().zip(&noise).map(|(a, b)| (a - 0.5).abs() + 0.1 * b).collect()),
    ];
    for exps in [vec![0.5, 1.0, 1.5], vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]] {
        for (name, y) in &cases {
            let c = estimate_fractional_moments_copula(&x, y, &exps).unwrap();
            let cop = fit_copula(&x, y, &exps).unwrap();
            check_copula(&cop, &c.targets, &format!("{name} with {} exponents", exps.len()));
        }
    }
}

#[test]
fn dual_is_convex_along_random_segments() {
    let c = estimate_fractional_moments_1d(&samples()[1].1, &[0.5, 1.0, 1.5]).unwrap();
    let mut r = rng(13);
    let mut checked = 0;
    while checked < 200 {
        let a: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (fa, fb, fm) = (dual_objective_1d(&c, &a), dual_objective_1d(&c, &b), dual_objective_1d(&c, &m));
        if !(fa.is_finite() && fb.is_finite()) {
            continue;
        }
        let slack = CONVEXITY_SLACK * (1.0 + fa.abs().max(fb.abs()));
        assert!(fm <= 0.5 * (fa + fb) + slack, "{fm} > ({fa} + {fb})/2");
        checked += 1;
    }
}

fn gaussian_constrained() -> MaxEntDensity {
    let c = MomentConstraints::new(vec![1.0, 2.0], vec![0.0, 1.0], (-8.0, 8.0)).unwrap();
    solve_density(&c).unwrap()
}

#[test]
fn second_moment_constraint_gives_the_normal_law() {
    let d = gaussian_constrained();
    let grid = (0..=600).map(|k| -3.0 + 6.0 * k as f64 / 600.0);
    let sup = grid
        .map(|x| (d.density(x) - std_normal_pdf(x)).abs())
        .fold(0.0, f64::max);
    assert!(sup <= 1e-3, "sup distance {sup}");
    assert!((d.density(0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() <= 1e-3);
    assert!(d.gradient_norm <= GRADIENT_BOUND);
}

fn entropy(f: &dyn Fn(f64) -> f64) -> f64 {
    -adaptive_simpson(
        &|x: f64| {
            let v = f(x);
            if v > 0.0 {
                v * v.ln()
            } else {
                0.0
            }
        },
        -8.0,
        8.0,
        1e-11,
    )
    .unwrap()
}

fn integrate(f: &dyn Fn(f64) -> f64) -> f64 {
    adaptive_simpson(f, -8.0, 8.0, 1e-12).unwrap()
}

/// Symmetric density `∝ exp(−|x/s|^k)` on `[−8, 8]` with unit variance.
fn exponential_power(k: f64) -> impl Fn(f64) -> f64 {
    let variance = |s: f64| {
        let g = |x: f64| (-(x / s).abs().powf(k)).exp();
        integrate(&|x| x * x * g(x)) / integrate(&g)
    };
    let (mut lo, mut hi) = (0.1, 5.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if variance(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let z = integrate(&|x| (-(x / s).abs().powf(k)).exp());
    move |x: f64| (-(x / s).abs().powf(k)).exp() / z
}

#[test]
fn solution_has_the_largest_entropy_among_matching_densities() {
    let d = gaussian_constrained();
    let h = entropy(&|x| d.density(x));
    for k in [1.0, 1.5, 1.8, 2.5, 3.0, 4.0] {
        let f = exponential_power(k);
        assert!((integrate(&|x| x * x * f(x)) - 1.0).abs() < 1e-6);
        let hk = entropy(&f);
        assert!(h >= hk - 1e-7, "k = {k}: {h} < {hk}");
    }
    for m in [0.2, 0.5, 0.8] {
        let s = (1.0f64 - m * m).sqrt();
        let f = move |x: f64| 0.5 * (std_normal_pdf((x - m) / s) + std_normal_pdf((x + m) / s)) / s;
        let hm = entropy(&f);
        assert!(h >= hm - 1e-7, "mixture {m}: {h} < {hm}");
    }
}

#[test]
fn half_normal_fractional_moment_matches_quadrature() {
    let mut r = rng(14);
    let n = 1_000_000;
    let sample: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal).abs()).collect();
    let c = estimate_fractional_moments_1d(&sample, &[0.5]).unwrap();
    let exact = 2.0 * integrate_graded(|z| z.sqrt() * std_normal_pdf(z), 0.0, 40.0);
    assert!((c.targets[0] - exact).abs() <= 0.01 * exact, "{} vs {exact}", c.targets[0]);
}

#[test]
fn independent_uniform_copula_moments_sit_within_two_standard_errors() {
    let mut r = rng(15);
    let n = 100_000;
    let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let exps = [0.5, 1.0, 1.5];
    let c = estimate_fractional_moments_copula(&x, &y, &exps).unwrap();
    for (ri, a) in exps.iter().enumerate() {
        for (si, b) in exps.iter().enumerate() {
            let mean = 1.0 / ((1.0 + a) * (1.0 + b));
            let second = 1.0 / ((1.0 + 2.0 * a) * (1.0 + 2.0 * b));
            let se = ((second - mean * mean) / n as f64).sqrt();
            let got = c.targets[ri * 3 + si];
            assert!((got - mean).abs() <= 2.0 * se, "({a},{b}): {got} vs {mean} ± {se}");
        }
    }
}

#[test]
fn comonotone_sample_gives_the_rank_identity() {
    let x: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin()).collect();
    let c = estimate_fractional_moments_copula(&x, &x, &[1.0]).unwrap();
    let n = x.len() as f64;
    let expected = (1..=x.len()).map(|k| (k as f64 / n).powi(2)).sum::<f64>() / n;
    assert!((c.targets[0] - expected).abs() < 1e-15);
}

#[test]
fn refit_of_a_fitted_density_is_stable() {
    let s = &samples()[0].1;
    let a = fit_density(s, &[0.5, 1.0, 1.5]).unwrap();
    let b = fit_density(s, &[0.5, 1.0, 1.5]).unwrap();
    assert_eq!(a, b);
}
