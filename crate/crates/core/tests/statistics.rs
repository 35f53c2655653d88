//! Distributional checks against oracles computed here, not in the library.

use entsketch::estimator::BiasPolicy;
use entsketch::hashing::item_digest;
use entsketch::rng::replicate_rng;
use entsketch::stable::{exp_moment, fill_g0, sample_y_alpha};
use entsketch::tail_bounds::log_m_series;
use entsketch::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn g0(n: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_g0(&mut ChaCha8Rng::seed_from_u64(seed), &mut v);
    v
}

#[test]
fn fractional_and_integer_moments() {
    let xs = g0(1_000_000, 5);
    for &k in &[0.5f64, 1.0, 2.0, 3.0] {
        let exact = k.powf(k);
        assert!((exp_moment(k) - exact).abs() < 1e-12 * exact);
        let vals: Vec<f64> = xs.iter().map(|x| (k * x).exp()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        // Var = (2k)^{2k} - k^{2k}
        let se = (((2.0 * k).powf(2.0 * k) - exact * exact) / n).sqrt();
        assert!((mean - exact).abs() < 5.0 * se, "k={k}: {mean} vs {exact}");
    }
}

#[test]
fn hashed_variates_follow_the_law() {
    // hashed rows of distinct items should match sampler moments
    let plan = VariatePlan::new(77, 4).unwrap();
    let n = 200_000u64;
    let mean = (0..n)
        .map(|i| item_variate(&ItemKey::from(format!("flow{i}")), 2, &plan).unwrap() * 0.5)
        .map(f64::exp)
        .sum::<f64>()
        / n as f64;
    // E e^{X/2} = 0.5^0.5
    let exact = 0.5f64.sqrt();
    let se = ((1.0 - 0.5) / n as f64).sqrt();
    assert!((mean - exact).abs() < 5.0 * se, "{mean}");
}

#[test]
fn digest_bits_pass_chi_squared() {
    let mut grid = [[0u32; 16]; 16];
    let n = 100_000u64;
    for i in 0..n {
        let d = item_digest(&i.to_le_bytes(), 3);
        grid[(d >> 60) as usize][((d >> 56) & 15) as usize] += 1;
    }
    let expected = n as f64 / 256.0;
    let chi2: f64 = grid
        .iter()
        .flatten()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 255 degrees of freedom; upper 0.1% point is about 330
    assert!(chi2 < 330.0, "{chi2}");
}

#[test]
fn rows_are_uncorrelated() {
    let plan = VariatePlan::new(11, 3).unwrap();
    let n = 100_000u64;
    // exp(X/4) has finite variance; correlation of raw X is dominated by the tail
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let item = ItemKey::from(i);
            let a = item_variate(&item, 0, &plan).unwrap();
            let b = item_variate(&item, 1, &plan).unwrap();
            ((0.25 * a).exp(), (0.25 * b).exp())
        })
        .collect();
    let nf = n as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |s, p| (s.0 + p.0 / nf, s.1 + p.1 / nf));
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
        sab += (a - ma) * (b - mb);
    }
    let r = sab / (saa * sbb).sqrt();
    assert!(r.abs() < 5.0 / nf.sqrt(), "{r}");
}

/// Principal branch of Lambert W on [-1/e, ∞) by Halley iteration.
fn lambert_w(x: f64) -> f64 {
    let mut w = if x < -0.25 {
        let p = (2.0 * (1.0 + std::f64::consts::E * x)).sqrt();
        -1.0 + p - p * p / 3.0
    } else {
        (1.0 + x).ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0));
        w -= step;
        if step.abs() < 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

#[test]
fn series_matches_lambert_closed_form() {
    // Σ t^j j^j / j! = 1 / (1 + W(-t))
    let edge = (1.0 - 1e-9) / std::f64::consts::E;
    for &t in &[-edge, -0.3, -0.1, -1e-3, 1e-3, 0.05, 0.1, 0.2, 0.3, 0.35] {
        let oracle = 1.0 / (1.0 + lambert_w(-t));
        let got = m_series(1.0, t).unwrap();
        assert!(
            (got - oracle).abs() < 1e-12 * oracle.max(1.0),
            "t={t}: {got} vs {oracle}"
        );
    }
    // near the right edge the value blows up like 1/sqrt(2(1 - et)); compare logs
    let near = (1.0 - 1e-4) / std::f64::consts::E;
    let oracle = 1.0 / (1.0 + lambert_w(-near));
    let got = log_m_series(1.0, near).unwrap();
    assert!((got - oracle.ln()).abs() < 1e-9, "{got} vs {}", oracle.ln());
    // closer in, direct summation cannot finish and must say so
    assert!(matches!(m_series(1.0, edge), Err(Error::NonConvergence(_))));
}

#[test]
fn series_matches_monte_carlo_below_one() {
    // E exp(t e^{ζz}) = Σ t^j (ζj)^{ζj} / j! = M_ζ(t ζ^ζ); here ζ = 0.5
    let xs = g0(1_000_000, 8);
    for &t in &[0.5, 1.0] {
        let vals: Vec<f64> = xs.iter().map(|z| (t * (0.5 * z).exp()).exp()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m = m_series(0.5, t * 0.5f64.sqrt()).unwrap();
        assert!(
            (mean - m).abs() < 5.0 * (var / n).sqrt(),
            "t={t}: {mean} vs {m}"
        );
    }
}

#[test]
fn bias_vanishes_for_large_k() {
    let est = bias_correction(100_000, 1.0, 200, 3).unwrap();
    assert!(est.value.abs() < 5.0 * est.std_error.unwrap(), "{est:?}");
    let table = BiasTable::shipped().with_policy(BiasPolicy::Interpolate {
        reps: 1000,
        seed: 1,
    });
    let far = table.resolve(5000, 1.0).unwrap();
    assert_eq!(far.bc, 0.0);
}

#[test]
fn mean_of_exponentials_is_unbiased() {
    // E[ζ^-ζ k^-1 Σ exp(ζ y_j)] = exp(ζδ) exactly, for any δ
    let delta = -1.3;
    let k = 30;
    let reps = 40_000u64;
    let zeta: f64 = 1.0;
    let mut sum = 0.0;
    let mut buf = vec![0.0; k];
    for r in 0..reps {
        fill_g0(&mut replicate_rng(4, r), &mut buf);
        let s: f64 = buf.iter().map(|z| (zeta * (z + delta)).exp()).sum::<f64>() / k as f64;
        sum += s * zeta.powf(-zeta);
    }
    let mean = sum / reps as f64;
    let target = (zeta * delta).exp();
    // Var of one average = (4 - 1) e^{2δ} / k
    let se = (3.0 * target * target / k as f64 / reps as f64).sqrt();
    assert!((mean - target).abs() < 5.0 * se, "{mean} vs {target}");
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn y_alpha_approaches_projection_law() {
    let n = 200_000;
    let target = g0(n, 21);
    let mut prev = f64::INFINITY;
    let mut last = 0.0;
    for (i, &alpha) in [0.9, 0.99, 0.999].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + i as u64);
        let ys: Vec<f64> = (0..n)
            .map(|_| sample_y_alpha(alpha, &mut rng).unwrap())
            .collect();
        let d = ks(ys, target.clone());
        assert!(d < prev, "alpha {alpha}: {d} not below {prev}");
        prev = d;
        last = d;
    }
    assert!(last < 0.02, "{last}");
}
