use brw_core::brw::{BrwSampler, ComparisonSampler};
use brw_core::estimators::shard::MeanVar;
use brw_core::estimators::{estimate_max_cdf, FieldModel};
use brw_core::ssbrw::PhiTildeSampler;
use brw_core::{RngStream, SampleMode, TreeShape};

fn s(d: u32, n: u32) -> TreeShape {
    TreeShape::new(d, n).unwrap()
}

/// Sample variance and its standard error under normality.
fn variance(xs: &[f64]) -> (f64, f64) {
    let mut acc = MeanVar::default();
    xs.iter().for_each(|&x| acc.push(x));
    let v = acc.variance();
    (v, v * (2.0 / (xs.len() as f64 - 1.0)).sqrt())
}

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut worst) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// Critical value of the two-sample KS statistic at level 0.001.
fn ks_critical(na: usize, nb: usize) -> f64 {
    1.95 * ((na + nb) as f64 / (na * nb) as f64).sqrt()
}

#[test]
fn phi_tilde_leaf_variance() {
    let shape = s(2, 3);
    let mut sampler = PhiTildeSampler::<f64>::new(shape).unwrap();
    let mut rng = RngStream::new(11, 0);
    let (mut leaf, mut x) = (Vec::new(), Vec::new());
    for _ in 0..100_000 {
        let draw = sampler.sample(&mut rng, SampleMode::Full).unwrap();
        leaf.push(draw.phi_tilde.unwrap()[5]);
        x.push(draw.x_shared);
    }
    let (v, se) = variance(&leaf);
    assert!((v - 2.125).abs() <= 5.0 * se, "var {v} se {se}");
    let (vx, sex) = variance(&x);
    assert!((vx - 0.875).abs() <= 5.0 * sex, "var X {vx} se {sex}");
    // the shared Gaussian is independent of the zero-sum part
    assert!(covariance(&leaf, &x).abs() <= 5.0 * (2.125f64 * 0.875 / 1e5).sqrt());
}

#[test]
fn brw_sibling_covariance() {
    let shape = s(2, 3);
    let mut sampler = BrwSampler::<f64>::new(shape);
    let mut rng = RngStream::new(12, 0);
    let (mut a, mut b, mut far) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..100_000 {
        let v = sampler.sample(&mut rng, SampleMode::Full).unwrap().values.unwrap();
        a.push(v[0]);
        b.push(v[1]);
        far.push(v[7]);
    }
    // sd of the sample covariance is sqrt((s_aa s_bb + s_ab^2) / N)
    let se = ((9.0 + 4.0) / 1e5f64).sqrt();
    let c = covariance(&a, &b);
    assert!((c - 2.0).abs() <= 5.0 * se, "sibling cov {c}");
    let c = covariance(&a, &far);
    assert!(c.abs() <= 5.0 * (9.0 / 1e5f64).sqrt(), "cross-root cov {c}");
}

#[test]
fn comparison_leaf_keeps_the_brw_variance() {
    let shape = s(2, 10);
    let mut sampler = ComparisonSampler::<f64>::new(shape, 7).unwrap();
    let mut rng = RngStream::new(13, 0);
    let anchors: Vec<f64> = (0..20_000).map(|_| sampler.sample(&mut rng).anchor).collect();
    let (v, se) = variance(&anchors);
    assert!((v - 10.0).abs() <= 5.0 * se, "var {v} se {se}");
}

#[test]
fn comparison_at_full_height_matches_brw_max() {
    let shape = s(2, 6);
    let mut cmp = ComparisonSampler::<f64>::new(shape, 6).unwrap();
    let mut brw = BrwSampler::<f64>::new(shape);
    let mut r1 = RngStream::new(14, 0);
    let mut r2 = RngStream::new(14, 1);
    let a: Vec<f64> = (0..20_000).map(|_| cmp.sample(&mut r1).max).collect();
    let b: Vec<f64> = (0..20_000).map(|_| brw.extremes(&mut r2).max).collect();
    let stat = ks(a, b);
    assert!(stat <= ks_critical(20_000, 20_000), "KS {stat}");
}

#[test]
fn expected_max_of_two_leaves() {
    let mut sampler = BrwSampler::<f64>::new(s(2, 1));
    let mut rng = RngStream::new(15, 0);
    let mut acc = MeanVar::default();
    for _ in 0..200_000 {
        acc.push(sampler.extremes(&mut rng).max);
    }
    let want = 1.0 / std::f64::consts::PI.sqrt();
    assert!((acc.mean - want).abs() <= 4.0 * acc.stderr(), "{} vs {want}", acc.mean);
}

#[test]
fn phi_tilde_children_are_exchangeable() {
    // the per-level factor is lower triangular, so the first and last child
    // are built differently; their subtree maxima must still agree in law
    let shape = s(3, 3);
    let mut sampler = PhiTildeSampler::<f64>::new(shape).unwrap();
    let mut rng = RngStream::new(16, 0);
    let block_max = |v: &[f64], b: usize| v[b * 9..(b + 1) * 9].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for _ in 0..20_000 {
        let v = sampler.sample(&mut rng, SampleMode::Full).unwrap().phi_tilde.unwrap();
        first.push(block_max(&v, 0));
        last.push(block_max(&v, 2));
    }
    let stat = ks(first, last);
    assert!(stat <= ks_critical(20_000, 20_000), "KS {stat}");
}

#[test]
fn phi_tilde_plus_shared_is_brw_in_law() {
    let shape = s(3, 3);
    let mut phi = PhiTildeSampler::<f64>::new(shape).unwrap();
    let mut brw = BrwSampler::<f64>::new(shape);
    let mut r1 = RngStream::new(17, 0);
    let mut r2 = RngStream::new(17, 1);
    let a: Vec<f64> = (0..20_000)
        .map(|_| {
            let d = phi.draw(&mut r1);
            d.extremes.max + d.x_shared
        })
        .collect();
    let b: Vec<f64> = (0..20_000).map(|_| brw.extremes(&mut r2).max).collect();
    let stat = ks(a, b);
    assert!(stat <= ks_critical(20_000, 20_000), "KS {stat}");
}

#[test]
fn single_and_double_precision_agree_in_law() {
    let shape = s(2, 8);
    let mut lo = PhiTildeSampler::<f32>::new(shape).unwrap();
    let mut hi = PhiTildeSampler::<f64>::new(shape).unwrap();
    let mut r1 = RngStream::new(18, 0);
    let mut r2 = RngStream::new(18, 0);
    for _ in 0..1000 {
        let a = lo.draw(&mut r1).extremes.max as f64;
        let b = hi.draw(&mut r2).extremes.max;
        assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn brw_left_tail_decays_at_least_exponentially() {
    let shape = s(2, 12);
    let m = brw_core::brw::Centering::<f64>::for_shape(&shape).m_n(12);
    let lambdas = [0.5, 1.0, 1.5, 2.0];
    let grid: Vec<f64> = lambdas.iter().map(|l| m - l).collect();
    let curve = estimate_max_cdf(&shape, FieldModel::Brw, &grid, 200_000, 19, 1).unwrap();
    // the grid comes back ascending, i.e. lambda descending
    let mut logs: Vec<(f64, f64)> =
        curve.estimates.iter().map(|r| (r.log_value.unwrap(), r.log_stderr.unwrap())).collect();
    logs.reverse();
    let slopes: Vec<(f64, f64)> = logs.windows(2).map(|w| (w[1].0 - w[0].0, w[0].1.hypot(w[1].1))).collect();
    assert!(slopes.iter().all(|&(d, se)| d + 3.0 * se < 0.0), "{logs:?}");
    for w in slopes.windows(2) {
        assert!(w[1].0 <= w[0].0 + 3.0 * w[0].1.hypot(w[1].1), "slopes {slopes:?}");
    }
}
