use sdha::noise::{default_truncation, path_state, PathRng, PATH_MIX};
use sdha::{aggregate_path, truncate_increment, BrownianDriver, FinePath, IncrementMode};

fn draws(seed: u64, path: u64, m: usize, dt: f64, mode: IncrementMode, steps: usize) -> Vec<f64> {
    let mut d = BrownianDriver::new(seed, path, m, dt, mode).unwrap();
    let mut out = vec![0.0; steps * m];
    for row in out.chunks_mut(m) {
        d.next_increments(row);
    }
    out
}

#[test]
fn stream_is_a_function_of_seed_and_path() {
    let a = draws(42, 7, 2, 0.01, IncrementMode::Gaussian, 1000);
    let b = draws(42, 7, 2, 0.01, IncrementMode::Gaussian, 1000);
    assert_eq!(a, b);
    let c = draws(42, 8, 2, 0.01, IncrementMode::Gaussian, 5);
    assert!(a[..10].iter().zip(&c).all(|(x, y)| x != y));
    let d = draws(43, 7, 2, 0.01, IncrementMode::Gaussian, 5);
    assert_ne!(&a[..10], &d[..]);
}

#[test]
fn path_state_derivation() {
    assert_eq!(path_state(5, 0), 5);
    assert_eq!(path_state(5, 3), 5 ^ 3u64.wrapping_mul(PATH_MIX));
    assert_eq!(path_state(0, u64::MAX), u64::MAX.wrapping_mul(PATH_MIX));
}

#[test]
fn channel_layout_is_step_major() {
    // one channel drawn 2k times equals two channels drawn k times, flattened
    let one = draws(9, 1, 1, 0.5, IncrementMode::Gaussian, 20);
    let two = draws(9, 1, 2, 0.5, IncrementMode::Gaussian, 10);
    assert_eq!(one, two);
}

#[test]
fn gaussian_moments() {
    let dt: f64 = 0.01;
    let n = 1_000_000;
    let w = draws(1, 0, 1, dt, IncrementMode::Gaussian, n);
    let mean = w.iter().sum::<f64>() / n as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() <= 4.0 * dt.sqrt() / (n as f64).sqrt(), "mean {mean}");
    assert!((var / dt - 1.0).abs() <= 0.01, "variance {var}");
}

#[test]
fn truncated_mode_stays_in_band() {
    let dt = 0.25;
    let a = 0.3;
    let w = draws(3, 2, 3, dt, IncrementMode::Truncated(a), 20_000);
    assert!(w.iter().all(|x| x.abs() <= a));
    assert!(w.contains(&a) && w.contains(&-a));
    // clipping is applied to the Gaussian stream itself
    let g = draws(3, 2, 3, dt, IncrementMode::Gaussian, 20_000);
    assert!(w.iter().zip(&g).all(|(t, x)| *t == truncate_increment(*x, a).unwrap()));
}

#[test]
fn truncation_threshold_validation() {
    assert!(BrownianDriver::new(0, 0, 1, 0.1, IncrementMode::Truncated(0.0)).is_err());
    assert!(BrownianDriver::new(0, 0, 1, 0.0, IncrementMode::Gaussian).is_err());
    assert!(BrownianDriver::new(0, 0, 1, f64::NAN, IncrementMode::Gaussian).is_err());
    let dt: f64 = 0.01;
    assert_eq!(default_truncation(dt), 2.0 * dt.sqrt() * (2.0 * dt.ln().abs()).sqrt());
}

#[test]
fn three_point_support_and_moments() {
    let dt: f64 = 0.02;
    let n = 1_000_000;
    let h = (3.0 * dt).sqrt();
    let w = draws(11, 4, 1, dt, IncrementMode::ThreePoint, n);
    assert!(w.iter().all(|x| *x == 0.0 || *x == h || *x == -h));
    let nf = n as f64;
    let m1 = w.iter().sum::<f64>() / nf;
    let m2 = w.iter().map(|x| x * x).sum::<f64>() / nf;
    let m3 = w.iter().map(|x| x.powi(3)).sum::<f64>() / nf;
    let m4 = w.iter().map(|x| x.powi(4)).sum::<f64>() / nf;
    let zeros = w.iter().filter(|x| **x == 0.0).count() as f64 / nf;
    // odd moments are compared against the scale of the even ones
    assert!(m1.abs() <= 0.02 * dt.sqrt(), "m1 {m1}");
    assert!((m2 / dt - 1.0).abs() <= 0.02, "m2 {m2}");
    assert!(m3.abs() <= 0.02 * dt.powf(1.5), "m3 {m3}");
    assert!((m4 / (3.0 * dt * dt) - 1.0).abs() <= 0.02, "m4 {m4}");
    assert!((zeros - 2.0 / 3.0).abs() <= 0.005 * 2.0 / 3.0, "P(0) {zeros}");
}

#[test]
fn three_point_request_needs_three_point_mode() {
    let mut d = BrownianDriver::new(0, 0, 1, 0.1, IncrementMode::Gaussian).unwrap();
    assert!(d.next_three_point(&mut [0.0]).is_err());
    let mut d = BrownianDriver::new(0, 0, 1, 0.1, IncrementMode::ThreePoint).unwrap();
    let mut w = [1.0];
    d.next_three_point(&mut w).unwrap();
    assert_eq!(d.step_index(), 1);
}

#[test]
fn aggregation_identity_and_ones() {
    let ones = FinePath::from_increments(0.1, 1, vec![1.0; 16]).unwrap();
    let coarse = aggregate_path(&ones, 4).unwrap();
    assert_eq!(coarse.steps(), 4);
    assert!(coarse.rows().all(|r| r[0] == 4.0));
    assert!((coarse.dt() - 0.4).abs() < 1e-15);
    let mut d = BrownianDriver::new(5, 5, 2, 0.01, IncrementMode::Gaussian).unwrap();
    let fine = FinePath::generate(&mut d, 64);
    assert_eq!(aggregate_path(&fine, 1).unwrap(), fine);
    assert!(aggregate_path(&fine, 3).is_err());
    assert!(aggregate_path(&fine, 0).is_err());
}

#[test]
fn aggregation_preserves_sums_exactly() {
    for path in 0..20 {
        let mut d = BrownianDriver::new(77, path, 2, 1.0 / 256.0, IncrementMode::Gaussian).unwrap();
        let fine = FinePath::generate(&mut d, 256);
        for factor in [2, 4, 16, 256] {
            let coarse = aggregate_path(&fine, factor).unwrap();
            for r in 0..2 {
                assert_eq!(coarse.total(r), fine.total(r));
                for (k, row) in coarse.rows().enumerate() {
                    let direct: f64 = (k * factor..(k + 1) * factor).map(|j| fine.increment(j)[r]).sum();
                    assert_eq!(row[r], direct);
                }
            }
            // nested aggregation agrees with direct aggregation
            if factor > 2 {
                let twice = aggregate_path(&aggregate_path(&fine, 2).unwrap(), factor / 2).unwrap();
                assert_eq!(twice, coarse);
            }
        }
    }
}

#[test]
fn aggregated_increments_have_summed_variance() {
    let c = 8;
    let dt: f64 = 0.01;
    let paths = 4000;
    let mut sq = 0.0;
    let mut count = 0;
    for path in 0..paths {
        let mut d = BrownianDriver::new(2024, path, 1, dt, IncrementMode::Gaussian).unwrap();
        let fine = FinePath::generate(&mut d, 64);
        let coarse = aggregate_path(&fine, c).unwrap();
        for row in coarse.rows() {
            sq += row[0] * row[0];
            count += 1;
        }
    }
    let var = sq / count as f64;
    // sample variance of 32000 normals has relative sd sqrt(2/32000) ~ 0.008
    assert!((var / (c as f64 * dt) - 1.0).abs() < 0.04, "variance {var}");
}

#[test]
fn initial_stream_is_independent_of_increments() {
    let mut init = PathRng::initial(1, 0);
    let mut d = BrownianDriver::new(1, 0, 1, 1.0, IncrementMode::Gaussian).unwrap();
    let mut w = [0.0];
    d.next_increments(&mut w);
    assert_ne!(init.normal(), w[0]);
    let u = PathRng::from_seed(3).uniform();
    assert!((0.0..1.0).contains(&u));
}
