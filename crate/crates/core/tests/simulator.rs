mod common;

use afpca::simulator::{simulate, DesignSpec, FunctionSpec, Mfbm, MfbmSpec, Preset};
use common::noisy_fbm;
use std::f64::consts::PI;

fn column(sample: &afpca::FunctionalSample, k: usize) -> Vec<f64> {
    sample.curves().iter().map(|c| c.values()[k]).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn pointwise_mean_follows_the_mean_function() {
    let spec = MfbmSpec {
        mu: FunctionSpec::Preset(Preset::Sine),
        ..MfbmSpec::fbm(0.5)
    };
    let n = 2000;
    let s = simulate(&spec, &DesignSpec::Common { n_curves: n, points: 11 }, 1).unwrap();
    let times = s.curves()[0].times().to_vec();
    for (k, &t) in times.iter().enumerate() {
        // Var X(t) = t, so the sample mean has sd √(t/n); at t = 0 only the
        // factorization jitter (≤ 1e-8) is left
        let band = 4.0 * ((t + 1e-8) / n as f64).sqrt();
        let m = mean(&column(&s, k));
        assert!((m - (2.0 * PI * t).sin()).abs() <= band, "t = {t}: {m}");
    }
}

#[test]
fn increments_match_the_local_regularity() {
    // analytic: θ(u, v) = C(u,u) + C(v,v) − 2C(u,v) ≈ L² |u − v|^{2H}
    let spec = MfbmSpec {
        h: FunctionSpec::Constant(0.4),
        l: FunctionSpec::Constant(2.0),
        m2_target: Some(FunctionSpec::Constant(1.0)),
        a0: 1.0,
        ..MfbmSpec::fbm(0.5)
    };
    let model = Mfbm::new(spec.clone()).unwrap();
    for &t in &[0.2, 0.5, 0.8] {
        let d = 1e-4;
        let (u, v) = (t - d / 2.0, t + d / 2.0);
        let theta = model.covariance(u, u) + model.covariance(v, v) - 2.0 * model.covariance(u, v);
        let target = 4.0 * d.powf(0.8);
        assert!((theta / target - 1.0).abs() < 0.01, "t = {t}: {theta} vs {target}");
    }

    // Monte Carlo on noiseless paths
    let n = 3000;
    let s = simulate(&spec, &DesignSpec::Common { n_curves: n, points: 201 }, 2).unwrap();
    let times = s.curves()[0].times().to_vec();
    let k = 100;
    let (a, b) = (column(&s, k), column(&s, k + 1));
    let sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).collect();
    let target = 4.0 * (times[k + 1] - times[k]).powf(0.8);
    // squared Gaussian increments: relative sd √(2/n)
    assert!((mean(&sq) / target - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt() + 0.02);
}

#[test]
fn target_variance_is_met_by_simulation() {
    let spec = MfbmSpec {
        h: FunctionSpec::Constant(0.6),
        l: FunctionSpec::Constant(1.5),
        m2_target: Some(FunctionSpec::Table {
            t: vec![0.0, 1.0],
            v: vec![1.0, 2.0],
        }),
        a0: 0.5,
        ..MfbmSpec::fbm(0.5)
    };
    let n = 3000;
    let s = simulate(&spec, &DesignSpec::Common { n_curves: n, points: 5 }, 3).unwrap();
    for (k, &t) in s.curves()[0].times().to_vec().iter().enumerate() {
        let col = column(&s, k);
        let m = mean(&col);
        let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = 1.0 + t;
        assert!((var / target - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "t = {t}: {var}");
    }
}

#[test]
fn noise_is_independent_of_the_signal() {
    let design = DesignSpec::Independent {
        n_curves: 300,
        mean_points: 30.0,
    };
    let clean = simulate(&noisy_fbm(0.5, 0.0), &design, 4).unwrap();
    let noisy = simulate(&noisy_fbm(0.5, 1.0), &design, 4).unwrap();
    let mut x = Vec::new();
    let mut e = Vec::new();
    for (c, d) in clean.curves().iter().zip(noisy.curves()) {
        assert_eq!(c.times(), d.times());
        x.extend_from_slice(c.values());
        e.extend(d.values().iter().zip(c.values()).map(|(y, x)| y - x));
    }
    let (mx, me) = (mean(&x), mean(&e));
    let cov: f64 = x.iter().zip(&e).map(|(a, b)| (a - mx) * (b - me)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let ve: f64 = e.iter().map(|b| (b - me).powi(2)).sum();
    let r = cov / (vx * ve).sqrt();
    assert!(r.abs() < 4.0 / (x.len() as f64).sqrt(), "correlation {r}");
    let sd = (ve / e.len() as f64).sqrt();
    assert!((sd - 1.0).abs() < 0.05);
}
