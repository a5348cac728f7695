//! Oracle checks shared by the core test suites and the acceptance report.
//! Each returns the measured discrepancy; callers decide the tolerance.

#![allow(dead_code)]

use depmix_core::inference::{JointDpSampler, LddpSampler};
use depmix_core::models::{JointDpPrior, ModelOptions};
use depmix_core::partition::binder_loss;
use depmix_core::predictive::{linspace, JointMode, LocalMixture, PredictOptions, Predictor};
use depmix_core::simstudy::{l1_density_error, trapezoid};
use depmix_core::stats::special::{ln_gamma, ln_multi_gamma, normal_pdf, LN_2PI};
use depmix_core::stats::{pg1_mean, sample_pg1, MatrixForm, NigParams, NiwParams};
use depmix_core::weights::{
    joint_implied_weights, logit_stick_weights_with, normalized_kernel_weights, stick_break, KernelWeightParams,
};
use depmix_core::{
    binder_point_estimate, fit, posterior_similarity, BasisKind, BasisSpec, Example, McmcConfig, ModelFamily,
    ModelSpec, RngStream, Sampler,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// All set partitions of n items as restricted-growth label vectors.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut labels = vec![0; n];
    fn rec(i: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            out.push(labels.clone());
            return;
        }
        for l in 0..=max + 1 {
            labels[i] = l;
            rec(i + 1, max.max(l), labels, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut labels, &mut out);
    }
    out
}

// ---- weights ----

/// Largest departure from the simplex over `points` random covariates for the
/// stick, logit-stick, normalised-kernel and joint-implied constructions.
/// Negative or non-finite weights count as infinite.
pub fn simplex_deviation(points: usize) -> f64 {
    let mut rng = RngStream::new(12, 0).rng();
    let j = 12;
    let dev = |w: &[f64]| {
        if w.len() != j || w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            f64::INFINITY
        } else {
            (w.iter().sum::<f64>() - 1.0).abs()
        }
    };
    let v: Vec<f64> = (0..j - 1).map(|_| rng.random::<f64>()).collect();
    let mut worst = dev(&stick_break(&v).unwrap());

    let spec = BasisSpec {
        kind: BasisKind::CubicBspline,
        covariates: 2,
        boundary: vec![(-3.0, 3.0), (0.0, 1.0)],
        interior: vec![vec![-1.0, 1.0], vec![0.5]],
        intercept: true,
    };
    let basis = spec.compile().unwrap();
    let coef = DMatrix::from_fn(j - 1, basis.dim(), |_, _| rng.random_range(-30.0..30.0));
    let params = KernelWeightParams {
        omega: stick_break(&v).unwrap(),
        location: DMatrix::from_fn(j, 2, |_, _| rng.random_range(-3.0..3.0)),
        scale: DMatrix::from_fn(j, 2, |_, _| rng.random_range(0.001..2.0)),
    };
    for _ in 0..points {
        // points well outside the kernels' support stress the log-space paths
        let x = [rng.random_range(-20.0..20.0), rng.random_range(-5.0..5.0)];
        worst = worst.max(dev(&logit_stick_weights_with(&coef, &basis, &x).unwrap()));
        worst = worst.max(dev(&normalized_kernel_weights(&params, &x).unwrap()));
        let log_k: Vec<f64> = (0..j).map(|_| rng.random_range(-800.0..0.0)).collect();
        worst = worst.max(dev(&joint_implied_weights(&params.omega, &log_k).unwrap()));
    }
    worst
}

// ---- Pólya-Gamma ----

/// |sample mean - tanh(c/2)/(2c)| in standard errors, for each c.
pub fn pg_mean_z_scores(cs: &[f64], draws: usize) -> Vec<(f64, f64)> {
    let mut rng = RngStream::new(11, 0).rng();
    cs.iter()
        .map(|&c| {
            let v: Vec<f64> = (0..draws).map(|_| sample_pg1(c, &mut rng)).collect();
            let (m, sd) = mean_sd(&v);
            let exact = (c / 2.0f64).tanh() / (2.0 * c);
            assert!((pg1_mean(c) - exact).abs() < 1e-12);
            (c, (m - exact).abs() / (sd / (draws as f64).sqrt()))
        })
        .collect()
}

// ---- conjugate updates ----

/// Posterior moments of (beta, tau = 1/sigma^2) by midpoint quadrature of
/// an unnormalised log density over a rectangle.
pub fn grid_moments(
    log_post: impl Fn(f64, f64) -> f64,
    (b_lo, b_hi): (f64, f64),
    (t_lo, t_hi): (f64, f64),
    size: usize,
) -> [f64; 4] {
    let hb = (b_hi - b_lo) / size as f64;
    let ht = (t_hi - t_lo) / size as f64;
    // shift by the log density at a central point to keep exp() in range
    let shift = log_post(0.5 * (b_lo + b_hi), t_lo + 0.25 * (t_hi - t_lo));
    let (mut z, mut eb, mut et, mut et2, mut eb2t) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for a in 0..size {
        let b = b_lo + (a as f64 + 0.5) * hb;
        for c in 0..size {
            let t = t_lo + (c as f64 + 0.5) * ht;
            let w = (log_post(b, t) - shift).exp();
            z += w;
            eb += w * b;
            et += w * t;
            et2 += w * t * t;
            eb2t += w * b * b * t;
        }
    }
    [eb / z, et / z, et2 / z, eb2t / z]
}

/// Errors of the NIG update against quadrature: mean (absolute), shape and
/// rate (relative), V_n (absolute).
pub fn nig_quadrature_errors() -> [f64; 4] {
    let y = [0.3, 1.1, -0.4];
    let (m, v, a, b) = (0.2, 2.0, 3.0, 2.0);
    let prior = NigParams::new(
        DVector::from_element(1, m),
        DMatrix::from_element(1, 1, v),
        MatrixForm::Covariance,
        a,
        b,
    )
    .unwrap();
    let x = DMatrix::from_element(3, 1, 1.0);
    let post = prior.posterior(&x, &DVector::from_row_slice(&y)).unwrap();
    let vn = post.covariance().unwrap()[(0, 0)];

    let log_post = |beta: f64, tau: f64| {
        let ss: f64 = y.iter().map(|yi| (yi - beta) * (yi - beta)).sum();
        (a - 1.0) * tau.ln() - b * tau + 0.5 * tau.ln() - tau * (beta - m).powi(2) / (2.0 * v) + 1.5 * tau.ln()
            - 0.5 * tau * ss
    };
    let [eb, et, et2, eb2t] = grid_moments(log_post, (-12.0, 12.0), (0.0, 15.0), 3000);

    // E[beta] = m_n, E[tau] = a_n / b_n, E[tau^2] = a_n (a_n + 1) / b_n^2,
    // E[tau (beta - m_n)^2] = V_n
    let shape = et * et / (et2 - et * et);
    let rate = shape / et;
    let e_quad = eb2t - 2.0 * eb * eb * et + eb * eb * et;
    [
        (eb - post.mean[0]).abs(),
        (shape - post.shape).abs() / post.shape,
        (rate - post.rate).abs() / post.rate,
        (e_quad - vn).abs(),
    ]
}

/// Errors of the NIW update (p = 1) against quadrature: mean (absolute),
/// df, scale and kappa (relative).
pub fn niw_quadrature_errors() -> [f64; 4] {
    // with p = 1 the NIW prior is mu | s2 ~ N(mu0, s2 / kappa), s2 ~ IG(nu / 2, psi / 2)
    let x = [0.8, -0.3, 1.9];
    let (mu0, kappa, nu, psi) = (0.5, 0.7, 4.0, 1.5);
    let prior = NiwParams::new(
        DVector::from_element(1, mu0),
        kappa,
        nu,
        DMatrix::from_element(1, 1, psi),
    )
    .unwrap();
    let post = prior.posterior(&DMatrix::from_column_slice(3, 1, &x)).unwrap();

    let log_post = |mu: f64, tau: f64| {
        let ss: f64 = x.iter().map(|xi| (xi - mu) * (xi - mu)).sum();
        (0.5 * nu - 1.0) * tau.ln() - 0.5 * psi * tau + 0.5 * tau.ln() - 0.5 * kappa * tau * (mu - mu0).powi(2)
            + 1.5 * tau.ln()
            - 0.5 * tau * ss
    };
    let [em, et, et2, em2t] = grid_moments(log_post, (-15.0, 15.0), (0.0, 15.0), 3000);

    let half_df = et * et / (et2 - et * et);
    let half_scale = half_df / et;
    let inv_kappa = em2t - em * em * et;
    [
        (em - post.mean[0]).abs(),
        (2.0 * half_df - post.df).abs() / post.df,
        (2.0 * half_scale - post.scale[(0, 0)]).abs() / post.scale[(0, 0)],
        (1.0 / inv_kappa - post.kappa).abs() / post.kappa,
    ]
}

// ---- joint DP allocation ----

fn ln_det(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .cholesky()
        .unwrap()
        .l()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.ln())
        .sum()
}

/// log p(y | X) under beta | s2 ~ N(m, s2 V), s2 ~ IG(a, b).
pub fn nig_evidence(prior: &NigParams, design: &[Vec<f64>], y: &[f64]) -> f64 {
    let q = prior.dim();
    let n = y.len() as f64;
    let v = prior.covariance().unwrap();
    let v_inv = v.clone().try_inverse().unwrap();
    let x = DMatrix::from_fn(y.len(), q, |i, j| design[i][j]);
    let yv = DVector::from_row_slice(y);
    let vn_inv = &v_inv + x.transpose() * &x;
    let vn = vn_inv.clone().try_inverse().unwrap();
    let mn = &vn * (&v_inv * &prior.mean + x.transpose() * &yv);
    let an = prior.shape + 0.5 * n;
    let bn = prior.rate + 0.5 * (yv.dot(&yv) + prior.mean.dot(&(&v_inv * &prior.mean)) - mn.dot(&(&vn_inv * &mn)));
    -0.5 * n * LN_2PI + 0.5 * ln_det(&vn) - 0.5 * ln_det(&v) + prior.shape * prior.rate.ln() - an * bn.ln()
        + ln_gamma(an)
        - ln_gamma(prior.shape)
}

/// log p(x_1..x_n) under mu | S ~ N(mu0, S / kappa), S ~ IW(nu, Psi).
pub fn niw_evidence(prior: &NiwParams, xs: &[Vec<f64>]) -> f64 {
    let p = prior.dim();
    let n = xs.len() as f64;
    let mut mean = DVector::zeros(p);
    for x in xs {
        mean += DVector::from_row_slice(x);
    }
    mean /= n;
    let mut scatter = DMatrix::zeros(p, p);
    for x in xs {
        let d = DVector::from_row_slice(x) - &mean;
        scatter += &d * d.transpose();
    }
    let dm = &mean - &prior.mean;
    let kn = prior.kappa + n;
    let nun = prior.df + n;
    let psin = &prior.scale + scatter + (&dm * dm.transpose()) * (prior.kappa * n / kn);
    -0.5 * n * p as f64 * std::f64::consts::PI.ln() + ln_multi_gamma(p, 0.5 * nun) - ln_multi_gamma(p, 0.5 * prior.df)
        + 0.5 * prior.df * ln_det(&prior.scale)
        - 0.5 * nun * ln_det(&psin)
        + 0.5 * p as f64 * (prior.kappa / kn).ln()
}

/// log of p(partition) p(data | partition) up to a partition-free constant.
fn ln_joint(labels: &[usize], alpha: f64, prior: &JointDpPrior, x: &[Vec<f64>], design: &[Vec<f64>], y: &[f64]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        total += alpha.ln() + ln_gamma(members.len() as f64);
        let xb: Vec<Vec<f64>> = members.iter().map(|&i| x[i].clone()).collect();
        let db: Vec<Vec<f64>> = members.iter().map(|&i| design[i].clone()).collect();
        let yb: Vec<f64> = members.iter().map(|&i| y[i]).collect();
        total += niw_evidence(&prior.covariates, &xb) + nig_evidence(&prior.regression, &db, &yb);
    }
    total
}

/// Largest gap between the sampler's allocation probabilities and brute-force
/// enumeration, over every partition of the data and every observation.
pub fn joint_allocation_error(x: Vec<Vec<f64>>, y: Vec<f64>, prior: JointDpPrior, alpha: f64) -> f64 {
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let n = y.len();
    let mut sampler =
        JointDpSampler::from_parts(x.clone(), design.clone(), y.clone(), alpha, prior.clone(), vec![0; n]).unwrap();
    let mut worst = 0.0f64;
    for labels in set_partitions(n) {
        sampler.set_partition(&labels).unwrap();
        for i in 0..n {
            let options = sampler.allocation_options(i).unwrap();
            // brute force: move i into each block of the rest, or alone
            let mut rest_blocks: Vec<Vec<usize>> = Vec::new();
            for l in 0..n {
                if l == i {
                    continue;
                }
                match rest_blocks.iter_mut().find(|b| labels[b[0]] == labels[l]) {
                    Some(b) => b.push(l),
                    None => rest_blocks.push(vec![l]),
                }
            }
            let mut candidates: Vec<(Vec<usize>, f64)> = Vec::new();
            for target in 0..=rest_blocks.len() {
                let mut lab = vec![usize::MAX; n];
                for (b, block) in rest_blocks.iter().enumerate() {
                    for &l in block {
                        lab[l] = b;
                    }
                }
                lab[i] = target;
                let members = rest_blocks.get(target).cloned().unwrap_or_default();
                candidates.push((members, ln_joint(&lab, alpha, &prior, &x, &design, &y)));
            }
            let max = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = candidates.iter().map(|c| (c.1 - max).exp()).sum();
            if options.len() != candidates.len() {
                return f64::INFINITY;
            }
            for (members, lp) in candidates {
                let expected = (lp - max).exp() / z;
                let got = options.iter().find(|o| {
                    let mut m = o.members.clone();
                    m.sort_unstable();
                    m == members
                });
                worst = worst.max(got.map_or(f64::INFINITY, |o| (o.probability - expected).abs()));
            }
        }
    }
    worst
}

pub fn joint_prior_one_covariate() -> (Vec<Vec<f64>>, Vec<f64>, JointDpPrior, f64) {
    let x = vec![vec![0.3], vec![-1.2], vec![2.0], vec![0.5]];
    let y = vec![1.0, -0.5, 3.1, 0.2];
    let prior = JointDpPrior {
        regression: NigParams::new(
            DVector::from_row_slice(&[0.5, -0.3]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            MatrixForm::Covariance,
            2.5,
            1.5,
        )
        .unwrap(),
        covariates: NiwParams::new(
            DVector::from_element(1, 0.2),
            0.5,
            3.0,
            DMatrix::from_element(1, 1, 1.2),
        )
        .unwrap(),
    };
    (x, y, prior, 1.3)
}

pub fn joint_prior_two_covariates() -> (Vec<Vec<f64>>, Vec<f64>, JointDpPrior, f64) {
    let x = vec![vec![0.3, 1.0], vec![-1.2, 0.4], vec![2.0, -0.6], vec![0.5, 0.1]];
    let y = vec![1.0, -0.5, 3.1, 0.2];
    let prior = JointDpPrior {
        regression: NigParams::new(
            DVector::from_row_slice(&[0.0, 1.0, -0.5]),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 1.0, 2.0])),
            MatrixForm::Covariance,
            2.0,
            1.0,
        )
        .unwrap(),
        covariates: NiwParams::new(
            DVector::from_row_slice(&[0.0, 0.0]),
            0.1,
            4.0,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
        )
        .unwrap(),
    };
    (x, y, prior, 0.7)
}

// ---- Geweke ----

/// Two-sample Kolmogorov–Smirnov p-value (asymptotic distribution).
pub fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

fn geweke_stats(sampler: &LddpSampler, y: &DVector<f64>) -> [f64; 4] {
    let d = sampler.draw(0);
    let c = &d.components[d.allocations[0]];
    [c.beta[0], c.beta[1], c.sigma2.ln(), y.mean()]
}

/// Geweke joint-distribution test of the LDDP sampler at n = 20: KS p-values
/// of marginal-conditional vs successive-conditional draws for the first
/// observation's coefficients, its log variance and the mean response.
pub fn lddp_geweke_p_values(rounds: usize) -> [f64; 4] {
    let data = Example::Two.generate(20, 4).unwrap();
    let opts = ModelOptions {
        truncation: 5,
        ..ModelOptions::default()
    };
    let spec = ModelSpec::build(ModelFamily::Lddp, &data, &opts).unwrap();
    let mut sampler = LddpSampler::new(&data, &spec).unwrap();
    let mut rng = RngStream::new(99, 1).rng();

    let mut marginal: Vec<[f64; 4]> = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        sampler.sample_prior_state(&mut rng).unwrap();
        let y = sampler.simulate_response(&mut rng);
        marginal.push(geweke_stats(&sampler, &y));
    }

    let mut successive: Vec<[f64; 4]> = Vec::with_capacity(rounds);
    sampler.sample_prior_state(&mut rng).unwrap();
    let mut y = sampler.simulate_response(&mut rng);
    for _ in 0..rounds {
        // the hyperparameters mix slowly, so thin hard between records
        for _ in 0..300 {
            sampler.set_response(y.clone()).unwrap();
            sampler.sweep(&mut rng).unwrap();
            y = sampler.simulate_response(&mut rng);
        }
        successive.push(geweke_stats(&sampler, &y));
    }

    std::array::from_fn(|s| {
        let a: Vec<f64> = marginal.iter().map(|r| r[s]).collect();
        let b: Vec<f64> = successive.iter().map(|r| r[s]).collect();
        ks_p_value(&a, &b)
    })
}

// ---- predictive ----

/// Trapezoid integral of a mixture over a grid wide and fine enough for every kernel.
pub fn mixture_mass(mix: &LocalMixture) -> f64 {
    let lo = (0..mix.len())
        .map(|k| mix.loc[k] - 60.0 * mix.scale[k])
        .fold(f64::INFINITY, f64::min);
    let hi = (0..mix.len())
        .map(|k| mix.loc[k] + 60.0 * mix.scale[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let step = mix.scale.iter().copied().fold(f64::INFINITY, f64::min) / 8.0;
    let grid = linspace(lo, hi, ((hi - lo) / step).ceil() as usize + 1);
    let mut dens = vec![0.0; grid.len()];
    mix.densities(&grid, &mut dens);
    trapezoid(&dens, &grid).unwrap()
}

/// Largest |mass - 1| of a per-draw predictive density, over short chains of
/// every family (joint DP in both modes) at covariates inside the data, at
/// its edge and extrapolated. Also returns the family and mode attaining it.
pub fn predictive_mass_error() -> (f64, String) {
    let data = Example::One.generate(80, 2).unwrap();
    let x_new = vec![vec![5.0, 2.5], vec![0.2, 0.1], vec![9.7, 4.9], vec![12.0, -1.0]];
    let cfg = McmcConfig::short(300, 150, 15, 3);
    let mut worst = (0.0, String::new());
    for family in ModelFamily::ALL {
        let opts = ModelOptions {
            truncation: 10,
            ..ModelOptions::default()
        };
        let spec = ModelSpec::build(family, &data, &opts).unwrap();
        let chain = fit(&data, &spec, &cfg).unwrap();
        let modes: &[JointMode] = if family == ModelFamily::JointDp {
            &[JointMode::Sampled, JointMode::Collapsed]
        } else {
            &[JointMode::Sampled]
        };
        for &joint in modes {
            let popts = PredictOptions {
                joint,
                ..PredictOptions::default()
            };
            let predictor = Predictor::with_options(&spec, &popts).unwrap();
            for d in &chain.draws {
                let prepared = predictor.prepare(d).unwrap();
                for x in &x_new {
                    let err = (mixture_mass(&prepared.local_mixture(x).unwrap()) - 1.0).abs();
                    if err > worst.0 || err.is_nan() {
                        worst = (err, format!("{family} {joint:?} at {x:?}"));
                    }
                }
            }
        }
    }
    worst
}

/// Numerical ℓ1 distance between N(0, 1) and N(delta, 1).
pub fn l1_shifted_normals(delta: f64) -> f64 {
    let grid = linspace(-12.0, 12.5, 50_001);
    let f: Vec<f64> = grid.iter().map(|&y| normal_pdf(y, 0.0, 1.0)).collect();
    let g: Vec<f64> = grid.iter().map(|&y| normal_pdf(y, delta, 1.0)).collect();
    l1_density_error(&[f], &[g], &grid).unwrap()
}

// ---- partition ----

/// Loss of every one of the 52 partitions of 5 points, by direct pair counting.
pub fn exhaustive_binder(draws: &[Vec<usize>]) -> (Vec<usize>, f64) {
    let m = draws.len() as f64;
    let mut best = (Vec::new(), f64::INFINITY);
    for cand in set_partitions(5) {
        let mut loss = 0.0;
        for i in 0..5 {
            for l in i + 1..5 {
                let p = draws.iter().filter(|d| d[i] == d[l]).count() as f64 / m;
                loss += if cand[i] == cand[l] { 1.0 - p } else { p };
            }
        }
        if loss < best.1 - 1e-12 {
            best = (cand, loss);
        }
    }
    best
}

/// One random 5-point Binder case: (estimate, exhaustive optimum, number of
/// partitions tying with the optimum). The draws are a random multiset of
/// partitions under arbitrary label names, followed by all 52 partitions so
/// the optimum is always among the candidates.
pub struct BinderCase {
    pub estimate: Vec<usize>,
    pub estimate_loss: f64,
    pub recomputed_loss: f64,
    pub oracle: Vec<usize>,
    pub oracle_loss: f64,
    pub ties: usize,
}

pub fn binder_cases(count: usize) -> Vec<BinderCase> {
    let all = set_partitions(5);
    let mut rng = RngStream::new(21, 0).rng();
    (0..count)
        .map(|_| {
            let m = rng.random_range(1..40);
            let mut draws: Vec<Vec<usize>> = (0..m)
                .map(|_| {
                    let p = &all[rng.random_range(0..all.len())];
                    let shift = rng.random_range(0..7);
                    p.iter().map(|l| (l * 3 + shift) % 11).collect()
                })
                .collect();
            let sim = posterior_similarity(&draws).unwrap();
            let (oracle, oracle_loss) = exhaustive_binder(&draws);
            draws.extend(all.iter().cloned());
            let est = binder_point_estimate(&draws, &sim).unwrap();
            let ties = all
                .iter()
                .filter(|c| (binder_loss(c, &sim).unwrap() - oracle_loss).abs() < 1e-12)
                .count();
            BinderCase {
                recomputed_loss: binder_loss(&est.labels, &sim).unwrap(),
                estimate: est.labels,
                estimate_loss: est.expected_loss,
                oracle,
                oracle_loss,
                ties,
            }
        })
        .collect()
}
