//! Checks against values computed independently of the library: closed-form
//! expectations, straight-line reimplementations and brute-force grids.

use genlasso::analysis::{estimate_gmw, gmw_solver_config, hamming_distance};
use genlasso::generative::{sample_latent, Activation, Layer, LayeredGenerator, RandomArchitecture, SparsePrior};
use genlasso::harness::{Experiment, ExperimentSpec, GeneratorSpec};
use genlasso::linalg::{Mat, Vector};
use genlasso::observation::{mu_monte_carlo, psi_estimate, Nonlinearity, Theta, DEFAULT_MOMENT_GRID};
use genlasso::sensing::{corrupt, gaussian_matrix, sample_matrix, Corruption, Covariance, SensingConfig};
use genlasso::solvers::{corr_max_binary, klasso_generative, klasso_sparse, rescale_link, SolverConfig};
use genlasso::{rng_from_seed, SimRng};
use rand::Rng;
use rand_distr::StandardNormal;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// `E[sign(g + h) g]` for independent standard normals: `1/sqrt(pi)`.
const PROBIT_MU: f64 = 0.564_189_583_547_756_3;
/// `E[tanh(g) g]`, by quadrature.
const TANH_MU: f64 = 0.605_705_509_602_158_8;

fn gaussian(n: usize, rng: &mut SimRng) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn within_se(value: f64, stderr: f64, exact: f64, k: f64) -> bool {
    (value - exact).abs() <= k * stderr
}

/// Plain loops over `Vec<f64>`, written without nalgebra.
fn straight_line_forward(model: &LayeredGenerator, z: &[f64]) -> Vec<f64> {
    let mut h = z.to_vec();
    for layer in model.layers() {
        let mut next = vec![0.0; layer.output_dim()];
        for (i, out) in next.iter_mut().enumerate() {
            let mut acc = layer.offsets[i];
            for (j, hj) in h.iter().enumerate() {
                acc += layer.weights[(i, j)] * hj;
            }
            *out = match layer.activation {
                Activation::Relu => acc.max(0.0),
                Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                Activation::Tanh => acc.tanh(),
                Activation::Identity => acc,
            };
        }
        h = next;
    }
    h
}

#[test]
fn forward_matches_straight_line_recurrence() {
    let arch = RandomArchitecture {
        offsets: true,
        activation: Activation::Tanh,
        output_activation: Activation::Tanh,
        ..RandomArchitecture::relu(2, 7, 2, 5)
    };
    for seed in 0..20 {
        let model = LayeredGenerator::random(&arch, &mut rng_from_seed(seed)).unwrap();
        let z = sample_latent(2, 1.0, &mut rng_from_seed(1000 + seed));
        let got = model.forward(&z).unwrap();
        let want = straight_line_forward(&model, z.as_slice());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn vjp_matches_central_differences() {
    let arch = RandomArchitecture {
        offsets: true,
        activation: Activation::Tanh,
        output_activation: Activation::Tanh,
        ..RandomArchitecture::relu(3, 6, 2, 5)
    };
    for seed in 0..20 {
        let model = LayeredGenerator::random(&arch, &mut rng_from_seed(seed)).unwrap();
        let mut rng = rng_from_seed(500 + seed);
        let z = sample_latent(3, 1.0, &mut rng);
        let v = gaussian(6, &mut rng);
        let grad = model.vjp(&z, &v).unwrap();
        let h = 1e-5;
        let fd = Vector::from_fn(3, |i, _| {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            v.dot(&(model.forward(&zp).unwrap() - model.forward(&zm).unwrap())) / (2.0 * h)
        });
        assert!((&grad - &fd).norm() <= 1e-5 * grad.norm().max(1e-12));
    }
}

#[test]
fn lipschitz_formula_examples() {
    // d = 1, widths (2, 3), largest weight 2
    let w = Mat::from_row_slice(3, 2, &[2.0, -1.0, 0.5, 0.0, -0.3, 1.0]);
    let model = LayeredGenerator::new(1.0, vec![Layer::linear(w, Activation::Relu)]).unwrap();
    assert_eq!(model.lipschitz_bound().bound, 6.0);
    // d = 2, widths (4, 4, 4), largest weight 0.5
    let w1 = Mat::from_fn(4, 4, |i, j| if i == j { 0.5 } else { 0.1 });
    let w2 = Mat::from_fn(4, 4, |i, j| if i + j == 3 { -0.5 } else { 0.2 });
    let model = LayeredGenerator::new(
        1.0,
        vec![Layer::linear(w1, Activation::Relu), Layer::linear(w2, Activation::Tanh)],
    )
    .unwrap();
    assert_eq!(model.lipschitz_bound().bound, 4.0);
}

#[test]
fn lipschitz_bound_dominates_sampled_ratios() {
    let model = GeneratorSpec::relu(4, 30, 3, 12, 3).build().unwrap();
    let lip = model.lipschitz_bound();
    let mut rng = rng_from_seed(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let z1 = sample_latent(4, 1.0, &mut rng);
        let z2 = sample_latent(4, 1.0, &mut rng);
        let ratio = (model.forward(&z1).unwrap() - model.forward(&z2).unwrap()).norm() / (z1 - z2).norm();
        worst = worst.max(ratio);
    }
    assert!(worst <= lip.spectral_product + 1e-12);
    assert!(lip.spectral_product <= lip.bound);
}

#[test]
fn one_dimensional_latent_is_uniform() {
    let mut rng = rng_from_seed(78);
    let samples: Vec<f64> = (0..100_000).map(|_| sample_latent(1, 1.0, &mut rng)[0].abs()).collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    assert!(within_se(mean, (var / samples.len() as f64).sqrt(), 0.5, 3.0));
}

#[test]
fn midriser_formula_example() {
    let f = Nonlinearity::midriser(1.0).unwrap();
    let out = f.apply(&Vector::from_row_slice(&[0.2, 1.7, -0.3]), None).unwrap();
    assert_eq!(out.as_slice(), &[0.5, 1.5, -0.5]);
}

#[test]
fn closed_form_mu_values() {
    assert_eq!(Nonlinearity::Tobit.mu_closed_form(), Some(0.5));
    let mu = Nonlinearity::sign_flip(0.1).unwrap().mu_closed_form().unwrap();
    assert!((mu - 0.8 * SQRT_2_OVER_PI).abs() < 1e-15);
    assert!((mu - 0.63831).abs() < 1e-5);
}

#[test]
fn monte_carlo_mu_against_oracles() {
    let cases = [
        (Nonlinearity::sign_flip(0.0).unwrap(), SQRT_2_OVER_PI),
        (Nonlinearity::probit(1.0).unwrap(), PROBIT_MU),
        (Nonlinearity::BinaryTheta(Theta::tanh()), TANH_MU),
    ];
    for (i, (f, exact)) in cases.iter().enumerate() {
        let est = mu_monte_carlo(f, 1_000_000, &mut rng_from_seed(40 + i as u64)).unwrap();
        assert!(within_se(est.value, est.stderr, *exact, 3.0), "{f}: {est:?} vs {exact}");
    }
}

#[test]
fn psi_values() {
    let sign = psi_estimate(&Nonlinearity::sign_flip(0.3).unwrap(), 10_000, &DEFAULT_MOMENT_GRID, &mut rng_from_seed(1)).unwrap();
    assert_eq!(sign.value, 1.0);
    let lin = psi_estimate(&Nonlinearity::Linear, 1_000_000, &DEFAULT_MOMENT_GRID, &mut rng_from_seed(2)).unwrap();
    assert!(within_se(lin.value, lin.stderr, SQRT_2_OVER_PI, 3.0), "{lin:?}");
}

#[test]
fn rescaled_linear_and_tobit() {
    let lin = rescale_link(&Nonlinearity::Linear, 2.0, 1_000_000, &mut rng_from_seed(3)).unwrap();
    assert!(within_se(lin.mu_bar.value, lin.mu_bar.stderr, 2.0, 3.0));
    let tob = rescale_link(&Nonlinearity::Tobit, 1.0, 1_000_000, &mut rng_from_seed(4)).unwrap();
    assert!(within_se(tob.mu_bar.value, tob.mu_bar.stderr, 0.5, 4.0));
}

#[test]
fn diagonal_covariance_column_variances() {
    let m = 100_000;
    let cfg = SensingConfig {
        m,
        n: 2,
        covariance: Covariance::Diagonal { values: vec![4.0, 1.0] },
        seed: 0,
    };
    let pair = sample_matrix(&cfg, &mut rng_from_seed(207)).unwrap();
    for (j, sigma2) in [4.0, 1.0].into_iter().enumerate() {
        let col = pair.a.column(j);
        let mean = col.mean();
        let var = col.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let se = sigma2 * (2.0 / m as f64).sqrt();
        assert!(within_se(var, se, sigma2, 3.0), "column {j}: {var}");
    }
}

#[test]
fn binary_flip_budget_example() {
    let mut rng = rng_from_seed(226);
    let a = gaussian_matrix(100, 5, &mut rng);
    let u = &a * gaussian(5, &mut rng);
    let y = Nonlinearity::sign_flip(0.0).unwrap().apply(&u, Some(&mut rng)).unwrap();
    let y_tilde = corrupt(&y, &a, 0.4, Corruption::BinaryFlip, &mut rng).unwrap();
    let flipped = y.iter().zip(y_tilde.iter()).filter(|(u, v)| u != v).count();
    assert_eq!(flipped, 4);
    assert!(((&y_tilde - &y).norm() / 10.0 - 0.4).abs() < 1e-15);
}

fn grid_points(r: f64) -> impl Iterator<Item = Vector> {
    (0..=100).flat_map(move |i| {
        (0..=100).filter_map(move |j| {
            let z = Vector::from_row_slice(&[-r + 0.02 * r * i as f64, -r + 0.02 * r * j as f64]);
            (z.norm() <= r).then_some(z)
        })
    })
}

#[test]
fn klasso_against_latent_grid() {
    let model = GeneratorSpec::relu(2, 30, 2, 16, 278).build().unwrap();
    let f = Nonlinearity::sign_flip(0.05).unwrap();
    let mut good = 0;
    for t in 0..50u64 {
        let mut rng = rng_from_seed(2_780 + t);
        let a = gaussian_matrix(60, 30, &mut rng);
        let x = model.forward(&sample_latent(2, 1.0, &mut rng)).unwrap();
        let y = f.apply(&(&a * x), Some(&mut rng)).unwrap();
        let out = klasso_generative(&model, &a, &y, &SolverConfig::default().with_seed(t)).unwrap();
        let grid = grid_points(1.0)
            .map(|z| (&y - &a * model.forward(&z).unwrap()).norm() / 60f64.sqrt())
            .fold(f64::INFINITY, f64::min);
        if out.residual <= grid + 1e-3 {
            good += 1;
        }
    }
    assert!(good >= 45, "{good}/50");
}

#[test]
fn correlation_maximizer_against_latent_grid() {
    let raw = GeneratorSpec::relu(2, 30, 2, 16, 296).build().unwrap();
    let model = raw.scale_output(1.0 / raw.range_norm_bound()).unwrap();
    let f = Nonlinearity::sign_flip(0.0).unwrap();
    let mut good = 0;
    for t in 0..50u64 {
        let mut rng = rng_from_seed(2_960 + t);
        let a = gaussian_matrix(60, 30, &mut rng);
        let x = model.forward(&sample_latent(2, 1.0, &mut rng)).unwrap();
        let y = f.apply(&(&a * x), Some(&mut rng)).unwrap();
        let c = a.tr_mul(&y) / 60.0;
        let out = corr_max_binary(&model, &a, &y, &SolverConfig::default().with_seed(t)).unwrap();
        let grid = grid_points(1.0)
            .map(|z| c.dot(&model.forward(&z).unwrap()))
            .fold(f64::NEG_INFINITY, f64::max);
        if -out.residual >= grid - 1e-3 {
            good += 1;
        }
    }
    assert!(good >= 45, "{good}/50");
}

#[test]
fn single_sparse_support_with_orthonormal_columns() {
    let mut rng = rng_from_seed(286);
    let q = gaussian_matrix(12, 6, &mut rng).qr().q();
    let y = gaussian(12, &mut rng);
    let prior = SparsePrior::new(6, 1, 1e6).unwrap();
    let out = klasso_sparse(&prior, &q, &y).unwrap();
    let corr = q.tr_mul(&y);
    let j = corr.iamax();
    let mut want = Vector::zeros(6);
    want[j] = corr[j];
    assert!((out.x_hat - want).norm() <= 1e-10);
}

#[test]
fn hamming_identity_example() {
    let v1 = Vector::from_row_slice(&[1.0, 1.0, -1.0, 1.0]);
    let v2 = Vector::from_row_slice(&[1.0, -1.0, -1.0, 1.0]);
    let d = hamming_distance(&v1, &v2).unwrap();
    assert_eq!(d, 0.25);
    assert_eq!((&v1 - &v2).norm() / 2.0, 2.0 * d.sqrt());
}

#[test]
fn gaussian_mean_width_of_balls() {
    // 2 E||g|| = 2 sqrt(2) Gamma(5/2) / Gamma(2) for n = 4
    let exact = 3.759_942_411_946_500_8;
    let one = estimate_gmw(&LayeredGenerator::identity(4, 1.0).unwrap(), 1000, &gmw_solver_config(1)).unwrap();
    assert!(within_se(one.omega_hat, one.stderr, exact, 3.0), "{one:?}");
    let two = estimate_gmw(&LayeredGenerator::identity(4, 2.0).unwrap(), 1000, &gmw_solver_config(2)).unwrap();
    assert!(two.omega_hat >= one.omega_hat - 2.0 * (one.stderr.powi(2) + two.stderr.powi(2)).sqrt());
}

fn cell_spec(nonlinearity: &str) -> ExperimentSpec {
    ExperimentSpec::from_json(&format!(
        r#"{{
            "generator": {{"kind": "random", "k": 4, "n": 100, "depth": 2, "width": 16, "weight_seed": 1}},
            "nonlinearity": "{nonlinearity}",
            "sensing": {{"m": [200], "tau": [0.1], "strategy": "random_direction"}},
            "master_seed": 462
        }}"#
    ))
    .unwrap()
}

#[test]
fn end_to_end_cell_beats_zero_estimate() {
    let exp = Experiment::new(&cell_spec("sign:p=0.1")).unwrap();
    for t in 0..5 {
        let r = exp.run_trial(200, 0.1, t);
        assert!(r.is_ok(), "{}", r.status);
        let err = r.err_scaled.unwrap();
        assert!(err.is_finite() && err <= r.mu_used.unwrap(), "{err} vs {:?}", r.mu_used);
    }
}

#[test]
fn linear_signal_target_is_generator_output() {
    let exp = Experiment::new(&cell_spec("linear")).unwrap();
    for seed in 0..10 {
        let s = exp.make_signal(&mut rng_from_seed(seed)).unwrap();
        assert!((s.mu - s.rho).abs() <= 1e-15 * s.rho);
        let target = &s.x_star * s.mu;
        assert!((target - exp.model.forward(&s.z_star).unwrap()).norm() <= 1e-12);
    }
}

#[test]
fn sign_signal_uses_base_mu() {
    let exp = Experiment::new(&cell_spec("sign:p=0.1")).unwrap();
    let s = exp.make_signal(&mut rng_from_seed(9)).unwrap();
    assert!((s.mu - 0.8 * SQRT_2_OVER_PI).abs() < 1e-15);
    assert_eq!(s.psi, 1.0);
}
