use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stealthcurve::divergence::{gaussian_kl, itakura_saito, kl_rate, scalar_gaussian_kl};
use stealthcurve::spectra::toeplitz_covariance;
use stealthcurve::{CovarianceMatrix, FrequencyGrid, SpectrumSamples};

/// `A Aᵀ + δI` for a random square `A`.
fn random_spd(rng: &mut ChaCha8Rng, m: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(m, m) * ridge
}

fn to_cov(m: &DMatrix<f64>) -> CovarianceMatrix {
    let sym = (m + m.transpose()) * 0.5;
    CovarianceMatrix::from_fn(m.nrows(), |i, j| sym[(i, j)]).unwrap()
}

/// `½ [tr(Σ_y Σ_x⁻¹) - ln det(Σ_y Σ_x⁻¹) - m]` by LU inverse and determinants.
fn trace_logdet_form(sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> f64 {
    let m = sx.nrows() as f64;
    let prod = sy * sx.clone().try_inverse().unwrap();
    0.5 * (prod.trace() - prod.determinant().ln() - m)
}

/// Eigenvalue form over `Σ_x^{-1/2} Σ_y Σ_x^{-1/2}`.
fn eigen_form(sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> f64 {
    let e = sx.clone().symmetric_eigen();
    let inv_sqrt = &e.eigenvectors
        * DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * e.eigenvectors.transpose();
    let w = &inv_sqrt * sy * &inv_sqrt;
    let d = ((&w + w.transpose()) * 0.5).symmetric_eigen().eigenvalues;
    0.5 * d.iter().map(|&v| v - v.ln() - 1.0).sum::<f64>()
}

#[test]
fn random_eight_by_eight_matches_independent_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let sx = random_spd(&mut rng, 8, 0.5);
        let sy = random_spd(&mut rng, 8, 0.5);
        let got = gaussian_kl(&to_cov(&sx), &to_cov(&sy)).unwrap().nats();
        let direct = trace_logdet_form(&sx, &sy);
        let eig = eigen_form(&sx, &sy);
        assert!((got - eig).abs() <= 1e-9 * eig.max(1.0), "{got} vs {eig}");
        assert!((got - direct).abs() <= 1e-8 * direct.max(1.0), "{got} vs {direct}");
    }
}

#[test]
fn block_diagonal_pairs_are_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let (x1, y1) = (random_spd(&mut rng, 3, 0.3), random_spd(&mut rng, 3, 0.3));
        let (x2, y2) = (random_spd(&mut rng, 4, 0.3), random_spd(&mut rng, 4, 0.3));
        let block = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(7, 7);
            out.view_mut((0, 0), (3, 3)).copy_from(a);
            out.view_mut((3, 3), (4, 4)).copy_from(b);
            out
        };
        let whole = gaussian_kl(&to_cov(&block(&x1, &x2)), &to_cov(&block(&y1, &y2))).unwrap().nats();
        let parts = gaussian_kl(&to_cov(&x1), &to_cov(&y1)).unwrap().nats()
            + gaussian_kl(&to_cov(&x2), &to_cov(&y2)).unwrap().nats();
        assert!((whole - parts).abs() <= 1e-10 * parts.max(1.0));
    }
}

#[test]
fn invariant_under_joint_orthogonal_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let sx = random_spd(&mut rng, 6, 0.4);
        let sy = random_spd(&mut rng, 6, 0.4);
        let q = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let rx = &q * &sx * q.transpose();
        let ry = &q * &sy * q.transpose();
        let a = gaussian_kl(&to_cov(&sx), &to_cov(&sy)).unwrap().nats();
        let b = gaussian_kl(&to_cov(&rx), &to_cov(&ry)).unwrap().nats();
        assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }
}

#[test]
fn depends_only_on_covariance_not_on_factorization() {
    // Σ_y = A Aᵀ = (A Q)(A Q)ᵀ for orthogonal Q
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sx = random_spd(&mut rng, 5, 0.5);
    let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
    let q = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let aq = &a * &q;
    let y1 = &a * a.transpose() + DMatrix::identity(5, 5);
    let y2 = &aq * aq.transpose() + DMatrix::identity(5, 5);
    let k1 = gaussian_kl(&to_cov(&sx), &to_cov(&y1)).unwrap().nats();
    let k2 = gaussian_kl(&to_cov(&sx), &to_cov(&y2)).unwrap().nats();
    assert!((k1 - k2).abs() <= 1e-10 * k1);
}

#[test]
fn scalar_form_equals_one_by_one_matrix() {
    for (vx, vy) in [(1.0, 2.0), (4.0, 2.0), (0.3, 7.5), (1e-3, 1e-3)] {
        let m = gaussian_kl(&CovarianceMatrix::diagonal(&[vx]).unwrap(), &CovarianceMatrix::diagonal(&[vy]).unwrap()).unwrap();
        let s = scalar_gaussian_kl(vx, vy).unwrap();
        assert!((m.nats() - s.nats()).abs() <= 1e-14);
    }
}

fn grid() -> FrequencyGrid {
    FrequencyGrid::new(512).unwrap()
}

fn positive_spectrum() -> impl Strategy<Value = SpectrumSamples> {
    (-0.95..0.95f64, 0.01..5.0f64, 0.0..2.0f64).prop_map(|(pole, gain, floor)| {
        SpectrumSamples::from_fn(grid(), |w| floor + gain / (1.0 + pole * pole - 2.0 * pole * w.cos())).unwrap()
    })
}

proptest! {
    #[test]
    fn divergences_are_nonnegative(a in positive_spectrum(), b in positive_spectrum()) {
        prop_assert!(itakura_saito(&a, &b).unwrap().nats() >= 0.0);
        prop_assert!(kl_rate(&a, &b).unwrap().nats() >= 0.0);
        prop_assert_eq!(itakura_saito(&a, &a).unwrap().nats(), 0.0);
    }

    #[test]
    fn kl_rate_is_half_is_distance(a in positive_spectrum(), b in positive_spectrum()) {
        let kl = kl_rate(&a, &b).unwrap().nats();
        let is = itakura_saito(&a, &a.try_add(&b).unwrap()).unwrap().nats();
        prop_assert!((kl - 0.5 * is).abs() <= 1e-12 * kl.max(1.0));
    }

    #[test]
    fn gaussian_kl_nonnegative(seed in any::<u64>(), m in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sx = random_spd(&mut rng, m, 0.2);
        let sy = random_spd(&mut rng, m, 0.2);
        prop_assert!(gaussian_kl(&to_cov(&sx), &to_cov(&sy)).unwrap().nats() >= 0.0);
        prop_assert!(gaussian_kl(&to_cov(&sx), &to_cov(&sx)).unwrap().nats() < 1e-12);
    }
}

/// Block KL per sample converges to the spectral KL rate.
#[test]
fn toeplitz_block_kl_converges_to_rate() {
    let g = FrequencyGrid::new(2048).unwrap();
    let sy = SpectrumSamples::ar1(g, 0.5, 0.75).unwrap();
    let sn = SpectrumSamples::from_fn(g, |w| 0.4 / (1.0 + 0.09 + 0.6 * w.cos())).unwrap();
    let syhat = sy.try_add(&sn).unwrap();
    let rate = kl_rate(&sy, &sn).unwrap().nats();

    let mut last = f64::INFINITY;
    for k in [31, 127, 511] {
        let block = gaussian_kl(&toeplitz_covariance(&sy, k).unwrap(), &toeplitz_covariance(&syhat, k).unwrap())
            .unwrap()
            .nats();
        let rel = (block / (k + 1) as f64 - rate).abs() / rate;
        assert!(rel < last, "k={k}: {rel} not below {last}");
        last = rel;
    }
    assert!(last <= 0.01, "k=511 relative error {last}");
}
