use powercal_core::baselines::{build_rmap, build_sam, mixture_posterior, Conjugate, Endpoint};
use powercal_core::models::{BinomialData, GaussianEffect};
use powercal_core::numerics::{log_binomial_coef, purpose, RngStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution};

const UNIFORM: Conjugate = Conjugate::Beta { a: 1.0, b: 1.0 };

// E_θ[Binomial(y | n, θ)] for θ ~ Beta(a, b), with its standard error
fn mc_marginal(y: u64, n: u64, a: f64, b: f64, rng: &mut ChaCha20Rng) -> (f64, f64) {
    let beta = Beta::new(a, b).unwrap();
    let lc = log_binomial_coef(n, y);
    let draws = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let t: f64 = beta.sample(rng);
        let v = (lc + y as f64 * t.ln() + (n - y) as f64 * (1.0 - t).ln()).exp();
        s += v;
        s2 += v * v;
    }
    let m = s / draws as f64;
    (m, ((s2 / draws as f64 - m * m) / draws as f64).sqrt())
}

#[test]
fn mixture_weights_match_monte_carlo_marginals() {
    let hist = Endpoint::Binomial(BinomialData::new(20, 100).unwrap());
    let cur = Endpoint::Binomial(BinomialData::new(20, 100).unwrap());
    let prior = build_rmap(&hist, 0.5, UNIFORM).unwrap();
    let (post, _) = mixture_posterior(&prior, &cur, &RngStream::new(3, [0, 0, purpose::MIXTURE_DRAWS])).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (m0, s0) = mc_marginal(20, 100, 1.0, 1.0, &mut rng);
    let (m1, s1) = mc_marginal(20, 100, 21.0, 81.0, &mut rng);
    let w = m1 / (m0 + m1);
    // delta-method SE of the ratio
    let se = ((m0 * s1).powi(2) + (m1 * s0).powi(2)).sqrt() / (m0 + m1).powi(2);
    assert!((post.informative_weight() - w).abs() < 3.0 * se, "{} vs {w} ± {se}", post.informative_weight());
}

#[test]
fn rmap_posterior_mean_lies_between_components() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for i in 0..20 {
        let n0 = rng.random_range(10..200u64);
        let n = rng.random_range(10..200u64);
        let hist = Endpoint::Binomial(BinomialData::new(rng.random_range(0..=n0), n0).unwrap());
        let cur = Endpoint::Binomial(BinomialData::new(rng.random_range(0..=n), n).unwrap());
        let prior = build_rmap(&hist, 0.5, UNIFORM).unwrap();
        let (post, _) = mixture_posterior(&prior, &cur, &RngStream::new(i, [0, 0, purpose::MIXTURE_DRAWS])).unwrap();
        let (a, b) = (post.components[0].prior.mean(), post.components[1].prior.mean());
        let m = post.mean();
        assert!(m >= a.min(b) - 1e-12 && m <= a.max(b) + 1e-12);
        assert!((post.components.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gaussian_sam_is_symmetric_in_the_shift() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    for _ in 0..20 {
        let m0: f64 = rng.random_range(-2.0..2.0);
        let vague = Conjugate::Normal { mean: 0.0, variance: 100.0 };
        let hist = Endpoint::Gaussian(GaussianEffect::new(m0, 1.0).unwrap());
        let cur = Endpoint::Gaussian(GaussianEffect::new(m0, 0.3).unwrap());
        let sam = build_sam(&hist, &cur, 1.0, vague).unwrap();
        let mirrored = build_sam(
            &Endpoint::Gaussian(GaussianEffect::new(-m0, 1.0).unwrap()),
            &Endpoint::Gaussian(GaussianEffect::new(-m0, 0.3).unwrap()),
            1.0,
            vague,
        )
        .unwrap();
        assert_eq!(sam.informative_weight(), mirrored.informative_weight());
    }
}
