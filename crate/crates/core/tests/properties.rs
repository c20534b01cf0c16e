use proptest::prelude::*;
use rand::Rng;

use powercal_core::baselines::{build_rmap, build_sam, mixture_posterior, Conjugate, Endpoint};
use powercal_core::bayesfactor::EvidenceCurve;
use powercal_core::cbf::{score_hypothesis, select};
use powercal_core::models::{BetaShape, BinomialData, BinomialNpp, GaussianEffect, GaussianNpp, NppModel};
use powercal_core::numerics::{
    empirical_fraction_at_or_below, empirical_survival_at, hpd_interval, integrate_unit_log, newton_maximize,
    Matrix, NewtonOptions, QuadratureRule, RngStream, TwiceDifferentiable, ln_beta,
};

fn half_step() -> impl Strategy<Value = f64> {
    (1u32..=12).prop_map(|k| k as f64 * 0.5)
}

fn shape() -> impl Strategy<Value = BetaShape> {
    (half_step(), half_step()).prop_map(|(a, b)| BetaShape::new(a, b).unwrap())
}

struct Quadratic {
    a: Matrix<f64>,
    m: Vec<f64>,
}

// -½ (x − m)ᵀ A (x − m)
impl TwiceDifferentiable<f64> for Quadratic {
    fn dim(&self) -> usize {
        self.m.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.m).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d.len() {
            for j in 0..d.len() {
                q += d[i] * self.a[(i, j)] * d[j];
            }
        }
        -0.5 * q
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.m.len();
        (0..n).map(|i| -(0..n).map(|j| self.a[(i, j)] * (x[j] - self.m[j])).sum::<f64>()).collect()
    }
    fn hessian(&self, _x: &[f64]) -> Matrix<f64> {
        self.a.scaled(-1.0)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_densities_integrate_to_one(s in shape()) {
        let (a, b, lb) = (s.eta(), s.nu(), ln_beta(s.eta(), s.nu()));
        let out = integrate_unit_log(|d: f64| (a - 1.0) * d.ln() + (b - 1.0) * (-d).ln_1p() - lb, &QuadratureRule::coarsest()).unwrap();
        prop_assert!(out.log_value.abs() < 1e-6, "{s}: {}", out.log_value);
    }

    #[test]
    fn hpd_width_grows_with_mass(xs in prop::collection::vec(-50.0..50.0f64, 10..200), m1 in 0.05..0.95f64, m2 in 0.05..0.95f64) {
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(hpd_interval(&xs, lo).unwrap().width() <= hpd_interval(&xs, hi).unwrap().width());
    }

    #[test]
    fn survival_and_cdf_are_complements(xs in prop::collection::vec(-5.0..5.0f64, 1..100), t in -6.0..6.0f64) {
        prop_assert_eq!(empirical_survival_at(&xs, t).unwrap() + empirical_fraction_at_or_below(&xs, t).unwrap(), 1.0);
    }

    #[test]
    fn newton_solves_quadratics_in_two_steps(
        l in prop::collection::vec(-1.0..1.0f64, 6),
        diag in prop::collection::vec(0.5..3.0f64, 3),
        m in prop::collection::vec(-10.0..10.0f64, 3),
    ) {
        // A = L Lᵀ with a positive diagonal
        let low = [[diag[0], 0.0, 0.0], [l[0], diag[1], 0.0], [l[1], l[2], diag[2]]];
        let a = Matrix::from_rows(
            &(0..3).map(|i| (0..3).map(|j| (0..3).map(|k| low[i][k] * low[j][k]).sum()).collect()).collect::<Vec<Vec<f64>>>(),
        )
        .unwrap();
        let q = Quadratic { a, m: m.clone() };
        let r = newton_maximize(&q, &[0.0; 3], &NewtonOptions::default()).unwrap();
        prop_assert!(r.iterations <= 2, "{} iterations", r.iterations);
        for (x, want) in r.mode.iter().zip(&m) {
            prop_assert!((x - want).abs() < 1e-10);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), key in any::<[u64; 3]>()) {
        let s = RngStream::new(seed, key);
        let a: Vec<u64> = (0..8).scan(s.rng(), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..8).scan(s.rng(), |r, _| Some(r.random())).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(s.derived_seed(), RngStream::new(seed, key).derived_seed());
    }

    #[test]
    fn full_borrowing_pools_binomial_data(n0 in 0u64..200, n in 0u64..200, f0 in 0.0..1.0f64, f in 0.0..1.0f64, p in half_step(), q in half_step()) {
        let (y0, y) = ((f0 * n0 as f64) as u64, (f * n as f64) as u64);
        let m = BinomialNpp::new(BinomialData::new(y0, n0).unwrap(), BetaShape::new(p, q).unwrap()).unwrap();
        let c = m.delta_curve(&BinomialData::new(y, n).unwrap()).unwrap();
        prop_assert_eq!(c.theta_posterior(1.0), ((y + y0) as f64 + p, ((n - y) + (n0 - y0)) as f64 + q));
        prop_assert_eq!(c.theta_posterior(0.0), (y as f64 + p, (n - y) as f64 + q));
    }

    #[test]
    fn gaussian_conditional_mean_moves_toward_history(m0 in -3.0..3.0f64, v0 in 0.1..3.0f64, m in -3.0..3.0f64, v in 0.1..3.0f64) {
        let model = GaussianNpp::new(GaussianEffect::new(m0, v0).unwrap()).unwrap();
        let c = model.delta_curve(&GaussianEffect::new(m, v).unwrap()).unwrap();
        let means: Vec<f64> = (0..=20).map(|k| c.mean_posterior(k as f64 / 20.0).0).collect();
        let pooled = (m / v + m0 / v0) / (1.0 / v + 1.0 / v0);
        prop_assert!((means[0] - m).abs() < 1e-12 && (means[20] - pooled).abs() < 1e-12);
        let sign = (m0 - m).signum();
        prop_assert!(means.windows(2).all(|w| sign * (w[1] - w[0]) >= -1e-15));
    }

    #[test]
    fn binomial_norm_const_is_non_increasing(n0 in 1u64..200, f0 in 0.0..1.0f64, p in half_step(), q in half_step()) {
        let m = BinomialNpp::new(BinomialData::new((f0 * n0 as f64) as u64, n0).unwrap(), BetaShape::new(p, q).unwrap()).unwrap();
        let c: Vec<f64> = (0..=50).map(|k| m.log_norm_const(k as f64 / 50.0).unwrap()).collect();
        prop_assert!(c.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{c:?}");
    }

    #[test]
    fn log_bf_differences_are_antisymmetric(y0 in 0u64..=60, y in 0u64..=60, a in shape(), b in shape()) {
        let m = BinomialNpp::new(BinomialData::new(y0, 60).unwrap(), BetaShape::UNIFORM).unwrap();
        let ev = EvidenceCurve::new(m.delta_curve(&BinomialData::new(y, 60).unwrap()).unwrap());
        let (la, lb) = (ev.log_marginal(a).unwrap().log_value, ev.log_marginal(b).unwrap().log_value);
        prop_assert!(((la - lb) + (lb - la)).abs() < 1e-12);
        prop_assert_eq!(ev.log_bf(a).unwrap().value, la - ev.null_log_marginal().unwrap().log_value);
    }

    #[test]
    fn selection_ignores_grid_order(
        entries in prop::collection::vec((shape(), -1.0..1.0f64, 0.0..1.0f64, 0.1..1.0f64), 1..8),
        seed in any::<u64>(),
    ) {
        let mut seen = std::collections::HashSet::new();
        let diags: Vec<_> = entries
            .iter()
            .filter(|e| seen.insert((e.0.eta().to_bits(), e.0.nu().to_bits())))
            .map(|&(s, obs, centre, spread)| {
                let reps: Vec<f64> = (0..60).map(|i| centre - 0.5 + spread * (i as f64 / 59.0) ).collect();
                score_hypothesis(s, obs, reps, 0.75).unwrap()
            })
            .collect();
        let (chosen, fell_back) = select(&diags);
        let best = diags.iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
        if best > 0.0 {
            prop_assert!(!fell_back);
            prop_assert_eq!(diags.iter().find(|d| d.shape == chosen).unwrap().score, best);
        } else {
            prop_assert!(fell_back && chosen == BetaShape::UNIFORM);
        }
        let mut shuffled = diags.clone();
        let mut rng = RngStream::new(seed, [0, 0, 99]).rng();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(select(&shuffled), (chosen, fell_back));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixture_posteriors_are_normalized_conjugate_updates(
        n0 in 5u64..100, f0 in 0.05..0.95f64, n in 5u64..100, f in 0.05..0.95f64, omega in 0.05..0.95f64,
    ) {
        let hist = Endpoint::Binomial(BinomialData::new((f0 * n0 as f64) as u64, n0).unwrap());
        let cur = Endpoint::Binomial(BinomialData::new((f * n as f64) as u64, n).unwrap());
        let vague = Conjugate::Beta { a: 1.0, b: 1.0 };
        for prior in [build_rmap(&hist, omega, vague).unwrap(), build_sam(&hist, &cur, 0.1, vague).unwrap()] {
            let (post, summary) = mixture_posterior(&prior, &cur, &RngStream::new(1, [0, 0, 4])).unwrap();
            prop_assert!((post.components.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs() < 1e-12);
            for (pc, c) in post.components.iter().zip(&prior.components) {
                prop_assert_eq!(pc.prior, cur.update(c.prior).unwrap().0);
            }
            let means: Vec<f64> = post.components.iter().map(|c| c.prior.mean()).collect();
            let (lo, hi) = (means[0].min(means[1]), means[0].max(means[1]));
            prop_assert!(post.mean() >= lo - 1e-12 && post.mean() <= hi + 1e-12);
            prop_assert!(summary.mean >= lo - 0.01 && summary.mean <= hi + 0.01);
        }
    }

    #[test]
    fn gaussian_sam_weight_is_mirror_symmetric(m0 in -2.0..2.0f64, v0 in 0.1..2.0f64, d in 0.0..2.0f64, v in 0.1..2.0f64, csd in 0.05..1.5f64) {
        let hist = Endpoint::Gaussian(GaussianEffect::new(m0, v0).unwrap());
        let vague = Conjugate::Normal { mean: 0.0, variance: 100.0 };
        let up = Endpoint::Gaussian(GaussianEffect::new(m0 + d, v).unwrap());
        let down = Endpoint::Gaussian(GaussianEffect::new(m0 - d, v).unwrap());
        let wu = build_sam(&hist, &up, csd, vague).unwrap().informative_weight();
        let wd = build_sam(&hist, &down, csd, vague).unwrap().informative_weight();
        // m0 ± d are mirror images only up to rounding
        prop_assert!((wu - wd).abs() <= 1e-12 * wu.max(1e-300), "{wu} vs {wd}");
        // centred current data: both branches tie, exactly
        let centred = Endpoint::Gaussian(GaussianEffect::new(m0, v).unwrap());
        let w = build_sam(&hist, &centred, csd, vague).unwrap().informative_weight();
        let flipped = Endpoint::Gaussian(GaussianEffect::new(-m0, v).unwrap());
        let mirrored = Endpoint::Gaussian(GaussianEffect::new(-m0, v0).unwrap());
        prop_assert_eq!(w, build_sam(&mirrored, &flipped, csd, vague).unwrap().informative_weight());
    }
}
