use carleson_core::gramian::*;
use carleson_core::kernel::{Domain, KernelSpec, C64};
use carleson_core::linalg::{CMatrix, PowerOptions};
use carleson_core::sequence::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn binary_round_trip_is_exact() {
    let profile = CountingProfile::exponential(Domain::Polydisc(2), 1.0, 0.8, 4).unwrap();
    let seq = sample_polydisc(&profile, &SampleConfig::default(), 3).unwrap();
    for spec in [KernelSpec::szego(2).unwrap(), KernelSpec::dirichlet(0.4, 2).unwrap()] {
        let g = build_gram(&spec, &seq).unwrap();
        let mut buf = Vec::new();
        write_gram(&g, &mut buf).unwrap();
        let back = read_gram(buf.as_slice()).unwrap();
        assert_eq!(back.entries(), g.entries());
        assert_eq!(back.spec(), g.spec());
        buf.truncate(buf.len() - 3);
        assert!(read_gram(buf.as_slice()).is_err());
    }
}

#[test]
fn dense_and_matrix_free_norms_agree() {
    let opts = PowerOptions { tol: 1e-12, ..PowerOptions::default() };
    let cases = [
        (KernelSpec::szego(1).unwrap(), Domain::Polydisc(1), 0.9, 9),
        (KernelSpec::szego(2).unwrap(), Domain::Polydisc(2), 0.5, 5),
        (KernelSpec::besov_sobolev(0.5, 2).unwrap(), Domain::Ball(2), 1.0, 6),
    ];
    for (spec, domain, beta, depth) in cases {
        let profile = CountingProfile::exponential(domain, 1.0, beta, depth).unwrap();
        let seq = match domain {
            Domain::Polydisc(_) => sample_polydisc(&profile, &SampleConfig::default(), 1).unwrap(),
            Domain::Ball(_) => sample_ball(&profile, &SampleConfig::default(), 1).unwrap(),
        };
        let dense = sequence_gram_norm(&spec, &seq, &opts, usize::MAX).unwrap();
        let free = sequence_gram_norm(&spec, &seq, &opts, 0).unwrap();
        assert!(dense.converged && free.converged);
        assert!((dense.value - free.value).abs() < 1e-8 * dense.value, "{spec:?}");
        assert!(dense.value >= 1.0);
    }
}

fn random_psd_unit_diagonal(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let k = 1 + rng.gen_range(0..n);
    let v = CMatrix::from_fn(n, k, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let mut h = &v * v.adjoint();
    let d: Vec<f64> = (0..n).map(|i| h[(i, i)].re.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] /= d[i] * d[j];
        }
    }
    h
}

#[test]
fn schur_multipliers_with_unit_diagonal_are_contractive() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let h = random_psd_unit_diagonal(&mut rng, n);
        let (prod, norm) = schur_multiplier_norms(&a, &h).unwrap();
        assert!(prod <= norm + 1e-10, "{prod} > {norm}");
    }
}

#[test]
fn ball_gramian_factors_through_schur_products() {
    let d = 3;
    let profile = CountingProfile::exponential(Domain::Ball(d), 1.0, 1.0, 5).unwrap();
    let seq = sample_ball(&profile, &SampleConfig::default(), 2).unwrap().prefix(20);
    let report = ball_schur_factor_check(&seq, d as f64 / 2.0, &PowerOptions::default()).unwrap();
    assert!(report.max_factor_error < 1e-10);
    assert!(report.norm_bound_holds);
}

#[test]
fn expected_entries_match_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [1usize, 2] {
        let rn: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..0.95)).collect();
        let rj: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..0.95)).collect();
        let want = expected_sq_entry_szego(&rn, &rj).unwrap().exact;
        let trials = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let mut v = 1.0;
            for i in 0..d {
                let z = C64::from_polar(rn[i] * rj[i], rng.gen::<f64>() * std::f64::consts::TAU);
                v *= (1.0 - rn[i] * rn[i]) * (1.0 - rj[i] * rj[i]) / (C64::new(1.0, 0.0) - z).norm_sqr();
            }
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / trials as f64;
        let se = ((sum_sq / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - want).abs() < 4.0 * se, "d={d}: {mean} vs {want}");
    }
}
