use carleson_core::kernel::{Domain, C64};
use carleson_core::sequence::*;

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn polydisc_angles_are_uniform() {
    let profile = CountingProfile::exponential(Domain::Polydisc(1), 1.0, 1.0, 11).unwrap();
    let seq = sample_polydisc(&profile, &SampleConfig::default(), 17).unwrap();
    let turns: Vec<f64> = seq.points().iter().map(|p| p.turns()[0]).collect();
    let n = turns.len() as f64;
    // 1% critical value of the KS statistic.
    assert!(ks_statistic(turns, |x| x) < 1.63 / n.sqrt());
}

#[test]
fn ball_directions_are_uniform_on_the_sphere() {
    let d = 3;
    let profile = CountingProfile::exponential(Domain::Ball(d), 1.0, 1.0, 10).unwrap();
    let seq = sample_ball(&profile, &SampleConfig::default(), 5).unwrap();
    // |ξ_1|^2 of a uniform point on the sphere of C^d is Beta(1, d - 1).
    let first: Vec<f64> = seq
        .points()
        .iter()
        .map(|p| p.coords()[0].norm_sqr() / p.norm().powi(2))
        .collect();
    let n = first.len() as f64;
    let stat = ks_statistic(first, |t| 1.0 - (1.0 - t).powi(d as i32 - 1));
    assert!(stat < 1.63 / n.sqrt(), "{stat}");
}

#[test]
fn region_counts_follow_the_profile() {
    let profile = CountingProfile::exponential(Domain::Polydisc(2), 1.0, 0.7, 6).unwrap();
    for placement in [RadiusPlacement::Midpoint, RadiusPlacement::UniformInBand] {
        let config = SampleConfig { placement, ..SampleConfig::default() };
        let seq = sample_polydisc(&profile, &config, 1).unwrap();
        assert_eq!(seq.len() as u64, profile.total_points());
        for (idx, n) in seq.region_counts() {
            assert_eq!(n, profile.count(&idx));
        }
        for (p, idx) in seq.points().iter().zip(seq.regions()) {
            assert_eq!(&region_of_point(p), idx);
        }
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let profile = CountingProfile::exponential(Domain::Ball(2), 1.0, 1.0, 6).unwrap();
    let a = sample_ball(&profile, &SampleConfig::default(), 9).unwrap();
    let b = sample_ball(&profile, &SampleConfig::default(), 9).unwrap();
    let c = sample_ball(&profile, &SampleConfig::default(), 10).unwrap();
    assert_eq!(a.points(), b.points());
    assert_ne!(a.points(), c.points());
}

#[test]
fn text_round_trip_is_exact() {
    let polydisc = CountingProfile::exponential(Domain::Polydisc(2), 1.5, 0.6, 5).unwrap();
    let ball = CountingProfile::exponential(Domain::Ball(3), 1.0, 1.0, 5).unwrap();
    let config = SampleConfig { placement: RadiusPlacement::UniformInBand, ..SampleConfig::default() };
    for seq in [
        sample_polydisc(&polydisc, &config, 4).unwrap(),
        sample_ball(&ball, &config, 4).unwrap(),
        RandomSequence::disc(&[C64::new(0.25, -0.5), C64::new(0.0, 0.0)]).unwrap(),
    ] {
        let text = sequence_to_text(&seq);
        let back = sequence_from_text(&text).unwrap();
        assert_eq!(back.points(), seq.points());
        assert_eq!(back.regions(), seq.regions());
        assert_eq!(back.seed(), seq.seed());
        assert_eq!(sequence_to_text(&back), text);
    }
}

#[test]
fn table_profile_round_trips_through_text() {
    let mut counts = std::collections::BTreeMap::new();
    counts.insert(DyadicIndex::new(vec![0, 1]), 2);
    counts.insert(DyadicIndex::new(vec![3, 0]), 5);
    let profile = CountingProfile::table(Domain::Polydisc(2), counts).unwrap();
    let seq = sample_polydisc(&profile, &SampleConfig::default(), 2).unwrap();
    let back = sequence_from_text(&sequence_to_text(&seq)).unwrap();
    assert_eq!(back.profile(), seq.profile());
}

#[test]
fn corrupted_text_is_rejected() {
    let seq = RandomSequence::disc(&[C64::new(0.6, 0.0)]).unwrap();
    let text = sequence_to_text(&seq);
    assert!(sequence_from_text(&text.replace("polydisc", "torus")).is_err());
    assert!(sequence_from_text(&text.replace("| 1", "| 4")).is_err());
    assert!(sequence_from_text("").is_err());
}
