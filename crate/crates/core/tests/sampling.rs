use nsim_core::noise::{build_distribution, load_trace, normalize_min, top_fraction, Side};
use nsim_core::{EmpiricalDistribution, SampleTrace, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-sample KS distance between draws and the source samples, computed by
/// merging the two sorted lists.
fn ks_distance(draws: &mut [f64], source: &[f64]) -> f64 {
    draws.sort_by(f64::total_cmp);
    let mut src = source.to_vec();
    src.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0f64);
    while i < draws.len() && j < src.len() {
        let x = draws[i].min(src[j]);
        while i < draws.len() && draws[i] == x {
            i += 1;
        }
        while j < src.len() && src[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / draws.len() as f64 - j as f64 / src.len() as f64).abs());
    }
    d
}

#[test]
fn draws_follow_source_ecdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let smooth: Vec<f64> = (0..5000).map(|_| 1500.0 + rng.gen::<f64>().powi(3) * 800.0).collect();
    let two_point: Vec<f64> = (0..1000).map(|i| if i < 990 { 2000.0 } else { 20_000.0 }).collect();
    let mut spiked = vec![1800.0; 999];
    spiked.push(1800.0 * 1e4);
    for source in [smooth, two_point, spiked] {
        let dist = EmpiricalDistribution::new(source.clone(), Unit::Nanoseconds).unwrap();
        let mut draws: Vec<f64> = (0..100_000).map(|_| dist.sample(rng.gen()).unwrap()).collect();
        assert!(draws.iter().all(|v| source.contains(v)));
        let d = ks_distance(&mut draws, &source);
        assert!(d <= 0.01, "KS distance {d}");
    }
}

#[test]
fn trace_file_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lat.csv");
    let trace = SampleTrace::from_values(vec![4.0, 2.0, 8.0, 2.0, 6.0], Unit::Nanoseconds).unwrap();
    trace.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_trace(&path, Unit::Nanoseconds).unwrap();
    assert_eq!(back, trace);
    assert!(load_trace(&path, Unit::Gbps).is_err());
    assert!(load_trace(dir.path().join("missing.csv"), Unit::Nanoseconds).is_err());

    let norm = normalize_min(&back).unwrap();
    assert_eq!(norm.values().collect::<Vec<_>>(), vec![2.0, 1.0, 4.0, 1.0, 3.0]);
    let top = top_fraction(&back, 0.4, Side::Largest).unwrap();
    assert_eq!(top.values().collect::<Vec<_>>(), vec![8.0, 6.0]);
    let dist = build_distribution(&back).unwrap();
    assert_eq!(dist.samples(), &[2.0, 2.0, 4.0, 6.0, 8.0]);
}
