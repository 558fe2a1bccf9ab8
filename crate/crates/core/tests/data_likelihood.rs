use lifetail::sampling::sample_elife;
use lifetail::{loglik, to_exceedances, Dataset, ExceedanceConfig, Family, LifetimeRecord, ParamVector, SamplingScheme};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record() -> impl Strategy<Value = LifetimeRecord> {
    (0..3u8, 0.1f64..8.0, 0.1f64..3.0, prop::option::of(0.0f64..1.0), prop::option::of(0.0f64..5.0), 0.5f64..3.0).prop_map(
        |(kind, t, width, lt, rt, w)| {
            let r = match kind {
                0 => LifetimeRecord::observed(t),
                1 => LifetimeRecord::right_censored(t),
                _ => LifetimeRecord::interval(t, t + width),
            };
            let lower = lt.map_or(f64::NEG_INFINITY, |f| f * t);
            // right truncation cannot accompany right censoring
            let upper = match (kind, rt) {
                (1, _) | (_, None) => f64::INFINITY,
                (_, Some(x)) => r.time2 + x,
            };
            r.with_truncation(lower, upper).with_weight(w)
        },
    )
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(record(), 1..25).prop_filter_map("invalid dataset", |v| Dataset::new(v).ok())
}

fn gp() -> ParamVector {
    ParamVector::new(Family::Gp, vec![2.0, 0.1]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn zero_threshold_is_identity_on_times(d in dataset()) {
        let recs = d.records.iter().map(|r| {
            let lower = r.ltrunc1.min(0.0);
            r.clone().with_truncation(lower, r.rtrunc1)
        });
        let d = Dataset::new(recs.collect()).unwrap();
        let x = to_exceedances(&d, &ExceedanceConfig::new(0.0)).unwrap();
        prop_assert_eq!(x.records.len(), d.records.len());
        for (a, b) in x.records.iter().zip(&d.records) {
            prop_assert_eq!(a.time1, b.time1.max(0.0));
            prop_assert_eq!(a.time2, b.time2);
            prop_assert_eq!(a.weight, b.weight);
        }
    }

    #[test]
    fn exceedances_are_idempotent(d in dataset(), u in 0.0f64..6.0) {
        let cfg = ExceedanceConfig::new(u);
        let Ok(x) = to_exceedances(&d, &cfg) else { return Ok(()) };
        let y = to_exceedances(&x, &cfg).unwrap();
        prop_assert_eq!(x.records, y.records);
    }

    #[test]
    fn exceedance_weight_decreases_with_threshold(d in dataset(), u1 in 0.0f64..6.0, du in 0.0f64..3.0) {
        let w = |u: f64| to_exceedances(&d, &ExceedanceConfig::new(u)).map(|x| x.total_weight());
        // a threshold that splits an interval-censored record is rejected rather than guessed
        let (Ok(a), b) = (w(u1), w(u1 + du)) else { return Ok(()) };
        let b = match b {
            Ok(b) => b,
            Err(lifetail::Error::NoExceedances(_)) | Err(lifetail::Error::Threshold(_)) => 0.0,
            Err(_) => return Ok(()),
        };
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn weight_splitting_leaves_loglik_unchanged(d in dataset(), k in 0usize..25) {
        let k = k % d.records.len();
        let mut recs = d.records.clone();
        let half = recs[k].weight / 2.0;
        recs[k].weight = half;
        recs.push(recs[k].clone());
        let split = Dataset::new(recs).unwrap();
        let (a, b) = (loglik(&d, &gp()), loglik(&split, &gp()));
        prop_assert!(a == b || (a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn loglik_ignores_record_order(d in dataset(), seed in any::<u64>()) {
        let mut recs = d.records.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..recs.len()).rev() {
            recs.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (loglik(&d, &gp()), loglik(&Dataset::new(recs).unwrap(), &gp()));
        prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn trivial_truncation_is_exact(d in dataset()) {
        let plain = Dataset::new(d.records.iter().map(|r| r.clone().with_truncation(f64::NEG_INFINITY, f64::INFINITY)).collect()).unwrap();
        let zero = Dataset::new(d.records.iter().map(|r| r.clone().with_truncation(0.0, f64::INFINITY)).collect()).unwrap();
        prop_assert_eq!(loglik(&plain, &gp()), loglik(&zero, &gp()));
    }
}

#[test]
fn true_parameters_beat_perturbed_ones_on_average() {
    let p = ParamVector::new(Family::Gp, vec![1.5, -0.1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut wins = 0;
    for rep in 0..200 {
        let d = Dataset::new(sample_elife(200, &p, &SamplingScheme::none(), 500 + rep).unwrap()).unwrap();
        let q = p.with_values(vec![1.5 * rng.random_range(0.8..1.2), -0.1 + rng.random_range(-0.15..0.15)]).unwrap();
        if loglik(&d, &p) > loglik(&d, &q) {
            wins += 1;
        }
    }
    assert!(wins >= 150, "{wins} of 200");
}
