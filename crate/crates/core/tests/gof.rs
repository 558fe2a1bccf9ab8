use lifetail::fit::fit_exceedances;
use lifetail::gof::Reference;
use lifetail::sampling::sample_elife;
use lifetail::{emit_svg, plotting_positions, Dataset, Family, FitOptions, FitResult, ParamVector, PlotKind, SamplingScheme};
use proptest::prelude::*;

const KINDS: [PlotKind; 5] = [PlotKind::Pp, PlotKind::Qq, PlotKind::Tmd, PlotKind::Exp, PlotKind::Erp];

fn fitted(seed: u64, xi: f64) -> (Dataset, FitResult) {
    let p = ParamVector::new(Family::Gp, vec![1.0, xi]).unwrap();
    let scheme = SamplingScheme::ltrt(vec![0.0, 0.3, 0.6], vec![f64::INFINITY, 2.5, 4.0]);
    let d = Dataset::new(sample_elife(150, &p, &scheme, seed).unwrap()).unwrap();
    let fr = fit_exceedances(&d, Family::Gp, 0.0, &FitOptions { compute_se: false, ..FitOptions::default() }).unwrap();
    (d, fr)
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positions_are_sorted_and_on_their_scales(seed in any::<u64>(), xi in -0.3f64..0.3) {
        let (d, fr) = fitted(seed, xi);
        let end = fr.estimates.endpoint();
        for kind in KINDS {
            let pd = plotting_positions(&fr, &d, kind).unwrap();
            prop_assert!(!pd.is_empty());
            prop_assert_eq!(pd.x.len(), pd.y.len());
            prop_assert_eq!(pd.lower.len(), pd.x.len());
            prop_assert!(pd.lower.iter().zip(&pd.upper).all(|(l, u)| l <= u), "{kind:?} band");
            prop_assert!(pd.x.iter().chain(&pd.y).all(|v| v.is_finite()), "{kind:?} not finite");
            match kind {
                PlotKind::Pp | PlotKind::Erp => {
                    prop_assert!(pd.x.iter().chain(&pd.y).all(|v| (0.0..=1.0).contains(v)), "{kind:?} outside the unit square");
                }
                PlotKind::Qq => {
                    prop_assert!(pd.x.iter().chain(&pd.y).all(|&v| v >= 0.0 && v <= end), "quantile outside the support");
                }
                PlotKind::Exp => prop_assert!(pd.x.iter().chain(&pd.y).all(|&v| v >= 0.0)),
                PlotKind::Tmd => {}
            }
            if kind != PlotKind::Tmd {
                prop_assert!(nondecreasing(&pd.x) && nondecreasing(&pd.y), "{kind:?} not sorted");
            }
            let want = if kind == PlotKind::Tmd { Reference::Zero } else { Reference::Diagonal };
            prop_assert_eq!(pd.reference, want);
        }
    }
}

#[test]
fn svg_output_is_deterministic_and_well_formed() {
    let (d, fr) = fitted(3, 0.1);
    let dir = tempfile::tempdir().unwrap();
    for kind in KINDS {
        let pd = plotting_positions(&fr, &d, kind).unwrap();
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        emit_svg(&pd, &a).unwrap();
        emit_svg(&pd, &b).unwrap();
        let (sa, sb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
        assert_eq!(sa, sb);
        assert!(sa.trim_start().starts_with("<svg") || sa.trim_start().starts_with("<?xml"), "{kind:?}");
        assert!(sa.trim_end().ends_with("</svg>"));
        assert_eq!(sa.matches("<circle").count(), pd.len(), "{kind:?} points");
        assert!(sa.contains(&pd.xlab) && sa.contains(&pd.ylab));
    }
}
