mod common;

use atlc_core::margin::{linear_grid, margin, tau_star_scan};
use atlc_core::model::{AccModel, AccParams, State};
use atlc_core::robust_bounds::{make_box, BoundConfig};
use common::margin_structure;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn acc() -> AccModel {
    AccModel::new(AccParams::default()).unwrap()
}

#[test]
fn threshold_and_lipschitz_structure() {
    let mut rng = StdRng::seed_from_u64(5);
    let t = margin_structure(&mut rng, 20);
    assert_eq!(t.prefix_violations, 0, "{t:?}");
    assert_eq!(t.lipschitz_violations, 0, "{t:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tau_star_is_first_nonnegative_margin(z in 10.0f64..40.0, v in 5.0f64..30.0) {
        let m = acc();
        let bx = make_box(&State::acc(z, v).unwrap(), &[0.5; 2], &[0.5; 2]).unwrap();
        let grid = linear_grid(0.05, 2.0, 40);
        let map = tau_star_scan(&bx, &grid, &m, &BoundConfig::default()).unwrap();
        match map.tau_star {
            Some(star) => {
                let i = grid.iter().position(|t| *t == star).unwrap();
                prop_assert!(map.values[i] >= 0.0);
                prop_assert!(map.values[..i].iter().all(|v| *v < 0.0));
            }
            None => prop_assert!(map.values.iter().all(|v| *v < 0.0)),
        }
        for (t, v) in grid.iter().zip(&map.values) {
            let direct = margin(&bx, *t, &m, &BoundConfig::default()).unwrap();
            prop_assert_eq!(direct, *v);
        }
    }

    #[test]
    fn larger_braking_never_shrinks_margin(z in 10.0f64..40.0, v in 5.0f64..30.0, tau in 0.05f64..2.0) {
        let weak = AccModel::new(AccParams { decel_coeff: 0.3, ..AccParams::default() }).unwrap();
        let strong = AccModel::new(AccParams { decel_coeff: 1.2, ..AccParams::default() }).unwrap();
        let bx = make_box(&State::acc(z, v).unwrap(), &[0.5; 2], &[0.5; 2]).unwrap();
        let cfg = BoundConfig::default();
        prop_assert!(margin(&bx, tau, &strong, &cfg).unwrap() >= margin(&bx, tau, &weak, &cfg).unwrap());
    }
}
