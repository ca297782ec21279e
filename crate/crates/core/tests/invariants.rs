use std::sync::OnceLock;

use proptest::prelude::*;
use structsel_core::grid::{Field, GridSpec, Region};
use structsel_core::kernel::{enumerate_partitions, givens_rotation};
use structsel_core::observation::Observation;
use structsel_core::rng::standard_normal;
use structsel_core::selection::{argmin_first, empirical_quantile, geometric_grid, ThetaGrid, ThetaGridConfig};

fn small_grid() -> &'static ThetaGrid {
    static GRID: OnceLock<ThetaGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let spec = GridSpec::with_margin(2, 65).unwrap();
        let config = ThetaGridConfig {
            dim: 2,
            n_angles: 2,
            n_h: 2,
            h_floor_cells: Some(2.0),
            ..Default::default()
        };
        ThetaGrid::build(&config, 0.1, spec).unwrap()
    })
}

fn random_field(grid: GridSpec, seed: u64) -> Field {
    let values = (0..grid.len() as u64).map(|j| standard_normal(seed, j)).collect();
    Field::new(grid, values).unwrap()
}

fn bell(n: usize) -> usize {
    // Bell triangle
    let mut row = vec![1usize];
    for _ in 1..n {
        let mut next = vec![*row.last().unwrap()];
        for v in &row {
            next.push(next.last().unwrap() + v);
        }
        row = next;
    }
    *row.last().unwrap()
}

#[test]
fn partition_counts_are_bell_numbers() {
    for d in 1..=5 {
        assert_eq!(enumerate_partitions(d).len(), bell(d), "d = {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimates_are_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0usize..16) {
        let tg = small_grid();
        let bank = tg.bank();
        let t = t % bank.len();
        let g = *tg.grid();
        let (y1, y2) = (random_field(g, s1), random_field(g, s2));
        let mix: Vec<f64> = y1.values().iter().zip(y2.values()).map(|(u, v)| a * u + b * v).collect();
        let ym = Field::new(g, mix).unwrap();
        let e1 = bank.estimate(t, &Observation::exact(&y1), Region::Inner).unwrap();
        let e2 = bank.estimate(t, &Observation::exact(&y2), Region::Inner).unwrap();
        let em = bank.estimate(t, &Observation::exact(&ym), Region::Inner).unwrap();
        let scale = em.values.values().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for ((m, u), v) in em.values.values().iter().zip(e1.values.values()).zip(e2.values.values()) {
            prop_assert!((m - (a * u + b * v)).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn pair_estimates_are_symmetric(seed in any::<u64>(), t in 0usize..16, v in 0usize..16) {
        let tg = small_grid();
        let bank = tg.bank();
        let (t, v) = (t % bank.len(), v % bank.len());
        let obs = Observation::exact(&random_field(*tg.grid(), seed));
        let a = bank.estimate_pair(t, v, &obs, Region::Inner).unwrap();
        let b = bank.estimate_pair(v, t, &obs, Region::Inner).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn quantile_is_monotone_and_bracketed(values in prop::collection::vec(-1e3f64..1e3, 1..200), l1 in 0.01f64..1.0, l2 in 0.01f64..1.0) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let (q_lo, q_hi) = (empirical_quantile(&values, lo), empirical_quantile(&values, hi));
        prop_assert!(q_lo <= q_hi);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= q_lo && q_hi <= max);
        prop_assert!(values.contains(&q_hi));
    }

    #[test]
    fn argmin_takes_the_first_minimum(values in prop::collection::vec(0u8..5, 1..50)) {
        let f: Vec<f64> = values.iter().map(|v| *v as f64).collect();
        let min = *values.iter().min().unwrap();
        let first = values.iter().position(|v| *v == min).unwrap();
        prop_assert_eq!(argmin_first(&f), first);
    }

    #[test]
    fn geometric_grid_hits_endpoints(lo in 1e-4f64..0.1, span in 1.5f64..100.0, n in 2usize..12) {
        let hi = lo * span;
        let g = geometric_grid(lo, hi, n);
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], lo);
        prop_assert_eq!(g[n - 1], hi);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            prop_assert!((w[1] / w[0] - r).abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn rotations_are_orthogonal(a in prop::collection::vec(-3.2f64..3.2, 3)) {
        let e = givens_rotation(3, &a).unwrap();
        let id = e.transpose() * &e;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((id[(i, j)] - want).abs() < 1e-12);
            }
        }
        prop_assert!((e.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_is_reproducible(seed in any::<u64>()) {
        let g = GridSpec::with_margin(1, 33).unwrap();
        let a = Observation::noise(g, seed);
        let b = Observation::noise(g, seed);
        prop_assert_eq!(a.values().values(), b.values().values());
    }
}
