//! Randomized invariants for the pieces everything else leans on: the
//! projection, the shifted solves, the noise-grid coarsening contract, and
//! the deterministic ensemble reduction.

use ltpe::estimate::{fit_rate, ChunkStats, EnsembleStats};
use ltpe::linop::{apply_shifted, ShiftedSolver};
use ltpe::model::SpectralOperator;
use ltpe::paths::{BrownianGrid, NoiseSource};
use ltpe::scheme::{project, projection_radius};
use proptest::prelude::*;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A state vector with entries large enough to land well outside typical
/// projection radii and small enough to stay exact in squares.
fn state(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e6f64..1.0e6, dim..=dim)
}

fn dim_and_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|d| (state(d), state(d)))
}

/// Negative-definite operators across all four storage structures.
fn operator() -> impl Strategy<Value = SpectralOperator> {
    let scalar = (-50.0f64..-0.01).prop_map(|a| SpectralOperator::scalar(a).unwrap());
    let diagonal = prop::collection::vec(-50.0f64..-0.01, 1..=6)
        .prop_map(|d| SpectralOperator::diagonal(d).unwrap());
    let tridiag = (-50.0f64..-5.0, -2.0f64..2.0, 2usize..=8).prop_map(|(diag, off, dim)| {
        // |diag| > 2|off| keeps the whole Toeplitz spectrum negative.
        SpectralOperator::tridiagonal_toeplitz(diag, off, dim).unwrap()
    });
    let dense = (2usize..=4)
        .prop_flat_map(|d| (Just(d), prop::collection::vec(-1.0f64..1.0, d * d..=d * d)))
        .prop_map(|(d, b)| {
            // -B^T B - I/10 is symmetric negative definite for any B.
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += b[k * d + i] * b[k * d + j];
                    }
                    a[i * d + j] = -s - if i == j { 0.1 } else { 0.0 };
                }
            }
            SpectralOperator::dense_symmetric(a, d).unwrap()
        });
    prop_oneof![scalar, diagonal, tridiag, dense]
}

proptest! {
    #[test]
    fn projected_states_stay_inside_the_radius(
        x in (1usize..=6).prop_flat_map(state),
        h in 1.0e-6f64..1.0,
        gamma in 1.0f64..4.0,
    ) {
        let r = projection_radius(h, gamma);
        let p = project(&x, h, gamma);
        prop_assert!(norm(&p) <= r * (1.0 + 1e-12));
    }

    #[test]
    fn projection_is_nonexpansive(
        (x, y) in dim_and_pair(),
        h in 1.0e-6f64..1.0,
        gamma in 1.0f64..4.0,
    ) {
        let px = project(&x, h, gamma);
        let py = project(&y, h, gamma);
        let dist: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let pdist: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&pdist) <= norm(&dist) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn projection_is_idempotent(
        x in (1usize..=6).prop_flat_map(state),
        h in 1.0e-6f64..1.0,
        gamma in 1.0f64..4.0,
    ) {
        let once = project(&x, h, gamma);
        let twice = project(&once, h, gamma);
        for (a, b) in once.iter().zip(&twice) {
            // Re-projection may shave at most a couple of ulps off the norm.
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
        }
    }

    #[test]
    fn states_inside_the_ball_are_fixed_points(
        x in (1usize..=4).prop_flat_map(state),
        h in 1.0e-6f64..1.0,
        gamma in 1.0f64..4.0,
    ) {
        let r = projection_radius(h, gamma);
        let scale = 0.999 * r / norm(&x).max(1e-300);
        if scale >= 1.0 {
            prop_assert_eq!(project(&x, h, gamma), x);
        } else {
            let inside: Vec<f64> = x.iter().map(|v| v * scale).collect();
            prop_assert_eq!(project(&inside, h, gamma), inside);
        }
    }

    #[test]
    fn shifted_solves_round_trip(
        op in operator(),
        theta in 0.0f64..=1.0,
        h in 1.0e-4f64..1.0,
        raw in prop::collection::vec(-100.0f64..100.0, 1..=8),
    ) {
        let d = op.dim();
        let b: Vec<f64> = (0..d).map(|i| raw[i % raw.len()]).collect();
        let solver = ShiftedSolver::new(&op, theta, h).unwrap();
        let y = solver.solve(&b).unwrap();
        let mut back = vec![0.0; d];
        apply_shifted(&op, theta, h, &y, &mut back).unwrap();
        let scale = norm(&b).max(1.0);
        for (got, want) in back.iter().zip(&b) {
            prop_assert!(
                (got - want).abs() <= 1e-8 * scale,
                "solve round trip off: |{got} - {want}| on {}", op.structure_name()
            );
        }
    }

    #[test]
    fn coarsening_routes_agree_bitwise(
        seed in any::<u64>(),
        trajectory in 0u64..1000,
        noise_dim in 1usize..=3,
        a in 0u32..=3,
        b in 0u32..=3,
        extra in 0u32..=2,
    ) {
        let n_steps = 1usize << (a + b + extra);
        let h = 0.25;
        let fine =
            BrownianGrid::for_trajectory(seed, trajectory, noise_dim, n_steps as f64 * h, h)
                .unwrap();
        let one_hop = fine.coarsen(1 << (a + b)).unwrap();
        let two_hops = fine.coarsen(1 << a).unwrap().coarsen(1 << b).unwrap();
        prop_assert_eq!(one_hop.n_steps(), two_hops.n_steps());
        prop_assert_eq!(one_hop.h().to_bits(), two_hops.h().to_bits());
        for step in 0..one_hop.n_steps() {
            for comp in 0..noise_dim {
                prop_assert_eq!(
                    one_hop.increment(step, comp).to_bits(),
                    two_hops.increment(step, comp).to_bits()
                );
            }
        }
    }

    #[test]
    fn chunked_reduction_ignores_merge_grouping(
        values in prop::collection::vec(-1.0e3f64..1.0e3, 6..60),
        n_obs in 1usize..=3,
    ) {
        let mut chunks = vec![ChunkStats::new(n_obs), ChunkStats::new(n_obs), ChunkStats::new(n_obs)];
        for (i, window) in values.chunks_exact(n_obs).enumerate() {
            chunks[i % 3].record(window);
        }

        let stats = |order: &[usize]| {
            let mut acc = EnsembleStats::new(n_obs);
            for &k in order {
                acc.insert_chunk(k, chunks[k].clone()).unwrap();
            }
            acc
        };
        let left = stats(&[0, 1]).merge(stats(&[2])).unwrap();
        let right = stats(&[0]).merge(stats(&[2, 1])).unwrap();

        prop_assert_eq!(left.count(), right.count());
        for i in 0..n_obs {
            prop_assert_eq!(left.mean(i).to_bits(), right.mean(i).to_bits());
            prop_assert_eq!(left.variance(i).to_bits(), right.variance(i).to_bits());
            prop_assert_eq!(left.half_width(i).to_bits(), right.half_width(i).to_bits());
        }
    }

    #[test]
    fn rate_fits_recover_exact_power_laws(
        slope in -2.5f64..2.5,
        log2_c in -3.0f64..3.0,
        k_lo in 2u32..=4,
        extra in 2u32..=5,
    ) {
        let c = log2_c.exp2();
        let points: Vec<(f64, f64)> = (k_lo..k_lo + extra)
            .map(|k| {
                let h = (-(k as f64)).exp2();
                (h, c * h.powf(slope))
            })
            .collect();
        let fit = fit_rate(&points).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-8);
        prop_assert!(fit.r2 >= 1.0 - 1e-10);
    }
}
