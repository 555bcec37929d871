//! Property tests for the algebraic invariants of the design objects and
//! the backfitting update: norm axioms, centering projections, shrinkage
//! geometry, pooling linearity, and exact equivariance under covariate
//! relabeling.

use backfit::curve::ComponentCurve;
use backfit::design::DesignField;
use backfit::grid::EvalGrid;
use backfit::kernel::{Bandwidths, BaselineKernel};
use backfit::sample::Sample;
use backfit::sbf::{component_update, fit, FitConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sample(n: usize, d: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            cols.iter().enumerate().map(|(j, c)| (j as f64 + 1.0) * (c[i] - 0.5)).sum::<f64>()
                + 0.3 * (rng.gen::<f64>() - 0.5)
        })
        .collect();
    Sample::new(cols, y).unwrap()
}

fn random_curve(len: usize, rng: &mut ChaCha8Rng) -> ComponentCurve {
    ComponentCurve {
        value: (0..len).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect(),
        deriv: (0..len).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect(),
    }
}

fn shared_design(seed: u64) -> DesignField {
    let s = random_sample(40, 1, seed);
    let bw = Bandwidths::uniform(0.2, 1).unwrap();
    DesignField::from_sample(&s, &bw, &EvalGrid::new(101).unwrap(), BaselineKernel::Epanechnikov)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_triangle_and_homogeneity(seed in 0u64..1000, t in -3.0f64..3.0) {
        let de = shared_design(7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_curve(101, &mut rng);
        let b = random_curve(101, &mut rng);
        let sum = a.add(&b);
        let na = de.tuple_norm(0, &a);
        let nb = de.tuple_norm(0, &b);
        let ns = de.tuple_norm(0, &sum);
        prop_assert!(ns <= na + nb + 1e-12);
        let scaled = a.scale(t);
        prop_assert!((de.tuple_norm(0, &scaled) - t.abs() * na).abs() <= 1e-12 * (1.0 + na));
    }

    #[test]
    fn centering_is_an_idempotent_linear_projection(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let de = shared_design(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_curve(101, &mut rng);
        let b = random_curve(101, &mut rng);

        let ca = de.center_constraint(0, &a).unwrap();
        prop_assert!(de.pi00_constant(0, &ca).abs() <= 1e-12);
        let twice = de.center_constraint(0, &ca).unwrap();
        for g in 0..101 {
            prop_assert!((twice.value[g] - ca.value[g]).abs() <= 1e-12);
        }

        let combo = a.scale(alpha).add(&b.scale(beta));
        let c_combo = de.center_constraint(0, &combo).unwrap();
        let cb = de.center_constraint(0, &b).unwrap();
        let lin = ca.scale(alpha).add(&cb.scale(beta));
        for g in 0..101 {
            prop_assert!((c_combo.value[g] - lin.value[g]).abs() <= 1e-10);
            prop_assert!((c_combo.deriv[g] - lin.deriv[g]).abs() <= 1e-10);
        }
    }

    #[test]
    fn shrinkage_follows_the_soft_threshold_identity(seed in 0u64..200, frac in 0.0f64..1.5) {
        let s = random_sample(35, 2, seed);
        let bw = Bandwidths::uniform(0.25, 2).unwrap();
        let de = DesignField::from_sample(
            &s,
            &bw,
            &EvalGrid::new(101).unwrap(),
            BaselineKernel::Epanechnikov,
        )
        .unwrap();
        let zeros = vec![ComponentCurve::zeros(101); 2];
        let base_cfg = FitConfig { lambda: 0.0, ..FitConfig::default() };
        let stage1 = component_update(0, &zeros, &de, None, &base_cfg).unwrap();
        let nu = de.tuple_norm(0, &stage1);
        prop_assume!(nu > 1e-6);

        let lam = frac * nu;
        let cfg = FitConfig { lambda: lam, ..FitConfig::default() };
        let updated = component_update(0, &zeros, &de, None, &cfg).unwrap();
        let expect = (nu - lam).max(0.0);
        prop_assert!(
            (de.tuple_norm(0, &updated) - expect).abs() <= 1e-10,
            "norm {} expected {expect}",
            de.tuple_norm(0, &updated)
        );
        if lam >= nu {
            prop_assert!(updated.is_zero());
        }
    }

    #[test]
    fn relabeling_covariates_permutes_the_fit_bitwise(
        seed in 0u64..500,
        d in 2usize..5,
        lambda in 0.0f64..0.15,
    ) {
        let n = 30;
        let s = random_sample(n, d, seed);
        let bws: Vec<f64> = (0..d).map(|j| 0.15 + 0.05 * j as f64).collect();
        let bw = Bandwidths::new(bws.clone()).unwrap();
        let cfg = FitConfig { lambda, ..FitConfig::default() };
        let base = fit(&s, &bw, &cfg, None).unwrap();

        let mut perm: Vec<usize> = (0..d).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        perm.shuffle(&mut rng);
        let mut inv = vec![0usize; d];
        for (k, &j) in perm.iter().enumerate() {
            inv[j] = k;
        }

        let permuted = s.permute_columns(&perm).unwrap();
        let bw_p = Bandwidths::new(perm.iter().map(|&j| bws[j]).collect()).unwrap();
        let cfg_p = FitConfig {
            update_order: Some(inv.clone()),
            ..cfg
        };
        let fit_p = fit(&permuted, &bw_p, &cfg_p, None).unwrap();

        prop_assert_eq!(fit_p.intercept, base.intercept);
        for k in 0..d {
            prop_assert_eq!(&fit_p.components[k].value, &base.components[perm[k]].value);
            prop_assert_eq!(&fit_p.components[k].deriv, &base.components[perm[k]].deriv);
        }
        let mut mapped: Vec<usize> = base.active_set.iter().map(|&j| inv[j]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, fit_p.active_set.clone());
    }
}

#[test]
fn pooled_moments_are_the_weighted_sum_of_population_moments() {
    let a = random_sample(25, 2, 91);
    let b = random_sample(40, 2, 92);
    let bw = Bandwidths::new(vec![0.2, 0.3]).unwrap();
    let grid = EvalGrid::new(101).unwrap();
    let (wa, wb) = (0.3, 0.7);
    let pooled =
        DesignField::pooled(&[(wa, &a), (wb, &b)], &bw, &grid, BaselineKernel::Epanechnikov)
            .unwrap();
    let da = DesignField::from_sample(&a, &bw, &grid, BaselineKernel::Epanechnikov).unwrap();
    let db = DesignField::from_sample(&b, &bw, &grid, BaselineKernel::Epanechnikov).unwrap();

    for j in 0..2 {
        for g in 0..grid.len() {
            for t in 0..3 {
                let expect = wa * da.mjj(j)[g][t] + wb * db.mjj(j)[g][t];
                assert!(
                    (pooled.mjj(j)[g][t] - expect).abs() <= 1e-12,
                    "entry {t} of covariate {j} at node {g}"
                );
            }
            for t in 0..2 {
                let expect = wa * da.mnum(j)[g][t] + wb * db.mnum(j)[g][t];
                assert!((pooled.mnum(j)[g][t] - expect).abs() <= 1e-12);
            }
        }
    }
}
