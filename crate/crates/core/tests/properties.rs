use approx::assert_relative_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use torsionlab_core::complex::ComplexSpec;
use torsionlab_core::exec::{deterministic_sum, Executor};
use torsionlab_core::geometry::{Character, FlatTorus};
use torsionlab_core::linalg::hermitian_eigenvalues;
use torsionlab_core::special::kronecker_torsion;
use torsionlab_core::torsion::{analytic_torsion, covering_check, relative_torsion, Pipeline};
use torsionlab_core::zeta::{epstein_zeta, Method};
use torsionlab_core::{CMatrix, RMatrix, Sequential, C64};

/// Hands out chunks in reverse order and then restores it, to make sure
/// reductions only rely on the order contract.
struct Reversing;

impl Executor for Reversing {
    fn map_chunks<T, R, F>(&self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send,
    {
        let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
        let mut out: Vec<(usize, R)> = chunks.iter().enumerate().rev().map(|(i, c)| (i, f(c))).collect();
        out.sort_by_key(|p| p.0);
        out.into_iter().map(|p| p.1).collect()
    }
}

fn hermitian(n: usize, entries: &[(f64, f64)]) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let (re, im) = entries[k];
            k += 1;
            if i == j {
                m[(i, i)] = C64::new(re, 0.0);
            } else {
                m[(i, j)] = C64::new(re, im);
                m[(j, i)] = C64::new(re, -im);
            }
        }
    }
    m
}

fn circle(u: f64) -> ComplexSpec {
    ComplexSpec::flat_de_rham(FlatTorus::identity(1), &[u]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobi_agrees_with_nalgebra(n in 1usize..9, seed in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 45)) {
        let m = hermitian(n, &seed);
        let mut ours = hermitian_eigenvalues(&m).unwrap();
        let na = DMatrix::from_fn(n, n, |i, j| Complex64::new(m[(i, j)].re, m[(i, j)].im));
        let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{ours:?} vs {theirs:?}");
        }
    }

    #[test]
    fn circle_torsion_is_twice_the_sine(u in 0.01f64..0.99) {
        let t = analytic_torsion(&circle(u), &Pipeline::with_method(Method::Exact), &Sequential).unwrap();
        assert_relative_eq!(t.log_tau.exp(), 2.0 * (std::f64::consts::PI * u).sin(), max_relative = 1e-11);
    }

    #[test]
    fn grade_swap_and_relative_antisymmetry(u1 in 0.01f64..0.99, u2 in 0.01f64..0.99) {
        let p = Pipeline::with_method(Method::Exact);
        let a = analytic_torsion(&circle(u1), &p, &Sequential).unwrap();
        let b = analytic_torsion(&circle(u1).grade_swapped(), &p, &Sequential).unwrap();
        prop_assert_eq!(a.log_tau, -b.log_tau);
        let (r1, r2) = (Character::new(&[u1]).unwrap(), Character::new(&[u2]).unwrap());
        let x = relative_torsion(&circle(0.5), &r1, &r2, &p, &Sequential).unwrap();
        let y = relative_torsion(&circle(0.5), &r2, &r1, &p, &Sequential).unwrap();
        prop_assert_eq!(x.log_ratio, -y.log_ratio);
    }

    #[test]
    fn coverings(u in 0.01f64..0.99, fold in 1usize..7) {
        let c = covering_check(u, fold, 1e-9).unwrap();
        prop_assert!(c.report.pass, "{c:?}");
    }

    #[test]
    fn kronecker_is_periodic(u in 0.05f64..0.95, v in 0.05f64..0.95, re in -0.5f64..0.5, im in 0.6f64..2.0) {
        let tau = C64::new(re, im);
        let k = kronecker_torsion(u, v, tau).unwrap();
        assert_relative_eq!(k, kronecker_torsion(u + 1.0, v, tau).unwrap(), max_relative = 1e-10);
        assert_relative_eq!(k, kronecker_torsion(u, v - 1.0, tau).unwrap(), max_relative = 1e-10);
        prop_assert!(k > 0.0);
    }

    #[test]
    fn epstein_scales_with_the_form(c in 0.3f64..3.0, u in 0.05f64..0.95, s in 1.6f64..3.0) {
        // Z(s; cB) = c^{-s} Z(s; B)
        let b = RMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.9]]).unwrap();
        let z = epstein_zeta(&b, &[u, 0.3], s).unwrap();
        let zc = epstein_zeta(&b.scale(c), &[u, 0.3], s).unwrap();
        assert_relative_eq!(zc, c.powf(-s) * z, max_relative = 1e-10);
    }

    #[test]
    fn reductions_ignore_scheduling(xs in prop::collection::vec(-1e6f64..1e6, 1..3000), chunk in 1usize..200) {
        let a = deterministic_sum(&Sequential, &xs, chunk, |x| *x);
        let b = deterministic_sum(&Reversing, &xs, chunk, |x| *x);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}
