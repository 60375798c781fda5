//! Direct optimization of LUT entries against the mapping error, and an
//! exact least-squares solve used to check it.
//!
//! The mapping error of a table `f` on pairs `(c_n, t_n)` is
//! `1/(3N) * sum_n |f(c_n) - t_n|^2`, with `f` evaluated exactly as
//! [`Lut3D::eval`] does. Since `f(c_n)` is linear in the entries, the
//! objective is a convex quadratic.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{PixelPair, Rgb};
use crate::lut::{accumulate_weights, Lut3D};

pub const DEFAULT_GD_STEPS: usize = 500;

/// Default step size, in units of `1 / L` where `L` bounds the largest
/// curvature of the objective. Anything below 2 is stable.
pub const DEFAULT_GD_STEP_SIZE: f64 = 1.0;

/// Ridge added to the normal equations when they are singular.
pub const LS_RIDGE: f64 = 1e-8;

/// Touched-entry limit for the dense least-squares solve.
pub const LS_MAX_ENTRIES: usize = 4096;

const GRAD_CHUNK: usize = 1 << 15;

/// Mean squared per-channel error of `lut` on `pairs`.
///
/// Pairs that land on all-null corners are excluded from both the sum and
/// the count.
pub fn mapping_error(lut: &Lut3D, pairs: &[PixelPair]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in pairs {
        if let Some(out) = lut.eval(p.input) {
            sum += sq_dist(out, p.target);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPairs);
    }
    Ok(sum / (3 * count) as f64)
}

#[inline]
fn sq_dist(a: Rgb, b: Rgb) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Plain gradient descent from the identity table.
///
/// Entries outside every pair's footprint keep their identity values and
/// are flagged null. `step_size` is relative to `1 / L` (see
/// [`DEFAULT_GD_STEP_SIZE`]).
pub fn fit_lut_gd(pairs: &[PixelPair], bins: usize, steps: usize, step_size: f64) -> Result<Lut3D> {
    let start = Lut3D::identity(bins)?;
    refine_lut_gd(&start, pairs, steps, step_size)
}

/// Runs gradient descent starting from the entries of `start`.
///
/// The returned table carries the accumulated footprint weights of `pairs`,
/// so its null entries match those of the heuristic fit.
pub fn refine_lut_gd(start: &Lut3D, pairs: &[PixelPair], steps: usize, step_size: f64) -> Result<Lut3D> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter(
            "gradient descent needs at least one pair".into(),
        ));
    }
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {step_size}"
        )));
    }
    let bins = start.bins();
    let weights = accumulate_weights(pairs, bins);
    let mut lut = Lut3D::from_parts(bins, start.entries().to_vec(), weights)?;

    let n = pairs.len() as f64;
    let s_max = lut.weights().iter().cloned().fold(0.0, f64::max);
    // Gershgorin bound on the Hessian eigenvalues: 2 * s_max / (3N).
    let lipschitz = 2.0 * s_max / (3.0 * n);
    let lr = step_size / lipschitz;
    let grad_scale = 2.0 / (3.0 * n);

    for step in 0..steps {
        let grad = gradient(&lut, pairs);
        for (e, g) in lut.entries_mut().iter_mut().zip(&grad) {
            for ch in 0..3 {
                e[ch] -= lr * grad_scale * g[ch];
            }
        }
        if lut.entries().iter().any(|e| !e.iter().all(|v| v.is_finite())) {
            return Err(Error::Diverged { step: step + 1 });
        }
    }
    Ok(lut)
}

/// `sum_n w_nk * (f(c_n) - t_n)` per entry, accumulated in fixed chunks.
fn gradient(lut: &Lut3D, pairs: &[PixelPair]) -> Vec<Rgb> {
    let n = lut.len();
    let partial = |chunk: &[PixelPair]| {
        let mut g = vec![[0.0; 3]; n];
        for p in chunk {
            let fp = lut.footprint(p.input);
            let mut out = [0.0; 3];
            for (&k, &w) in fp.corners.iter().zip(&fp.weights) {
                let e = lut.entry(k);
                out[0] += w * e[0];
                out[1] += w * e[1];
                out[2] += w * e[2];
            }
            let r = [
                out[0] - p.target[0],
                out[1] - p.target[1],
                out[2] - p.target[2],
            ];
            for (&k, &w) in fp.corners.iter().zip(&fp.weights) {
                let gk = &mut g[k];
                gk[0] += w * r[0];
                gk[1] += w * r[1];
                gk[2] += w * r[2];
            }
        }
        g
    };
    if pairs.len() <= GRAD_CHUNK {
        return partial(pairs);
    }
    let parts: Vec<Vec<Rgb>> = pairs.par_chunks(GRAD_CHUNK).map(partial).collect();
    let mut iter = parts.into_iter();
    let mut total = iter.next().expect("at least one chunk");
    for part in iter {
        for (a, b) in total.iter_mut().zip(&part) {
            a[0] += b[0];
            a[1] += b[1];
            a[2] += b[2];
        }
    }
    total
}

/// Exact least-squares minimizer of the mapping error over the touched
/// entries, via the normal equations.
///
/// Untouched entries keep identity values and are null. A singular system
/// is solved with [`LS_RIDGE`] added to the diagonal.
pub fn fit_lut_ls_oracle(pairs: &[PixelPair], bins: usize) -> Result<Lut3D> {
    let identity = Lut3D::identity(bins)?;
    let weights = accumulate_weights(pairs, bins);
    let touched: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] != 0.0).collect();
    let m = touched.len();
    if m > LS_MAX_ENTRIES {
        return Err(Error::InvalidParameter(format!(
            "least-squares oracle limited to {LS_MAX_ENTRIES} touched entries, got {m}"
        )));
    }
    let mut local = vec![usize::MAX; weights.len()];
    for (i, &k) in touched.iter().enumerate() {
        local[k] = i;
    }

    let mut normal = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 3);
    for p in pairs {
        let fp = identity.footprint(p.input);
        for (&ka, &wa) in fp.corners.iter().zip(&fp.weights) {
            if wa == 0.0 {
                continue;
            }
            let a = local[ka];
            for ch in 0..3 {
                rhs[(a, ch)] += wa * p.target[ch];
            }
            for (&kb, &wb) in fp.corners.iter().zip(&fp.weights) {
                if wb != 0.0 {
                    normal[(a, local[kb])] += wa * wb;
                }
            }
        }
    }

    let mut entries = identity.entries().to_vec();
    if m > 0 {
        let solution = solve_normal(normal, &rhs);
        for (i, &k) in touched.iter().enumerate() {
            entries[k] = [solution[(i, 0)], solution[(i, 1)], solution[(i, 2)]];
        }
    }
    Lut3D::from_parts(bins, entries, weights)
}

fn solve_normal(normal: DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let max_diag = normal.diagonal().max();
    let well_posed = normal.clone().cholesky().filter(|chol| {
        let min_pivot = chol.l().diagonal().min();
        min_pivot * min_pivot > 1e-12 * max_diag
    });
    let chol = match well_posed {
        Some(c) => c,
        None => {
            log::debug!("singular normal equations; adding ridge {LS_RIDGE}");
            let ridged = normal + DMatrix::<f64>::identity(rhs.nrows(), rhs.nrows()) * LS_RIDGE;
            ridged
                .cholesky()
                .expect("ridged normal matrix is positive definite")
        }
    };
    let mut out = DMatrix::<f64>::zeros(rhs.nrows(), 3);
    for ch in 0..3 {
        let b: DVector<f64> = rhs.column(ch).into_owned();
        out.set_column(ch, &chol.solve(&b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lut::fit_lut_heuristic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pairs(seed: u64, n: usize) -> Vec<PixelPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c: Rgb = [
                    rng.random_range(0.0..=255.0),
                    rng.random_range(0.0..=255.0),
                    rng.random_range(0.0..=255.0),
                ];
                let t: Rgb = [
                    (0.8 * c[0] + 20.0 + rng.random_range(-15.0..15.0)).clamp(0.0, 255.0),
                    (c[1] * c[1] / 255.0 + rng.random_range(-15.0..15.0)).clamp(0.0, 255.0),
                    (255.0 - c[2] + rng.random_range(-15.0..15.0)).clamp(0.0, 255.0),
                ];
                PixelPair::new(c, t)
            })
            .collect()
    }

    /// Independent evaluation of the objective straight from the
    /// per-channel similarity definition.
    fn brute_force_me(lut: &Lut3D, pairs: &[PixelPair]) -> f64 {
        let b = lut.bins();
        let mut sum = 0.0;
        for p in pairs {
            let mut out = [0.0; 3];
            let mut ws = 0.0;
            for k in 0..lut.len() {
                let w = crate::lut::lattice_similarity(p.input, lut.coords(k), b);
                if w > 0.0 {
                    for ch in 0..3 {
                        out[ch] += w * lut.entry(k)[ch];
                    }
                    ws += w;
                }
            }
            for ch in 0..3 {
                sum += (out[ch] / ws - p.target[ch]).powi(2);
            }
        }
        sum / (3 * pairs.len()) as f64
    }

    #[test]
    fn identity_zero_error() {
        let lut = Lut3D::identity(8).unwrap();
        let pairs: Vec<_> = [[0.0, 0.0, 0.0], [13.5, 77.0, 254.0]]
            .iter()
            .map(|&c| PixelPair::new(c, c))
            .collect();
        assert!(mapping_error(&lut, &pairs).unwrap() < 1e-20);
    }

    #[test]
    fn single_offset_pair() {
        let lut = Lut3D::identity(32).unwrap();
        let me = mapping_error(&lut, &[PixelPair::new([0.0; 3], [3.0, 0.0, 0.0])]).unwrap();
        assert!((me - 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_invalid_pairs_error() {
        let lut = Lut3D::null(4).unwrap();
        assert!(matches!(
            mapping_error(&lut, &[PixelPair::new([1.0; 3], [1.0; 3])]),
            Err(Error::NoValidPairs)
        ));
        assert!(matches!(mapping_error(&lut, &[]), Err(Error::NoValidPairs)));
    }

    #[test]
    fn mapping_error_matches_brute_force() {
        let pairs = random_pairs(3, 60);
        let lut = fit_lut_heuristic(&pairs, 3).unwrap();
        let a = mapping_error(&lut, &pairs).unwrap();
        let b = brute_force_me(&lut, &pairs);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn zero_steps_is_identity() {
        let pairs = random_pairs(1, 10);
        let lut = fit_lut_gd(&pairs, 4, 0, 1.0).unwrap();
        assert_eq!(lut.entries(), Lut3D::identity(4).unwrap().entries());
    }

    #[test]
    fn single_pair_converges() {
        let pairs = [PixelPair::new([64.0; 3], [100.0, 50.0, 25.0])];
        let lut = fit_lut_gd(&pairs, 4, 200, 1.0).unwrap();
        assert!(mapping_error(&lut, &pairs).unwrap() < 1e-3);
        // Untouched entries stay identity and are null.
        let id = Lut3D::identity(4).unwrap();
        let k = lut.index(0, 0, 0);
        assert!(lut.is_null(k));
        assert_eq!(lut.entry(k), id.entry(k));
    }

    #[test]
    fn objective_is_monotone() {
        let pairs = random_pairs(7, 200);
        let mut lut = Lut3D::identity(3).unwrap();
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            lut = refine_lut_gd(&lut, &pairs, 1, 1.9).unwrap();
            let me = mapping_error(&lut, &pairs).unwrap();
            assert!(me <= prev + 1e-12, "{me} > {prev}");
            prev = me;
        }
    }

    #[test]
    fn huge_step_diverges() {
        let pairs = random_pairs(9, 50);
        assert!(matches!(
            fit_lut_gd(&pairs, 2, 5000, 1e6),
            Err(Error::Diverged { .. })
        ));
        assert!(fit_lut_gd(&pairs, 2, 10, 0.0).is_err());
        assert!(fit_lut_gd(&[], 2, 10, 1.0).is_err());
    }

    #[test]
    fn optimality_chain() {
        for seed in 0..5 {
            let pairs = random_pairs(100 + seed, 50);
            let h = mapping_error(&fit_lut_heuristic(&pairs, 2).unwrap(), &pairs).unwrap();
            let g = mapping_error(&fit_lut_gd(&pairs, 2, 2000, 1.0).unwrap(), &pairs).unwrap();
            let o = mapping_error(&fit_lut_ls_oracle(&pairs, 2).unwrap(), &pairs).unwrap();
            assert!(o <= g + 1e-6 && g <= h + 1e-6, "{o} {g} {h}");
        }
    }

    #[test]
    fn oracle_is_gd_fixed_point() {
        let pairs = random_pairs(42, 200);
        let oracle = fit_lut_ls_oracle(&pairs, 2).unwrap();
        let me0 = mapping_error(&oracle, &pairs).unwrap();
        let moved = refine_lut_gd(&oracle, &pairs, 100, 1.0).unwrap();
        let me1 = mapping_error(&moved, &pairs).unwrap();
        assert!((me0 - me1).abs() < 1e-9, "{me0} vs {me1}");
    }

    #[test]
    fn oracle_matches_heuristic_on_aligned_data() {
        let d = 64.0;
        let mut pairs = Vec::new();
        for r in 0..4 {
            for g in 0..4 {
                let c = [r as f64 * d, g as f64 * d, 128.0];
                let t = [255.0 - c[0], c[1] * 0.5, 17.0];
                pairs.push(PixelPair::new(c, t));
                pairs.push(PixelPair::new(c, t));
            }
        }
        let h = fit_lut_heuristic(&pairs, 4).unwrap();
        let o = fit_lut_ls_oracle(&pairs, 4).unwrap();
        for k in 0..h.len() {
            assert_eq!(h.is_null(k), o.is_null(k));
            if !h.is_null(k) {
                for ch in 0..3 {
                    assert!((h.entry(k)[ch] - o.entry(k)[ch]).abs() < 1e-9);
                }
            } else {
                assert_eq!(o.entry(k), Lut3D::identity(4).unwrap().entry(k));
            }
        }
    }

    #[test]
    fn singular_system_uses_ridge() {
        // One off-lattice pair touches eight entries with a rank-one system.
        let pairs = [PixelPair::new([10.0, 20.0, 30.0], [1.0, 2.0, 3.0])];
        let o = fit_lut_ls_oracle(&pairs, 2).unwrap();
        assert!(mapping_error(&o, &pairs).unwrap() < 1e-9);
    }

    #[test]
    fn oracle_refuses_huge_systems() {
        let pairs = random_pairs(5, 20_000);
        assert!(fit_lut_ls_oracle(&pairs, 32).is_err());
    }
}
