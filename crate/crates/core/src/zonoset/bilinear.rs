//! Products of two zonotopes over a shared symbol space.
//!
//! For `x = cx + Σ a_j β_j` and `y = cy + Σ b_j β_j` the product is
//!
//! ```text
//! x·y = cx·cy + Σ_j (cx·b_j + cy·a_j) β_j + Σ_j a_j b_j β_j² + Σ_{i≠j} a_i b_j β_i β_j
//! ```
//!
//! The linear part is kept exactly. `β_j² ∈ [0, 1]` contributes `½ a_j b_j`
//! to the center and `½|a_j b_j|` to a fresh symbol; the cross terms go into
//! the same fresh symbol.

use ndarray::{Array1, Array2};

use super::Zonotope;
use crate::error::{Error, Result};

/// Up to this many generators the cross terms are bounded pairwise,
/// `Σ_{i<j} |a_i b_j + a_j b_i|`. Beyond it the O(q) bound
/// `‖a‖₁‖b‖₁ − Σ|a_j b_j|` is used instead.
pub const PAIRWISE_LIMIT: usize = 32;

/// Returns `(½ Σ a_j b_j, fresh magnitude)` for one coordinate.
fn quadratic_part(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut diag = 0.0;
    let mut diag_abs = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        diag += x * y;
        diag_abs += (x * y).abs();
    }
    let cross = if a.len() <= PAIRWISE_LIMIT {
        let mut acc = 0.0;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                acc += (a[i] * b[j] + a[j] * b[i]).abs();
            }
        }
        acc
    } else {
        let na: f64 = a.iter().map(|v| v.abs()).sum();
        let nb: f64 = b.iter().map(|v| v.abs()).sum();
        (na * nb - diag_abs).max(0.0)
    };
    (0.5 * diag, 0.5 * diag_abs + cross)
}

fn check_shared(x: &Zonotope, y: &Zonotope, what: &str) -> Result<()> {
    if x.num_generators() != y.num_generators() {
        return Err(Error::invalid(format!(
            "{what}: operands use {} and {} noise symbols",
            x.num_generators(),
            y.num_generators()
        )));
    }
    Ok(())
}

/// Sound enclosure of the elementwise product `x ∘ y`.
pub fn multiply_elementwise(x: &Zonotope, y: &Zonotope) -> Result<Zonotope> {
    check_shared(x, y, "elementwise product")?;
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!(
            "elementwise product of dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let n = x.dim();
    let q = x.num_generators();
    let (cx, cy) = (x.center(), y.center());
    let (gx, gy) = (x.generators(), y.generators());
    let mut center = Array1::zeros(n);
    let mut gens = Array2::zeros((n, q));
    let mut fresh = Array1::zeros(n);
    for i in 0..n {
        let a = gx.row(i);
        let b = gy.row(i);
        let (a, b) = (a.as_slice().unwrap(), b.as_slice().unwrap());
        let (half_diag, t) = quadratic_part(a, b);
        center[i] = cx[i] * cy[i] + half_diag;
        let mut out = gens.row_mut(i);
        for j in 0..q {
            out[j] = cx[i] * b[j] + cy[i] * a[j];
        }
        fresh[i] = t;
    }
    Ok(Zonotope::from_parts(center, gens).with_fresh_diagonal(&fresh))
}

/// Sound enclosure of the matrix product `A·B` where `A` is an `r × s`
/// row-major layout and `B` is `s × t`. Each output entry sums `s` bilinear
/// terms exactly in their linear parts and collects all quadratic residue in
/// one fresh symbol.
pub fn matmul_zz(
    a: &Zonotope,
    a_shape: (usize, usize),
    b: &Zonotope,
    b_shape: (usize, usize),
) -> Result<Zonotope> {
    check_shared(a, b, "matrix product")?;
    let (r, s) = a_shape;
    let (s2, t) = b_shape;
    if s != s2 || r * s != a.dim() || s2 * t != b.dim() {
        return Err(Error::invalid(format!(
            "matrix product layouts {r}x{s} (dim {}) and {s2}x{t} (dim {}) are incompatible",
            a.dim(),
            b.dim()
        )));
    }
    let q = a.num_generators();
    let (ca, cb) = (a.center(), b.center());
    let (ga, gb) = (a.generators(), b.generators());
    let mut center = Array1::zeros(r * t);
    let mut gens = Array2::zeros((r * t, q));
    let mut fresh = Array1::zeros(r * t);
    for i in 0..r {
        for j in 0..t {
            let o = i * t + j;
            let mut c = 0.0;
            let mut f = 0.0;
            let mut row = gens.row_mut(o);
            let row = row.as_slice_mut().unwrap();
            for k in 0..s {
                let ia = i * s + k;
                let ib = k * t + j;
                let av = ga.row(ia);
                let bv = gb.row(ib);
                let (av, bv) = (av.as_slice().unwrap(), bv.as_slice().unwrap());
                let (half_diag, tk) = quadratic_part(av, bv);
                c += ca[ia] * cb[ib] + half_diag;
                f += tk;
                let (x, y) = (ca[ia], cb[ib]);
                for ((g, &p), &v) in row.iter_mut().zip(bv).zip(av) {
                    *g += x * p + y * v;
                }
            }
            center[o] = c;
            fresh[o] = f;
        }
    }
    Ok(Zonotope::from_parts(center, gens).with_fresh_diagonal(&fresh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_times_set_is_exact_scaling() {
        let x = Zonotope::new(array![1.0, -2.0], array![[0.5, 0.1], [0.0, 1.0]]).unwrap();
        let y = Zonotope::new(array![3.0, 0.5], Array2::zeros((2, 2))).unwrap();
        let p = multiply_elementwise(&x, &y).unwrap();
        assert_eq!(p.center(), &array![3.0, -1.0]);
        let expect = array![[1.5, 0.1 * 3.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0]];
        assert_eq!(p.generators(), &expect);
    }

    #[test]
    fn hand_expanded_product() {
        let x = Zonotope::new(array![2.0], array![[0.0]]).unwrap();
        let y = Zonotope::new(array![3.0], array![[1.0]]).unwrap();
        let p = multiply_elementwise(&x, &y).unwrap();
        assert_eq!(p.center(), &array![6.0]);
        assert_eq!(p.generators().column(0), array![2.0]);
        assert_eq!(p.generators()[[0, 1]], 0.0);
    }

    #[test]
    fn square_of_shared_symbol() {
        let x = Zonotope::new(array![0.0], array![[1.0]]).unwrap();
        let p = multiply_elementwise(&x, &x).unwrap();
        // β² ∈ [0, 1]: center ½, fresh ½.
        assert_eq!(p.center()[0], 0.5);
        let h = p.interval_hull();
        assert_eq!((h.lo[0], h.hi[0]), (0.0, 1.0));
        for k in 0..1000 {
            let b = -1.0 + 2.0 * k as f64 / 999.0;
            assert!(b * b >= h.lo[0] && b * b <= h.hi[0]);
        }
    }

    #[test]
    fn symbol_mismatch_rejected() {
        let x = Zonotope::new(array![0.0], array![[1.0]]).unwrap();
        let y = Zonotope::new(array![0.0], array![[1.0, 2.0]]).unwrap();
        assert!(matches!(
            multiply_elementwise(&x, &y),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matmul_zz(&x, (1, 1), &y, (1, 1)).is_err());
        let y = Zonotope::new(array![0.0, 1.0], array![[1.0], [0.0]]).unwrap();
        assert!(matmul_zz(&x, (1, 1), &y, (1, 1)).is_err());
    }

    #[test]
    fn one_by_one_matmul_equals_elementwise() {
        let x = Zonotope::new(array![1.0], array![[0.3, -0.2]]).unwrap();
        let y = Zonotope::new(array![-2.0], array![[0.1, 0.4]]).unwrap();
        assert_eq!(
            matmul_zz(&x, (1, 1), &y, (1, 1)).unwrap(),
            multiply_elementwise(&x, &y).unwrap()
        );
    }

    #[test]
    fn point_matrix_times_set_is_affine() {
        let a = Zonotope::point(array![1.0, 2.0, -1.0, 0.5]).unwrap().pad_to(1);
        let b = Zonotope::new(array![0.5, -1.0], array![[1.0], [0.5]]).unwrap();
        let p = matmul_zz(&a, (2, 2), &b, (2, 1)).unwrap();
        let direct = b
            .affine(array![[1.0, 2.0], [-1.0, 0.5]].view(), array![0.0, 0.0].view())
            .unwrap();
        assert_eq!(p.center(), direct.center());
        assert_eq!(p.generators().column(0), direct.generators().column(0));
        assert!(p.generators().column(1).iter().all(|&v| v == 0.0));
        assert!(p.generators().column(2).iter().all(|&v| v == 0.0));
    }

    fn sampled_matmul_soundness(q: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_z = |n: usize, q: usize| {
            let c = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let g = Array2::from_shape_fn((n, q), |_| rng.random_range(-0.5..0.5));
            Zonotope::new(c, g).unwrap()
        };
        let a = rand_z(6, q);
        let b = rand_z(6, q);
        let p = matmul_zz(&a, (2, 3), &b, (3, 2)).unwrap();
        let h = p.interval_hull();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for _ in 0..1000 {
            let beta = Array1::from_shape_fn(q, |_| rng.random_range(-1.0..=1.0));
            let xa = a.point_at(beta.view()).unwrap().into_shape_with_order((2, 3)).unwrap();
            let xb = b.point_at(beta.view()).unwrap().into_shape_with_order((3, 2)).unwrap();
            let prod = xa.dot(&xb).into_shape_with_order(4).unwrap();
            assert!(h.contains(prod.view(), 1e-12));
        }
    }

    #[test]
    fn matmul_sampled_soundness_both_bounds() {
        sampled_matmul_soundness(4, 11);
        sampled_matmul_soundness(PAIRWISE_LIMIT + 9, 12);
    }
}
