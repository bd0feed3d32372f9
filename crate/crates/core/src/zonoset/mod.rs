//! Zonotope abstract domain.
//!
//! A zonotope `<c, G> = { c + G·β | β ∈ [-1, 1]^q }` is stored as a center
//! vector of length `n` and an `n × q` generator matrix whose column `j`
//! belongs to noise symbol `β_j`. Symbol identity is positional: two
//! zonotopes derived from the same input share the leading columns, and any
//! enclosure appends its fresh symbols at the end. Values computed earlier in
//! a pipeline therefore carry a prefix of the symbols of values computed
//! later, and [`Zonotope::pad_to`] aligns them by appending zero columns.
//!
//! Matrix-valued sets (attention scores, token × feature activations) are
//! flattened row-major; the layout is passed explicitly where it matters.
//!
//! Arithmetic is plain `f64` without outward rounding, so soundness holds up
//! to floating-point error.

mod bilinear;
mod enclose;
mod softmax;

pub use bilinear::{matmul_zz, multiply_elementwise, PAIRWISE_LIMIT};
pub use enclose::{
    enclose_elementwise, enclose_elementwise_with, relaxation, ActivationKind, EnclosureConfig,
    Relaxation, DEFAULT_POSITIVITY_GUARD,
};
pub use softmax::{softmax_enclose, softmax_rows};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Default cap on the generator count, as a multiple of the dimension.
pub const DEFAULT_ORDER_FACTOR: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: Array1<f64>,
    generators: Array2<f64>,
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    pub lo: Array1<f64>,
    pub hi: Array1<f64>,
}

impl IntervalVector {
    pub fn new(lo: Array1<f64>, hi: Array1<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid(format!(
                "interval bounds differ in length: {} vs {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::invalid(format!(
                "interval lower bound exceeds upper bound at {i}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Membership with an absolute slack `tol` per coordinate.
    pub fn contains(&self, x: ArrayView1<f64>, tol: f64) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }

    /// True when `other` lies inside `self` (with slack `tol`).
    pub fn encloses(&self, other: &IntervalVector, tol: f64) -> bool {
        self.len() == other.len()
            && (0..self.len())
                .all(|i| self.lo[i] <= other.lo[i] + tol && other.hi[i] <= self.hi[i] + tol)
    }

    pub fn radius(&self) -> Array1<f64> {
        (&self.hi - &self.lo) * 0.5
    }
}

fn check_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

impl Zonotope {
    pub fn new(center: Array1<f64>, generators: Array2<f64>) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::invalid(format!(
                "center has length {} but generator matrix has {} rows",
                center.len(),
                generators.nrows()
            )));
        }
        check_finite("zonotope center", center.iter().copied())?;
        check_finite("zonotope generators", generators.iter().copied())?;
        Ok(Self { center, generators })
    }

    /// Construction without validation, for kernels whose outputs are finite
    /// whenever their inputs are.
    pub(crate) fn from_parts(center: Array1<f64>, generators: Array2<f64>) -> Self {
        debug_assert_eq!(center.len(), generators.nrows());
        Self { center, generators }
    }

    /// Degenerate zonotope holding a single point.
    pub fn point(center: Array1<f64>) -> Result<Self> {
        let n = center.len();
        Self::new(center, Array2::zeros((n, 0)))
    }

    /// The ℓ∞ ball `<center, ε·I>`.
    pub fn make_ball(center: Array1<f64>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!(
                "ball radius must be finite and nonnegative, got {eps}"
            )));
        }
        let n = center.len();
        Self::new(center, Array2::eye(n) * eps)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &Array1<f64> {
        &self.center
    }

    pub fn generators(&self) -> &Array2<f64> {
        &self.generators
    }

    pub fn into_parts(self) -> (Array1<f64>, Array2<f64>) {
        (self.center, self.generators)
    }

    /// Per-coordinate radius `Σ_j |G_ij|`.
    pub fn radii(&self) -> Array1<f64> {
        self.generators.map_axis(Axis(1), |row| row.iter().map(|v| v.abs()).sum())
    }

    pub fn interval_hull(&self) -> IntervalVector {
        let r = self.radii();
        IntervalVector {
            lo: &self.center - &r,
            hi: &self.center + &r,
        }
    }

    /// Materializes the point `c + G·β`.
    pub fn point_at(&self, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
        if beta.len() != self.num_generators() {
            return Err(Error::invalid(format!(
                "expected {} noise coefficients, got {}",
                self.num_generators(),
                beta.len()
            )));
        }
        Ok(&self.center + &self.generators.dot(&beta))
    }

    /// Exact image under `x ↦ W·x + b`.
    pub fn affine(&self, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Self> {
        if w.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "affine map expects input dimension {}, zonotope has {}",
                w.ncols(),
                self.dim()
            )));
        }
        if b.len() != w.nrows() {
            return Err(Error::invalid(format!(
                "bias length {} does not match {} output rows",
                b.len(),
                w.nrows()
            )));
        }
        Ok(Self::from_parts(
            w.dot(&self.center) + b,
            w.dot(&self.generators),
        ))
    }

    /// Applies `W·x + b` independently to each row of a `rows × d_in`
    /// layout, producing a `rows × d_out` layout.
    pub fn linear_rows(&self, rows: usize, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Self> {
        let d_in = w.ncols();
        let d_out = w.nrows();
        if rows * d_in != self.dim() || b.len() != d_out {
            return Err(Error::invalid(format!(
                "row-wise map {d_out}x{d_in} does not fit a {rows}-row layout of dimension {}",
                self.dim()
            )));
        }
        let q = self.num_generators();
        let mut center = Array1::zeros(rows * d_out);
        let mut gens = Array2::zeros((rows * d_out, q));
        for r in 0..rows {
            let c_in = self.center.slice(s![r * d_in..(r + 1) * d_in]);
            center
                .slice_mut(s![r * d_out..(r + 1) * d_out])
                .assign(&(w.dot(&c_in) + b));
            let g_in = self.generators.slice(s![r * d_in..(r + 1) * d_in, ..]);
            gens.slice_mut(s![r * d_out..(r + 1) * d_out, ..])
                .assign(&w.dot(&g_in));
        }
        Ok(Self::from_parts(center, gens))
    }

    /// Appends zero generator columns until there are `q` of them.
    pub fn pad_to(&self, q: usize) -> Self {
        let cur = self.num_generators();
        if q <= cur {
            return self.clone();
        }
        let mut gens = Array2::zeros((self.dim(), q));
        gens.slice_mut(s![.., ..cur]).assign(&self.generators);
        Self::from_parts(self.center.clone(), gens)
    }

    /// Exact sum of two sets over a shared symbol space.
    pub fn add(&self, other: &Zonotope) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "cannot add zonotopes of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let q = self.num_generators().max(other.num_generators());
        let a = self.pad_to(q);
        let b = other.pad_to(q);
        Ok(Self::from_parts(
            a.center + &b.center,
            a.generators + &b.generators,
        ))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_parts(&self.center * factor, &self.generators * factor)
    }

    pub fn translate(&self, offset: ArrayView1<f64>) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::invalid("translation length mismatch"));
        }
        Ok(Self::from_parts(
            &self.center + &offset,
            self.generators.clone(),
        ))
    }

    /// Gathers coordinates `idx` (repetition allowed); exact.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::invalid(format!(
                "coordinate {bad} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(Self::from_parts(
            self.center.select(Axis(0), idx),
            self.generators.select(Axis(0), idx),
        ))
    }

    /// Stacks coordinates of several sets over a shared symbol space.
    pub fn stack(parts: &[Zonotope]) -> Self {
        let q = parts.iter().map(Zonotope::num_generators).max().unwrap_or(0);
        let n: usize = parts.iter().map(Zonotope::dim).sum();
        let mut center = Array1::zeros(n);
        let mut gens = Array2::zeros((n, q));
        let mut at = 0;
        for p in parts {
            let d = p.dim();
            center.slice_mut(s![at..at + d]).assign(&p.center);
            gens.slice_mut(s![at..at + d, ..p.num_generators()])
                .assign(&p.generators);
            at += d;
        }
        Self::from_parts(center, gens)
    }

    /// Appends one fresh symbol per coordinate with magnitudes `radius`.
    pub(crate) fn with_fresh_diagonal(self, radius: &Array1<f64>) -> Self {
        let n = self.dim();
        let q = self.num_generators();
        let mut gens = Array2::zeros((n, q + n));
        gens.slice_mut(s![.., ..q]).assign(&self.generators);
        for i in 0..n {
            gens[[i, q + i]] = radius[i];
        }
        Self::from_parts(self.center, gens)
    }

    /// Linear functional `a·x + b0`, returned as its exact range `[lo, hi]`.
    pub fn functional_range(&self, a: ArrayView1<f64>, b0: f64) -> Result<(f64, f64)> {
        if a.len() != self.dim() {
            return Err(Error::invalid("functional length mismatch"));
        }
        let mid = a.dot(&self.center) + b0;
        let rad: f64 = a.dot(&self.generators).iter().map(|v| v.abs()).sum();
        Ok((mid - rad, mid + rad))
    }

    /// Generator-count reduction: keeps the `q_max - n` generators with the
    /// largest ℓ1 norm and encloses the rest by an axis-aligned box.
    pub fn reduce_order(&self, q_max: usize) -> Result<Self> {
        let n = self.dim();
        if q_max < n {
            return Err(Error::invalid(format!(
                "order cap {q_max} is smaller than the dimension {n}"
            )));
        }
        let q = self.num_generators();
        if q <= q_max {
            return Ok(self.clone());
        }
        let keep_count = q_max - n;
        let norms: Vec<f64> = self
            .generators
            .axis_iter(Axis(1))
            .map(|g| g.iter().map(|v| v.abs()).sum())
            .collect();
        let mut order: Vec<usize> = (0..q).collect();
        // Largest first; stable on ties so the result is deterministic.
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        let mut kept: Vec<usize> = order[..keep_count].to_vec();
        kept.sort_unstable();
        let mut boxed = Array1::<f64>::zeros(n);
        for &j in &order[keep_count..] {
            for i in 0..n {
                boxed[i] += self.generators[[i, j]].abs();
            }
        }
        let kept_gens = self.generators.select(Axis(1), &kept);
        Ok(Self::from_parts(self.center.clone(), kept_gens).with_fresh_diagonal(&boxed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ball_is_axis_aligned() {
        let z = Zonotope::make_ball(array![0.0, 0.0], 1.0).unwrap();
        assert_eq!(z.generators(), &Array2::<f64>::eye(2));
        let p = Zonotope::make_ball(array![1.5], 0.0).unwrap();
        let h = p.interval_hull();
        assert_eq!((h.lo[0], h.hi[0]), (1.5, 1.5));
    }

    #[test]
    fn ball_hull_at_reported_radius() {
        let c = array![0.25, -1.696724, 1.735214];
        let eps = 9.6552e-04;
        let h = Zonotope::make_ball(c.clone(), eps).unwrap().interval_hull();
        for i in 0..3 {
            assert_eq!(h.lo[i], c[i] - eps);
            assert_eq!(h.hi[i], c[i] + eps);
        }
    }

    #[test]
    fn ball_rejects_bad_arguments() {
        assert!(Zonotope::make_ball(array![0.0], -1e-3).is_err());
        assert!(Zonotope::make_ball(array![f64::NAN], 0.1).is_err());
        assert!(Zonotope::make_ball(array![f64::INFINITY], 0.1).is_err());
    }

    #[test]
    fn affine_examples() {
        let z = Zonotope::new(array![1.0], array![[2.0]]).unwrap();
        let out = z.affine(array![[3.0]].view(), array![1.0].view()).unwrap();
        assert_eq!(out.center(), &array![4.0]);
        assert_eq!(out.generators(), &array![[6.0]]);
        let h = out.interval_hull();
        assert_eq!((h.lo[0], h.hi[0]), (-2.0, 10.0));

        let id = Array2::<f64>::eye(1);
        assert_eq!(z.affine(id.view(), array![0.0].view()).unwrap(), z);

        let p = Zonotope::point(array![1.0, 2.0]).unwrap();
        let out = p
            .affine(array![[1.0, 1.0]].view(), array![0.5].view())
            .unwrap();
        assert_eq!(out.center(), &array![3.5]);
        assert_eq!(out.num_generators(), 0);
    }

    #[test]
    fn affine_dimension_mismatch() {
        let z = Zonotope::point(array![1.0, 2.0]).unwrap();
        assert!(matches!(
            z.affine(array![[1.0]].view(), array![0.0].view()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn hull_examples() {
        let z = Zonotope::new(array![0.0], array![[1.0, -2.0]]).unwrap();
        let h = z.interval_hull();
        assert_eq!((h.lo[0], h.hi[0]), (-3.0, 3.0));
        let z = Zonotope::new(array![1.0, 1.0], Array2::eye(2) * 0.5).unwrap();
        let h = z.interval_hull();
        assert_eq!(h.lo, array![0.5, 0.5]);
        assert_eq!(h.hi, array![1.5, 1.5]);
    }

    #[test]
    fn reduce_order_identity_below_cap() {
        let z = Zonotope::new(array![0.0, 1.0], array![[1.0, 0.5, 0.1], [0.0, 2.0, -0.3]]).unwrap();
        assert_eq!(z.reduce_order(3).unwrap(), z);
        assert_eq!(z.reduce_order(10).unwrap(), z);
    }

    #[test]
    fn reduce_to_box_matches_hull() {
        let z = Zonotope::new(array![0.0, 1.0], array![[1.0, 0.5, 0.1], [0.0, 2.0, -0.3]]).unwrap();
        let r = z.reduce_order(2).unwrap();
        assert_eq!(r.num_generators(), 2);
        assert_eq!(r.interval_hull(), z.interval_hull());
        assert!(matches!(z.reduce_order(1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reduce_keeps_largest_generators() {
        let z = Zonotope::new(
            array![0.0, 0.0],
            array![[0.1, 3.0, 0.0, 0.2], [0.1, 3.0, 1.0, -0.2]],
        )
        .unwrap();
        let r = z.reduce_order(3).unwrap();
        assert_eq!(r.num_generators(), 3);
        assert_eq!(r.generators().column(0), array![3.0, 3.0]);
        let g = r.generators();
        assert!((g[[0, 1]] - 0.3).abs() < 1e-15 && g[[1, 1]] == 0.0);
        assert!(g[[0, 2]] == 0.0 && (g[[1, 2]] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn linear_rows_matches_block_affine() {
        let z = Zonotope::new(
            array![1.0, 2.0, 3.0, 4.0],
            array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, -1.0]],
        )
        .unwrap();
        let w = array![[1.0, -1.0], [2.0, 0.5], [0.0, 1.0]];
        let b = array![0.1, 0.2, 0.3];
        let out = z.linear_rows(2, w.view(), b.view()).unwrap();
        let mut big = Array2::zeros((6, 4));
        big.slice_mut(s![0..3, 0..2]).assign(&w);
        big.slice_mut(s![3..6, 2..4]).assign(&w);
        let bb = ndarray::concatenate![Axis(0), b, b];
        let direct = z.affine(big.view(), bb.view()).unwrap();
        assert_eq!(out, direct);
    }

    #[test]
    fn functional_range_is_exact() {
        let z = Zonotope::new(array![1.0, 2.0], array![[1.0, 0.0], [1.0, 1.0]]).unwrap();
        // x0 - x1 = -1 - β1
        let (lo, hi) = z.functional_range(array![1.0, -1.0].view(), 0.0).unwrap();
        assert_eq!((lo, hi), (-2.0, 0.0));
    }
}
