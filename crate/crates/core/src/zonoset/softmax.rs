//! Softmax enclosure: shift, exp, row sums, reciprocal, product.

use ndarray::{Array1, Array2};

use super::enclose::{enclose_elementwise_with, ActivationKind, EnclosureConfig};
use super::{multiply_elementwise, Zonotope};
use crate::error::{Error, Result};

/// Softmax of a single row of length `z.dim()`.
pub fn softmax_enclose(z: &Zonotope) -> Result<Zonotope> {
    softmax_rows(z, 1, &EnclosureConfig::default())
}

/// Row-wise softmax of a `rows × k` layout.
///
/// Every output coordinate is finally intersected with `[0, 1]` and with the
/// interval softmax bound `[e^{l_i} / (e^{l_i} + Σ_{j≠i} e^{u_j}),
/// e^{u_i} / (e^{u_i} + Σ_{j≠i} e^{l_j})]`; when that box is narrower than
/// the zonotope hull the coordinate is rebuilt as the box on its own fresh
/// symbol.
pub fn softmax_rows(z: &Zonotope, rows: usize, cfg: &EnclosureConfig) -> Result<Zonotope> {
    let n = z.dim();
    if rows == 0 || n % rows != 0 {
        return Err(Error::invalid(format!(
            "cannot split dimension {n} into {rows} softmax rows"
        )));
    }
    let k = n / rows;

    let mut shift = Array1::zeros(n);
    for r in 0..rows {
        let m = (0..k)
            .map(|j| z.center()[r * k + j])
            .fold(f64::NEG_INFINITY, f64::max);
        for j in 0..k {
            shift[r * k + j] = -m;
        }
    }
    let shifted = z.translate(shift.view())?;
    let in_hull = shifted.interval_hull();

    let exps = enclose_elementwise_with(&shifted, ActivationKind::Exp, cfg, None)?;

    let ones = Array2::ones((1, k));
    let sums = exps.linear_rows(rows, ones.view(), Array1::zeros(1).view())?;
    // Exact lower bound of the true sums from the monotonicity of exp.
    let floor = Array1::from_shape_fn(rows, |r| {
        (0..k).map(|j| in_hull.lo[r * k + j].exp()).sum::<f64>()
    });
    let recip = enclose_elementwise_with(&sums, ActivationKind::Reciprocal, cfg, Some(&floor))
        .map_err(|e| match e {
            Error::Domain { dim, msg } => Error::Domain {
                dim,
                msg: format!("radius too large for softmax enclosure ({msg})"),
            },
            other => other,
        })?;

    let spread: Vec<usize> = (0..n).map(|i| i / k).collect();
    let recip = recip.select(&spread)?;
    let exps = exps.pad_to(recip.num_generators());
    let prod = multiply_elementwise(&exps, &recip)?;

    Ok(clamp_to_bounds(prod, &in_hull.lo, &in_hull.hi, rows, k))
}

fn clamp_to_bounds(
    prod: Zonotope,
    lo_in: &Array1<f64>,
    hi_in: &Array1<f64>,
    rows: usize,
    k: usize,
) -> Zonotope {
    let n = prod.dim();
    let q = prod.num_generators();
    let hull = prod.interval_hull();
    let (mut center, mut gens) = prod.into_parts();
    for r in 0..rows {
        let base = r * k;
        let el: Vec<f64> = (0..k).map(|j| lo_in[base + j].exp()).collect();
        let eu: Vec<f64> = (0..k).map(|j| hi_in[base + j].exp()).collect();
        let sum_l: f64 = el.iter().sum();
        let sum_u: f64 = eu.iter().sum();
        for j in 0..k {
            let i = base + j;
            let others_u = (sum_u - eu[j]).max(0.0);
            let others_l = (sum_l - el[j]).max(0.0);
            let lo = (el[j] / (el[j] + others_u)).max(0.0).max(hull.lo[i]);
            let hi = (eu[j] / (eu[j] + others_l)).min(1.0).min(hull.hi[i]);
            if !(lo <= hi) || hi - lo >= hull.hi[i] - hull.lo[i] {
                continue;
            }
            // The product step gave coordinate i an exclusive fresh symbol
            // at column q - n + i.
            gens.row_mut(i).fill(0.0);
            gens[[i, q - n + i]] = 0.5 * (hi - lo);
            center[i] = 0.5 * (hi + lo);
        }
    }
    Zonotope::from_parts(center, gens)
}
