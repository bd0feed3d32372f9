//! Elementwise enclosures of scalar nonlinearities.
//!
//! Each coordinate with hull `[l, u]` is replaced by `λ·x + μ` plus one fresh
//! symbol of magnitude `t`, chosen so that `f(x) ∈ [λx + μ - t, λx + μ + t]`
//! for every `x ∈ [l, u]`.

use ndarray::{Array1, Array2, Axis, Zip};

use super::Zonotope;
use crate::error::{Error, Result};

/// Lower bound that Reciprocal and Sqrt inputs must strictly exceed.
pub const DEFAULT_POSITIVITY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    ReLU,
    Tanh,
    Sigmoid,
    Exp,
    Reciprocal,
    Sqrt,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::ReLU,
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::Exp,
        ActivationKind::Reciprocal,
        ActivationKind::Sqrt,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            ActivationKind::ReLU => x.max(0.0),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Exp => x.exp(),
            ActivationKind::Reciprocal => 1.0 / x,
            ActivationKind::Sqrt => x.sqrt(),
        }
    }

    fn needs_positive_input(self) -> bool {
        matches!(self, ActivationKind::Reciprocal | ActivationKind::Sqrt)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnclosureConfig {
    pub positivity_guard: f64,
}

impl Default for EnclosureConfig {
    fn default() -> Self {
        Self {
            positivity_guard: DEFAULT_POSITIVITY_GUARD,
        }
    }
}

/// Linear relaxation `λ·x + μ ± t` of a scalar function on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub slope: f64,
    pub offset: f64,
    pub radius: f64,
}

impl Relaxation {
    fn exact(slope: f64, offset: f64) -> Self {
        Self {
            slope,
            offset,
            radius: 0.0,
        }
    }

    /// Band `[lo, hi]` on the residual `f(x) - λx`.
    fn from_band(slope: f64, lo: f64, hi: f64) -> Self {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        Self {
            slope,
            offset: 0.5 * (lo + hi),
            radius: 0.5 * (hi - lo),
        }
    }
}

/// `1 - g + g·ln g` for `g = expm1(d)/d`: the vertical gap between the exp
/// chord on an interval of width `d` and the parallel tangent, divided by
/// `exp(l)`.
fn exp_chord_gap(d: f64) -> f64 {
    if d < 1e-3 {
        // Series d²/8 + d³/16 + 11d⁴/576 + O(d⁵); the last term
        // over-covers the truncated tail.
        let d2 = d * d;
        d2 / 8.0 + d2 * d / 16.0 + 11.0 * d2 * d2 / 576.0 + d2 * d2 * d / 200.0
    } else {
        let g = d.exp_m1() / d;
        1.0 - g + g * g.ln()
    }
}

/// Relaxation coefficients for `f` on `[l, u]`.
pub fn relaxation(kind: ActivationKind, l: f64, u: f64) -> Result<Relaxation> {
    if l.is_nan() || u.is_nan() || l > u {
        return Err(Error::invalid(format!("bad interval [{l}, {u}]")));
    }
    if !(l.is_finite() && u.is_finite()) {
        return Err(Error::Domain {
            dim: 0,
            msg: format!("{kind:?} of unbounded interval [{l}, {u}]"),
        });
    }
    if l == u {
        return Ok(Relaxation::exact(0.0, kind.eval(l)));
    }
    let r = match kind {
        ActivationKind::ReLU => {
            if l >= 0.0 {
                Relaxation::exact(1.0, 0.0)
            } else if u <= 0.0 {
                Relaxation::exact(0.0, 0.0)
            } else {
                let slope = u / (u - l);
                let mu = -slope * l / 2.0;
                Relaxation {
                    slope,
                    offset: mu,
                    radius: mu,
                }
            }
        }
        ActivationKind::Tanh | ActivationKind::Sigmoid => {
            let deriv = |x: f64| match kind {
                ActivationKind::Tanh => {
                    let t = x.tanh();
                    1.0 - t * t
                }
                _ => {
                    let s = sigmoid(x);
                    s * (1.0 - s)
                }
            };
            let slope = deriv(l).min(deriv(u));
            // f' ≥ slope on [l, u], so the residual is nondecreasing.
            Relaxation::from_band(slope, kind.eval(l) - slope * l, kind.eval(u) - slope * u)
        }
        ActivationKind::Exp => {
            let d = u - l;
            let el = l.exp();
            let g = d.exp_m1() / d;
            let slope = el * g;
            // Chord lies above exp; the band top is the chord intercept.
            let top = el - slope * l;
            let gap = el * exp_chord_gap(d);
            Relaxation::from_band(slope, top - gap, top)
        }
        ActivationKind::Reciprocal => {
            if l <= 0.0 {
                return Err(Error::Domain {
                    dim: 0,
                    msg: format!("reciprocal of interval [{l}, {u}] touching zero"),
                });
            }
            let slope = -1.0 / (l * u);
            let top = 1.0 / l + 1.0 / u;
            let gap = (1.0 / l.sqrt() - 1.0 / u.sqrt()).powi(2);
            Relaxation::from_band(slope, top - gap, top)
        }
        ActivationKind::Sqrt => {
            if l < 0.0 {
                return Err(Error::Domain {
                    dim: 0,
                    msg: format!("square root of interval [{l}, {u}] with negative part"),
                });
            }
            let (a, b) = (l.sqrt(), u.sqrt());
            let s = a + b;
            let slope = 1.0 / s;
            let bottom = a * b / s;
            let gap = (b - a) * (b - a) / (4.0 * s);
            Relaxation::from_band(slope, bottom, bottom + gap)
        }
    };
    if [r.slope, r.offset, r.radius].iter().all(|v| v.is_finite()) {
        Ok(r)
    } else {
        Err(Error::Domain {
            dim: 0,
            msg: format!("{kind:?} relaxation on [{l}, {u}] is not finite"),
        })
    }
}

/// Sound elementwise image of `z` under `kind`, default configuration.
pub fn enclose_elementwise(z: &Zonotope, kind: ActivationKind) -> Result<Zonotope> {
    enclose_elementwise_with(z, kind, &EnclosureConfig::default(), None)
}

/// Like [`enclose_elementwise`], with an explicit configuration and an
/// optional per-coordinate lower bound `floor` that the true values are known
/// to satisfy (e.g. a variance is nonnegative). The relaxation interval is the
/// hull intersected with `[floor, ∞)`.
pub fn enclose_elementwise_with(
    z: &Zonotope,
    kind: ActivationKind,
    cfg: &EnclosureConfig,
    floor: Option<&Array1<f64>>,
) -> Result<Zonotope> {
    let n = z.dim();
    if let Some(f) = floor {
        if f.len() != n {
            return Err(Error::invalid("enclosure floor length mismatch"));
        }
    }
    let hull = z.interval_hull();
    let mut slope = Array1::zeros(n);
    let mut offset = Array1::zeros(n);
    let mut radius = Array1::zeros(n);
    for i in 0..n {
        let mut l = hull.lo[i];
        let u = hull.hi[i];
        if let Some(f) = floor {
            l = l.max(f[i]).min(u);
        }
        if kind.needs_positive_input() && !(l > cfg.positivity_guard) {
            return Err(Error::Domain {
                dim: i,
                msg: format!(
                    "{kind:?} needs inputs above {}, hull lower bound is {l}",
                    cfg.positivity_guard
                ),
            });
        }
        let r = relaxation(kind, l, u).map_err(|e| match e {
            Error::Domain { msg, .. } => Error::Domain { dim: i, msg },
            other => other,
        })?;
        slope[i] = r.slope;
        offset[i] = r.offset;
        radius[i] = r.radius;
    }
    let center = &slope * z.center() + &offset;
    let mut gens: Array2<f64> = z.generators().clone();
    Zip::from(gens.axis_iter_mut(Axis(0)))
        .and(&slope)
        .for_each(|mut row, &s| row *= s);
    Ok(Zonotope::from_parts(center, gens).with_fresh_diagonal(&radius))
}
