//! Certification engine: ℓ∞ embedding balls pushed through the model with
//! zonotopes, radius search, threshold `D`, and the fairness score Ψ.

mod oracle;
mod propagate;
mod report;

pub use oracle::{brute_force_certify, count_combinations, DEFAULT_COMBINATION_CAP};
pub use propagate::PropagationConfig;
pub use report::{
    certify_corpus, compute_threshold, fairness_score, radar_csv, write_radar_csv,
    AnchorThreshold, FairnessReport, PositionSelection, SentenceRecord, ThresholdReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{argmax, TransformerModel};
use crate::zonoset::Zonotope;

/// Which tokens move and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub eps: f64,
    /// Token indices into the id sequence; `None` perturbs every non-PAD
    /// position.
    pub positions: Option<Vec<usize>>,
}

impl PerturbationSpec {
    pub fn all(eps: f64) -> Self {
        Self {
            eps,
            positions: None,
        }
    }

    pub fn at(eps: f64, positions: Vec<usize>) -> Self {
        Self {
            eps,
            positions: Some(positions),
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            eps,
            positions: self.positions.clone(),
        }
    }

    /// Rows of the non-PAD layout that are perturbed.
    pub(crate) fn rows(&self, ids: &[usize]) -> Result<Vec<usize>> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::invalid(format!(
                "perturbation radius must be finite and nonnegative, got {}",
                self.eps
            )));
        }
        let active = TransformerModel::active_positions(ids);
        let Some(positions) = &self.positions else {
            return Ok((0..active.len()).collect());
        };
        let mut rows = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= ids.len() {
                return Err(Error::invalid(format!(
                    "position {p} outside sequence of length {}",
                    ids.len()
                )));
            }
            let r = active
                .binary_search(&p)
                .map_err(|_| Error::invalid(format!("position {p} is padding")))?;
            rows.push(r);
        }
        rows.sort_unstable();
        rows.dedup();
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum FailureReason {
    MarginStraddlesZero,
    /// An enclosure left its domain, typically the softmax reciprocal at a
    /// large radius.
    SoftmaxDomainError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verified: bool,
    pub predicted_label: usize,
    /// Range of `logit_pred − logit_rival` for the tightest rival; absent
    /// when propagation failed.
    pub margin_interval: Option<(f64, f64)>,
    pub eps: f64,
    pub failure_reason: Option<FailureReason>,
}

/// Logit set under `spec`, exposed for cross-checks against the concrete
/// forward pass.
pub fn abstract_logits(
    model: &TransformerModel,
    ids: &[usize],
    spec: &PerturbationSpec,
    cfg: &PropagationConfig,
) -> Result<Zonotope> {
    let (_, x) = model.input_rows(ids)?;
    let rows = spec.rows(ids)?;
    propagate::logits(model, &x, &rows, spec.eps, cfg)
}

/// Checks that every point of the ball keeps the model's own unperturbed
/// prediction.
pub fn verify_at_radius(model: &TransformerModel, ids: &[usize], spec: &PerturbationSpec) -> Result<Certificate> {
    verify_with(model, ids, spec, &PropagationConfig::default())
}

pub fn verify_with(
    model: &TransformerModel,
    ids: &[usize],
    spec: &PerturbationSpec,
    cfg: &PropagationConfig,
) -> Result<Certificate> {
    let predicted = argmax(model.logits(ids)?.as_slice().unwrap());
    let failed = |reason| Certificate {
        verified: false,
        predicted_label: predicted,
        margin_interval: None,
        eps: spec.eps,
        failure_reason: Some(reason),
    };
    let z = match abstract_logits(model, ids, spec, cfg) {
        Ok(z) => z,
        Err(Error::Domain { dim, msg }) => {
            return Ok(failed(FailureReason::SoftmaxDomainError(format!(
                "dimension {dim}: {msg}"
            ))))
        }
        Err(e) => return Err(e),
    };
    let classes = z.dim();
    let mut best: Option<(f64, f64)> = None;
    for rival in (0..classes).filter(|&c| c != predicted) {
        let mut a = ndarray::Array1::zeros(classes);
        a[predicted] = 1.0;
        a[rival] = -1.0;
        let r = z.functional_range(a.view(), 0.0)?;
        if best.is_none_or(|b| r.0 < b.0) {
            best = Some(r);
        }
    }
    let (lo, hi) = best.expect("at least two classes");
    if !(lo.is_finite() && hi.is_finite()) {
        return Ok(failed(FailureReason::SoftmaxDomainError(
            "margin bound is not finite".into(),
        )));
    }
    let verified = lo > 0.0;
    Ok(Certificate {
        verified,
        predicted_label: predicted,
        margin_interval: Some((lo, hi)),
        eps: spec.eps,
        failure_reason: (!verified).then_some(FailureReason::MarginStraddlesZero),
    })
}

/// Radius search schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub eps_init: f64,
    pub growth: f64,
    pub eps_cap: f64,
    pub abs_tol: f64,
    /// Halvings of `eps_init` tried before giving up.
    pub max_halvings: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            eps_init: 1e-2,
            growth: 2.0,
            eps_cap: 10.0,
            abs_tol: 1e-7,
            max_halvings: 20,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_init > 0.0
            && self.growth > 1.0
            && self.eps_cap >= self.eps_init
            && self.abs_tol > 0.0
            && self.eps_cap.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid search configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusResult {
    /// Largest radius at which verification succeeded (0 if none did).
    pub eps_max: f64,
    pub cap_hit: bool,
    /// Nothing down to `eps_init / 2^max_halvings` verified.
    pub unverifiable: bool,
    /// Smallest radius at which verification failed, if one was tested.
    pub first_failure: Option<f64>,
    pub evaluations: usize,
}

/// Exponential growth then bisection for the largest verifiable radius.
pub fn max_verifiable_radius(
    model: &TransformerModel,
    ids: &[usize],
    positions: Option<&[usize]>,
    search: &SearchConfig,
    cfg: &PropagationConfig,
) -> Result<RadiusResult> {
    search.validate()?;
    let base = PerturbationSpec {
        eps: 0.0,
        positions: positions.map(<[usize]>::to_vec),
    };
    base.rows(ids)?;
    let mut evaluations = 0;
    let mut check = |eps: f64| -> Result<bool> {
        evaluations += 1;
        Ok(verify_with(model, ids, &base.with_eps(eps), cfg)?.verified)
    };

    let (mut lo, mut hi);
    if check(search.eps_init)? {
        lo = search.eps_init;
        loop {
            let next = (lo * search.growth).min(search.eps_cap);
            if check(next)? {
                lo = next;
                if next >= search.eps_cap {
                    return Ok(RadiusResult {
                        eps_max: lo,
                        cap_hit: true,
                        unverifiable: false,
                        first_failure: None,
                        evaluations,
                    });
                }
            } else {
                hi = next;
                break;
            }
        }
    } else {
        hi = search.eps_init;
        let mut found = None;
        let mut e = search.eps_init;
        for _ in 0..search.max_halvings {
            e /= 2.0;
            if check(e)? {
                found = Some(e);
                break;
            }
            hi = e;
        }
        match found {
            Some(e) => lo = e,
            None => {
                return Ok(RadiusResult {
                    eps_max: 0.0,
                    cap_hit: false,
                    unverifiable: true,
                    first_failure: Some(hi),
                    evaluations,
                })
            }
        }
    }
    while hi - lo > search.abs_tol {
        let mid = 0.5 * (lo + hi);
        if check(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RadiusResult {
        eps_max: lo,
        cap_hit: false,
        unverifiable: false,
        first_failure: Some(hi),
        evaluations,
    })
}

/// A sentence is certified when the verified radius reaches the threshold.
pub fn certified(eps_max: f64, threshold: f64) -> bool {
    threshold <= eps_max
}

/// `max_verifiable_radius ≥ D`, with the radius search attached.
pub fn certify_sentence(
    model: &TransformerModel,
    ids: &[usize],
    threshold: f64,
    positions: Option<&[usize]>,
    search: &SearchConfig,
) -> Result<(bool, RadiusResult)> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {threshold}")));
    }
    let r = max_verifiable_radius(model, ids, positions, search, &PropagationConfig::default())?;
    Ok((certified(r.eps_max, threshold), r))
}
