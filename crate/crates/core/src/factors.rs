//! Additive and multiplicative correction-factor tables derived from fitted
//! models, plus the closed-form identities that relate them.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinRef, IntervalGrid};
use crate::models::{FittedModel, ModelId, PerBinFit};
use crate::moments::BinMoments;
use crate::record::{PartialObservation, Session};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    /// `ŷ = Δ + b x`, Δ in kg.
    Additive,
    /// `ŷ = F x`.
    Multiplicative,
}

impl FactorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorKind::Additive => "additive",
            FactorKind::Multiplicative => "multiplicative",
        }
    }
}

/// Correction factors keyed by the sampled milking's own interval class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTable<T> {
    pub kind: FactorKind,
    /// `entries[session][bin]`; `None` only where an unsmoothed class had no
    /// records to borrow from.
    pub entries: [Vec<Option<T>>; 2],
    /// Partial-yield coefficient paired with additive factors.
    pub b: Option<T>,
    pub source_model: ModelId,
    pub grid: IntervalGrid<T>,
}

impl<T: Scalar> FactorTable<T> {
    pub fn get(&self, session: Session, bin: usize) -> Result<T> {
        self.entries[session.index()]
            .get(bin)
            .copied()
            .flatten()
            .ok_or_else(|| Error::MissingFactor {
                session: session.to_string(),
                bin,
            })
    }

    /// Applies the factor of the observation's interval class.
    pub fn apply(&self, obs: &PartialObservation<T>) -> Result<T> {
        let bin = self.grid.session_index_of(obs.interval_h, obs.session)?;
        let f = self.get(obs.session, bin)?;
        Ok(match self.kind {
            FactorKind::Additive => f + self.b.unwrap_or(T::lit(2.0)) * obs.partial_kg,
            FactorKind::Multiplicative => f * obs.partial_kg,
        })
    }
}

/// Additive factors: class means for M1, `α_j + β t̄` for M2B/M3B.
pub fn acf_table<T: Scalar>(m: &FittedModel<T>, grid: &IntervalGrid<T>) -> Result<FactorTable<T>> {
    let entries = match m.id {
        ModelId::M1 => {
            if grid != &m.grid {
                return Err(Error::Config(format!(
                    "M1 class means were fitted on grid {}, not {grid}",
                    m.grid
                )));
            }
            let PerBinFit::ClassMeans { means } = &m.per_bin else {
                return Err(Error::ModelFile("M1 model lacks class means".into()));
            };
            Session::ALL.map(|s| {
                borrow_sparse_classes(
                    &means[s.index()],
                    &m.moments.cells[s.index()].iter().map(|c| c.n).collect::<Vec<_>>(),
                    m.options.min_bin_count,
                )
            })
        }
        ModelId::M2B | ModelId::M3B => {
            let beta = m.beta()?;
            let mut out = [Vec::new(), Vec::new()];
            for s in Session::ALL {
                let a = m.alpha_of(s)?;
                out[s.index()] = grid.bins().map(|b| Some(a + beta * b.midpoint)).collect();
            }
            out
        }
        other => {
            return Err(Error::Usage(format!(
                "additive factors come from M1, M2B or M3B, not {other}"
            )))
        }
    };
    Ok(FactorTable {
        kind: FactorKind::Additive,
        entries,
        b: m.b,
        source_model: m.id,
        grid: *grid,
    })
}

/// Classes with fewer than `min_count` records take the value of the nearest
/// class that has enough; ties go to the class nearer the grid centre so the
/// AM and PM tables stay mirror images.
fn borrow_sparse_classes<T: Scalar>(values: &[Option<T>], counts: &[usize], min_count: usize) -> Vec<Option<T>> {
    let k = values.len();
    let ok: Vec<usize> = (0..k)
        .filter(|&b| counts[b] >= min_count.max(1) && values[b].is_some())
        .collect();
    (0..k)
        .map(|b| {
            if ok.contains(&b) {
                return values[b];
            }
            let centre_dist = |c: usize| (2 * c + 1).abs_diff(k);
            match ok.iter().min_by_key(|&&c| (c.abs_diff(b), centre_dist(c))) {
                Some(&c) => {
                    debug!("class {b} has {} record(s); borrowing the factor of class {c}", counts[b]);
                    values[c]
                }
                None => values[b],
            }
        })
        .collect()
}

/// Sum of the AM factor of a class and the PM factor of its complement,
/// together with the value `(2 - b) ȳ` expected for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSum<T> {
    pub sum: T,
    /// `(2 - b) ȳ` with `ȳ` the mean daily yield of the AM class; `None`
    /// when the class is empty.
    pub expected: Option<T>,
}

pub fn pair_sum<T: Scalar>(table: &FactorTable<T>, am_bin: &BinRef<T>, moments: &BinMoments<T>) -> Result<PairSum<T>> {
    if table.kind != FactorKind::Additive {
        return Err(Error::Usage("pair sums are defined for additive tables only".into()));
    }
    let pm_bin = table.grid.complement_bin(am_bin);
    let sum = table.get(Session::Am, am_bin.index)? + table.get(Session::Pm, pm_bin.index)?;
    let cell = moments.cell(Session::Am, am_bin.index);
    let expected = (!cell.is_empty()).then(|| (T::lit(2.0) - table.b.unwrap_or(T::lit(2.0))) * cell.mean_y);
    Ok(PairSum { sum, expected })
}

fn pole_checked<T: Scalar>(denominator: T, session: Session, bin: usize) -> Result<T> {
    if !(denominator > T::zero()) {
        return Err(Error::Pole {
            session: session.to_string(),
            bin,
            denominator: denominator.as_f64(),
        });
    }
    factor_checked(T::one() / denominator, session, bin)
}

fn factor_checked<T: Scalar>(f: T, session: Session, bin: usize) -> Result<T> {
    if !(f > T::one()) || !f.is_finite() {
        return Err(Error::Domain(format!(
            "multiplicative factor {f} for {session} class {bin} does not exceed 1"
        )));
    }
    Ok(f)
}

/// Multiplicative factor of one class.
pub fn mcf_entry<T: Scalar>(
    m: &FittedModel<T>,
    session: Session,
    bin: &BinRef<T>,
    moments: &BinMoments<T>,
) -> Result<T> {
    let j = session.index();
    let t = bin.midpoint;
    match (&m.per_bin, m.id) {
        (PerBinFit::Quadratic { coef, .. }, ModelId::M4) => {
            let c = coef[j];
            pole_checked(c[0] + c[1] * t + c[2] * t * t, session, bin.index)
        }
        (PerBinFit::SmoothedSlopes { line, .. }, ModelId::M5) => {
            pole_checked(line[j][0] + line[j][1] * t, session, bin.index)
        }
        (_, ModelId::M6B) => pole_checked(m.alpha_of(session)? + m.beta()? * t, session, bin.index),
        (_, ModelId::M7B) => {
            let b = m.b.ok_or_else(|| Error::ModelFile("M7B model lacks b".into()))?;
            let cell = moments.cell_or_session(session, bin.index, m.options.min_bin_count);
            if cell.is_empty() || !(cell.mean_x > T::zero()) || !(cell.mean_y > T::zero()) {
                return Err(Error::MissingFactor {
                    session: session.to_string(),
                    bin: bin.index,
                });
            }
            let half = T::lit(0.5);
            let rho = (half
                * (cell.var_y / (cell.mean_y * cell.mean_y) - b * cell.var_x / (cell.mean_x * cell.mean_x)))
                .exp();
            let f = rho * cell.mean_x.powf(b - T::one()) * (m.alpha_of(session)? + m.beta()? * t).exp();
            factor_checked(f, session, bin.index)
        }
        (_, other) => Err(Error::Usage(format!(
            "multiplicative factors come from M4, M5, M6B or M7B, not {other}"
        ))),
    }
}

/// Multiplicative factors at the class midpoints of `grid`.
pub fn mcf_table<T: Scalar>(
    m: &FittedModel<T>,
    grid: &IntervalGrid<T>,
    moments: &BinMoments<T>,
) -> Result<FactorTable<T>> {
    if m.id == ModelId::M7B && moments.grid != *grid {
        return Err(Error::Config(format!(
            "moments were computed on grid {}, not {grid}",
            moments.grid
        )));
    }
    let mut entries = [Vec::new(), Vec::new()];
    for s in Session::ALL {
        entries[s.index()] = grid
            .bins()
            .map(|b| mcf_entry(m, s, &b, moments).map(Some))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(FactorTable {
        kind: FactorKind::Multiplicative,
        entries,
        b: None,
        source_model: m.id,
        grid: *grid,
    })
}

/// The factor of the other milking implied by `F_AM⁻¹ + F_PM⁻¹ = 1`.
pub fn complement_mcf<T: Scalar>(f: T) -> Result<T> {
    if !(f > T::one()) || !f.is_finite() {
        return Err(Error::Domain(format!(
            "a single milking cannot yield the whole day: factor {f} must exceed 1"
        )));
    }
    Ok(f / (f - T::one()))
}

fn require_m6<T: Scalar>(m: &FittedModel<T>) -> Result<()> {
    if !matches!(m.id, ModelId::M6A | ModelId::M6B) {
        return Err(Error::Usage(format!("proportion-model factors need an M6 fit, not {}", m.id)));
    }
    Ok(())
}

/// Factor converting the combined yield of the sampled `sessions` into the
/// daily yield, for a test day whose AM milking falls in `am_bin`.
pub fn mcf_subset<T: Scalar>(
    m: &FittedModel<T>,
    sessions: &[Session],
    grid: &IntervalGrid<T>,
    am_bin: &BinRef<T>,
) -> Result<T> {
    require_m6(m)?;
    let mut chosen = sessions.to_vec();
    chosen.sort();
    chosen.dedup();
    if chosen.is_empty() {
        return Err(Error::Usage("milking subset must not be empty".into()));
    }
    let beta = m.beta()?;
    let mut denom = T::zero();
    for &s in &chosen {
        let bin = match s {
            Session::Am => *am_bin,
            Session::Pm => grid.complement_bin(am_bin),
        };
        denom += m.alpha_of(s)? + beta * bin.midpoint;
    }
    if !(denom > T::zero()) {
        return Err(Error::Pole {
            session: chosen.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+"),
            bin: am_bin.index,
            denominator: denom.as_f64(),
        });
    }
    Ok(T::one() / denom)
}

fn require_dim<T: Scalar>(m: &FittedModel<T>) -> Result<(T, T)> {
    match (m.gamma, m.d0) {
        (Some(g), Some(d0)) => Ok((g, d0)),
        _ => Err(Error::Usage(format!("{} was fitted without a days-in-milk term", m.id))),
    }
}

/// Multiplicative prediction with the class-level days-in-milk adjustment
/// `ŷ = F x + γ (d̄ - d0) x / x̄`, for an M5 fit with a DIM term.
pub fn dim_adjusted_prediction<T: Scalar>(
    m: &FittedModel<T>,
    obs: &PartialObservation<T>,
    moments: &BinMoments<T>,
    bin: &BinRef<T>,
) -> Result<T> {
    if m.id != ModelId::M5 {
        return Err(Error::Usage(format!(
            "DIM-adjusted multiplicative prediction needs an M5 fit with DIM, not {}",
            m.id
        )));
    }
    let (gamma, d0) = require_dim(m)?;
    let cell = moments.cell(obs.session, bin.index);
    if !(cell.mean_x > T::zero()) {
        return Err(Error::Domain(format!(
            "{} class {} has zero mean partial yield",
            obs.session, bin.index
        )));
    }
    let d_bar = cell
        .mean_dim
        .ok_or_else(|| Error::Domain("class moments carry no DIM".into()))?;
    let f = mcf_entry(m, obs.session, bin, moments)?;
    Ok(f * obs.partial_kg + gamma * (d_bar - d0) * obs.partial_kg / cell.mean_x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimAdjustedFactor<T> {
    /// `1 / (α_j + β t̄ + γ (d̄ - d0))`.
    pub factor: T,
    /// `1 / (α_j + β t̄)`.
    pub unadjusted: T,
    /// `γ (d̄ - d0) / x̄`, reported and never applied.
    pub bias_term: T,
}

/// Proportion-model factor of one class with the class's mean DIM folded in.
pub fn dim_adjusted_mcf<T: Scalar>(
    m: &FittedModel<T>,
    session: Session,
    moments: &BinMoments<T>,
    bin: &BinRef<T>,
) -> Result<DimAdjustedFactor<T>> {
    require_m6(m)?;
    let (gamma, d0) = require_dim(m)?;
    let cell = moments.cell(session, bin.index);
    let d_bar = cell
        .mean_dim
        .ok_or_else(|| Error::Domain(format!("{session} class {} has no DIM moments", bin.index)))?;
    let base = m.alpha_of(session)? + m.beta()? * bin.midpoint;
    let shift = gamma * (d_bar - d0);
    let factor = pole_checked(base + shift, session, bin.index)?;
    let unadjusted = pole_checked(base, session, bin.index)?;
    let bias_term = if cell.mean_x > T::zero() {
        shift / cell.mean_x
    } else {
        T::nan()
    };
    Ok(DimAdjustedFactor {
        factor,
        unadjusted,
        bias_term,
    })
}
