//! The estimator catalogue: fitting and prediction for M1 through M7B.
//!
//! | id        | fitted relation                                   | prediction            |
//! |-----------|---------------------------------------------------|-----------------------|
//! | M1        | class means of `y - 2x`                           | additive table        |
//! | M2A / M2B | `y - 2x = α_j + β t`                              | direct / additive     |
//! | M3A / M3B | `y = α_j + β t + b x`                             | direct / additive     |
//! | M4        | `Σx/Σy` per class, quadratic in the class midpoint | multiplicative table  |
//! | M5        | `Σy/Σx` per class, reciprocal linear in midpoint   | multiplicative table  |
//! | M6A / M6B | `x/y = α_j + β t`                                 | direct / multiplicative |
//! | M7A / M7B | `ln y = α_j + β t + b ln x`                       | direct / multiplicative |

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{acf_table, mcf_table, FactorKind, FactorTable};
use crate::grid::IntervalGrid;
use crate::lsq::{ols_fit_named, origin_fit, ratio_of_sums, DesignRow};
use crate::moments::{class_stats, BinMoments};
use crate::record::{MilkingDataset, MilkingRecord, PartialObservation, Session};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2A,
    M2B,
    M3A,
    M3B,
    M4,
    M5,
    M6A,
    M6B,
    M7A,
    M7B,
}

impl ModelId {
    pub const ALL: [ModelId; 11] = [
        ModelId::M1,
        ModelId::M2A,
        ModelId::M2B,
        ModelId::M3A,
        ModelId::M3B,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6A,
        ModelId::M6B,
        ModelId::M7A,
        ModelId::M7B,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::M1 => "M1",
            ModelId::M2A => "M2A",
            ModelId::M2B => "M2B",
            ModelId::M3A => "M3A",
            ModelId::M3B => "M3B",
            ModelId::M4 => "M4",
            ModelId::M5 => "M5",
            ModelId::M6A => "M6A",
            ModelId::M6B => "M6B",
            ModelId::M7A => "M7A",
            ModelId::M7B => "M7B",
        }
    }

    /// A-suffix models predict straight from their coefficients.
    pub fn predicts_directly(self) -> bool {
        matches!(self, ModelId::M2A | ModelId::M3A | ModelId::M6A | ModelId::M7A)
    }

    pub fn default_mode(self) -> PredictMode {
        if self.predicts_directly() {
            PredictMode::Direct
        } else {
            PredictMode::Factor
        }
    }

    /// Kind of correction factor the model tabulates.
    pub fn factor_kind(self) -> FactorKind {
        match self {
            ModelId::M1 | ModelId::M2A | ModelId::M2B | ModelId::M3A | ModelId::M3B => {
                FactorKind::Additive
            }
            _ => FactorKind::Multiplicative,
        }
    }

    /// The other member of an A/B pair.
    pub fn counterpart(self) -> Option<ModelId> {
        match self {
            ModelId::M2A => Some(ModelId::M2B),
            ModelId::M2B => Some(ModelId::M2A),
            ModelId::M3A => Some(ModelId::M3B),
            ModelId::M3B => Some(ModelId::M3A),
            ModelId::M6A => Some(ModelId::M6B),
            ModelId::M6B => Some(ModelId::M6A),
            ModelId::M7A => Some(ModelId::M7B),
            ModelId::M7B => Some(ModelId::M7A),
            _ => None,
        }
    }

    fn supports_dim(self) -> bool {
        matches!(
            self,
            ModelId::M2A
                | ModelId::M2B
                | ModelId::M3A
                | ModelId::M3B
                | ModelId::M5
                | ModelId::M6A
                | ModelId::M6B
        )
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == up)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown model {s:?}; valid ids: {}",
                    Self::valid_names()
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictMode {
    /// Evaluate the fitted equation at the observed interval.
    Direct,
    /// Look up the correction factor of the observed interval's class.
    Factor,
}

/// How M5 turns a class into its raw factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum M5Slope {
    /// `Σy / Σx` over the class.
    #[default]
    RatioOfSums,
    /// Least-squares slope through the origin, `Σxy / Σx²`.
    OriginSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Add a days-in-milk term (M2, M3, M5, M6 only).
    pub include_dim: bool,
    pub m5_slope: M5Slope,
    /// Classes with fewer records borrow from neighbours or session totals.
    pub min_bin_count: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            include_dim: false,
            m5_slope: M5Slope::default(),
            min_bin_count: 5,
        }
    }
}

/// Standard errors of the regression coefficients, on the uncentred scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors<T> {
    pub alpha: [T; 2],
    pub beta: T,
    pub gamma: Option<T>,
    pub b: Option<T>,
}

/// Class-level quantities of the two-stage models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PerBinFit<T> {
    None,
    /// M1: raw class means of `y - 2x`; `None` where the class is empty.
    ClassMeans { means: [Vec<Option<T>>; 2] },
    /// M4: class ratios `Σx/Σy` and per-session `(α, β₁, β₂)` of the
    /// quadratic in the class midpoint.
    Quadratic {
        ratios: [Vec<Option<T>>; 2],
        coef: [[T; 3]; 2],
    },
    /// M5: class factors `b_jk` and per-session `(α, β)` of the line fitted
    /// to their reciprocals.
    SmoothedSlopes {
        slopes: [Vec<Option<T>>; 2],
        line: [[T; 2]; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub id: ModelId,
    /// Session intercepts `α_AM, α_PM` of the single-stage regressions.
    pub alpha: Option<[T; 2]>,
    /// Interval coefficient.
    pub beta: Option<T>,
    /// Days-in-milk coefficient.
    pub gamma: Option<T>,
    /// Coefficient of the partial yield (or its log); exactly 2 for M1/M2.
    pub b: Option<T>,
    pub per_bin: PerBinFit<T>,
    /// Days-in-milk centring constant.
    pub d0: Option<T>,
    pub grid: IntervalGrid<T>,
    pub moments: BinMoments<T>,
    pub std_errors: Option<StdErrors<T>>,
    pub residual_variance: Option<T>,
    pub n_records: usize,
    pub options: FitOptions,
    pub warnings: Vec<String>,
}

impl<T: Scalar> FittedModel<T> {
    pub fn alpha_of(&self, s: Session) -> Result<T> {
        self.alpha
            .map(|a| a[s.index()])
            .ok_or_else(|| Error::Usage(format!("{} has no session intercepts", self.id)))
    }

    pub fn beta(&self) -> Result<T> {
        self.beta
            .ok_or_else(|| Error::Usage(format!("{} has no interval coefficient", self.id)))
    }

    /// `α_j + β t (+ γ (d - d0))`: the linear predictor of the single-stage models.
    fn linear_part(&self, obs: &PartialObservation<T>) -> Result<T> {
        let mut eta = self.alpha_of(obs.session)? + self.beta()? * obs.interval_h;
        if let (Some(g), Some(d0), Some(d)) = (self.gamma, self.d0, obs.dim) {
            eta += g * (d - d0);
        }
        Ok(eta)
    }

    /// The same coefficients under the other member of an A/B pair.
    pub fn as_variant(&self, id: ModelId) -> Result<Self> {
        if self.id.counterpart() != Some(id) && self.id != id {
            return Err(Error::Usage(format!("{} and {} do not share a fit", self.id, id)));
        }
        Ok(Self { id, ..self.clone() })
    }
}

pub fn fit_model<T: Scalar>(
    id: ModelId,
    data: &MilkingDataset<T>,
    grid: &IntervalGrid<T>,
) -> Result<FittedModel<T>> {
    fit_model_with(id, data, grid, &FitOptions::default())
}

pub fn fit_model_with<T: Scalar>(
    id: ModelId,
    data: &MilkingDataset<T>,
    grid: &IntervalGrid<T>,
    opts: &FitOptions,
) -> Result<FittedModel<T>> {
    if data.is_empty() {
        return Err(Error::Domain("cannot fit on an empty dataset".into()));
    }
    if let Some(r) = data.records.iter().find(|r| r.daily_kg.is_none()) {
        return Err(Error::Domain(format!(
            "fitting needs daily yields; cow {} ({}) has none",
            r.cow_id, r.session
        )));
    }
    data.validate()?;
    if opts.include_dim {
        if !id.supports_dim() {
            return Err(Error::Usage(format!("{id} has no days-in-milk term")));
        }
        if !data.has_dim() {
            return Err(Error::Domain("days-in-milk term requested but records lack DIM".into()));
        }
    }
    let moments = class_stats(data, grid)?;
    let mut model = FittedModel {
        id,
        alpha: None,
        beta: None,
        gamma: None,
        b: None,
        per_bin: PerBinFit::None,
        d0: None,
        grid: *grid,
        moments,
        std_errors: None,
        residual_variance: None,
        n_records: data.len(),
        options: *opts,
        warnings: Vec::new(),
    };
    let two = T::lit(2.0);
    match id {
        ModelId::M1 => fit_class_means(&mut model, data)?,
        ModelId::M2A | ModelId::M2B => {
            fit_linear(&mut model, data, |r| Ok(r.daily()? - two * r.partial_kg), None)?;
            model.b = Some(two);
        }
        ModelId::M3A | ModelId::M3B => {
            fit_linear(&mut model, data, |r| r.daily(), Some(&|r| Ok(r.partial_kg)))?;
        }
        ModelId::M4 => fit_quadratic_ratios(&mut model)?,
        ModelId::M5 => fit_smoothed_slopes(&mut model, data)?,
        ModelId::M6A | ModelId::M6B => {
            fit_linear(
                &mut model,
                data,
                |r| {
                    let y = r.daily()?;
                    if !(y > T::zero()) {
                        return Err(Error::Domain(format!("cow {}: zero daily yield", r.cow_id)));
                    }
                    Ok(r.partial_kg / y)
                },
                None,
            )?;
        }
        ModelId::M7A | ModelId::M7B => {
            let bad: Vec<String> = data
                .records
                .iter()
                .filter(|r| !(r.partial_kg > T::zero() && r.daily_kg.unwrap_or_default() > T::zero()))
                .map(|r| format!("{} ({})", r.cow_id, r.session))
                .collect();
            if !bad.is_empty() {
                return Err(Error::Domain(format!(
                    "{id} needs positive yields; offending records: {}",
                    bad.join(", ")
                )));
            }
            fit_linear(&mut model, data, |r| Ok(r.daily()?.ln()), Some(&|r| Ok(r.partial_kg.ln())))?;
        }
    }
    Ok(model)
}

type Extract<'a, T> = &'a dyn Fn(&MilkingRecord<T>) -> Result<T>;

/// OLS of `response` on session intercepts, the centred interval, optionally
/// centred DIM, and optionally one more regressor whose coefficient is `b`.
fn fit_linear<T: Scalar>(
    model: &mut FittedModel<T>,
    data: &MilkingDataset<T>,
    response: impl Fn(&MilkingRecord<T>) -> Result<T>,
    extra: Option<Extract<'_, T>>,
) -> Result<()> {
    let ts: Vec<T> = data.records.iter().map(|r| r.interval_h).collect();
    let t_bar = mean(&ts).unwrap_or_default();
    let d0 = if model.options.include_dim {
        let ds: Vec<T> = data.records.iter().map(|r| r.dim.unwrap_or_default()).collect();
        mean(&ds)
    } else {
        None
    };

    let mut names = vec!["alpha_AM", "alpha_PM", "beta"];
    if d0.is_some() {
        names.push("gamma");
    }
    if extra.is_some() {
        names.push("b");
    }
    let rows = data
        .records
        .iter()
        .map(|r| {
            let mut reg = vec![T::zero(), T::zero(), r.interval_h - t_bar];
            reg[r.session.index()] = T::one();
            if let Some(d0) = d0 {
                reg.push(r.dim.unwrap_or_default() - d0);
            }
            if let Some(f) = extra {
                reg.push(f(r)?);
            }
            Ok(DesignRow::new(reg, response(r)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let est = ols_fit_named(&rows, &names)?;
    let c = &est.coefficients;
    let v = &est.covariance;

    let beta = c[2];
    let alpha = [c[0] - beta * t_bar, c[1] - beta * t_bar];
    let se_alpha = [0, 1].map(|j| {
        (v[j][j] + t_bar * t_bar * v[2][2] - T::lit(2.0) * t_bar * v[j][2])
            .max(T::zero())
            .sqrt()
    });
    let mut col = 3;
    let (gamma, se_gamma) = if d0.is_some() {
        col += 1;
        (Some(c[col - 1]), Some(est.standard_errors[col - 1]))
    } else {
        (None, None)
    };
    let (b, se_b) = if extra.is_some() {
        (Some(c[col]), Some(est.standard_errors[col]))
    } else {
        (None, None)
    };

    model.alpha = Some(alpha);
    model.beta = Some(beta);
    model.gamma = gamma;
    model.b = b;
    model.d0 = d0;
    model.std_errors = Some(StdErrors {
        alpha: se_alpha,
        beta: est.standard_errors[2],
        gamma: se_gamma,
        b: se_b,
    });
    model.residual_variance = Some(est.residual_variance);
    Ok(())
}

fn fit_class_means<T: Scalar>(model: &mut FittedModel<T>, data: &MilkingDataset<T>) -> Result<()> {
    let k = model.grid.bin_count;
    let mut acc = [vec![(T::zero(), 0usize); k], vec![(T::zero(), 0usize); k]];
    for r in &data.records {
        let b = model.grid.session_index_of(r.interval_h, r.session)?;
        let cell = &mut acc[r.session.index()][b];
        cell.0 += r.daily()? - T::lit(2.0) * r.partial_kg;
        cell.1 += 1;
    }
    let means = acc.map(|cells| {
        cells
            .into_iter()
            .map(|(s, n)| (n > 0).then(|| s / T::from_count(n)))
            .collect::<Vec<_>>()
    });
    for s in Session::ALL {
        for (b, cell) in model.moments.cells[s.index()].iter().enumerate() {
            if cell.n < model.options.min_bin_count {
                model.warnings.push(format!(
                    "M1 {s} class {b} has {} record(s); its factor is borrowed from the nearest populated class",
                    cell.n
                ));
            }
        }
    }
    model.b = Some(T::lit(2.0));
    model.per_bin = PerBinFit::ClassMeans { means };
    Ok(())
}

/// Per-session OLS of class-level values on powers of the centred midpoint,
/// using classes with at least `min_bin_count` records. Returns uncentred
/// polynomial coefficients, lowest power first.
fn smooth_over_classes<T: Scalar>(
    model: &FittedModel<T>,
    session: Session,
    values: &[Option<T>],
    degree: usize,
) -> Result<Vec<T>> {
    let centre = T::lit(12.0);
    let rows: Vec<DesignRow<T>> = model
        .grid
        .bins()
        .zip(values)
        .zip(&model.moments.cells[session.index()])
        .filter(|(_, cell)| cell.n >= model.options.min_bin_count.max(1))
        .filter_map(|((bin, v), _)| {
            v.map(|v| {
                let u = bin.midpoint - centre;
                let reg = (0..=degree).map(|p| u.powi(p as i32)).collect();
                DesignRow::new(reg, v)
            })
        })
        .collect();
    if rows.len() <= degree + 1 {
        return Err(Error::Degenerate(format!(
            "{} {session}: {} populated class(es) cannot support a degree-{degree} smoother",
            model.id,
            rows.len()
        )));
    }
    let c = ols_fit_named(&rows, &["const", "t", "t2"][..=degree])?.coefficients;
    // Expand Σ c_p (t - centre)^p into powers of t.
    let mut out = vec![T::zero(); degree + 1];
    for (p, &cp) in c.iter().enumerate() {
        for q in 0..=p {
            let binom = T::from_count(binomial(p, q));
            out[q] += cp * binom * (-centre).powi((p - q) as i32);
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn fit_quadratic_ratios<T: Scalar>(model: &mut FittedModel<T>) -> Result<()> {
    let ratios = [0, 1].map(|s| {
        model.moments.cells[s]
            .iter()
            .map(|c| (c.n > 0 && c.sum_y > T::zero()).then(|| c.sum_x / c.sum_y))
            .collect::<Vec<_>>()
    });
    let mut coef = [[T::zero(); 3]; 2];
    for s in Session::ALL {
        let c = smooth_over_classes(model, s, &ratios[s.index()], 2)?;
        coef[s.index()] = [c[0], c[1], c[2]];
    }
    model.per_bin = PerBinFit::Quadratic { ratios, coef };
    Ok(())
}

fn fit_smoothed_slopes<T: Scalar>(model: &mut FittedModel<T>, data: &MilkingDataset<T>) -> Result<()> {
    let k = model.grid.bin_count;
    let mut cells: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); k], vec![Vec::new(); k]];
    for (i, r) in data.records.iter().enumerate() {
        cells[r.session.index()][model.grid.session_index_of(r.interval_h, r.session)?].push(i);
    }

    // With a DIM term, γ comes from y = F_jk x + γ (d - d0) pooled over classes.
    let mut pooled: Option<Vec<Option<T>>> = None;
    if model.options.include_dim {
        let ds: Vec<T> = data.records.iter().map(|r| r.dim.unwrap_or_default()).collect();
        let d0 = mean(&ds).unwrap_or_default();
        let occupied: Vec<(usize, usize)> = (0..2)
            .flat_map(|s| (0..k).map(move |b| (s, b)))
            .filter(|&(s, b)| !cells[s][b].is_empty())
            .collect();
        let p = occupied.len() + 1;
        let names: Vec<String> = occupied
            .iter()
            .map(|&(s, b)| format!("F_{}_{b}", Session::ALL[s]))
            .chain(std::iter::once("gamma".to_string()))
            .collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut rows = Vec::with_capacity(data.len());
        for (col, &(s, b)) in occupied.iter().enumerate() {
            for &i in &cells[s][b] {
                let r = &data.records[i];
                let mut reg = vec![T::zero(); p];
                reg[col] = r.partial_kg;
                reg[p - 1] = r.dim.unwrap_or_default() - d0;
                rows.push(DesignRow::new(reg, r.daily()?));
            }
        }
        let est = ols_fit_named(&rows, &name_refs)?;
        let mut per_cell = vec![None; 2 * k];
        for (col, &(s, b)) in occupied.iter().enumerate() {
            per_cell[s * k + b] = Some(est.coefficients[col]);
        }
        model.gamma = Some(est.coefficients[p - 1]);
        model.d0 = Some(d0);
        model.residual_variance = Some(est.residual_variance);
        pooled = Some(per_cell);
    }

    let mut slopes: [Vec<Option<T>>; 2] = [vec![None; k], vec![None; k]];
    for s in 0..2 {
        for b in 0..k {
            let idx = &cells[s][b];
            if idx.is_empty() {
                continue;
            }
            let xs: Vec<T> = idx.iter().map(|&i| data.records[i].partial_kg).collect();
            let ys: Vec<T> = idx
                .iter()
                .map(|&i| {
                    let r = &data.records[i];
                    let y = r.daily_kg.unwrap_or_default();
                    match (model.gamma, model.d0) {
                        (Some(g), Some(d0)) => y - g * (r.dim.unwrap_or_default() - d0),
                        _ => y,
                    }
                })
                .collect();
            let f = match model.options.m5_slope {
                M5Slope::RatioOfSums => ratio_of_sums(&xs, &ys),
                M5Slope::OriginSlope => match &pooled {
                    Some(pc) => pc[s * k + b].ok_or_else(|| Error::Degenerate("missing slope".into())),
                    None => origin_fit(&xs, &ys),
                },
            };
            slopes[s][b] = f.ok();
        }
    }
    let reciprocals = slopes.clone().map(|v| {
        v.into_iter()
            .map(|f| f.filter(|&f| f > T::zero()).map(|f| T::one() / f))
            .collect::<Vec<_>>()
    });
    let mut line = [[T::zero(); 2]; 2];
    for s in Session::ALL {
        let c = smooth_over_classes(model, s, &reciprocals[s.index()], 1)?;
        line[s.index()] = [c[0], c[1]];
    }
    model.per_bin = PerBinFit::SmoothedSlopes { slopes, line };
    Ok(())
}

/// A fitted model bound to one prediction mode, with any factor table
/// derived once up front.
#[derive(Debug, Clone)]
pub enum Predictor<'a, T> {
    Direct(&'a FittedModel<T>),
    Table(FactorTable<T>),
}

impl<'a, T: Scalar> Predictor<'a, T> {
    pub fn new(model: &'a FittedModel<T>, mode: PredictMode) -> Result<Self> {
        match mode {
            PredictMode::Direct => {
                if !model.id.predicts_directly() {
                    return Err(Error::Usage(format!(
                        "{} predicts through correction factors; direct mode is for M2A, M3A, M6A, M7A",
                        model.id
                    )));
                }
                Ok(Predictor::Direct(model))
            }
            PredictMode::Factor => {
                let table = match model.id.factor_kind() {
                    FactorKind::Additive => acf_table(&model.as_factor_variant()?, &model.grid)?,
                    FactorKind::Multiplicative => {
                        mcf_table(&model.as_factor_variant()?, &model.grid, &model.moments)?
                    }
                };
                Ok(Predictor::Table(table))
            }
        }
    }

    pub fn predict(&self, obs: &PartialObservation<T>) -> Result<T> {
        let y = match self {
            Predictor::Direct(m) => predict_direct(m, obs)?,
            Predictor::Table(t) => t.apply(obs)?,
        };
        if y < T::zero() {
            warn!("negative daily yield estimate {y} clamped to 0");
            return Ok(T::zero());
        }
        Ok(y)
    }
}

impl<T: Scalar> FittedModel<T> {
    /// Factor tables are derived from the B member of a pair.
    fn as_factor_variant(&self) -> Result<Self> {
        match self.id {
            ModelId::M2A | ModelId::M3A | ModelId::M6A | ModelId::M7A => {
                self.as_variant(self.id.counterpart().unwrap_or(self.id))
            }
            _ => Ok(self.clone()),
        }
    }
}

fn predict_direct<T: Scalar>(m: &FittedModel<T>, obs: &PartialObservation<T>) -> Result<T> {
    let x = obs.partial_kg;
    match m.id {
        ModelId::M2A => Ok(m.linear_part(obs)? + T::lit(2.0) * x),
        ModelId::M3A => Ok(m.linear_part(obs)? + m.b.unwrap_or_default() * x),
        ModelId::M6A => {
            let share = m.linear_part(obs)?;
            if !(share > T::zero()) {
                return Err(Error::Domain(format!(
                    "fitted proportion {share} at {} h is not positive",
                    obs.interval_h
                )));
            }
            Ok(x / share)
        }
        ModelId::M7A => {
            if !(x > T::zero()) {
                return Err(Error::Domain("exponential model needs a positive partial yield".into()));
            }
            let b = m.b.unwrap_or(T::one());
            Ok(x.powf(b) * m.linear_part(obs)?.exp())
        }
        other => Err(Error::Usage(format!("{other} has no direct predictor"))),
    }
}

/// Daily yield from one milking.
pub fn predict_daily<T: Scalar>(
    model: &FittedModel<T>,
    obs: &PartialObservation<T>,
    mode: PredictMode,
) -> Result<T> {
    Predictor::new(model, mode)?.predict(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Provenance;
    use crate::sim::{simulate_herd, SimConfig};

    fn herd(n: usize) -> MilkingDataset<f64> {
        simulate_herd(&SimConfig {
            n_cows: n,
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn ids_parse_and_display() {
        for id in ModelId::ALL {
            assert_eq!(id.name().parse::<ModelId>().unwrap(), id);
        }
        assert_eq!("m7b".parse::<ModelId>().unwrap(), ModelId::M7B);
        let err = "M9".parse::<ModelId>().unwrap_err().to_string();
        assert!(err.contains("M7B"));
    }

    #[test]
    fn m2_has_fixed_b() {
        let m = fit_model(ModelId::M2A, &herd(300), &IntervalGrid::default()).unwrap();
        assert_eq!(m.b, Some(2.0));
        assert!(m.std_errors.unwrap().b.is_none());
    }

    #[test]
    fn doubling_special_cases() {
        let data = herd(50);
        let mut m = fit_model(ModelId::M7A, &data, &IntervalGrid::default()).unwrap();
        m.b = Some(1.0);
        m.beta = Some(0.0);
        m.alpha = Some([2f64.ln(), 2f64.ln()]);
        for x in [3.0, 11.5, 17.25] {
            let obs = PartialObservation {
                session: Session::Pm,
                interval_h: 13.2,
                partial_kg: x,
                dim: None,
            };
            let y = predict_daily(&m, &obs, PredictMode::Direct).unwrap();
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_mode_rejected_for_table_models() {
        let data = herd(200);
        let grid = IntervalGrid::default();
        for id in [ModelId::M1, ModelId::M3B, ModelId::M4, ModelId::M7B] {
            let m = fit_model(id, &data, &grid).unwrap();
            let obs = data.records[0].observation();
            assert!(matches!(
                predict_daily(&m, &obs, PredictMode::Direct),
                Err(Error::Usage(_))
            ));
        }
    }

    #[test]
    fn m7_rejects_nonpositive_yields() {
        let mut data = herd(20);
        data.records[3].partial_kg = 0.0;
        match fit_model(ModelId::M7A, &data, &IntervalGrid::default()) {
            Err(Error::Domain(msg)) => assert!(msg.contains(&data.records[3].cow_id)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_dim_is_singular() {
        let data = herd(100);
        let opts = FitOptions {
            include_dim: true,
            ..FitOptions::default()
        };
        match fit_model_with(ModelId::M3A, &data, &IntervalGrid::default(), &opts) {
            Err(Error::Singular { columns }) => assert!(columns.contains(&"gamma".to_string())),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            fit_model_with(ModelId::M7A, &data, &IntervalGrid::default(), &opts),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn unlabeled_data_cannot_be_fitted() {
        let mut data = herd(10);
        data.records[0].daily_kg = None;
        assert!(fit_model(ModelId::M1, &data, &IntervalGrid::default()).is_err());
        let empty = MilkingDataset::<f64>::new(vec![], Provenance::Derived { note: String::new() });
        assert!(fit_model(ModelId::M1, &empty, &IntervalGrid::default()).is_err());
    }

    #[test]
    fn refit_is_deterministic() {
        let data = herd(400);
        let grid = IntervalGrid::default();
        for id in ModelId::ALL {
            let a = fit_model(id, &data, &grid).unwrap();
            let b = fit_model(id, &data, &grid).unwrap();
            assert_eq!(a, b, "{id}");
        }
    }

    #[test]
    fn m5_slope_options_agree_roughly() {
        let data = herd(600);
        let grid = IntervalGrid::default();
        let a = fit_model(ModelId::M5, &data, &grid).unwrap();
        let opts = FitOptions {
            m5_slope: M5Slope::OriginSlope,
            ..FitOptions::default()
        };
        let b = fit_model_with(ModelId::M5, &data, &grid, &opts).unwrap();
        let (PerBinFit::SmoothedSlopes { line: la, .. }, PerBinFit::SmoothedSlopes { line: lb, .. }) =
            (&a.per_bin, &b.per_bin)
        else {
            panic!("M5 per-bin data missing");
        };
        for s in 0..2 {
            let fa = 1.0 / (la[s][0] + la[s][1] * 12.25);
            let fb = 1.0 / (lb[s][0] + lb[s][1] * 12.25);
            assert!((fa - fb).abs() < 0.02);
        }
    }

    #[test]
    fn f32_models_fit() {
        let data: MilkingDataset<f32> = simulate_herd(&SimConfig {
            n_cows: 500,
            ..SimConfig::default()
        })
        .unwrap();
        let grid = IntervalGrid::<f32>::default();
        for id in ModelId::ALL {
            let m = fit_model(id, &data, &grid).unwrap();
            let obs = data.records[0].observation();
            let y = predict_daily(&m, &obs, id.default_mode()).unwrap();
            assert!((y - data.records[0].daily_kg.unwrap()).abs() < 3.0, "{id}: {y}");
        }
    }
}
