//! Per-(session, interval class) sample moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::IntervalGrid;
use crate::record::{MilkingDataset, Session};
use crate::scalar::{mean, pop_variance, Scalar};

/// Moments of one cell. Variances use population denominators.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinCell<T> {
    pub n: usize,
    pub mean_x: T,
    pub var_x: T,
    pub mean_y: T,
    pub var_y: T,
    /// Mean of the ratio y / x.
    pub mean_ratio: T,
    pub mean_t: T,
    pub mean_dim: Option<T>,
    /// Bulk single-milking yield of the cell.
    pub sum_x: T,
    /// Bulk daily yield of the cell.
    pub sum_y: T,
}

impl<T: Scalar> BinCell<T> {
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Bulk factor `Σy / Σx` of the cell.
    pub fn ratio_of_sums(&self) -> Option<T> {
        (self.n > 0 && self.sum_x > T::zero()).then(|| self.sum_y / self.sum_x)
    }

    /// Relative gap `|E(y/x) - E(y)/E(x)| / (E(y)/E(x))` between the mean
    /// ratio and its first-order approximation.
    pub fn first_order_gap(&self) -> Option<T> {
        if self.n == 0 || !(self.mean_x > T::zero()) {
            return None;
        }
        let approx = self.mean_y / self.mean_x;
        Some(((self.mean_ratio - approx) / approx).abs())
    }

    fn from_columns(xs: &[T], ys: &[T], ts: &[T], dims: &[Option<T>]) -> Self {
        let Some(mx) = mean(xs) else {
            return Self::default();
        };
        let my = mean(ys).unwrap_or_default();
        let ratios: Vec<T> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| if x > T::zero() { y / x } else { T::nan() })
            .collect();
        let mean_dim = if dims.iter().all(Option::is_some) {
            let d: Vec<T> = dims.iter().map(|d| d.unwrap_or_default()).collect();
            mean(&d)
        } else {
            None
        };
        Self {
            n: xs.len(),
            mean_x: mx,
            var_x: pop_variance(xs, mx),
            mean_y: my,
            var_y: pop_variance(ys, my),
            mean_ratio: mean(&ratios).unwrap_or_default(),
            mean_t: mean(ts).unwrap_or_default(),
            mean_dim,
            sum_x: xs.iter().copied().sum(),
            sum_y: ys.iter().copied().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMoments<T> {
    pub grid: IntervalGrid<T>,
    /// `cells[session][bin]`.
    pub cells: [Vec<BinCell<T>>; 2],
    /// Moments over every record of a session, ignoring bins.
    pub session_totals: [BinCell<T>; 2],
}

impl<T: Scalar> BinMoments<T> {
    pub fn cell(&self, session: Session, bin: usize) -> &BinCell<T> {
        &self.cells[session.index()][bin]
    }

    pub fn total_count(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.n).sum()
    }

    /// `(session, bin)` pairs without records.
    pub fn empty_bins(&self) -> Vec<(Session, usize)> {
        Session::ALL
            .iter()
            .flat_map(|&s| {
                self.cells[s.index()]
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_empty())
                    .map(move |(b, _)| (s, b))
            })
            .collect()
    }

    /// The cell's moments, or the session-wide ones when it has fewer than
    /// `min_count` records.
    pub fn cell_or_session(&self, session: Session, bin: usize, min_count: usize) -> &BinCell<T> {
        let c = self.cell(session, bin);
        if c.n >= min_count.max(1) {
            c
        } else {
            &self.session_totals[session.index()]
        }
    }
}

/// Exact per-bin counts, means, variances and bulk sums of a labelled dataset.
pub fn class_stats<T: Scalar>(data: &MilkingDataset<T>, grid: &IntervalGrid<T>) -> Result<BinMoments<T>> {
    if data.is_empty() {
        return Err(Error::Domain("cannot compute class moments of an empty dataset".into()));
    }
    let k = grid.bin_count;
    type Cols<T> = (Vec<T>, Vec<T>, Vec<T>, Vec<Option<T>>);
    let mut cols: [Vec<Cols<T>>; 2] = [
        vec![Default::default(); k],
        vec![Default::default(); k],
    ];
    for r in &data.records {
        let y = r.daily()?;
        let b = grid.session_index_of(r.interval_h, r.session)?;
        let c = &mut cols[r.session.index()][b];
        c.0.push(r.partial_kg);
        c.1.push(y);
        c.2.push(r.interval_h);
        c.3.push(r.dim);
    }
    let cells = cols.clone().map(|bins| {
        bins.iter()
            .map(|(xs, ys, ts, ds)| BinCell::from_columns(xs, ys, ts, ds))
            .collect::<Vec<_>>()
    });
    let session_totals = cols.map(|bins| {
        let mut all: Cols<T> = Default::default();
        for (xs, ys, ts, ds) in bins {
            all.0.extend(xs);
            all.1.extend(ys);
            all.2.extend(ts);
            all.3.extend(ds);
        }
        BinCell::from_columns(&all.0, &all.1, &all.2, &all.3)
    });
    Ok(BinMoments {
        grid: *grid,
        cells,
        session_totals,
    })
}
