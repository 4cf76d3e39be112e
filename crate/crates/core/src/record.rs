//! Milking records and datasets.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::SimConfig;

/// Which milking of a twice-a-day test day a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Session {
    #[serde(rename = "AM")]
    Am,
    #[serde(rename = "PM")]
    Pm,
}

impl Session {
    pub const ALL: [Session; 2] = [Session::Am, Session::Pm];

    /// 0 for AM, 1 for PM.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Session::Am => 0,
            Session::Pm => 1,
        }
    }

    pub fn other(self) -> Session {
        match self {
            Session::Am => Session::Pm,
            Session::Pm => Session::Am,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Session::Am => "AM",
            Session::Pm => "PM",
        }
    }
}

impl fmt::Display for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Session {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AM" | "am" => Ok(Session::Am),
            "PM" | "pm" => Ok(Session::Pm),
            other => Err(Error::Domain(format!("unknown session {other:?}, expected AM or PM"))),
        }
    }
}

/// One weighed milking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilkingRecord<T> {
    pub cow_id: String,
    pub session: Session,
    /// Hours since the previous milking.
    pub interval_h: T,
    /// Yield of this milking, kg.
    pub partial_kg: T,
    /// Test-day total, kg. Absent for prediction-only records.
    pub daily_kg: Option<T>,
    /// Days in milk.
    pub dim: Option<T>,
}

impl<T: Scalar> MilkingRecord<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_h > T::zero()) || !self.interval_h.is_finite() {
            return Err(Error::Domain(format!(
                "cow {}: interval must be positive, got {}",
                self.cow_id, self.interval_h
            )));
        }
        if !(self.partial_kg >= T::zero()) || !self.partial_kg.is_finite() {
            return Err(Error::Domain(format!(
                "cow {}: partial yield must be non-negative, got {}",
                self.cow_id, self.partial_kg
            )));
        }
        if let Some(y) = self.daily_kg {
            if !y.is_finite() || y < self.partial_kg {
                return Err(Error::Domain(format!(
                    "cow {}: daily yield {} is below the partial yield {}",
                    self.cow_id, y, self.partial_kg
                )));
            }
        }
        if let Some(d) = self.dim {
            if !d.is_finite() {
                return Err(Error::Domain(format!("cow {}: non-finite DIM", self.cow_id)));
            }
        }
        Ok(())
    }

    pub fn observation(&self) -> PartialObservation<T> {
        PartialObservation {
            session: self.session,
            interval_h: self.interval_h,
            partial_kg: self.partial_kg,
            dim: self.dim,
        }
    }

    /// Daily yield or a domain error naming the record.
    pub fn daily(&self) -> Result<T> {
        self.daily_kg.ok_or_else(|| {
            Error::Domain(format!(
                "cow {} ({}) has no daily yield",
                self.cow_id, self.session
            ))
        })
    }
}

/// The inputs available when predicting a daily yield.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialObservation<T> {
    pub session: Session,
    pub interval_h: T,
    pub partial_kg: T,
    pub dim: Option<T>,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Simulated { seed: u64, config: SimConfig },
    File { path: String, sha256: String },
    Derived { note: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilkingDataset<T> {
    pub records: Vec<MilkingRecord<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> MilkingDataset<T> {
    pub fn new(records: Vec<MilkingRecord<T>>, provenance: Provenance) -> Self {
        Self {
            records,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct cow ids in order of first appearance.
    pub fn cow_ids(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut ids = Vec::new();
        for r in &self.records {
            if !seen.contains_key(r.cow_id.as_str()) {
                seen.insert(r.cow_id.as_str(), ());
                ids.push(r.cow_id.clone());
            }
        }
        ids
    }

    /// Record indices grouped by cow, cows ordered by first appearance.
    pub fn records_by_cow(&self) -> Vec<Vec<usize>> {
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let g = *slot.entry(r.cow_id.as_str()).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }

    /// Sub-dataset made of the given record indices, in the given order.
    pub fn subset(&self, indices: &[usize], note: &str) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: Provenance::Derived {
                note: note.to_string(),
            },
        }
    }

    pub fn all_labeled(&self) -> bool {
        self.records.iter().all(|r| r.daily_kg.is_some())
    }

    pub fn has_dim(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.dim.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        self.records.iter().try_for_each(MilkingRecord::validate)
    }
}
