use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// What a charge was spent on. Categories partition the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCategory {
    Matvec,
    Smoothing,
    Residual,
    Transfer,
    CoarseSolve,
    DenseInverse,
    SparseProduct,
    TraceProduct,
    Projection,
}

impl CostCategory {
    pub const ALL: [CostCategory; 9] = [
        CostCategory::Matvec,
        CostCategory::Smoothing,
        CostCategory::Residual,
        CostCategory::Transfer,
        CostCategory::CoarseSolve,
        CostCategory::DenseInverse,
        CostCategory::SparseProduct,
        CostCategory::TraceProduct,
        CostCategory::Projection,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// Accumulated work units; one unit is roughly one multiply-add.
///
/// Charges are recorded twice, once in the running total and once in the
/// per-category counter, so [`CostLedger::is_balanced`] can audit a run.
/// Ledgers merge by addition, which is associative and commutative, so
/// concurrent workers keep private ledgers and merge at join points.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostLedger {
    work_units: u64,
    by_category: [u64; CostCategory::ALL.len()],
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, category: CostCategory, units: u64) {
        self.work_units += units;
        self.by_category[category.index()] += units;
    }

    pub fn total(&self) -> u64 {
        self.work_units
    }

    pub fn category(&self, category: CostCategory) -> u64 {
        self.by_category[category.index()]
    }

    pub fn merge(&mut self, other: &CostLedger) {
        self.work_units += other.work_units;
        for (mine, theirs) in self.by_category.iter_mut().zip(other.by_category.iter()) {
            *mine += theirs;
        }
    }

    /// Categories sum to the total.
    pub fn is_balanced(&self) -> bool {
        self.by_category.iter().sum::<u64>() == self.work_units
    }

    pub fn breakdown(&self) -> BTreeMap<CostCategory, u64> {
        CostCategory::ALL
            .iter()
            .filter(|c| self.category(**c) > 0)
            .map(|c| (*c, self.category(*c)))
            .collect()
    }
}

impl AddAssign<&CostLedger> for CostLedger {
    fn add_assign(&mut self, rhs: &CostLedger) {
        self.merge(rhs);
    }
}

impl std::iter::Sum for CostLedger {
    fn sum<I: Iterator<Item = CostLedger>>(iter: I) -> Self {
        iter.fold(CostLedger::new(), |mut acc, l| {
            acc.merge(&l);
            acc
        })
    }
}

impl fmt::Display for CostLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} units", self.work_units)?;
        for (cat, units) in self.breakdown() {
            write!(f, " {cat:?}={units}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LedgerRepr {
    work_units: u64,
    by_category: BTreeMap<CostCategory, u64>,
}

impl Serialize for CostLedger {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LedgerRepr {
            work_units: self.work_units,
            by_category: self.breakdown(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostLedger {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = LedgerRepr::deserialize(deserializer)?;
        let mut ledger = CostLedger::new();
        for (cat, units) in repr.by_category {
            ledger.charge(cat, units);
        }
        if ledger.work_units != repr.work_units {
            return Err(serde::de::Error::custom("ledger categories do not sum to total"));
        }
        Ok(ledger)
    }
}
