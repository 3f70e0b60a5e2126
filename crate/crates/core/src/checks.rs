//! Aggregation of sampled inequality checks.

use serde::Serialize;

/// Relative slack allowed on identities and sampled inequalities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Relative slack allowed on exact algebraic rearrangements.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Outcome of one named inequality over many samples.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InequalityStat {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Smallest normalized slack `(rhs - lhs) / (1 + scale)` seen.
    pub worst_margin: f64,
}

impl InequalityStat {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct PropertyReport {
    pub stats: Vec<InequalityStat>,
}

impl PropertyReport {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&mut self, name: &str) -> &mut InequalityStat {
        let i = match self.stats.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                self.stats.push(InequalityStat {
                    name: name.to_string(),
                    samples: 0,
                    violations: 0,
                    worst_margin: f64::INFINITY,
                });
                self.stats.len() - 1
            }
        };
        &mut self.stats[i]
    }

    /// Records a check of `lhs <= rhs` with magnitude `scale`.
    pub fn record_le(&mut self, name: &str, lhs: f64, rhs: f64, scale: f64, tol: f64) {
        let m = (rhs - lhs) / (1.0 + scale.abs());
        let stat = self.slot(name);
        stat.samples += 1;
        // NaN counts as a violation
        if !(m >= -tol) {
            stat.violations += 1;
        }
        if m < stat.worst_margin || m.is_nan() {
            stat.worst_margin = m;
        }
    }

    /// Records an equality check `|lhs - rhs| <= tol * (1 + scale)`.
    pub fn record_eq(&mut self, name: &str, lhs: f64, rhs: f64, scale: f64, tol: f64) {
        let d = (lhs - rhs).abs();
        self.record_le(name, d, 0.0, scale, tol);
    }

    /// Registers a check that did not apply, so the name still appears.
    pub fn record_vacuous(&mut self, name: &str) {
        self.slot(name);
    }

    pub fn merge(&mut self, other: PropertyReport) {
        for s in other.stats {
            let slot = self.slot(&s.name);
            slot.samples += s.samples;
            slot.violations += s.violations;
            if s.worst_margin < slot.worst_margin || s.worst_margin.is_nan() {
                slot.worst_margin = s.worst_margin;
            }
        }
    }

    /// Merges with every name prefixed, e.g. by the problem it was run on.
    pub fn merge_prefixed(&mut self, prefix: &str, other: PropertyReport) {
        let renamed = PropertyReport {
            stats: other
                .stats
                .into_iter()
                .map(|mut s| {
                    s.name = format!("{prefix}: {}", s.name);
                    s
                })
                .collect(),
        };
        self.merge(renamed);
    }

    pub fn violations(&self) -> Vec<&InequalityStat> {
        self.stats.iter().filter(|s| !s.passed()).collect()
    }

    pub fn passed(&self) -> bool {
        self.stats.iter().all(InequalityStat::passed)
    }

    pub fn total_samples(&self) -> usize {
        self.stats.iter().map(|s| s.samples).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_merges() {
        let mut r = PropertyReport::new();
        r.record_le("a", 1.0, 2.0, 0.0, 1e-10);
        r.record_le("a", 3.0, 2.0, 0.0, 1e-10);
        r.record_eq("b", 1.0, 1.0 + 1e-14, 1.0, 1e-10);
        assert_eq!(r.violations().len(), 1);
        assert_eq!(r.stats[0].worst_margin, -1.0);
        let mut s = PropertyReport::new();
        s.record_le("a", f64::NAN, 0.0, 0.0, 1e-10);
        r.merge(s);
        assert_eq!(r.stats[0].violations, 2);
        assert_eq!(r.stats[0].samples, 3);
    }
}
