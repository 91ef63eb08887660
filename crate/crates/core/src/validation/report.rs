use serde::{Deserialize, Serialize};

/// Outcome of one check on a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub id: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub sample_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: Vec<ValidationRecord>,
}

impl ValidationReport {
    pub fn push(&mut self, id: &str, statistic: f64, threshold: f64, passed: bool, sample_size: usize, seed: u64) {
        self.records.push(ValidationRecord {
            id: id.to_string(),
            statistic,
            threshold,
            passed,
            sample_size,
            seed,
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.records.extend(other.records);
    }

    pub fn get(&self, id: &str) -> Option<&ValidationRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }
}
