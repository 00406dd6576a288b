//! Reporting helpers for the acceptance suite: one verdict line per
//! criterion with the measured numbers that decided it.

use std::fmt;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub criterion: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {} {}: {} [{:.1} s]",
            self.criterion,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Collects the pass flags of the parts of one criterion.
#[derive(Debug, Default)]
pub struct Parts {
    pub pass: bool,
    notes: Vec<String>,
}

impl Parts {
    pub fn new() -> Self {
        Self {
            pass: true,
            notes: Vec::new(),
        }
    }

    /// Record one part; failing parts are marked in the summary.
    pub fn check(&mut self, ok: bool, note: impl Into<String>) {
        self.pass &= ok;
        let note = note.into();
        self.notes.push(if ok { note } else { format!("{note} (failed)") });
    }

    pub fn fail(&mut self, note: impl Into<String>) {
        self.check(false, note);
    }

    pub fn summary(&self) -> String {
        self.notes.join("; ")
    }
}

/// Order of convergence between successive errors at halved steps.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
