//! Per-stage accounting of live numeric buffers.
//!
//! Stages report allocations and releases; the ledger keeps the current
//! reading and the peak per stage. It is a shared handle: clones record into
//! the same registry, and recording from several threads is serialized.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Asm,
    Generator,
    Encoder,
    MergeSr,
    AutodiffTape,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Asm,
        Stage::Generator,
        Stage::Encoder,
        Stage::MergeSr,
        Stage::AutodiffTape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Asm => "asm",
            Stage::Generator => "generator",
            Stage::Encoder => "encoder",
            Stage::MergeSr => "merge_sr",
            Stage::AutodiffTape => "autodiff_tape",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown ledger stage `{s}`")))
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Reading {
    current: usize,
    peak: usize,
}

#[derive(Debug, Default)]
struct Inner {
    stages: [Reading; 5],
    total_current: usize,
    total_peak: usize,
}

impl Inner {
    fn set(&mut self, stage: Stage, bytes: usize) {
        let r = &mut self.stages[stage.index()];
        self.total_current = self.total_current - r.current + bytes;
        r.current = bytes;
        r.peak = r.peak.max(bytes);
        self.total_peak = self.total_peak.max(self.total_current);
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryLedger {
    inner: Arc<Mutex<Inner>>,
}

/// One row of a ledger report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub stage: Stage,
    pub peak_bytes: usize,
}

/// Snapshot of peaks, rows in fixed stage order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    pub rows: Vec<LedgerRow>,
    /// Sum of per-stage peaks.
    pub sum_of_peaks: usize,
    /// Peak of the simultaneous total across stages.
    pub total_peak: usize,
}

impl LedgerReport {
    pub fn peak(&self, stage: Stage) -> usize {
        self.rows
            .iter()
            .find(|r| r.stage == stage)
            .map_or(0, |r| r.peak_bytes)
    }

    /// Aligned text table, one row per stage plus totals.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16}{:>16}\n", "stage", "peak_bytes");
        for r in &self.rows {
            out.push_str(&format!("{:<16}{:>16}\n", r.stage.name(), r.peak_bytes));
        }
        out.push_str(&format!("{:<16}{:>16}\n", "sum_of_peaks", self.sum_of_peaks));
        out.push_str(&format!("{:<16}{:>16}\n", "total_peak", self.total_peak));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,peak_bytes\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.stage.name(), r.peak_bytes));
        }
        out.push_str(&format!("sum_of_peaks,{}\n", self.sum_of_peaks));
        out.push_str(&format!("total_peak,{}\n", self.total_peak));
        out
    }
}

impl MemoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // a panic while holding the lock leaves plain counters behind; keep going
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Sets the instantaneous reading of `stage`.
    pub fn record(&self, stage: Stage, bytes: usize) {
        self.lock().set(stage, bytes);
    }

    /// [`MemoryLedger::record`] keyed by stage name.
    pub fn record_named(&self, stage: &str, bytes: usize) -> Result<()> {
        self.record(stage.parse()?, bytes);
        Ok(())
    }

    pub fn alloc(&self, stage: Stage, bytes: usize) {
        let mut g = self.lock();
        let cur = g.stages[stage.index()].current;
        g.set(stage, cur + bytes);
    }

    pub fn free(&self, stage: Stage, bytes: usize) {
        let mut g = self.lock();
        let cur = g.stages[stage.index()].current;
        g.set(stage, cur.saturating_sub(bytes));
    }

    pub fn current(&self, stage: Stage) -> usize {
        self.lock().stages[stage.index()].current
    }

    pub fn peak(&self, stage: Stage) -> usize {
        self.lock().stages[stage.index()].peak
    }

    /// Clears all readings and peaks.
    pub fn reset(&self) {
        *self.lock() = Inner::default();
    }

    pub fn report(&self) -> LedgerReport {
        let g = self.lock();
        let rows: Vec<LedgerRow> = Stage::ALL
            .iter()
            .map(|&s| LedgerRow {
                stage: s,
                peak_bytes: g.stages[s.index()].peak,
            })
            .collect();
        LedgerReport {
            sum_of_peaks: rows.iter().map(|r| r.peak_bytes).sum(),
            total_peak: g.total_peak,
            rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_survives_lower_reading() {
        let l = MemoryLedger::new();
        l.record(Stage::Asm, 100);
        l.record(Stage::Asm, 50);
        assert_eq!(l.peak(Stage::Asm), 100);
        assert_eq!(l.current(Stage::Asm), 50);
    }

    #[test]
    fn alloc_free_and_totals() {
        let l = MemoryLedger::new();
        l.alloc(Stage::Generator, 30);
        l.alloc(Stage::Encoder, 20);
        l.free(Stage::Generator, 30);
        l.alloc(Stage::Encoder, 5);
        let r = l.report();
        assert_eq!(r.peak(Stage::Generator), 30);
        assert_eq!(r.peak(Stage::Encoder), 25);
        assert_eq!(r.total_peak, 50);
        assert_eq!(r.sum_of_peaks, 55);
        assert!(r.to_table().contains("merge_sr"));
        assert!(r.to_csv().starts_with("stage,peak_bytes\nasm,0\n"));
    }

    #[test]
    fn unknown_stage_rejected() {
        let l = MemoryLedger::new();
        assert!(l.record_named("asm", 7).is_ok());
        assert!(matches!(l.record_named("backbone", 7), Err(Error::Usage(_))));
    }

    #[test]
    fn concurrent_recording() {
        let l = MemoryLedger::new();
        let hs: Vec<_> = (0..8)
            .map(|_| {
                let l = l.clone();
                std::thread::spawn(move || {
                    for _ in 0..1000 {
                        l.alloc(Stage::MergeSr, 2);
                        l.free(Stage::MergeSr, 2);
                    }
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
        assert_eq!(l.current(Stage::MergeSr), 0);
        assert!(l.peak(Stage::MergeSr) >= 2);
    }
}
