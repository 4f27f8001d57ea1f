//! Artifact emission: CSV files with pinned schemas, the human-readable
//! verdict report, and the exit-status contract.
//!
//! CSV uses '.' decimals and shortest round-trip float formatting; fields
//! never contain separators or quotes, so the files are trivially RFC-4180
//! conformant. All writes for one artifact go through a single writer.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::LedgerRow;
use crate::error::Result;

pub const LEDGER_HEADER: &str = "t,kinetic,potential,source_potential,forcing,lyapunov,visc_cum,damping_cum,shifted_cum,balance_residual,l2_w,h1_w,l2_wt,linf_w";
pub const HYPOTHESES_HEADER: &str = "quantity,value";
pub const DECOMPOSITION_HEADER: &str = "t,recon_residual,recon_relative";
pub const DRIFT_HEADER: &str = "s,t,drift";
pub const SMOOTHING_HEADER: &str = "s,t,discrete,ceiling";
pub const KERNEL_HEADER: &str = "t,x,y,lhs,rhs,margin,flagged";
pub const LINF_BOUND_HEADER: &str = "t,linf_u,holds";
pub const EQUILIBRIUM_HEADER: &str = "index,newton_iters,residual,l2,h1,linf";
pub const SWEEP_HEADER: &str = "horizon,member,status,sup_h1,sup_l2_wt,sup_linf";
pub const ITERATION_HEADER: &str = "horizon,member,n,linf";
pub const ATTRACTOR_HEADER: &str = "t,distance,l2_wt";

/// Shortest round-trip decimal form of a double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub struct CsvWriter {
    inner: BufWriter<fs::File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let file = fs::File::create(path)?;
        let mut inner = BufWriter::new(file);
        writeln!(inner, "{header}")?;
        Ok(CsvWriter { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.inner, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_ledger_csv(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    let mut w = CsvWriter::create(path, LEDGER_HEADER)?;
    for r in rows {
        w.row(&[
            fmt_f64(r.t),
            fmt_f64(r.kinetic),
            fmt_f64(r.potential),
            fmt_f64(r.source_potential),
            fmt_f64(r.forcing),
            fmt_f64(r.lyapunov),
            fmt_f64(r.visc_cum),
            fmt_f64(r.damping_cum),
            fmt_f64(r.shifted_cum),
            fmt_f64(r.balance_residual),
            fmt_f64(r.l2_w),
            fmt_f64(r.h1_w),
            fmt_f64(r.l2_wt),
            fmt_f64(r.linf_w),
        ])?;
    }
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl VerdictStatus {
    pub fn label(&self) -> &'static str {
        match self {
            VerdictStatus::Pass => "PASS",
            VerdictStatus::Fail => "FAIL",
            VerdictStatus::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Collects human-readable lines and named verdicts; the exit code follows
/// the contract 0 = all pass, 2 = some verdict failed, 3 = inconclusive
/// (saturation/divergence dominates failure).
pub struct Report {
    pub title: String,
    pub lines: Vec<String>,
    pub verdicts: Vec<(String, VerdictStatus, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report { title: title.into(), lines: Vec::new(), verdicts: Vec::new() }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn verdict(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        let status = if ok { VerdictStatus::Pass } else { VerdictStatus::Fail };
        self.verdicts.push((name.to_string(), status, detail.into()));
    }

    pub fn inconclusive(&mut self, name: &str, detail: impl Into<String>) {
        self.verdicts.push((name.to_string(), VerdictStatus::Inconclusive, detail.into()));
    }

    pub fn exit_code(&self) -> i32 {
        if self.verdicts.iter().any(|v| v.1 == VerdictStatus::Inconclusive) {
            3
        } else if self.verdicts.iter().any(|v| v.1 == VerdictStatus::Fail) {
            2
        } else {
            0
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.title));
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        for (name, status, detail) in &self.verdicts {
            if detail.is_empty() {
                out.push_str(&format!("VERDICT {name}: {}\n", status.label()));
            } else {
                out.push_str(&format!("VERDICT {name}: {} ({detail})\n", status.label()));
            }
        }
        out.push_str(&format!("EXIT {}\n", self.exit_code()));
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_precedence() {
        let mut r = Report::new("x");
        assert_eq!(r.exit_code(), 0);
        r.verdict("a", true, "");
        assert_eq!(r.exit_code(), 0);
        r.verdict("b", false, "bad");
        assert_eq!(r.exit_code(), 2);
        r.inconclusive("c", "saturated");
        assert_eq!(r.exit_code(), 3);
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.0_f64.powi(-40), 1.234567890123456e-7, -0.0] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
            assert!(!s.contains(','));
        }
    }
}
