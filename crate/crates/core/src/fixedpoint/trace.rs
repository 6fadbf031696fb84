use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pipeline stage an operation is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Decimation,
    BandPass,
    Accumulate,
    Standardize,
    Classifier,
    Normalize,
    Reference,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Input,
        Stage::Decimation,
        Stage::BandPass,
        Stage::Accumulate,
        Stage::Standardize,
        Stage::Classifier,
        Stage::Normalize,
        Stage::Reference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Decimation => "decimation",
            Stage::BandPass => "band_pass",
            Stage::Accumulate => "accumulate",
            Stage::Standardize => "standardize",
            Stage::Classifier => "classifier",
            Stage::Normalize => "normalize",
            Stage::Reference => "reference",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub add: u64,
    pub sub: u64,
    pub compare: u64,
    pub shift: u64,
    pub multiply: u64,
}

impl OpCounts {
    fn merge(&mut self, other: &OpCounts) {
        self.add += other.add;
        self.sub += other.sub;
        self.compare += other.compare;
        self.shift += other.shift;
        self.multiply += other.multiply;
    }

    pub fn total(&self) -> u64 {
        self.add + self.sub + self.compare + self.shift + self.multiply
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTrace {
    pub counts: OpCounts,
    pub saturations: u64,
    pub max_width_bits: u32,
}

/// Operation counters and peak register widths per stage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTrace {
    stages: [StageTrace; 8],
}

pub const TRACE_CSV_HEADER: &str = "stage,add,sub,compare,shift,multiply,saturations,max_width_bits";

impl OpTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage(&self, stage: Stage) -> &StageTrace {
        &self.stages[stage.index()]
    }

    pub(crate) fn stage_mut(&mut self, stage: Stage) -> &mut StageTrace {
        &mut self.stages[stage.index()]
    }

    pub fn totals(&self) -> StageTrace {
        let mut t = StageTrace::default();
        for s in &self.stages {
            t.counts.merge(&s.counts);
            t.saturations += s.saturations;
            t.max_width_bits = t.max_width_bits.max(s.max_width_bits);
        }
        t
    }

    pub fn multiplies(&self) -> u64 {
        self.totals().counts.multiply
    }

    /// Order-independent merge: counters add, widths take the maximum.
    pub fn merge(&mut self, other: &OpTrace) {
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.counts.merge(&b.counts);
            a.saturations += b.saturations;
            a.max_width_bits = a.max_width_bits.max(b.max_width_bits);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{TRACE_CSV_HEADER}").expect("string write");
        let row = |out: &mut String, name: &str, s: &StageTrace| {
            let c = &s.counts;
            writeln!(
                out,
                "{name},{},{},{},{},{},{},{}",
                c.add, c.sub, c.compare, c.shift, c.multiply, s.saturations, s.max_width_bits
            )
            .expect("string write");
        };
        for stage in Stage::ALL {
            row(&mut out, stage.name(), self.stage(stage));
        }
        row(&mut out, "total", &self.totals());
        out
    }

    pub fn from_csv(text: &str) -> Result<OpTrace> {
        let bad = |msg: String| Error::Audit(format!("malformed trace: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TRACE_CSV_HEADER => {}
            other => return Err(bad(format!("unexpected header {other:?}"))),
        }
        let mut trace = OpTrace::new();
        for line in lines {
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 8 {
                return Err(bad(format!("expected 8 columns in {line:?}")));
            }
            if cols[0] == "total" {
                continue;
            }
            let stage =
                Stage::from_name(cols[0]).ok_or_else(|| bad(format!("unknown stage {}", cols[0])))?;
            let n: Vec<u64> = cols[1..]
                .iter()
                .map(|c| c.parse::<u64>().map_err(|e| bad(format!("{c:?}: {e}"))))
                .collect::<Result<_>>()?;
            *trace.stage_mut(stage) = StageTrace {
                counts: OpCounts {
                    add: n[0],
                    sub: n[1],
                    compare: n[2],
                    shift: n[3],
                    multiply: n[4],
                },
                saturations: n[5],
                max_width_bits: n[6] as u32,
            };
        }
        Ok(trace)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<12} {:>12} {:>12} {:>12} {:>12} {:>9} {:>11} {:>6}",
            "stage", "add", "sub", "compare", "shift", "multiply", "saturations", "width"
        )
        .expect("string write");
        let mut row = |name: &str, s: &StageTrace| {
            let c = &s.counts;
            writeln!(
                out,
                "{:<12} {:>12} {:>12} {:>12} {:>12} {:>9} {:>11} {:>6}",
                name, c.add, c.sub, c.compare, c.shift, c.multiply, s.saturations, s.max_width_bits
            )
            .expect("string write");
        };
        for stage in Stage::ALL {
            row(stage.name(), self.stage(stage));
        }
        row("total", &self.totals());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub totals: StageTrace,
    pub table: String,
}

/// Passes only when no multiply was issued anywhere in the trace.
pub fn audit(trace: &OpTrace) -> Result<AuditReport> {
    let totals = trace.totals();
    if totals.counts.multiply > 0 {
        let offenders: Vec<&str> = Stage::ALL
            .into_iter()
            .filter(|s| trace.stage(*s).counts.multiply > 0)
            .map(Stage::name)
            .collect();
        return Err(Error::Audit(format!(
            "{} multiplies issued in stages [{}]",
            totals.counts.multiply,
            offenders.join(", ")
        )));
    }
    Ok(AuditReport {
        totals,
        table: trace.to_text(),
    })
}
