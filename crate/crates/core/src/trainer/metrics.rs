use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const METRICS_HEADER: [&str; 13] = [
    "T",
    "l_d",
    "l_g",
    "l_c1",
    "l_c2",
    "l_cc",
    "l_cs",
    "tau_adv",
    "tau_clu",
    "n_selected",
    "pseudo_precision",
    "source_acc",
    "target_acc",
];

/// One row of the training log. `None` marks a value that was not
/// available at that iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: u64,
    pub l_d: f64,
    pub l_g: f64,
    pub l_c1: f64,
    pub l_c2: f64,
    pub l_cc: Option<f64>,
    pub l_cs: Option<f64>,
    pub tau_adv: f64,
    pub tau_clu: f64,
    pub n_selected: usize,
    pub pseudo_precision: Option<f64>,
    pub source_acc: Option<f64>,
    pub target_acc: Option<f64>,
}

impl MetricsRecord {
    fn fields(&self) -> [String; 13] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.t.to_string(),
            self.l_d.to_string(),
            self.l_g.to_string(),
            self.l_c1.to_string(),
            self.l_c2.to_string(),
            opt(self.l_cc),
            opt(self.l_cs),
            self.tau_adv.to_string(),
            self.tau_clu.to_string(),
            self.n_selected.to_string(),
            opt(self.pseudo_precision),
            opt(self.source_acc),
            opt(self.target_acc),
        ]
    }
}

/// Writes records as CSV with the fixed header; absent values are empty
/// cells.
pub fn write_metrics<W: Write>(records: &[MetricsRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_metrics(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
