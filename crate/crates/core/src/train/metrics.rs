use std::fmt::Write as _;
use std::io::{self, Write};

pub const CSV_HEADER: &str = "step,task,bucket,train_loss,eval_length,per_symbol_acc,seq_acc,wallclock_s";

/// One metrics row. Training rows carry `eval_length = 0` and the accuracy
/// of the training batch; evaluation rows name the evaluated length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMetrics {
    pub step: u64,
    pub task: String,
    pub bucket: usize,
    pub train_loss: f64,
    pub eval_length: usize,
    pub per_symbol_acc: f64,
    pub seq_acc: f64,
    pub wallclock_s: f64,
}

impl TrainMetrics {
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{:.6},{},{:.6},{:.6},{:.3}",
            self.step,
            self.task,
            self.bucket,
            self.train_loss,
            self.eval_length,
            self.per_symbol_acc,
            self.seq_acc,
            self.wallclock_s
        )
        .expect("writing to a String");
        s
    }

    pub fn is_eval(&self) -> bool {
        self.eval_length > 0
    }
}

pub fn write_csv<W: Write>(out: &mut W, rows: &[TrainMetrics], header: bool) -> io::Result<()> {
    if header {
        writeln!(out, "{CSV_HEADER}")?;
    }
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
