use std::io::Write;

use crate::error::{Error, Result};

use super::PathStats;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        round12(x).to_string()
    }
}

/// Writes one row per participant, grid time and metric.
pub fn write_stats_csv<W: Write>(stats: &PathStats, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Input(format!("csv output: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant", "t", "metric", "q10", "q50", "q90", "mean", "n_effective"]).map_err(io)?;
    for r in &stats.rows {
        w.write_record([
            r.participant.to_string(),
            cell(r.t),
            r.metric.name().to_string(),
            cell(r.q10),
            cell(r.q50),
            cell(r.q90),
            cell(r.mean),
            r.n_effective.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Input(format!("csv output: {e}")))
}

pub fn stats_csv(stats: &PathStats) -> Result<String> {
    let mut buf = Vec::new();
    write_stats_csv(stats, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Input(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(72.00000000000001), 72.0);
        assert_eq!(round12(0.0), 0.0);
    }
}
