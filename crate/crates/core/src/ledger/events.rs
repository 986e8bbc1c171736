use std::io::Write;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Accrue,
    Death,
    Transfer,
    LumpSum,
}

/// One ledger event. For `accrue` the amount is the account's cumulative
/// discounted payment, for `death` the pre-death balance, for `transfer` the
/// credit and for `lump_sum` the undiscounted amount paid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerEvent {
    pub t: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub participant: usize,
    pub amount: f64,
    pub balances_after: Vec<f64>,
}

/// Writes events as JSON lines.
pub fn write_jsonl<W: Write>(events: &[LedgerEvent], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
