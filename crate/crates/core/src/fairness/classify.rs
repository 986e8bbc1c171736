use std::fmt::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schemes::{Dissolution, Family, SchemeSpec};

/// The plan variants compared in the classification tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanVariant {
    EquitableTontine,
    ModifiedEquitableTontine,
    Gsa,
    FtpContinue,
    FtpDissolveTwo,
    DaContinue,
    DaDissolveTwo,
}

impl PlanVariant {
    pub const ALL: [PlanVariant; 7] = [
        PlanVariant::EquitableTontine,
        PlanVariant::ModifiedEquitableTontine,
        PlanVariant::Gsa,
        PlanVariant::FtpContinue,
        PlanVariant::FtpDissolveTwo,
        PlanVariant::DaContinue,
        PlanVariant::DaDissolveTwo,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PlanVariant::EquitableTontine => "Equitable tontine",
            PlanVariant::ModifiedEquitableTontine => "Modified equitable tontine",
            PlanVariant::Gsa => "GSA plan",
            PlanVariant::FtpContinue => "Fair transfer plan (continue to the last survivor)",
            PlanVariant::FtpDissolveTwo => "Fair transfer plan (dissolve with two survivors)",
            PlanVariant::DaContinue => "Fair decentralized annuity (continue to the last survivor)",
            PlanVariant::DaDissolveTwo => "Fair decentralized annuity (dissolve with two survivors)",
        }
    }

    /// Parses CLI names such as `equitable-tontine` or `ftp-dissolve-two`.
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "equitable-tontine" => PlanVariant::EquitableTontine,
            "modified-equitable-tontine" => PlanVariant::ModifiedEquitableTontine,
            "gsa" => PlanVariant::Gsa,
            "ftp" | "ftp-continue" => PlanVariant::FtpContinue,
            "ftp-dissolve-two" => PlanVariant::FtpDissolveTwo,
            "da" | "da-continue" => PlanVariant::DaContinue,
            "da-dissolve-two" => PlanVariant::DaDissolveTwo,
            other => return Err(Error::Input(format!("unknown plan variant {other:?}"))),
        })
    }

    /// The variant a scheme belongs to; individual drawdowns do not pool and
    /// have no row.
    pub fn of(spec: &SchemeSpec) -> Option<Self> {
        let dissolves_early =
            matches!(spec.dissolution, Dissolution::DissolveAtTwoSurvivors | Dissolution::DissolveAtFirstDeath);
        Some(match &spec.family {
            Family::EquitableTontine { .. } if spec.dissolution == Dissolution::Perpetual => PlanVariant::EquitableTontine,
            Family::EquitableTontine { .. } => PlanVariant::ModifiedEquitableTontine,
            Family::Gsa { .. } => PlanVariant::Gsa,
            Family::Ftp if dissolves_early => PlanVariant::FtpDissolveTwo,
            Family::Ftp => PlanVariant::FtpContinue,
            Family::DcDrawdown { .. } => return None,
            _ if dissolves_early => PlanVariant::DaDissolveTwo,
            _ => PlanVariant::DaContinue,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub variant: PlanVariant,
    pub label: &'static str,
    /// Axioms 1 to 3 for heterogeneous participants.
    pub axioms: [bool; 3],
    /// Equitability, lifetime, periodic and instantaneous fairness.
    pub fairness: [bool; 4],
}

pub fn classify(variant: PlanVariant) -> Classification {
    use PlanVariant::*;
    let axioms = match variant {
        EquitableTontine | ModifiedEquitableTontine | Gsa => [false, true, false],
        FtpContinue | FtpDissolveTwo | DaContinue | DaDissolveTwo => [true, true, true],
    };
    let fairness = match variant {
        EquitableTontine | Gsa => [true, false, false, false],
        ModifiedEquitableTontine => [true, true, false, false],
        FtpContinue => [true, true, false, false],
        FtpDissolveTwo | DaDissolveTwo => [true, true, true, true],
        DaContinue => [true, true, true, false],
    };
    Classification { variant, label: variant.label(), axioms, fairness }
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "×"
    }
}

/// Markdown table of Axioms 1 to 3 for the four plan types.
pub fn rationality_table() -> String {
    let rows = [
        ("Equitable tontines", PlanVariant::EquitableTontine),
        ("GSA plans", PlanVariant::Gsa),
        ("Fair transfer tontines", PlanVariant::FtpDissolveTwo),
        ("Decentralized annuities", PlanVariant::DaContinue),
    ];
    let mut s = String::from("| | Axiom 1 | Axiom 2 | Axiom 3 |\n|---|---|---|---|\n");
    for (label, v) in rows {
        let a = classify(v).axioms;
        let _ = writeln!(s, "| {label} | {} | {} | {} |", mark(a[0]), mark(a[1]), mark(a[2]));
    }
    s
}

/// Markdown table of the four fairness notions for the six plan variants.
pub fn fairness_table() -> String {
    let mut s = String::from(
        "| | Equitability | Lifetime fairness | Periodic fairness | Instantaneous fairness |\n|---|---|---|---|---|\n",
    );
    for v in PlanVariant::ALL.into_iter().filter(|v| *v != PlanVariant::Gsa) {
        let f = classify(v).fairness;
        let _ = writeln!(s, "| {} | {} | {} | {} | {} |", v.label(), mark(f[0]), mark(f[1]), mark(f[2]), mark(f[3]));
    }
    s
}
