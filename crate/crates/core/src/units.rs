use serde::{Deserialize, Serialize};

/// Logarithm used for `sup log|S|` budgets and `log(1/α)` terms.
///
/// `Log10` exists because the source of some published bounds is ambiguous
/// about the base; both are kept so results can be compared side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogConvention {
    #[default]
    Nat,
    Log10,
}

impl LogConvention {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogConvention::Nat => x.ln(),
            LogConvention::Log10 => x.log10(),
        }
    }

    pub fn exp(self, x: f64) -> f64 {
        match self {
            LogConvention::Nat => x.exp(),
            LogConvention::Log10 => 10f64.powf(x),
        }
    }
}
