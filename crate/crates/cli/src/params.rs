//! Parameter and per-step MAC reports.

use serde::Serialize;
use slimrnn_core::cells::{param_count, step_mac_count, CellVariant};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamReport {
    pub variant: String,
    pub m: usize,
    pub n: usize,
    pub bidirectional: bool,
    /// Adaptive parameters of the recurrent layer, both directions.
    pub param_count: usize,
    /// Forward MACs of one step of one direction.
    pub step_mac_count: usize,
}

pub fn report(variant: CellVariant, m: usize, n: usize, bidirectional: bool) -> ParamReport {
    ParamReport {
        variant: variant.to_string(),
        m,
        n,
        bidirectional,
        param_count: param_count(variant, m, n, bidirectional),
        step_mac_count: step_mac_count(variant, m, n),
    }
}

impl ParamReport {
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }

    pub fn text_line(&self) -> String {
        format!(
            "{:<8} m={:<4} n={:<4} {} params={:<8} step_macs={}",
            self.variant,
            self.m,
            self.n,
            if self.bidirectional { "bi " } else { "uni" },
            self.param_count,
            self.step_mac_count
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(report(CellVariant::Lstm, 32, 100, false).param_count, 53200);
        assert_eq!(report(CellVariant::LstmC6, 128, 128, true).param_count, 33280);
        assert_eq!(report(CellVariant::Srnn, 32, 100, false).param_count, 13300);
    }

    #[test]
    fn json_line_fields() {
        let line = report(CellVariant::Lstm6, 32, 100, false).json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["variant"], "lstm6");
        assert_eq!(v["param_count"], 13300);
        assert_eq!(v["step_mac_count"], 13200);
        assert_eq!(v["bidirectional"], false);
    }
}
